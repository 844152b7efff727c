#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace tmiu
{

enum class Stage : std::uint8_t
{
    prom_load,
    device_auth,
    memory_auth,
    keygen_image_auth,
    operational,
    lockdown,
};

auto to_string(Stage s) -> std::string_view;

/// Clock and line-rate parameters of the modeled link.
struct TimingConfig
{
    std::uint64_t clock_hz = 50'000'000;
    std::uint64_t line_rate_bytes_per_s = 25'000'000;
    std::uint64_t sector_latency_cycles = 52;
};

/// One-time programmable store holding the encrypted interface-unit
/// configuration.
struct PromStore
{
    std::uint64_t config_bytes = 1'900'000;
    std::uint64_t load_rate_bytes_per_s = 19'400'000;
};

/// Simulated clock-cycle and byte accounting. All counters only grow.
class CycleLedger
{
public:
    explicit CycleLedger(TimingConfig timing = {}) : timing_(timing) {}

    auto timing() const noexcept -> TimingConfig const & { return timing_; }

    void advance(std::uint64_t cycles) noexcept { cycles_ += cycles; }
    void add_bytes(std::uint64_t bytes) noexcept { bytes_moved_ += bytes; }

    /// Charges the PROM configuration load (rounded up to whole cycles).
    void charge_prom(PromStore const &prom) noexcept;
    /// Command/response/token bits move one per clock on the CMD line.
    void charge_bits(std::uint64_t bits) noexcept { cycles_ += bits; }
    /// One data block at the card's line rate.
    void charge_block() noexcept;
    /// Per-sector decrypt/authenticate latency. When `overlapped`, the
    /// latency hides behind the next block's transfer and costs no wall time.
    void charge_sector_processing(bool overlapped) noexcept;

    void mark(Stage stage) { marks_.emplace_back(stage, cycles_); }
    auto mark_of(Stage stage) const noexcept -> std::uint64_t const *;

    auto cycles() const noexcept -> std::uint64_t { return cycles_; }
    auto bytes_moved() const noexcept -> std::uint64_t { return bytes_moved_; }
    auto processing_cycles() const noexcept -> std::uint64_t { return processing_cycles_; }
    auto sectors_processed() const noexcept -> std::uint64_t { return sectors_processed_; }
    auto block_cycles() const noexcept -> std::uint64_t;
    auto to_ms(std::uint64_t cycles) const noexcept -> double;
    auto marks() const noexcept -> std::vector<std::pair<Stage, std::uint64_t>> const &
    {
        return marks_;
    }

    void clear() noexcept;

private:
    TimingConfig timing_;
    std::uint64_t cycles_ = 0;
    std::uint64_t bytes_moved_ = 0;
    std::uint64_t processing_cycles_ = 0;
    std::uint64_t sectors_processed_ = 0;
    std::vector<std::pair<Stage, std::uint64_t>> marks_;
};

} // namespace tmiu

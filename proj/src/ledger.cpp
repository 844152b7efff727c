#include <tmiu/ledger.hpp>

#include <tmiu/bytes.hpp>

namespace tmiu
{

auto to_string(Stage s) -> std::string_view
{
    switch (s)
    {
    case Stage::prom_load:
        return "PromLoad";
    case Stage::device_auth:
        return "DeviceAuth";
    case Stage::memory_auth:
        return "MemoryAuth";
    case Stage::keygen_image_auth:
        return "KeyGenAndImageAuth";
    case Stage::operational:
        return "Operational";
    case Stage::lockdown:
        return "Lockdown";
    }
    return "?";
}

void CycleLedger::charge_prom(PromStore const &prom) noexcept
{
    cycles_ += (prom.config_bytes * timing_.clock_hz + prom.load_rate_bytes_per_s - 1) /
               prom.load_rate_bytes_per_s;
}

auto CycleLedger::block_cycles() const noexcept -> std::uint64_t
{
    return (sector_size * timing_.clock_hz + timing_.line_rate_bytes_per_s - 1) /
           timing_.line_rate_bytes_per_s;
}

void CycleLedger::charge_block() noexcept
{
    cycles_ += block_cycles();
    bytes_moved_ += sector_size;
}

void CycleLedger::charge_sector_processing(bool overlapped) noexcept
{
    processing_cycles_ += timing_.sector_latency_cycles;
    ++sectors_processed_;
    if (!overlapped)
        cycles_ += timing_.sector_latency_cycles;
}

auto CycleLedger::mark_of(Stage stage) const noexcept -> std::uint64_t const *
{
    for (auto it = marks_.rbegin(); it != marks_.rend(); ++it)
    {
        if (it->first == stage)
            return &it->second;
    }
    return nullptr;
}

auto CycleLedger::to_ms(std::uint64_t cycles) const noexcept -> double
{
    return static_cast<double>(cycles) * 1000.0 / static_cast<double>(timing_.clock_hz);
}

void CycleLedger::clear() noexcept
{
    cycles_ = 0;
    bytes_moved_ = 0;
    processing_cycles_ = 0;
    sectors_processed_ = 0;
    marks_.clear();
}

} // namespace tmiu

#pragma once

#include <tmiu/identity.hpp>
#include <tmiu/ledger.hpp>
#include <tmiu/nvm_image.hpp>
#include <tmiu/sdio.hpp>

#include <tmiu/aes128.hpp>

#include <optional>
#include <string>

namespace tmiu
{

enum class LockdownReason : std::uint8_t
{
    none,
    device_mismatch,
    nvm_mismatch,
    malformed_cid,
    bus_error,
    mbr_mismatch,
    sector_tag_mismatch,
    image_digest_mismatch,
    malformed_image,
};

auto to_string(LockdownReason r) -> std::string_view;
auto lockdown_reason_from_string(std::string_view name) -> std::optional<LockdownReason>;

using Leds = std::array<bool, 4>;

auto leds_to_string(Leds const &leds) -> std::string;

/// Diagnostics snapshot. Never carries key material.
struct BootReport
{
    Stage stage = Stage::prom_load;
    LockdownReason reason = LockdownReason::none;
    std::optional<std::uint64_t> lba;
    Leds leds{};
    std::uint64_t cycles = 0;
    std::uint64_t bytes = 0;
    double prom_ms = 0;
    double boot_ms = 0;
    double total_ms = 0;
    double rate_mbps = 0;

    /// `key=value` lines: stage, reason, [lba], leds, cycles, bytes,
    /// prom_ms, boot_ms, total_ms, rate_mbps.
    auto to_text() const -> std::string;
};

enum class DataStatus
{
    ok,
    crc_error,        ///< block forwarded with a failing CRC16; retry
    policy_violation, ///< LBA outside what the host may touch
    denied,           ///< not operational; no response
};

auto to_string(DataStatus s) -> std::string_view;

struct MediatedRead
{
    DataStatus status = DataStatus::denied;
    std::optional<DataBlock> block;
};

/// The trusted memory interface unit between host and card: staged
/// authentication, key generation, and the command/data controllers.
///
/// Keys exist only from key generation until reset or lockdown. Lockdown
/// is absorbing; only reset() leaves it.
class Tmiu
{
public:
    Tmiu(TrustAnchors anchors, DeviceIdentity device, PromStore prom = {},
         TimingConfig timing = {});

    // Boot stages, in order. Each is a no-op unless the unit is in the
    // stage that precedes it.
    void power_on(SdioBus &bus);
    void authenticate_memory(SdioBus &bus);
    void generate_keys();
    void verify_mbr_and_image(SdioBus &bus);

    // Operational data path.
    auto mediate_read(SdioBus &bus, std::uint64_t lba) -> MediatedRead;
    auto mediate_write(SdioBus &bus, std::uint64_t lba, DataBlock const &from_host)
        -> DataStatus;

    /// Verified boot-image container, released once at hand-over.
    auto take_boot_image() -> Bytes;

    /// Power cycle: clears keys, LEDs, the ledger, and all latched state.
    void reset() noexcept;

    auto report() const -> BootReport;

    auto stage() const noexcept -> Stage { return stage_; }
    auto lockdown_reason() const noexcept -> LockdownReason { return reason_; }
    auto lockdown_lba() const noexcept -> std::optional<std::uint64_t> { return reason_lba_; }
    auto leds() const noexcept -> Leds const & { return leds_; }
    auto has_keys() const noexcept -> bool { return keys_.has_value(); }
    auto ledger() const noexcept -> CycleLedger const & { return ledger_; }
    auto stage_history() const noexcept -> std::vector<Stage> const & { return history_; }
    auto layout() const noexcept -> std::optional<NvmLayout> const & { return layout_; }
    auto anchors() const noexcept -> TrustAnchors const & { return anchors_; }

    /// Routes bus frame sizes into this unit's ledger and stamps traces.
    void attach(SdioBus &bus);

private:
    struct SessionKeys
    {
        AesKey128 aes;
        MacKey mac;
    };

    enum class TagFetch
    {
        ok,
        crc_error,
        bus_error,
        malformed,
    };

    void enter(Stage s);
    void lockdown(SdioBus &bus, LockdownReason reason,
                  std::optional<std::uint64_t> lba = std::nullopt);
    void erase_keys() noexcept;

    auto fetch_block(SdioBus &bus, std::uint64_t lba) -> std::optional<DataBlock>;
    auto stream_boot_partition(SdioBus &bus, Bytes &plain, std::vector<Digest256> &tags)
        -> bool;
    auto load_tag(SdioBus &bus, std::uint64_t lba, bool retry, Digest256 &tag) -> TagFetch;
    auto locate_tampered_sector(SdioBus &bus, std::vector<Digest256> const &tags)
        -> std::optional<std::uint64_t>;
    auto store_tag(SdioBus &bus, std::uint64_t lba, Digest256 const &tag) -> bool;

    TrustAnchors anchors_;
    DeviceIdentity device_;
    PromStore prom_;
    CycleLedger ledger_;

    Stage stage_ = Stage::prom_load;
    LockdownReason reason_ = LockdownReason::none;
    std::optional<std::uint64_t> reason_lba_;
    Leds leds_{};
    std::vector<Stage> history_;

    std::optional<CardIdentity> card_;
    std::uint64_t card_capacity_ = 0;
    std::optional<SessionKeys> keys_;
    std::optional<NvmLayout> layout_;
    Bytes released_image_;
    std::uint64_t boot_image_bytes_ = 0;
    std::optional<std::uint64_t> keys_ready_at_;
    std::optional<std::uint64_t> operational_at_;
};

} // namespace tmiu

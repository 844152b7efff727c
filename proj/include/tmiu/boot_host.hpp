#pragma once

#include <tmiu/boot_image.hpp>
#include <tmiu/tmiu.hpp>

#include <stdexcept>
#include <string>
#include <vector>

namespace tmiu
{

enum class HostPhase
{
    pre_boot,
    loading_boot,
    os_running,
    halted,
};

auto to_string(HostPhase p) -> std::string_view;

struct LoadedEntry
{
    EntryKind kind;
    std::uint64_t length = 0;
    Digest256 digest;
};

struct BootOutcome
{
    enum class Kind
    {
        os_running,
        denied,
        entry_mismatch, ///< unit released an image the manifest disagrees with
    };

    Kind kind = Kind::denied;
    LockdownReason reason = LockdownReason::none;
    BootReport report;

    auto granted() const noexcept -> bool { return kind == Kind::os_running; }
    /// "Granted", "EntryMismatch", or the lockdown reason name.
    auto outcome_class() const -> std::string;
};

enum class HostErrc
{
    not_found,
    capacity_exceeded,
    denied,
    not_running,
    malformed,
};

auto to_string(HostErrc code) -> std::string_view;

class HostError : public std::runtime_error
{
public:
    HostError(HostErrc code, std::string const &what)
        : std::runtime_error(what), code_(code)
    {
    }
    auto code() const noexcept -> HostErrc { return code_; }

private:
    HostErrc code_;
};

/// Processor side: the pre-boot sequencer and the post-boot file layer.
class Host
{
public:
    /// `expected` holds the provisioning manifest's per-entry digests; when
    /// empty, entries are recorded but not cross-checked.
    explicit Host(std::vector<EntryDigest> expected = {});

    auto run_boot(Tmiu &tmiu, SdioBus &bus) -> BootOutcome;

    auto read_sector(Tmiu &tmiu, SdioBus &bus, std::uint64_t lba) -> Sector;
    void write_sector(Tmiu &tmiu, SdioBus &bus, std::uint64_t lba, Sector const &data);

    auto list_files(Tmiu &tmiu, SdioBus &bus) -> std::vector<FileRecord>;
    auto read_file(Tmiu &tmiu, SdioBus &bus, std::string_view label) -> Bytes;
    /// Data first, file table last: a failed write leaves the old table.
    void write_file(Tmiu &tmiu, SdioBus &bus, std::string const &label, ByteView blob);

    /// Reads every integrity-covered sector through the unit. False as soon
    /// as one is refused.
    auto scrub(Tmiu &tmiu, SdioBus &bus) -> bool;

    auto phase() const noexcept -> HostPhase { return phase_; }
    auto loaded_entries() const noexcept -> std::vector<LoadedEntry> const & { return loaded_; }
    auto boot_bytes_received() const noexcept -> std::uint64_t { return boot_bytes_; }

    void reset() noexcept;

private:
    auto data_partition(Tmiu const &tmiu) const -> LbaRange;
    void require_running() const;

    std::vector<EntryDigest> expected_;
    HostPhase phase_ = HostPhase::pre_boot;
    std::vector<LoadedEntry> loaded_;
    std::uint64_t boot_bytes_ = 0;
};

/// One card on one bus behind one unit, with a host. Not movable: the
/// unit's timing hook points back into this object.
class Simulator
{
public:
    Simulator(NvmImage image, CardIdentity card, TrustAnchors anchors, DeviceIdentity device,
              std::vector<EntryDigest> expected = {}, PromStore prom = {},
              TimingConfig timing = {});

    Simulator(Simulator const &) = delete;
    auto operator=(Simulator const &) -> Simulator & = delete;

    auto boot() -> BootOutcome { return host.run_boot(tmiu, bus); }
    /// Full power cycle of unit, card, and host.
    void power_cycle();

    auto read_file(std::string_view label) -> Bytes { return host.read_file(tmiu, bus, label); }
    void write_file(std::string const &label, ByteView blob)
    {
        host.write_file(tmiu, bus, label, blob);
    }
    auto scrub() -> bool { return host.scrub(tmiu, bus); }

    SdioBus bus;
    Tmiu tmiu;
    Host host;
};

} // namespace tmiu

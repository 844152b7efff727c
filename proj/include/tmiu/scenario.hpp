#pragma once

#include <tmiu/boot_host.hpp>

#include <string>
#include <vector>

namespace tmiu
{

enum class Region
{
    mbr,
    boot,
    data,
    meta,
    cid,
    device_dna,
    bus_cmd,
    bus_rsp,
    bus_data,
};

auto to_string(Region r) -> std::string_view;

struct Target
{
    Region region = Region::mbr;
    std::uint64_t index = 0;
};

// flip_bit:off:bit | set_byte:off:val | replace:off:hex | copy_from:region:i
// | swap:serial (cid only) | inject:count (bus only)
struct Mutation
{
    enum class Kind
    {
        flip_bit,
        set_byte,
        replace,
        copy_from,
        swap,
        inject,
    };

    Kind kind = Kind::flip_bit;
    std::size_t offset = 0;
    unsigned bit = 0;
    std::uint8_t value = 0;
    Bytes bytes;
    Target source;
    std::uint64_t amount = 0;
};

struct ScenarioStep
{
    Target target;
    Mutation mutation;
};

struct Scenario
{
    std::string name;
    std::vector<ScenarioStep> steps;
    std::string expected; ///< "Granted", "EntryMismatch", or a lockdown reason

    /// Throws std::invalid_argument on a malformed line or unknown class.
    static auto parse(std::string_view text) -> Scenario;
    auto to_text() const -> std::string;
};

/// Everything a boot needs: the medium, the anchors burned into the unit,
/// and the physical identities of the chip and the card.
struct World
{
    NvmImage image;
    Manifest manifest;
    DeviceIdentity device;
    CardIdentity card;
};

/// Deterministic provisioned pair used by bundled scenarios and tests.
/// Roughly 100 KB of boot entries and two data files.
auto reference_world(std::uint64_t seed = 1, std::uint64_t geometry = 4096) -> World;

/// Provisions a card holding a single synthetic kernel of `size_mb` x 10^6
/// bytes and boots it.
auto run_bench(double size_mb, PromStore prom = {}, TimingConfig timing = {}) -> BootOutcome;

struct ScenarioResult
{
    std::string observed;
    bool matched = false;
    BootReport report;
    std::optional<std::uint64_t> lba;
};

/// Applies mutations to a copy of the world. Throws std::invalid_argument
/// when a target does not resolve.
auto apply_scenario(World const &world, Scenario const &scenario) -> World;

/// Boots the mutated world, then scrubs every covered sector if the boot
/// was granted. Bus faults are armed before power-on.
auto run_scenario(World const &world, Scenario const &scenario) -> ScenarioResult;

auto bundled_scenarios() -> std::vector<Scenario>;

} // namespace tmiu

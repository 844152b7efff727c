#include <tmiu/boot_host.hpp>

#include <algorithm>

namespace tmiu
{

auto to_string(HostPhase p) -> std::string_view
{
    switch (p)
    {
    case HostPhase::pre_boot:
        return "PreBoot";
    case HostPhase::loading_boot:
        return "LoadingBoot";
    case HostPhase::os_running:
        return "OsRunning";
    case HostPhase::halted:
        return "Halted";
    }
    return "?";
}

auto to_string(HostErrc code) -> std::string_view
{
    switch (code)
    {
    case HostErrc::not_found:
        return "NotFound";
    case HostErrc::capacity_exceeded:
        return "CapacityExceeded";
    case HostErrc::denied:
        return "Denied";
    case HostErrc::not_running:
        return "NotRunning";
    case HostErrc::malformed:
        return "Malformed";
    }
    return "?";
}

auto BootOutcome::outcome_class() const -> std::string
{
    switch (kind)
    {
    case Kind::os_running:
        return "Granted";
    case Kind::entry_mismatch:
        return "EntryMismatch";
    case Kind::denied:
        break;
    }
    return std::string(to_string(reason));
}

Host::Host(std::vector<EntryDigest> expected) : expected_(std::move(expected)) {}

void Host::reset() noexcept
{
    phase_ = HostPhase::pre_boot;
    loaded_.clear();
    boot_bytes_ = 0;
}

auto Host::run_boot(Tmiu &tmiu, SdioBus &bus) -> BootOutcome
{
    reset();
    phase_ = HostPhase::loading_boot;

    tmiu.power_on(bus);
    tmiu.authenticate_memory(bus);
    tmiu.generate_keys();
    tmiu.verify_mbr_and_image(bus);

    BootOutcome out;
    if (tmiu.stage() != Stage::operational)
    {
        phase_ = HostPhase::halted;
        out.kind = BootOutcome::Kind::denied;
        out.reason = tmiu.lockdown_reason();
        out.report = tmiu.report();
        return out;
    }

    auto image = tmiu.take_boot_image();
    boot_bytes_ = image.size();
    out.report = tmiu.report();

    std::vector<LoadedEntry> entries;
    if (verify_boot_image(image) == ImageCheck::pass)
    {
        for (auto const &e : parse_boot_image(image))
            entries.push_back({e.kind, e.blob.size(), sha256(e.blob)});
    }

    auto matches = [&] {
        if (entries.empty())
            return false;
        if (expected_.empty())
            return true;
        return std::equal(entries.begin(), entries.end(), expected_.begin(), expected_.end(),
                          [](LoadedEntry const &a, EntryDigest const &b) {
                              return a.kind == b.kind && a.length == b.length &&
                                     a.digest == b.digest;
                          });
    }();
    secure_wipe(image);

    if (!matches)
    {
        phase_ = HostPhase::halted;
        out.kind = BootOutcome::Kind::entry_mismatch;
        return out;
    }
    loaded_ = std::move(entries);
    phase_ = HostPhase::os_running;
    out.kind = BootOutcome::Kind::os_running;
    return out;
}

void Host::require_running() const
{
    if (phase_ != HostPhase::os_running)
        throw HostError(HostErrc::not_running, "operating system is not running");
}

auto Host::data_partition(Tmiu const &tmiu) const -> LbaRange
{
    auto const &layout = tmiu.layout();
    if (!layout)
        throw HostError(HostErrc::denied, "no partition layout available");
    return layout->data;
}

auto Host::read_sector(Tmiu &tmiu, SdioBus &bus, std::uint64_t lba) -> Sector
{
    require_running();
    for (int attempt = 0; attempt <= SdioBus::max_retries; ++attempt)
    {
        auto r = tmiu.mediate_read(bus, lba);
        switch (r.status)
        {
        case DataStatus::ok:
            if (r.block && r.block->crc_valid())
                return r.block->payload;
            break;
        case DataStatus::crc_error:
            break;
        case DataStatus::policy_violation:
            throw HostError(HostErrc::denied, "read outside permitted range");
        case DataStatus::denied:
            phase_ = HostPhase::halted;
            throw HostError(HostErrc::denied, "read denied: " +
                                                  std::string(to_string(tmiu.lockdown_reason())));
        }
    }
    throw HostError(HostErrc::denied, "read failed after retries");
}

void Host::write_sector(Tmiu &tmiu, SdioBus &bus, std::uint64_t lba, Sector const &data)
{
    require_running();
    auto block = DataBlock::make(data);
    for (int attempt = 0; attempt <= SdioBus::max_retries; ++attempt)
    {
        switch (tmiu.mediate_write(bus, lba, block))
        {
        case DataStatus::ok:
            return;
        case DataStatus::crc_error:
            break;
        case DataStatus::policy_violation:
            throw HostError(HostErrc::denied, "write outside the data partition");
        case DataStatus::denied:
            phase_ = HostPhase::halted;
            throw HostError(HostErrc::denied, "write denied");
        }
    }
    throw HostError(HostErrc::denied, "write failed after retries");
}

auto Host::list_files(Tmiu &tmiu, SdioBus &bus) -> std::vector<FileRecord>
{
    require_running();
    auto data = data_partition(tmiu);
    Bytes table;
    table.reserve(file_table_sectors * sector_size);
    for (std::uint64_t i = 0; i < file_table_sectors; ++i)
    {
        auto s = read_sector(tmiu, bus, data.start + i);
        table.insert(table.end(), s.begin(), s.end());
    }
    try
    {
        return decode_file_table(table);
    }
    catch (NvmError const &e)
    {
        throw HostError(HostErrc::malformed, e.what());
    }
}

auto Host::read_file(Tmiu &tmiu, SdioBus &bus, std::string_view label) -> Bytes
{
    auto records = list_files(tmiu, bus);
    auto it = std::find_if(records.begin(), records.end(),
                           [&](FileRecord const &r) { return r.label == label; });
    if (it == records.end())
        throw HostError(HostErrc::not_found, "no file '" + std::string(label) + "'");

    auto data = data_partition(tmiu);
    auto first = data.start + it->offset / sector_size;
    Bytes blob;
    blob.reserve(it->length);
    for (auto lba = first; blob.size() < it->length; ++lba)
    {
        auto s = read_sector(tmiu, bus, lba);
        auto take = std::min<std::size_t>(sector_size, it->length - blob.size());
        blob.insert(blob.end(), s.begin(), s.begin() + static_cast<std::ptrdiff_t>(take));
    }
    return blob;
}

void Host::write_file(Tmiu &tmiu, SdioBus &bus, std::string const &label, ByteView blob)
{
    auto records = list_files(tmiu, bus);
    auto data = data_partition(tmiu);

    auto offset = allocate_extent(records, data.count, blob.size());
    if (!offset)
        throw HostError(HostErrc::capacity_exceeded, "no room for '" + label + "'");

    std::erase_if(records, [&](FileRecord const &r) { return r.label == label; });
    records.push_back({label, *offset, blob.size()});
    Bytes table;
    try
    {
        table = encode_file_table(records);
    }
    catch (NvmError const &e)
    {
        throw HostError(HostErrc::capacity_exceeded, e.what());
    }

    auto first = data.start + *offset / sector_size;
    for (std::size_t pos = 0; pos < blob.size(); pos += sector_size)
    {
        Sector s{};
        auto take = std::min<std::size_t>(sector_size, blob.size() - pos);
        std::copy_n(blob.begin() + static_cast<std::ptrdiff_t>(pos), take, s.begin());
        write_sector(tmiu, bus, first + pos / sector_size, s);
    }

    for (std::uint64_t i = 0; i < file_table_sectors; ++i)
    {
        Sector s{};
        std::copy_n(table.begin() + static_cast<std::ptrdiff_t>(i * sector_size), sector_size,
                    s.begin());
        write_sector(tmiu, bus, data.start + i, s);
    }
}

auto Host::scrub(Tmiu &tmiu, SdioBus &bus) -> bool
{
    auto const &layout = tmiu.layout();
    if (phase_ != HostPhase::os_running || !layout)
        return false;
    try
    {
        for (std::uint64_t lba = 0; lba < layout->tagged_sectors(); ++lba)
            read_sector(tmiu, bus, lba);
    }
    catch (HostError const &)
    {
        return false;
    }
    return true;
}

// ---------------------------------------------------------------------------

Simulator::Simulator(NvmImage image, CardIdentity card, TrustAnchors anchors,
                     DeviceIdentity device, std::vector<EntryDigest> expected, PromStore prom,
                     TimingConfig timing)
    : bus(VirtualCard(card, std::move(image))),
      tmiu(anchors, device, prom, timing),
      host(std::move(expected))
{
    tmiu.attach(bus);
}

void Simulator::power_cycle()
{
    tmiu.reset();
    bus.card().power_cycle();
    host.reset();
}

} // namespace tmiu

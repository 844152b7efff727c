#include <tmiu/nvm_image.hpp>

#include <tmiu/sector_crypto.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace tmiu
{

auto to_string(NvmErrc code) -> std::string_view
{
    switch (code)
    {
    case NvmErrc::bad_signature:
        return "BadSignature";
    case NvmErrc::overlapping_partitions:
        return "OverlappingPartitions";
    case NvmErrc::out_of_bounds:
        return "OutOfBounds";
    case NvmErrc::capacity_exceeded:
        return "CapacityExceeded";
    case NvmErrc::invalid_identity:
        return "InvalidIdentity";
    case NvmErrc::malformed:
        return "Malformed";
    case NvmErrc::io_error:
        return "IoError";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// MBR

auto MbrSector::serialize() const -> Sector
{
    Sector out{};
    std::copy(bootstrap.begin(), bootstrap.end(), out.begin());
    for (std::size_t i = 0; i < partitions.size(); ++i)
    {
        auto const &p = partitions[i];
        auto *rec = out.data() + 446 + 16 * i;
        rec[0] = p.status;
        std::copy(p.chs_first.begin(), p.chs_first.end(), rec + 1);
        rec[4] = p.type;
        std::copy(p.chs_last.begin(), p.chs_last.end(), rec + 5);
        put_le32(rec + 8, p.lba_start);
        put_le32(rec + 12, p.sector_count);
    }
    out[510] = 0x55;
    out[511] = 0xaa;
    return out;
}

auto MbrSector::used_partitions() const -> std::vector<PartitionEntry>
{
    std::vector<PartitionEntry> out;
    std::copy_if(partitions.begin(), partitions.end(), std::back_inserter(out),
                 [](auto const &p) { return p.used(); });
    return out;
}

auto parse_mbr(ByteView sector, std::uint64_t geometry) -> MbrSector
{
    if (sector.size() != sector_size)
    {
        throw NvmError(NvmErrc::malformed, "MBR must be one sector");
    }
    if (sector[510] != 0x55 || sector[511] != 0xaa)
    {
        throw NvmError(NvmErrc::bad_signature, "missing 0x55AA");
    }
    MbrSector mbr;
    std::copy_n(sector.begin(), mbr.bootstrap.size(), mbr.bootstrap.begin());
    for (std::size_t i = 0; i < 4; ++i)
    {
        auto const *rec = sector.data() + 446 + 16 * i;
        auto &p = mbr.partitions[i];
        p.status = rec[0];
        std::copy_n(rec + 1, 3, p.chs_first.begin());
        p.type = rec[4];
        std::copy_n(rec + 5, 3, p.chs_last.begin());
        p.lba_start = get_le32(rec + 8);
        p.sector_count = get_le32(rec + 12);
    }

    auto used = mbr.used_partitions();
    for (auto const &p : used)
    {
        if (p.lba_start == 0 || p.sector_count == 0 || p.range().end() > geometry)
        {
            throw NvmError(NvmErrc::out_of_bounds, "partition outside the medium");
        }
    }
    for (std::size_t i = 0; i < used.size(); ++i)
    {
        for (std::size_t j = i + 1; j < used.size(); ++j)
        {
            auto a = used[i].range();
            auto b = used[j].range();
            if (a.start < b.end() && b.start < a.end())
            {
                throw NvmError(NvmErrc::overlapping_partitions, "partitions overlap");
            }
        }
    }
    return mbr;
}

// ---------------------------------------------------------------------------
// Layout

auto NvmLayout::compute(std::uint64_t geometry, std::uint64_t boot_sectors) -> NvmLayout
{
    if (geometry > 0xffffffffu)
    {
        throw NvmError(NvmErrc::capacity_exceeded, "geometry exceeds 32-bit LBA");
    }
    // Largest tagged prefix whose tags still fit behind it.
    std::uint64_t tagged = geometry * tags_per_sector / (tags_per_sector + 1);
    while (tagged > 0 && tagged + meta_sectors_for(tagged) > geometry)
        --tagged;
    while (tagged + 1 + meta_sectors_for(tagged + 1) <= geometry)
        ++tagged;

    auto data_start = 1 + boot_sectors;
    if (tagged < data_start + file_table_sectors)
    {
        throw NvmError(NvmErrc::capacity_exceeded,
                       "boot image leaves no room for the data partition");
    }
    NvmLayout layout;
    layout.geometry = geometry;
    layout.boot = {1, boot_sectors};
    layout.data = {data_start, tagged - data_start};
    layout.meta = {tagged, meta_sectors_for(tagged)};
    return layout;
}

auto NvmLayout::from_partitions(std::uint64_t geometry, LbaRange boot, LbaRange data)
    -> NvmLayout
{
    NvmLayout layout;
    layout.geometry = geometry;
    layout.boot = boot;
    layout.data = data;
    layout.meta = {data.end(), meta_sectors_for(data.end())};
    if (boot.start != 1 || data.start != boot.end() || layout.meta.end() > geometry)
    {
        throw NvmError(NvmErrc::out_of_bounds, "partition layout is not contiguous");
    }
    return layout;
}

auto NvmLayout::tag_slot(std::uint64_t lba) const -> TagSlot
{
    if (lba >= tagged_sectors())
    {
        throw std::out_of_range("LBA is not covered by the integrity region");
    }
    return {meta.start + lba / tags_per_sector, (lba % tags_per_sector) * 32};
}

// ---------------------------------------------------------------------------
// Raw image

auto NvmImage::to_bytes() const -> Bytes
{
    Bytes out;
    out.reserve(sectors_.size() * sector_size);
    for (auto const &s : sectors_)
        out.insert(out.end(), s.begin(), s.end());
    return out;
}

auto NvmImage::from_bytes(ByteView raw) -> NvmImage
{
    if (raw.empty() || raw.size() % sector_size != 0)
    {
        throw NvmError(NvmErrc::malformed, "image size is not a whole number of sectors");
    }
    NvmImage image(raw.size() / sector_size);
    for (std::size_t i = 0; i < image.sectors_.size(); ++i)
    {
        std::copy_n(raw.begin() + static_cast<std::ptrdiff_t>(i * sector_size), sector_size,
                    image.sectors_[i].begin());
    }
    return image;
}

void NvmImage::save(std::filesystem::path const &path) const
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    for (auto const &s : sectors_)
    {
        out.write(reinterpret_cast<char const *>(s.data()), sector_size);
    }
    if (!out)
    {
        throw NvmError(NvmErrc::io_error, "cannot write " + path.string());
    }
}

auto NvmImage::load(std::filesystem::path const &path) -> NvmImage
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw NvmError(NvmErrc::io_error, "cannot read " + path.string());
    }
    Bytes raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_bytes(raw);
}

// ---------------------------------------------------------------------------
// File table

auto encode_file_table(std::span<FileRecord const> records) -> Bytes
{
    Bytes out(file_table_sectors * sector_size, 0);
    std::size_t pos = 4;
    put_le32(out.data(), static_cast<std::uint32_t>(records.size()));
    for (auto const &r : records)
    {
        if (r.label.empty() || r.label.size() > 255)
        {
            throw std::invalid_argument("file label must be 1..255 bytes");
        }
        auto need = 2 + r.label.size() + 16;
        if (pos + need > out.size())
        {
            throw NvmError(NvmErrc::capacity_exceeded, "file table is full");
        }
        put_le16(out.data() + pos, static_cast<std::uint16_t>(r.label.size()));
        std::copy(r.label.begin(), r.label.end(), out.begin() + static_cast<std::ptrdiff_t>(pos + 2));
        pos += 2 + r.label.size();
        put_le64(out.data() + pos, r.offset);
        put_le64(out.data() + pos + 8, r.length);
        pos += 16;
    }
    return out;
}

auto decode_file_table(ByteView table) -> std::vector<FileRecord>
{
    if (table.size() < 4)
    {
        throw NvmError(NvmErrc::malformed, "file table truncated");
    }
    auto count = get_le32(table.data());
    std::vector<FileRecord> out;
    std::size_t pos = 4;
    for (std::uint32_t i = 0; i < count; ++i)
    {
        if (pos + 2 > table.size())
            throw NvmError(NvmErrc::malformed, "file table truncated");
        std::size_t len = get_le16(table.data() + pos);
        if (len == 0 || pos + 2 + len + 16 > table.size())
            throw NvmError(NvmErrc::malformed, "file table record out of range");
        FileRecord r;
        r.label.assign(reinterpret_cast<char const *>(table.data() + pos + 2), len);
        pos += 2 + len;
        r.offset = get_le64(table.data() + pos);
        r.length = get_le64(table.data() + pos + 8);
        pos += 16;
        out.push_back(std::move(r));
    }
    return out;
}

auto allocate_extent(std::span<FileRecord const> records,
                     std::uint64_t partition_sectors, std::uint64_t length)
    -> std::optional<std::uint64_t>
{
    auto first = file_table_sectors;
    auto sectors = (length + sector_size - 1) / sector_size;
    if (sectors == 0)
        return first * sector_size;

    std::vector<std::pair<std::uint64_t, std::uint64_t>> used;
    for (auto const &r : records)
    {
        if (r.length == 0)
            continue;
        auto s = r.offset / sector_size;
        used.emplace_back(s, s + (r.length + sector_size - 1) / sector_size);
    }
    std::sort(used.begin(), used.end());

    auto cursor = first;
    for (auto const &[s, e] : used)
    {
        if (s >= cursor && s - cursor >= sectors)
            break;
        cursor = std::max(cursor, e);
    }
    if (cursor + sectors > partition_sectors)
        return std::nullopt;
    return cursor * sector_size;
}

// ---------------------------------------------------------------------------
// Manifest

namespace
{
auto range_text(LbaRange r) -> std::string
{
    return std::to_string(r.start) + "," + std::to_string(r.count);
}

auto parse_u64(std::string_view text, int base = 10) -> std::uint64_t
{
    if (base == 16 && (text.starts_with("0x") || text.starts_with("0X")))
        text.remove_prefix(2);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v, base);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
    {
        throw std::invalid_argument("not a number: '" + std::string(text) + "'");
    }
    return v;
}

auto parse_range(std::string_view text) -> LbaRange
{
    auto comma = text.find(',');
    if (comma == std::string_view::npos)
        throw std::invalid_argument("LBA range needs start,count");
    return {parse_u64(text.substr(0, comma)), parse_u64(text.substr(comma + 1))};
}

auto field(std::map<std::string, std::string> const &f, std::string const &key)
    -> std::string const &
{
    auto it = f.find(key);
    if (it == f.end())
        throw std::invalid_argument("manifest is missing field '" + key + "'");
    return it->second;
}

auto hex_u64(std::uint64_t v) -> std::string
{
    std::ostringstream s;
    s << "0x" << std::hex << v;
    return s.str();
}
} // namespace

auto Manifest::to_text() const -> std::string
{
    std::ostringstream out;
    out << anchors_to_text(anchors);
    out << "geometry=" << layout.geometry << '\n'
        << "boot_lba=" << range_text(layout.boot) << '\n'
        << "data_lba=" << range_text(layout.data) << '\n'
        << "meta_lba=" << range_text(layout.meta) << '\n';
    for (std::size_t i = 0; i < entries.size(); ++i)
    {
        out << "entry." << i << '=' << to_string(entries[i].kind) << ','
            << entries[i].length << ',' << entries[i].digest.hex() << '\n';
    }
    if (device_dna)
        out << "device_dna=" << hex_u64(*device_dna) << '\n';
    if (card_cid)
        out << "card_cid=" << to_hex(*card_cid) << '\n';
    if (card_csd)
        out << "card_csd=" << to_hex(*card_csd) << '\n';
    return out.str();
}

auto Manifest::from_text(std::string_view text) -> Manifest
{
    auto f = parse_key_values(text);
    auto anchors = anchors_from_fields(f);
    auto geometry = parse_u64(field(f, "geometry"));
    auto layout = NvmLayout::from_partitions(geometry, parse_range(field(f, "boot_lba")),
                                             parse_range(field(f, "data_lba")));
    if (layout.meta != parse_range(field(f, "meta_lba")))
    {
        throw std::invalid_argument("meta_lba does not match the partition layout");
    }
    Manifest m{anchors, layout, {}, std::nullopt, std::nullopt, std::nullopt};
    for (std::size_t i = 0;; ++i)
    {
        auto it = f.find("entry." + std::to_string(i));
        if (it == f.end())
            break;
        std::string_view v = it->second;
        auto c1 = v.find(',');
        auto c2 = v.find(',', c1 == std::string_view::npos ? c1 : c1 + 1);
        if (c1 == std::string_view::npos || c2 == std::string_view::npos)
            throw std::invalid_argument("malformed entry line");
        auto kind = entry_kind_from_string(v.substr(0, c1));
        if (!kind)
            throw std::invalid_argument("unknown entry kind");
        m.entries.push_back({*kind, parse_u64(v.substr(c1 + 1, c2 - c1 - 1)),
                             Digest256::from_hex(v.substr(c2 + 1))});
    }
    if (auto it = f.find("device_dna"); it != f.end())
        m.device_dna = parse_u64(it->second, 16);
    if (auto it = f.find("card_cid"); it != f.end())
        m.card_cid = fixed_from_hex<16>(it->second);
    if (auto it = f.find("card_csd"); it != f.end())
        m.card_csd = fixed_from_hex<16>(it->second);
    return m;
}

void Manifest::save(std::filesystem::path const &path) const
{
    std::ofstream out(path, std::ios::trunc);
    out << to_text();
    if (!out)
    {
        throw NvmError(NvmErrc::io_error, "cannot write " + path.string());
    }
}

auto Manifest::load(std::filesystem::path const &path) -> Manifest
{
    std::ifstream in(path);
    if (!in)
    {
        throw NvmError(NvmErrc::io_error, "cannot read " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

// ---------------------------------------------------------------------------
// Provisioning

namespace
{
void write_partition_bytes(std::vector<Sector> &plain, LbaRange part,
                           std::uint64_t byte_offset, ByteView bytes)
{
    for (std::size_t i = 0; i < bytes.size(); ++i)
    {
        auto pos = byte_offset + i;
        plain[part.start + pos / sector_size][pos % sector_size] = bytes[i];
    }
}
} // namespace

auto provision(std::span<BootEntry const> boot_entries,
               std::span<DataFile const> data_files, DeviceIdentity const &dev,
               CardIdentity const &card, ProvisionParams const &params) -> Provisioned
{
    if (!card.cid_crc_valid())
    {
        throw NvmError(NvmErrc::invalid_identity, "card CID fails its CRC7");
    }
    if (csd_capacity_sectors(card.csd()) < params.geometry)
    {
        throw NvmError(NvmErrc::capacity_exceeded, "geometry exceeds card capacity");
    }

    auto image = build_boot_image(boot_entries);
    auto layout = NvmLayout::compute(params.geometry, image.sector_count());

    // Plaintext view of every tagged LBA.
    std::vector<Sector> plain(layout.tagged_sectors(), Sector{});

    MbrSector mbr;
    mbr.partitions[0].status = 0x80;
    mbr.partitions[0].type = boot_partition_type;
    mbr.partitions[0].lba_start = static_cast<std::uint32_t>(layout.boot.start);
    mbr.partitions[0].sector_count = static_cast<std::uint32_t>(layout.boot.count);
    mbr.partitions[1].type = data_partition_type;
    mbr.partitions[1].lba_start = static_cast<std::uint32_t>(layout.data.start);
    mbr.partitions[1].sector_count = static_cast<std::uint32_t>(layout.data.count);
    plain[0] = mbr.serialize();

    write_partition_bytes(plain, layout.boot, 0, image.bytes());

    std::vector<FileRecord> records;
    for (auto const &file : data_files)
    {
        if (std::any_of(records.begin(), records.end(),
                        [&](auto const &r) { return r.label == file.label; }))
        {
            throw std::invalid_argument("duplicate data file label '" + file.label + "'");
        }
        auto offset = allocate_extent(records, layout.data.count, file.blob.size());
        if (!offset)
        {
            throw NvmError(NvmErrc::capacity_exceeded,
                           "data file '" + file.label + "' does not fit");
        }
        records.push_back({file.label, *offset, file.blob.size()});
        write_partition_bytes(plain, layout.data, *offset, file.blob);
    }
    write_partition_bytes(plain, layout.data, 0, encode_file_table(records));

    auto kdf = make_kdf_input(dev, card, params.kdf.counter, params.kdf.repetitions);
    auto key = derive_key(kdf);
    auto mac = derive_mac_key(kdf);
    secure_wipe(kdf.secret);
    Aes128 cipher(key);

    NvmImage out(layout.geometry);
    std::vector<Sector> meta_plain(layout.meta.count, Sector{});
    for (std::uint64_t lba = 0; lba < layout.tagged_sectors(); ++lba)
    {
        apply_sector_keystream(cipher, lba, plain[lba], out.sector(lba));
        auto tag = sector_tag(mac, lba, out.sector(lba));
        auto slot = layout.tag_slot(lba);
        std::copy(tag.bytes.begin(), tag.bytes.end(),
                  meta_plain[slot.lba - layout.meta.start].begin() +
                      static_cast<std::ptrdiff_t>(slot.offset));
    }
    for (std::uint64_t i = 0; i < layout.meta.count; ++i)
    {
        auto lba = layout.meta.start + i;
        apply_sector_keystream(cipher, lba, meta_plain[i], out.sector(lba));
    }
    Sector zero{};
    for (auto lba = layout.meta.end(); lba < layout.geometry; ++lba)
    {
        apply_sector_keystream(cipher, lba, zero, out.sector(lba));
    }

    TrustAnchors anchors(device_checksum(dev), nvm_checksum(card, params.bind_csd),
                         sector_tag(mac, 0, out.sector(0)), params.kdf.counter,
                         params.kdf.repetitions, params.bind_csd);

    Manifest manifest{anchors, layout, {}, dev.dna(), card.cid(), card.csd()};
    for (auto const &e : boot_entries)
    {
        manifest.entries.push_back({e.kind, e.blob.size(), sha256(e.blob)});
    }

    for (auto &s : plain)
        secure_wipe(s);
    return Provisioned{std::move(out), std::move(manifest)};
}

auto audit_image(NvmImage const &image, Manifest const &manifest, DeviceIdentity const &dev,
                 CardIdentity const &card) -> ImageAudit
{
    auto const &layout = manifest.layout;
    if (image.geometry() < layout.meta.end())
        throw NvmError(NvmErrc::malformed, "image smaller than its layout");

    auto kdf = make_kdf_input(dev, card, manifest.anchors.kdf_counter(),
                              manifest.anchors.kdf_repetitions());
    auto key = derive_key(kdf);
    auto mac = derive_mac_key(kdf);
    secure_wipe(kdf.secret);

    ImageAudit audit;
    audit.mbr_anchor_ok = sector_tag(mac, 0, image.sector(0)) == manifest.anchors.mbr_digest();

    for (std::uint64_t i = 0; i < layout.meta.count; ++i)
    {
        auto meta_lba = layout.meta.start + i;
        auto meta = decrypt_sector(key, meta_lba, image.sector(meta_lba));
        bool bad_slack = false;
        for (std::size_t k = 0; k < tags_per_sector; ++k)
        {
            auto lba = i * tags_per_sector + k;
            auto slot = meta.begin() + static_cast<std::ptrdiff_t>(k * 32);
            if (lba >= layout.tagged_sectors())
            {
                bad_slack |= std::any_of(slot, slot + 32, [](auto b) { return b != 0; });
                continue;
            }
            auto tag = sector_tag(mac, lba, image.sector(lba));
            if (!std::equal(tag.bytes.begin(), tag.bytes.end(), slot))
                audit.failed_lbas.push_back(lba);
        }
        if (bad_slack)
            audit.malformed_meta_lbas.push_back(meta_lba);
    }
    std::sort(audit.failed_lbas.begin(), audit.failed_lbas.end());
    return audit;
}

} // namespace tmiu

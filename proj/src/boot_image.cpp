#include <tmiu/boot_image.hpp>

#include <algorithm>
#include <stdexcept>

namespace tmiu
{

auto to_string(EntryKind kind) -> std::string_view
{
    switch (kind)
    {
    case EntryKind::partial_bitstream:
        return "partial-bitstream";
    case EntryKind::fsbl:
        return "fsbl";
    case EntryKind::ssbl:
        return "ssbl";
    case EntryKind::kernel:
        return "kernel";
    case EntryKind::devicetree:
        return "devicetree";
    }
    return "unknown";
}

auto entry_kind_from_string(std::string_view name) -> std::optional<EntryKind>
{
    for (auto k : {EntryKind::partial_bitstream, EntryKind::fsbl, EntryKind::ssbl,
                   EntryKind::kernel, EntryKind::devicetree})
    {
        if (to_string(k) == name)
            return k;
    }
    return std::nullopt;
}

auto to_string(ImageCheck c) -> std::string_view
{
    switch (c)
    {
    case ImageCheck::pass:
        return "Pass";
    case ImageCheck::digest_mismatch:
        return "ImageDigestMismatch";
    case ImageCheck::malformed:
        return "MalformedImage";
    }
    return "?";
}

auto boot_image_size(std::span<std::size_t const> blob_lengths) -> std::size_t
{
    std::size_t body = boot_header_size + boot_record_size * blob_lengths.size();
    for (auto len : blob_lengths)
        body += len;
    body += boot_tag_size;
    return (body + sector_size - 1) / sector_size * sector_size;
}

auto BootImage::t_auth() const -> Digest256
{
    Digest256 d;
    std::copy(container_.end() - boot_tag_size, container_.end(), d.bytes.begin());
    return d;
}

auto build_boot_image(std::span<BootEntry const> entries) -> BootImage
{
    if (entries.empty())
    {
        throw std::invalid_argument("boot image needs at least one entry");
    }
    if (entries.size() > 0xffff)
    {
        throw std::invalid_argument("too many boot image entries");
    }
    std::vector<std::size_t> lengths;
    for (auto const &e : entries)
    {
        if (e.blob.empty())
            throw std::invalid_argument("boot image entry is empty");
        if (e.blob.size() > 0xffffffffu)
            throw std::invalid_argument("boot image entry exceeds 4 GiB");
        lengths.push_back(e.blob.size());
    }
    auto total = boot_image_size(lengths);
    if (total > 0xffffffffu)
    {
        throw std::invalid_argument("boot image exceeds 4 GiB");
    }

    BootImage image;
    auto &out = image.container_;
    out.assign(total, 0);
    std::copy(boot_image_magic.begin(), boot_image_magic.end(), out.begin());
    put_le16(out.data() + 4, boot_image_version);
    put_le16(out.data() + 6, static_cast<std::uint16_t>(entries.size()));
    put_le32(out.data() + 8, static_cast<std::uint32_t>(total));

    auto payload_start = boot_header_size + boot_record_size * entries.size();
    std::size_t offset = 0;
    for (std::size_t i = 0; i < entries.size(); ++i)
    {
        auto *rec = out.data() + boot_header_size + boot_record_size * i;
        rec[0] = static_cast<std::uint8_t>(entries[i].kind);
        put_le32(rec + 4, static_cast<std::uint32_t>(offset));
        put_le32(rec + 8, static_cast<std::uint32_t>(entries[i].blob.size()));
        std::copy(entries[i].blob.begin(), entries[i].blob.end(),
                  out.begin() + static_cast<std::ptrdiff_t>(payload_start + offset));
        offset += entries[i].blob.size();
    }

    auto tag = sha256(ByteView(out.data(), total - boot_tag_size));
    std::copy(tag.bytes.begin(), tag.bytes.end(), out.end() - boot_tag_size);
    return image;
}

namespace
{
auto structure_ok(ByteView c) -> bool
{
    if (!std::equal(boot_image_magic.begin(), boot_image_magic.end(), c.begin()))
        return false;
    if (get_le16(c.data() + 4) != boot_image_version)
        return false;
    std::size_t count = get_le16(c.data() + 6);
    if (count == 0 || get_le32(c.data() + 8) != c.size())
        return false;
    auto payload_start = boot_header_size + boot_record_size * count;
    if (payload_start > c.size() - boot_tag_size)
        return false;
    auto payload_limit = c.size() - boot_tag_size - payload_start;
    for (std::size_t i = 0; i < count; ++i)
    {
        auto const *rec = c.data() + boot_header_size + boot_record_size * i;
        if (rec[0] < 1 || rec[0] > 5 || rec[1] != 0 || rec[2] != 0 || rec[3] != 0)
            return false;
        std::uint64_t off = get_le32(rec + 4);
        std::uint64_t len = get_le32(rec + 8);
        if (len == 0 || off + len > payload_limit)
            return false;
    }
    return true;
}
} // namespace

auto verify_boot_image(ByteView c) -> ImageCheck
{
    if (c.size() < sector_size || c.size() % sector_size != 0)
    {
        return ImageCheck::malformed;
    }
    auto body = c.first(c.size() - boot_tag_size);
    Digest256 stored;
    std::copy(c.end() - boot_tag_size, c.end(), stored.bytes.begin());
    if (sha256(body) != stored)
    {
        return ImageCheck::digest_mismatch;
    }
    return structure_ok(c) ? ImageCheck::pass : ImageCheck::malformed;
}

auto parse_boot_image(ByteView c) -> std::vector<BootEntryView>
{
    if (verify_boot_image(c) != ImageCheck::pass)
    {
        throw std::invalid_argument("boot image failed verification");
    }
    std::size_t count = get_le16(c.data() + 6);
    auto payload_start = boot_header_size + boot_record_size * count;
    std::vector<BootEntryView> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
    {
        auto const *rec = c.data() + boot_header_size + boot_record_size * i;
        out.push_back({static_cast<EntryKind>(rec[0]),
                       c.subspan(payload_start + get_le32(rec + 4), get_le32(rec + 8))});
    }
    return out;
}

} // namespace tmiu

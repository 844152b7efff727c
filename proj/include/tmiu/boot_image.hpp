#pragma once

#include <tmiu/sha256.hpp>

#include <optional>
#include <string_view>
#include <vector>

namespace tmiu
{

enum class EntryKind : std::uint8_t
{
    partial_bitstream = 1,
    fsbl = 2,
    ssbl = 3,
    kernel = 4,
    devicetree = 5,
};

auto to_string(EntryKind kind) -> std::string_view;
auto entry_kind_from_string(std::string_view name) -> std::optional<EntryKind>;

struct BootEntry
{
    EntryKind kind;
    Bytes blob;
};

struct BootEntryView
{
    EntryKind kind;
    ByteView blob;
};

// Container layout (little-endian):
//   "TMBI" | version:u16 | entry_count:u16 | total_length:u32
//   entry_count x { kind:u8 | reserved:3 | offset:u32 | length:u32 }
//   payload | zero padding to 512k - 32 | t_auth = sha256(all preceding)
inline constexpr std::array<std::uint8_t, 4> boot_image_magic = {'T', 'M', 'B', 'I'};
inline constexpr std::uint16_t boot_image_version = 1;
inline constexpr std::size_t boot_header_size = 12;
inline constexpr std::size_t boot_record_size = 12;
inline constexpr std::size_t boot_tag_size = 32;

/// Serialized size of a container holding blobs of the given lengths.
auto boot_image_size(std::span<std::size_t const> blob_lengths) -> std::size_t;

class BootImage
{
public:
    auto bytes() const noexcept -> ByteView { return container_; }
    auto size() const noexcept -> std::size_t { return container_.size(); }
    auto sector_count() const noexcept -> std::size_t { return container_.size() / sector_size; }
    auto t_auth() const -> Digest256;

private:
    friend auto build_boot_image(std::span<BootEntry const> entries) -> BootImage;
    Bytes container_;
};

/// Throws std::invalid_argument on an empty entry list or an empty blob.
auto build_boot_image(std::span<BootEntry const> entries) -> BootImage;

enum class ImageCheck
{
    pass,
    digest_mismatch,
    malformed,
};

auto to_string(ImageCheck c) -> std::string_view;

/// The digest is checked before any header field is trusted.
auto verify_boot_image(ByteView container) -> ImageCheck;

/// Entries of a container that passed verify_boot_image. Throws
/// std::invalid_argument otherwise.
auto parse_boot_image(ByteView container) -> std::vector<BootEntryView>;

} // namespace tmiu

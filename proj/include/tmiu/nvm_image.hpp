#pragma once

#include <tmiu/boot_image.hpp>
#include <tmiu/identity.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tmiu
{

enum class NvmErrc
{
    bad_signature,
    overlapping_partitions,
    out_of_bounds,
    capacity_exceeded,
    invalid_identity,
    malformed,
    io_error,
};

auto to_string(NvmErrc code) -> std::string_view;

class NvmError : public std::runtime_error
{
public:
    NvmError(NvmErrc code, std::string const &what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {
    }
    auto code() const noexcept -> NvmErrc { return code_; }

private:
    NvmErrc code_;
};

struct LbaRange
{
    std::uint64_t start = 0;
    std::uint64_t count = 0;

    auto end() const noexcept -> std::uint64_t { return start + count; }
    auto contains(std::uint64_t lba) const noexcept -> bool
    {
        return lba >= start && lba < end();
    }
    friend auto operator==(LbaRange, LbaRange) -> bool = default;
};

// ---------------------------------------------------------------------------
// MBR

inline constexpr std::uint8_t boot_partition_type = 0x0c;
inline constexpr std::uint8_t data_partition_type = 0x83;

struct PartitionEntry
{
    std::uint8_t status = 0;
    std::array<std::uint8_t, 3> chs_first{};
    std::uint8_t type = 0;
    std::array<std::uint8_t, 3> chs_last{};
    std::uint32_t lba_start = 0;
    std::uint32_t sector_count = 0;

    auto used() const noexcept -> bool { return type != 0; }
    auto range() const noexcept -> LbaRange { return {lba_start, sector_count}; }
};

struct MbrSector
{
    std::array<std::uint8_t, 446> bootstrap{};
    std::array<PartitionEntry, 4> partitions{};

    auto serialize() const -> Sector;
    auto used_partitions() const -> std::vector<PartitionEntry>;
};

/// Structural parse of a plaintext MBR. Throws NvmError with
/// bad_signature, out_of_bounds, or overlapping_partitions.
auto parse_mbr(ByteView sector, std::uint64_t geometry) -> MbrSector;

// ---------------------------------------------------------------------------
// Layout

/// Tags per integrity-region sector (32-byte HMAC each).
inline constexpr std::size_t tags_per_sector = sector_size / 32;

/// MBR at LBA 0, boot partition, data partition, then the integrity
/// region holding one tag per LBA below its own start.
struct NvmLayout
{
    std::uint64_t geometry = 0;
    LbaRange boot;
    LbaRange data;
    LbaRange meta;

    /// Largest data partition that fits the geometry. Throws NvmError
    /// capacity_exceeded if the boot partition leaves no room.
    static auto compute(std::uint64_t geometry, std::uint64_t boot_sectors) -> NvmLayout;

    /// Recovers the layout from the two MBR partitions.
    static auto from_partitions(std::uint64_t geometry, LbaRange boot, LbaRange data)
        -> NvmLayout;

    /// Number of LBAs covered by tags: [0, meta.start).
    auto tagged_sectors() const noexcept -> std::uint64_t { return meta.start; }

    struct TagSlot
    {
        std::uint64_t lba;
        std::size_t offset;
    };
    auto tag_slot(std::uint64_t lba) const -> TagSlot;

    friend auto operator==(NvmLayout const &, NvmLayout const &) -> bool = default;
};

/// Sectors needed to hold tags for `tagged` LBAs.
constexpr auto meta_sectors_for(std::uint64_t tagged) noexcept -> std::uint64_t
{
    return (tagged + tags_per_sector - 1) / tags_per_sector;
}

// ---------------------------------------------------------------------------
// Raw image

class NvmImage
{
public:
    NvmImage() = default;
    explicit NvmImage(std::uint64_t geometry) : sectors_(geometry) {}

    auto geometry() const noexcept -> std::uint64_t { return sectors_.size(); }
    auto sector(std::uint64_t lba) const -> Sector const & { return sectors_.at(lba); }
    auto sector(std::uint64_t lba) -> Sector & { return sectors_.at(lba); }

    auto to_bytes() const -> Bytes;
    static auto from_bytes(ByteView raw) -> NvmImage;

    /// Raw sector dump, `.nvm`. Throws NvmError io_error.
    void save(std::filesystem::path const &path) const;
    static auto load(std::filesystem::path const &path) -> NvmImage;

    friend auto operator==(NvmImage const &, NvmImage const &) -> bool = default;

private:
    std::vector<Sector> sectors_;
};

// ---------------------------------------------------------------------------
// Flat file table of the data partition
//
// The first file_table_sectors sectors of the data partition hold:
//   count:u32 | count x { label_len:u16 | label | offset:u64 | length:u64 }
// Offsets are byte offsets from the partition start and sector aligned.

inline constexpr std::uint64_t file_table_sectors = 8;

struct FileRecord
{
    std::string label;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;

    friend auto operator==(FileRecord const &, FileRecord const &) -> bool = default;
};

/// Throws NvmError capacity_exceeded if the table does not fit.
auto encode_file_table(std::span<FileRecord const> records) -> Bytes;
/// Throws NvmError malformed.
auto decode_file_table(ByteView table) -> std::vector<FileRecord>;

/// First-fit, sector-aligned byte offset for `length` bytes inside a data
/// partition of `partition_sectors`, avoiding every extent in `records`.
auto allocate_extent(std::span<FileRecord const> records,
                     std::uint64_t partition_sectors, std::uint64_t length)
    -> std::optional<std::uint64_t>;

// ---------------------------------------------------------------------------
// Provisioning

struct DataFile
{
    std::string label;
    Bytes blob;
};

struct KdfParams
{
    std::uint32_t counter = 1;
    std::uint32_t repetitions = default_kdf_repetitions;
};

struct ProvisionParams
{
    std::uint64_t geometry = 8192;
    KdfParams kdf;
    bool bind_csd = false;
};

struct EntryDigest
{
    EntryKind kind;
    std::uint64_t length = 0;
    Digest256 digest;

    friend auto operator==(EntryDigest const &, EntryDigest const &) -> bool = default;
};

/// Provisioning record: trust anchors, layout, per-entry plaintext digests,
/// and (secure-environment only) the identities the image is bound to.
struct Manifest
{
    TrustAnchors anchors;
    NvmLayout layout;
    std::vector<EntryDigest> entries;
    std::optional<std::uint64_t> device_dna;
    std::optional<CardRegister> card_cid;
    std::optional<CardRegister> card_csd;

    auto to_text() const -> std::string;
    /// Throws std::invalid_argument.
    static auto from_text(std::string_view text) -> Manifest;

    void save(std::filesystem::path const &path) const;
    static auto load(std::filesystem::path const &path) -> Manifest;
};

struct Provisioned
{
    NvmImage image;
    Manifest manifest;
};

/// Builds the plaintext layout, encrypts every sector with the pair-bound
/// key, and fills the integrity region. Throws NvmError capacity_exceeded
/// or invalid_identity.
auto provision(std::span<BootEntry const> boot_entries,
               std::span<DataFile const> data_files, DeviceIdentity const &dev,
               CardIdentity const &card, ProvisionParams const &params) -> Provisioned;

/// Offline tag check of a backing image with the pair-derived keys.
struct ImageAudit
{
    bool mbr_anchor_ok = false;
    std::vector<std::uint64_t> failed_lbas;       ///< tag mismatch
    std::vector<std::uint64_t> malformed_meta_lbas; ///< nonzero unused slots
};

auto audit_image(NvmImage const &image, Manifest const &manifest, DeviceIdentity const &dev,
                 CardIdentity const &card) -> ImageAudit;

} // namespace tmiu

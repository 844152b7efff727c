#pragma once

#include <tmiu/crc.hpp>
#include <tmiu/kdf.hpp>
#include <tmiu/sha256.hpp>

#include <map>
#include <string>

namespace tmiu
{

inline constexpr std::uint64_t device_dna_limit = std::uint64_t{1} << 57;

/// The 57-bit read-only device DNA of the programmable SoC.
class DeviceIdentity
{
public:
    /// Throws std::invalid_argument if dna >= 2^57.
    explicit DeviceIdentity(std::uint64_t dna, bool jtag_disabled = true);

    auto dna() const noexcept -> std::uint64_t { return dna_; }
    auto jtag_disabled() const noexcept -> bool { return jtag_disabled_; }

    /// Big-endian 8-byte encoding used for hashing and key derivation.
    auto encoded() const noexcept -> std::array<std::uint8_t, 8>;

private:
    std::uint64_t dna_;
    bool jtag_disabled_;
};

using CardRegister = std::array<std::uint8_t, 16>;

struct CidFields
{
    std::uint8_t manufacturer_id = 0x03;
    std::array<char, 2> oem_id = {'S', 'D'};
    std::array<char, 5> product_name = {'S', 'U', '1', '6', 'G'};
    std::uint8_t product_revision = 0x80;
    std::uint32_t serial = 0;
    std::uint16_t manufacture_date = 0x142; // 2020-02
};

/// Lays out a CID per the SD register map with a valid trailing CRC7.
auto make_cid(CidFields const &fields) -> CardRegister;

/// Version-2 CSD advertising at least `sectors` 512-byte blocks
/// (capacity granularity is 1024 sectors).
auto make_csd(std::uint64_t sectors) -> CardRegister;

/// Capacity in 512-byte sectors advertised by a version-2 CSD.
auto csd_capacity_sectors(CardRegister const &csd) noexcept -> std::uint64_t;

/// True if byte 15 carries CRC7(bytes 0..14) followed by the end bit.
auto register_crc_valid(CardRegister const &reg) noexcept -> bool;

/// Factory-fixed identification registers of an SD card.
class CardIdentity
{
public:
    CardIdentity(CardRegister cid, CardRegister csd) noexcept
        : cid_(cid), csd_(csd)
    {
    }

    auto cid() const noexcept -> CardRegister const & { return cid_; }
    auto csd() const noexcept -> CardRegister const & { return csd_; }
    auto cid_crc_valid() const noexcept -> bool { return register_crc_valid(cid_); }

private:
    CardRegister cid_;
    CardRegister csd_;
};

/// Reference values compiled into the interface unit at build time.
class TrustAnchors
{
public:
    TrustAnchors(Digest256 device_checksum, Digest256 nvm_checksum,
                 Digest256 mbr_digest, std::uint32_t kdf_counter,
                 std::uint32_t kdf_repetitions, bool binds_csd = false);

    auto device_checksum() const noexcept -> Digest256 const & { return device_checksum_; }
    auto nvm_checksum() const noexcept -> Digest256 const & { return nvm_checksum_; }
    auto mbr_digest() const noexcept -> Digest256 const & { return mbr_digest_; }
    auto kdf_counter() const noexcept -> std::uint32_t { return kdf_counter_; }
    auto kdf_repetitions() const noexcept -> std::uint32_t { return kdf_repetitions_; }
    auto binds_csd() const noexcept -> bool { return binds_csd_; }

    friend auto operator==(TrustAnchors const &, TrustAnchors const &) -> bool = default;

private:
    Digest256 device_checksum_;
    Digest256 nvm_checksum_;
    Digest256 mbr_digest_;
    std::uint32_t kdf_counter_;
    std::uint32_t kdf_repetitions_;
    bool binds_csd_;
};

auto device_checksum(DeviceIdentity const &dev) -> Digest256;
auto nvm_checksum(CardIdentity const &card, bool bind_csd) -> Digest256;

enum class AuthResult
{
    pass,
    device_mismatch,
    nvm_mismatch,
    malformed_cid,
};

auto to_string(AuthResult r) -> std::string_view;

auto authenticate_device(TrustAnchors const &anchors, DeviceIdentity const &dev)
    -> AuthResult;
auto authenticate_nvm(TrustAnchors const &anchors, CardIdentity const &card)
    -> AuthResult;

/// Key-derivation input for a (device, card) pair.
auto make_kdf_input(DeviceIdentity const &dev, CardIdentity const &card,
                    std::uint32_t counter, std::uint32_t repetitions) -> KdfInput;

/// `key=value` lines in the fixed field order.
auto anchors_to_text(TrustAnchors const &anchors) -> std::string;

/// Builds anchors from parsed manifest fields. Throws std::invalid_argument
/// on missing or malformed fields.
auto anchors_from_fields(std::map<std::string, std::string> const &fields)
    -> TrustAnchors;

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
/// Throws std::invalid_argument on malformed or duplicate keys.
auto parse_key_values(std::string_view text) -> std::map<std::string, std::string>;

} // namespace tmiu

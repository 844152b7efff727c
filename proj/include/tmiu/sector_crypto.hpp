#pragma once

#include <tmiu/aes128.hpp>
#include <tmiu/sha256.hpp>

namespace tmiu
{

/// AES-128-CTR over one 512-byte sector. The counter block of AES block j
/// is be64(sector_index) || be64(j). Throws std::invalid_argument unless
/// the input is exactly one sector.
auto encrypt_sector(AesKey128 const &key, std::uint64_t sector_index,
                    ByteView plaintext) -> Sector;

/// CTR is an involution; provided for direction clarity.
auto decrypt_sector(AesKey128 const &key, std::uint64_t sector_index,
                    ByteView ciphertext) -> Sector;

/// Same transform with a pre-expanded key, for streaming paths.
void apply_sector_keystream(Aes128 const &cipher, std::uint64_t sector_index,
                            ByteView in, std::span<std::uint8_t, sector_size> out);

/// HMAC-SHA-256(mac_key, be64(sector_index) || ciphertext).
auto sector_tag(MacKey const &mac_key, std::uint64_t sector_index,
                ByteView ciphertext) -> Digest256;

} // namespace tmiu

#pragma once

#include <tmiu/aes128.hpp>
#include <tmiu/sha256.hpp>

namespace tmiu
{

/// Inputs to the one-step concatenation KDF.
///
/// `secret` is the big-endian 64-bit encoding of the 57-bit device DNA and
/// `other_info` the raw 128-bit card CID. `repetitions` chains the hash to
/// stretch the low-entropy device secret.
struct KdfInput
{
    std::uint32_t counter = 1;
    std::array<std::uint8_t, 8> secret{};
    std::array<std::uint8_t, 16> other_info{};
    std::uint32_t repetitions = 1;

    /// Throws std::invalid_argument if the secret has bits above bit 56 set
    /// or repetitions is zero.
    void validate() const;
};

inline constexpr std::uint32_t default_kdf_repetitions = 1000;

/// Counter offset separating the integrity-key derivation from the
/// encryption-key derivation ("MA").
inline constexpr std::uint32_t mac_key_counter_offset = 0x4D41;

/// D_1 = H(be32(c) || secret || other_info),
/// D_{i+1} = H(be32(c + i) || D_i || other_info); returns the final digest.
auto kdf_chain(KdfInput const &input) -> Digest256;

/// First 16 bytes of the final chained digest.
auto derive_key(KdfInput const &input) -> AesKey128;

/// Same chain with the counter offset by mac_key_counter_offset; full
/// 32-byte output.
auto derive_mac_key(KdfInput const &input) -> MacKey;

} // namespace tmiu

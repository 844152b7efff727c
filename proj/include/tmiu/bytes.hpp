#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <algorithm>
#include <stdexcept>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tmiu
{

inline constexpr std::size_t sector_size = 512;

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<std::uint8_t const>;
using Sector = std::array<std::uint8_t, sector_size>;

inline void put_be32(std::uint8_t *out, std::uint32_t v) noexcept
{
    out[0] = static_cast<std::uint8_t>(v >> 24);
    out[1] = static_cast<std::uint8_t>(v >> 16);
    out[2] = static_cast<std::uint8_t>(v >> 8);
    out[3] = static_cast<std::uint8_t>(v);
}

inline void put_be64(std::uint8_t *out, std::uint64_t v) noexcept
{
    put_be32(out, static_cast<std::uint32_t>(v >> 32));
    put_be32(out + 4, static_cast<std::uint32_t>(v));
}

inline auto get_be32(std::uint8_t const *in) noexcept -> std::uint32_t
{
    return (std::uint32_t{in[0]} << 24) | (std::uint32_t{in[1]} << 16) |
           (std::uint32_t{in[2]} << 8) | std::uint32_t{in[3]};
}

inline auto get_be64(std::uint8_t const *in) noexcept -> std::uint64_t
{
    return (std::uint64_t{get_be32(in)} << 32) | get_be32(in + 4);
}

inline void put_le16(std::uint8_t *out, std::uint16_t v) noexcept
{
    out[0] = static_cast<std::uint8_t>(v);
    out[1] = static_cast<std::uint8_t>(v >> 8);
}

inline void put_le32(std::uint8_t *out, std::uint32_t v) noexcept
{
    put_le16(out, static_cast<std::uint16_t>(v));
    put_le16(out + 2, static_cast<std::uint16_t>(v >> 16));
}

inline void put_le64(std::uint8_t *out, std::uint64_t v) noexcept
{
    put_le32(out, static_cast<std::uint32_t>(v));
    put_le32(out + 4, static_cast<std::uint32_t>(v >> 32));
}

inline auto get_le16(std::uint8_t const *in) noexcept -> std::uint16_t
{
    return static_cast<std::uint16_t>(in[0] | (in[1] << 8));
}

inline auto get_le32(std::uint8_t const *in) noexcept -> std::uint32_t
{
    return std::uint32_t{get_le16(in)} | (std::uint32_t{get_le16(in + 2)} << 16);
}

inline auto get_le64(std::uint8_t const *in) noexcept -> std::uint64_t
{
    return std::uint64_t{get_le32(in)} | (std::uint64_t{get_le32(in + 4)} << 32);
}

auto to_hex(ByteView data) -> std::string;

/// Parses an even-length hex string (no prefix). Throws std::invalid_argument.
auto from_hex(std::string_view text) -> Bytes;

template <std::size_t N>
auto fixed_from_hex(std::string_view text) -> std::array<std::uint8_t, N>
{
    auto raw = from_hex(text);
    if (raw.size() != N)
    {
        throw std::invalid_argument("hex value has wrong length");
    }
    std::array<std::uint8_t, N> out{};
    std::copy(raw.begin(), raw.end(), out.begin());
    return out;
}

/// Overwrites memory in a way the optimizer may not elide.
void secure_wipe(std::span<std::uint8_t> data) noexcept;

/// True if `needle` occurs anywhere in `haystack`.
auto contains_bytes(ByteView haystack, ByteView needle) -> bool;

} // namespace tmiu

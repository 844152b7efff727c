#pragma once

#include <tmiu/bytes.hpp>

namespace tmiu
{

struct Digest256
{
    std::array<std::uint8_t, 32> bytes{};

    friend auto operator==(Digest256 const &, Digest256 const &) -> bool = default;

    auto hex() const -> std::string { return to_hex(bytes); }
    static auto from_hex(std::string_view text) -> Digest256
    {
        return Digest256{fixed_from_hex<32>(text)};
    }
};

/// Incremental FIPS 180-4 SHA-256.
class Sha256
{
public:
    Sha256() noexcept { reset(); }

    void reset() noexcept;
    void update(ByteView data) noexcept;
    auto finish() noexcept -> Digest256;

private:
    void compress(std::uint8_t const *block) noexcept;

    std::array<std::uint32_t, 8> state_{};
    std::array<std::uint8_t, 64> buffer_{};
    std::size_t buffered_ = 0;
    std::uint64_t total_bytes_ = 0;
};

auto sha256(ByteView message) noexcept -> Digest256;

/// RFC 2104 HMAC over SHA-256.
auto hmac_sha256(ByteView key, ByteView message) noexcept -> Digest256;

} // namespace tmiu

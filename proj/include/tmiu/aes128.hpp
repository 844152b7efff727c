#pragma once

#include <tmiu/bytes.hpp>

namespace tmiu
{

using AesBlock = std::array<std::uint8_t, 16>;

/// 128-bit symmetric key. Wiped on destruction.
class AesKey128
{
public:
    AesKey128() = default;
    explicit AesKey128(std::array<std::uint8_t, 16> const &bytes) noexcept
        : bytes_(bytes)
    {
    }
    AesKey128(AesKey128 const &) = default;
    auto operator=(AesKey128 const &) -> AesKey128 & = default;
    ~AesKey128() { secure_wipe(bytes_); }

    auto bytes() const noexcept -> ByteView { return bytes_; }
    void wipe() noexcept { secure_wipe(bytes_); }

    friend auto operator==(AesKey128 const &, AesKey128 const &) -> bool = default;

private:
    std::array<std::uint8_t, 16> bytes_{};
};

/// 256-bit integrity key for sector tags. Wiped on destruction.
class MacKey
{
public:
    MacKey() = default;
    explicit MacKey(std::array<std::uint8_t, 32> const &bytes) noexcept
        : bytes_(bytes)
    {
    }
    MacKey(MacKey const &) = default;
    auto operator=(MacKey const &) -> MacKey & = default;
    ~MacKey() { secure_wipe(bytes_); }

    auto bytes() const noexcept -> ByteView { return bytes_; }
    void wipe() noexcept { secure_wipe(bytes_); }

    friend auto operator==(MacKey const &, MacKey const &) -> bool = default;

private:
    std::array<std::uint8_t, 32> bytes_{};
};

/// FIPS-197 AES-128, forward direction only (all modes used here are
/// counter based).
class Aes128
{
public:
    explicit Aes128(AesKey128 const &key) noexcept;
    Aes128(Aes128 const &) = delete;
    auto operator=(Aes128 const &) -> Aes128 & = delete;
    ~Aes128();

    auto encrypt_block(AesBlock const &in) const noexcept -> AesBlock;

private:
    std::array<std::uint32_t, 44> round_keys_{};
};

} // namespace tmiu

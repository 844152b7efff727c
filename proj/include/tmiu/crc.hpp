#pragma once

#include <tmiu/bytes.hpp>

namespace tmiu
{

/// SD command-line checksum: polynomial x^7 + x^3 + 1, init 0, unreflected.
struct Crc7
{
    std::uint8_t value = 0;

    friend constexpr auto operator==(Crc7, Crc7) -> bool = default;
};

/// SD data-line checksum (CRC-16/XMODEM): x^16 + x^12 + x^5 + 1, init 0.
struct Crc16
{
    std::uint16_t value = 0;

    friend constexpr auto operator==(Crc16, Crc16) -> bool = default;
};

auto crc7(ByteView message) noexcept -> Crc7;
auto crc16(ByteView block) noexcept -> Crc16;

} // namespace tmiu

#include <tmiu/crc.hpp>

namespace tmiu
{

namespace
{

// The 7-bit register is kept left-aligned in a byte so each table step
// consumes a whole message byte.
constexpr auto make_crc7_table() noexcept
{
    std::array<std::uint8_t, 256> table{};
    for (unsigned i = 0; i < 256; ++i)
    {
        unsigned reg = i;
        for (int bit = 0; bit < 8; ++bit)
        {
            reg = (reg & 0x80) ? ((reg << 1) ^ (0x09 << 1)) : (reg << 1);
        }
        table[i] = static_cast<std::uint8_t>(reg & 0xff);
    }
    return table;
}

constexpr auto make_crc16_table() noexcept
{
    std::array<std::uint16_t, 256> table{};
    for (unsigned i = 0; i < 256; ++i)
    {
        unsigned reg = i << 8;
        for (int bit = 0; bit < 8; ++bit)
        {
            reg = (reg & 0x8000) ? ((reg << 1) ^ 0x1021) : (reg << 1);
        }
        table[i] = static_cast<std::uint16_t>(reg & 0xffff);
    }
    return table;
}

constexpr auto crc7_table = make_crc7_table();
constexpr auto crc16_table = make_crc16_table();

} // namespace

auto crc7(ByteView message) noexcept -> Crc7
{
    std::uint8_t reg = 0;
    for (auto b : message)
    {
        reg = crc7_table[reg ^ b];
    }
    return Crc7{static_cast<std::uint8_t>(reg >> 1)};
}

auto crc16(ByteView block) noexcept -> Crc16
{
    std::uint16_t reg = 0;
    for (auto b : block)
    {
        reg = static_cast<std::uint16_t>((reg << 8) ^
                                         crc16_table[(reg >> 8) ^ b]);
    }
    return Crc16{reg};
}

} // namespace tmiu

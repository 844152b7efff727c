#include <tmiu/bytes.hpp>

#include <algorithm>
#include <functional>
#include <stdexcept>

namespace tmiu
{

auto to_hex(ByteView data) -> std::string
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (auto b : data)
    {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0f]);
    }
    return out;
}

namespace
{
auto nibble(char c) -> std::uint8_t
{
    if (c >= '0' && c <= '9')
        return static_cast<std::uint8_t>(c - '0');
    if (c >= 'a' && c <= 'f')
        return static_cast<std::uint8_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F')
        return static_cast<std::uint8_t>(c - 'A' + 10);
    throw std::invalid_argument("invalid hex digit");
}
} // namespace

auto from_hex(std::string_view text) -> Bytes
{
    if (text.size() % 2 != 0)
    {
        throw std::invalid_argument("hex string has odd length");
    }
    Bytes out(text.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i)
    {
        out[i] = static_cast<std::uint8_t>((nibble(text[2 * i]) << 4) |
                                           nibble(text[2 * i + 1]));
    }
    return out;
}

void secure_wipe(std::span<std::uint8_t> data) noexcept
{
    auto volatile *p = data.data();
    for (std::size_t i = 0; i < data.size(); ++i)
    {
        p[i] = 0;
    }
}

auto contains_bytes(ByteView haystack, ByteView needle) -> bool
{
    if (needle.empty())
        return true;
    return std::search(haystack.begin(), haystack.end(),
                       std::boyer_moore_horspool_searcher(needle.begin(),
                                                          needle.end())) !=
           haystack.end();
}

} // namespace tmiu

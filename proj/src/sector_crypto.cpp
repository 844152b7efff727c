#include <tmiu/sector_crypto.hpp>

#include <stdexcept>

namespace tmiu
{

namespace
{
void require_sector(ByteView data)
{
    if (data.size() != sector_size)
    {
        throw std::invalid_argument("sector payload must be exactly 512 bytes");
    }
}
} // namespace

void apply_sector_keystream(Aes128 const &cipher, std::uint64_t sector_index,
                            ByteView in, std::span<std::uint8_t, sector_size> out)
{
    require_sector(in);
    AesBlock counter{};
    put_be64(counter.data(), sector_index);
    for (std::uint64_t j = 0; j < sector_size / 16; ++j)
    {
        put_be64(counter.data() + 8, j);
        auto stream = cipher.encrypt_block(counter);
        for (std::size_t k = 0; k < 16; ++k)
        {
            out[16 * j + k] = in[16 * j + k] ^ stream[k];
        }
    }
}

auto encrypt_sector(AesKey128 const &key, std::uint64_t sector_index,
                    ByteView plaintext) -> Sector
{
    require_sector(plaintext);
    Aes128 cipher(key);
    Sector out{};
    apply_sector_keystream(cipher, sector_index, plaintext, out);
    return out;
}

auto decrypt_sector(AesKey128 const &key, std::uint64_t sector_index,
                    ByteView ciphertext) -> Sector
{
    return encrypt_sector(key, sector_index, ciphertext);
}

auto sector_tag(MacKey const &mac_key, std::uint64_t sector_index,
                ByteView ciphertext) -> Digest256
{
    require_sector(ciphertext);
    std::array<std::uint8_t, 8 + sector_size> message{};
    put_be64(message.data(), sector_index);
    std::copy(ciphertext.begin(), ciphertext.end(), message.begin() + 8);
    return hmac_sha256(mac_key.bytes(), message);
}

} // namespace tmiu

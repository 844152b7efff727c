#include <tmiu/kdf.hpp>

#include <stdexcept>

namespace tmiu
{

void KdfInput::validate() const
{
    if ((secret[0] & 0xfe) != 0)
    {
        throw std::invalid_argument("kdf secret exceeds 57 bits");
    }
    if (repetitions == 0)
    {
        throw std::invalid_argument("kdf repetitions must be at least 1");
    }
}

auto kdf_chain(KdfInput const &input) -> Digest256
{
    input.validate();

    std::array<std::uint8_t, 4> counter_be{};
    put_be32(counter_be.data(), input.counter);

    Sha256 h;
    h.update(counter_be);
    h.update(input.secret);
    h.update(input.other_info);
    auto digest = h.finish();

    for (std::uint32_t i = 1; i < input.repetitions; ++i)
    {
        put_be32(counter_be.data(), input.counter + i);
        h.update(counter_be);
        h.update(digest.bytes);
        h.update(input.other_info);
        digest = h.finish();
    }
    return digest;
}

auto derive_key(KdfInput const &input) -> AesKey128
{
    auto digest = kdf_chain(input);
    std::array<std::uint8_t, 16> key{};
    std::copy_n(digest.bytes.begin(), key.size(), key.begin());
    AesKey128 out(key);
    secure_wipe(key);
    secure_wipe(digest.bytes);
    return out;
}

auto derive_mac_key(KdfInput const &input) -> MacKey
{
    auto shifted = input;
    shifted.counter = input.counter + mac_key_counter_offset;
    auto digest = kdf_chain(shifted);
    MacKey out(digest.bytes);
    secure_wipe(digest.bytes);
    secure_wipe(shifted.secret);
    return out;
}

} // namespace tmiu

#include <tmiu/sha256.hpp>

#include <cstring>

namespace tmiu
{

namespace
{

constexpr std::array<std::uint32_t, 64> round_constants = {
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1,
    0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3,
    0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786,
    0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
    0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
    0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
    0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a,
    0x5b9cca4f, 0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
    0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};

constexpr auto rotr(std::uint32_t x, int n) noexcept -> std::uint32_t
{
    return (x >> n) | (x << (32 - n));
}

} // namespace

void Sha256::reset() noexcept
{
    state_ = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
              0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
    buffered_ = 0;
    total_bytes_ = 0;
}

void Sha256::compress(std::uint8_t const *block) noexcept
{
    std::array<std::uint32_t, 64> w{};
    for (int i = 0; i < 16; ++i)
    {
        w[i] = get_be32(block + 4 * i);
    }
    for (int i = 16; i < 64; ++i)
    {
        auto s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
        auto s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
        w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }

    auto [a, b, c, d, e, f, g, h] = state_;
    for (int i = 0; i < 64; ++i)
    {
        auto s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
        auto ch = (e & f) ^ (~e & g);
        auto t1 = h + s1 + ch + round_constants[i] + w[i];
        auto s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
        auto maj = (a & b) ^ (a & c) ^ (b & c);
        auto t2 = s0 + maj;
        h = g;
        g = f;
        f = e;
        e = d + t1;
        d = c;
        c = b;
        b = a;
        a = t1 + t2;
    }
    state_[0] += a;
    state_[1] += b;
    state_[2] += c;
    state_[3] += d;
    state_[4] += e;
    state_[5] += f;
    state_[6] += g;
    state_[7] += h;
}

void Sha256::update(ByteView data) noexcept
{
    total_bytes_ += data.size();
    auto const *p = data.data();
    auto remaining = data.size();

    if (buffered_ > 0)
    {
        auto take = std::min(remaining, buffer_.size() - buffered_);
        std::memcpy(buffer_.data() + buffered_, p, take);
        buffered_ += take;
        p += take;
        remaining -= take;
        if (buffered_ < buffer_.size())
            return;
        compress(buffer_.data());
        buffered_ = 0;
    }
    while (remaining >= 64)
    {
        compress(p);
        p += 64;
        remaining -= 64;
    }
    if (remaining > 0)
    {
        std::memcpy(buffer_.data(), p, remaining);
        buffered_ = remaining;
    }
}

auto Sha256::finish() noexcept -> Digest256
{
    auto bit_length = total_bytes_ * 8;
    std::array<std::uint8_t, 72> tail{};
    tail[0] = 0x80;
    auto pad = (buffered_ < 56) ? (56 - buffered_) : (120 - buffered_);
    put_be64(tail.data() + pad, bit_length);
    update(ByteView(tail.data(), pad + 8));

    Digest256 out;
    for (int i = 0; i < 8; ++i)
    {
        put_be32(out.bytes.data() + 4 * i, state_[i]);
    }
    reset();
    return out;
}

auto sha256(ByteView message) noexcept -> Digest256
{
    Sha256 ctx;
    ctx.update(message);
    return ctx.finish();
}

auto hmac_sha256(ByteView key, ByteView message) noexcept -> Digest256
{
    std::array<std::uint8_t, 64> block_key{};
    if (key.size() > block_key.size())
    {
        auto hashed = sha256(key);
        std::copy(hashed.bytes.begin(), hashed.bytes.end(), block_key.begin());
    }
    else
    {
        std::copy(key.begin(), key.end(), block_key.begin());
    }

    std::array<std::uint8_t, 64> pad{};
    for (std::size_t i = 0; i < pad.size(); ++i)
        pad[i] = block_key[i] ^ 0x36;
    Sha256 inner;
    inner.update(pad);
    inner.update(message);
    auto inner_digest = inner.finish();

    for (std::size_t i = 0; i < pad.size(); ++i)
        pad[i] = block_key[i] ^ 0x5c;
    Sha256 outer;
    outer.update(pad);
    outer.update(inner_digest.bytes);
    auto result = outer.finish();

    secure_wipe(block_key);
    secure_wipe(pad);
    return result;
}

} // namespace tmiu

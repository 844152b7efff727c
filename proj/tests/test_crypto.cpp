#include "oracle.hpp"

#include <tmiu/kdf.hpp>
#include <tmiu/sector_crypto.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace tmiu;

namespace
{
auto bytes_of(std::string_view s) -> Bytes { return Bytes(s.begin(), s.end()); }

auto random_bytes(std::mt19937_64 &rng, std::size_t n) -> Bytes
{
    Bytes b(n);
    for (auto &x : b)
        x = static_cast<std::uint8_t>(rng());
    return b;
}

template <std::size_t N>
auto to_vec(std::array<std::uint8_t, N> const &a) -> Bytes
{
    return Bytes(a.begin(), a.end());
}

auto view_vec(ByteView v) -> Bytes { return Bytes(v.begin(), v.end()); }

auto random_key(std::mt19937_64 &rng) -> AesKey128
{
    std::array<std::uint8_t, 16> k{};
    for (auto &x : k)
        x = static_cast<std::uint8_t>(rng());
    return AesKey128(k);
}
} // namespace

// --- SHA-256 ---------------------------------------------------------------

TEST(Sha256, EmptyString)
{
    EXPECT_EQ(sha256(ByteView{}).hex(),
              "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(to_vec(sha256(ByteView{}).bytes), to_vec(oracle::sha256({})));
}

TEST(Sha256, Abc)
{
    EXPECT_EQ(sha256(bytes_of("abc")).hex(),
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Sha256, TwoBlockMessage)
{
    EXPECT_EQ(sha256(bytes_of("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")).hex(),
              "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST(Sha256, RandomLengthsMatchOpenSsl)
{
    std::mt19937_64 rng(3);
    for (std::size_t n = 0; n < 300; ++n)
    {
        auto m = random_bytes(rng, n);
        ASSERT_EQ(to_vec(sha256(m).bytes), to_vec(oracle::sha256(m))) << n;
    }
}

TEST(Sha256, IncrementalMatchesOneShot)
{
    std::mt19937_64 rng(5);
    auto m = random_bytes(rng, 5000);
    Sha256 h;
    std::size_t pos = 0;
    while (pos < m.size())
    {
        auto n = std::min<std::size_t>(rng() % 130, m.size() - pos);
        h.update(ByteView(m).subspan(pos, n));
        pos += n;
    }
    EXPECT_EQ(h.finish(), sha256(m));
    h.update(bytes_of("abc"));
    EXPECT_EQ(h.finish(), sha256(bytes_of("abc"))) << "finish must reset";
}

TEST(Sha256, LastByteChangeChangesDigest)
{
    auto m = bytes_of("integrity of the whole container");
    auto d = sha256(m);
    m.back() ^= 1;
    EXPECT_NE(sha256(m), d);
}

// --- HMAC ------------------------------------------------------------------

TEST(HmacSha256, Rfc4231Case1)
{
    Bytes key(20, 0x0b);
    EXPECT_EQ(hmac_sha256(key, bytes_of("Hi There")).hex(),
              "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7");
}

TEST(HmacSha256, Rfc4231Case2)
{
    EXPECT_EQ(hmac_sha256(bytes_of("Jefe"), bytes_of("what do ya want for nothing?")).hex(),
              "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");
}

TEST(HmacSha256, Rfc4231Case6LongKey)
{
    Bytes key(131, 0xaa);
    EXPECT_EQ(
        hmac_sha256(key, bytes_of("Test Using Larger Than Block-Size Key - Hash Key First")).hex(),
        "60e431591ee0b67f0d8a26aacbf5b77f8e0bc6213728c5140546040f0ee37f54");
}

TEST(HmacSha256, RandomMatchesOpenSsl)
{
    std::mt19937_64 rng(9);
    for (int i = 0; i < 200; ++i)
    {
        auto key = random_bytes(rng, rng() % 100);
        auto msg = random_bytes(rng, rng() % 700);
        ASSERT_EQ(to_vec(hmac_sha256(key, msg).bytes), to_vec(oracle::hmac_sha256(key, msg)));
    }
}

// --- AES-128 ---------------------------------------------------------------

TEST(Aes128, Fips197AppendixC1)
{
    std::array<std::uint8_t, 16> k{};
    AesBlock pt{};
    for (int i = 0; i < 16; ++i)
    {
        k[i] = static_cast<std::uint8_t>(i);
        pt[i] = static_cast<std::uint8_t>(i * 0x11);
    }
    Aes128 aes{AesKey128(k)};
    EXPECT_EQ(to_hex(aes.encrypt_block(pt)), "69c4e0d86a7b0430d8cdb78070b4c55a");
    EXPECT_EQ(to_vec(aes.encrypt_block(pt)), oracle::aes128_block(k, pt));
}

TEST(Aes128, Fips197AppendixB)
{
    auto k = fixed_from_hex<16>("2b7e151628aed2a6abf7158809cf4f3c");
    auto pt = fixed_from_hex<16>("3243f6a8885a308d313198a2e0370734");
    Aes128 aes{AesKey128(k)};
    EXPECT_EQ(to_hex(aes.encrypt_block(pt)), "3925841d02dc09fbdc118597196a0b32");
}

TEST(Aes128, RandomBlocksMatchOpenSsl)
{
    std::mt19937_64 rng(21);
    for (int i = 0; i < 500; ++i)
    {
        auto key = random_key(rng);
        AesBlock pt{};
        for (auto &x : pt)
            x = static_cast<std::uint8_t>(rng());
        Aes128 aes(key);
        ASSERT_EQ(to_vec(aes.encrypt_block(pt)), oracle::aes128_block(key.bytes(), pt));
    }
}

TEST(AesKey128, WipeZeroes)
{
    std::mt19937_64 rng(1);
    auto k = random_key(rng);
    k.wipe();
    for (auto b : k.bytes())
        EXPECT_EQ(b, 0);
}

// --- Sector cipher and tag -------------------------------------------------

TEST(SectorCipher, RoundTrip)
{
    std::mt19937_64 rng(23);
    for (int i = 0; i < 100; ++i)
    {
        auto key = random_key(rng);
        auto lba = rng();
        auto p = random_bytes(rng, 512);
        auto c = encrypt_sector(key, lba, p);
        EXPECT_EQ(view_vec(decrypt_sector(key, lba, c)), p);
    }
}

TEST(SectorCipher, MatchesOpenSslCtr)
{
    std::mt19937_64 rng(29);
    for (int i = 0; i < 100; ++i)
    {
        auto key = random_key(rng);
        auto lba = i < 3 ? std::uint64_t(i) : rng();
        auto p = random_bytes(rng, 512);
        ASSERT_EQ(view_vec(encrypt_sector(key, lba, p)), oracle::sector_ctr(key.bytes(), lba, p));
    }
}

TEST(SectorCipher, IndexSeparatesCiphertexts)
{
    std::mt19937_64 rng(31);
    auto key = random_key(rng);
    Bytes p(512, 0x5a);
    EXPECT_NE(encrypt_sector(key, 0, p), encrypt_sector(key, 1, p));
}

TEST(SectorCipher, RejectsWrongLength)
{
    AesKey128 key;
    Bytes short_block(511), long_block(513);
    EXPECT_THROW(encrypt_sector(key, 0, short_block), std::invalid_argument);
    EXPECT_THROW(decrypt_sector(key, 0, long_block), std::invalid_argument);
    MacKey mac;
    EXPECT_THROW(sector_tag(mac, 0, short_block), std::invalid_argument);
}

TEST(SectorTag, MatchesOracleAndBindsIndexAndContent)
{
    std::mt19937_64 rng(37);
    std::array<std::uint8_t, 32> mk{};
    for (auto &x : mk)
        x = static_cast<std::uint8_t>(rng());
    MacKey mac(mk);
    auto c = random_bytes(rng, 512);
    auto t = sector_tag(mac, 42, c);
    EXPECT_EQ(to_vec(t.bytes), to_vec(oracle::sector_tag(mk, 42, c)));
    EXPECT_NE(sector_tag(mac, 43, c), t);
    for (std::size_t off : {0u, 100u, 511u})
    {
        auto d = c;
        d[off] ^= 0x01;
        EXPECT_NE(sector_tag(mac, 42, d), t);
    }
}

// --- KDF -------------------------------------------------------------------

TEST(Kdf, ZeroInputSingleRepetition)
{
    KdfInput in;
    Bytes pre(28, 0);
    pre[3] = 1;
    auto expect = oracle::sha256(pre);
    EXPECT_EQ(view_vec(derive_key(in).bytes()), Bytes(expect.begin(), expect.begin() + 16));
}

TEST(Kdf, MacKeyZeroInputMatchesOracle)
{
    KdfInput in;
    Bytes zero16(16, 0);
    EXPECT_EQ(view_vec(derive_mac_key(in).bytes()),
              to_vec(oracle::kdf(1 + 0x4D41, 0, zero16, 1)));
}

TEST(Kdf, MacKeyDiffersFromKeyPrefix)
{
    KdfInput in;
    in.repetitions = 10;
    auto k = view_vec(derive_key(in).bytes());
    auto m = view_vec(derive_mac_key(in).bytes());
    EXPECT_EQ(m.size(), 32u);
    EXPECT_NE(Bytes(m.begin(), m.begin() + 16), k);
}

TEST(Kdf, RepetitionsChangeKey)
{
    KdfInput in;
    put_be64(in.secret.data(), 0x0123456789ABCDull);
    in.other_info.fill(0x42);
    auto once = derive_key(in);
    in.repetitions = 1000;
    EXPECT_NE(derive_key(in), once);
}

TEST(Kdf, DeterministicAndSixteenBytes)
{
    KdfInput in;
    put_be64(in.secret.data(), (1ull << 57) - 1);
    in.repetitions = 50;
    EXPECT_EQ(derive_key(in), derive_key(in));
    EXPECT_EQ(derive_key(in).bytes().size(), 16u);
    EXPECT_EQ(derive_mac_key(in), derive_mac_key(in));
}

TEST(Kdf, RejectsInvalidInput)
{
    KdfInput in;
    put_be64(in.secret.data(), 1ull << 57);
    EXPECT_THROW(derive_key(in), std::invalid_argument);
    KdfInput zero_reps;
    zero_reps.repetitions = 0;
    EXPECT_THROW(derive_key(zero_reps), std::invalid_argument);
}

TEST(Kdf, MatchesStraightLineOracle)
{
    std::mt19937_64 rng(41);
    for (int i = 0; i < 40; ++i)
    {
        KdfInput in;
        in.counter = static_cast<std::uint32_t>(rng());
        auto dna = rng() & ((1ull << 57) - 1);
        put_be64(in.secret.data(), dna);
        for (auto &x : in.other_info)
            x = static_cast<std::uint8_t>(rng());
        in.repetitions = 1 + static_cast<std::uint32_t>(rng() % 64);
        auto full = oracle::kdf(in.counter, dna, in.other_info, in.repetitions);
        ASSERT_EQ(view_vec(derive_key(in).bytes()), Bytes(full.begin(), full.begin() + 16));
        ASSERT_EQ(to_vec(kdf_chain(in).bytes), to_vec(full));
    }
}

TEST(Kdf, CounterWrapsModulo32Bits)
{
    KdfInput in;
    in.counter = 0xFFFFFFFE;
    in.repetitions = 4;
    Bytes zero16(16, 0);
    auto full = oracle::kdf(in.counter, 0, zero16, 4);
    EXPECT_EQ(to_vec(kdf_chain(in).bytes), to_vec(full));
}

#include "oracle.hpp"

#include <tmiu/crc.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace tmiu;

namespace
{
auto random_bytes(std::mt19937_64 &rng, std::size_t n) -> Bytes
{
    Bytes b(n);
    for (auto &x : b)
        x = static_cast<std::uint8_t>(rng());
    return b;
}
} // namespace

TEST(Crc7, ZeroMessageIsZero)
{
    Bytes zeros(5, 0);
    EXPECT_EQ(crc7(zeros).value, 0);
}

TEST(Crc7, Cmd0FrameVector)
{
    Bytes cmd0 = {0x40, 0x00, 0x00, 0x00, 0x00};
    EXPECT_EQ(oracle::crc7(cmd0), 0x4A);
    EXPECT_EQ(crc7(cmd0).value, 0x4A);
}

TEST(Crc7, Cmd17FrameMatchesOracle)
{
    Bytes cmd17 = {0x51, 0x00, 0x00, 0x00, 0x00};
    EXPECT_EQ(crc7(cmd17).value, oracle::crc7(cmd17));
    EXPECT_EQ(crc7(cmd17).value, 0x2A);
}

TEST(Crc7, ValueFitsSevenBits)
{
    std::mt19937_64 rng(7);
    for (int i = 0; i < 2000; ++i)
        EXPECT_LT(crc7(random_bytes(rng, 1 + rng() % 40)).value, 128);
}

TEST(Crc7, RandomMessagesMatchBitSerialOracle)
{
    std::mt19937_64 rng(11);
    for (int i = 0; i < 3000; ++i)
    {
        auto m = random_bytes(rng, rng() % 64);
        ASSERT_EQ(crc7(m).value, oracle::crc7(m));
    }
}

TEST(Crc16, EmptyIsZero)
{
    EXPECT_EQ(crc16(ByteView{}).value, 0);
}

TEST(Crc16, AllOnesSector)
{
    Bytes ff(512, 0xff);
    EXPECT_EQ(oracle::crc16(ff), 0x7FA1);
    EXPECT_EQ(crc16(ff).value, 0x7FA1);
}

TEST(Crc16, RandomMessagesMatchBitSerialOracle)
{
    std::mt19937_64 rng(13);
    for (int i = 0; i < 3000; ++i)
    {
        auto m = random_bytes(rng, rng() % 1100);
        ASSERT_EQ(crc16(m).value, oracle::crc16(m));
    }
}

TEST(Crc16, EverySingleBitFlipIsDetected)
{
    std::mt19937_64 rng(17);
    for (int block = 0; block < 20; ++block)
    {
        auto b = random_bytes(rng, 512);
        auto base = crc16(b);
        for (std::size_t bit = 0; bit < 512 * 8; ++bit)
        {
            b[bit / 8] ^= static_cast<std::uint8_t>(0x80 >> (bit % 8));
            ASSERT_NE(crc16(b), base) << "block " << block << " bit " << bit;
            b[bit / 8] ^= static_cast<std::uint8_t>(0x80 >> (bit % 8));
        }
    }
}

TEST(Crc, PureAcrossCallOrder)
{
    std::mt19937_64 rng(19);
    std::vector<Bytes> msgs;
    for (int i = 0; i < 50; ++i)
        msgs.push_back(random_bytes(rng, rng() % 600));
    std::vector<std::pair<std::uint8_t, std::uint16_t>> forward, backward(msgs.size());
    for (auto const &m : msgs)
        forward.emplace_back(crc7(m).value, crc16(m).value);
    for (std::size_t i = msgs.size(); i-- > 0;)
        backward[i] = {crc7(msgs[i]).value, crc16(msgs[i]).value};
    EXPECT_EQ(forward, backward);
}

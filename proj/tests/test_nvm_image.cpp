#include "oracle.hpp"

#include <tmiu/scenario.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace tmiu;

namespace
{

struct Pair
{
    DeviceIdentity dev{0x0123456789ABCDull};
    CardIdentity card{make_cid(CidFields{.serial = 0x5EED}), make_csd(2048)};
};

auto sample_entries() -> std::vector<BootEntry>
{
    Bytes kernel(20000);
    for (std::size_t i = 0; i < kernel.size(); ++i)
        kernel[i] = static_cast<std::uint8_t>(i % 7);
    return {{EntryKind::fsbl, Bytes(3000, 0x11)}, {EntryKind::kernel, kernel},
            {EntryKind::devicetree, Bytes(700, 0x00)}};
}

auto sample_files() -> std::vector<DataFile>
{
    return {{"a.txt", Bytes(1200, 'a')}, {"zeros.bin", Bytes(4096, 0)}};
}

auto params(std::uint64_t geometry = 2048) -> ProvisionParams
{
    ProvisionParams p;
    p.geometry = geometry;
    p.kdf.repetitions = 20;
    return p;
}

auto oracle_keys(Pair const &p, ProvisionParams const &pp) -> oracle::Keys
{
    return oracle::pair_keys(pp.kdf.counter, p.dev.dna(), p.card.cid(), pp.kdf.repetitions);
}

auto decrypt_all(NvmImage const &img, oracle::Keys const &keys, std::uint64_t upto)
    -> std::vector<Bytes>
{
    std::vector<Bytes> out;
    for (std::uint64_t lba = 0; lba < upto; ++lba)
        out.push_back(oracle::sector_ctr(keys.aes, lba, img.sector(lba)));
    return out;
}

auto entropy(ByteView b) -> double
{
    std::array<double, 256> hist{};
    for (auto x : b)
        hist[x] += 1;
    double h = 0;
    for (auto c : hist)
    {
        if (c > 0)
        {
            auto p = c / static_cast<double>(b.size());
            h -= p * std::log2(p);
        }
    }
    return h;
}

} // namespace

TEST(Mbr, SerializeParseRoundTrip)
{
    MbrSector m;
    m.partitions[0] = {0x80, {}, boot_partition_type, {}, 1, 100};
    m.partitions[1] = {0, {}, data_partition_type, {}, 101, 500};
    auto s = m.serialize();
    EXPECT_EQ(s[510], 0x55);
    EXPECT_EQ(s[511], 0xAA);
    EXPECT_EQ(get_le32(s.data() + 446 + 8), 1u);
    auto parsed = parse_mbr(s, 1000);
    EXPECT_EQ(parsed.used_partitions().size(), 2u);
    EXPECT_EQ(parsed.partitions[1].range(), (LbaRange{101, 500}));
    EXPECT_EQ(parsed.serialize(), s);
}

TEST(Mbr, StructuralErrors)
{
    MbrSector m;
    m.partitions[0] = {0x80, {}, boot_partition_type, {}, 1, 100};
    m.partitions[1] = {0, {}, data_partition_type, {}, 101, 500};
    auto s = m.serialize();

    auto code = [](auto const &sector, std::uint64_t geometry) {
        try
        {
            parse_mbr(sector, geometry);
        }
        catch (NvmError const &e)
        {
            return e.code();
        }
        return NvmErrc::io_error;
    };

    auto nosig = s;
    nosig[510] = nosig[511] = 0;
    EXPECT_EQ(code(nosig, 1000), NvmErrc::bad_signature);
    EXPECT_EQ(code(s, 600), NvmErrc::out_of_bounds);

    MbrSector overlap = m;
    overlap.partitions[1].lba_start = 50;
    EXPECT_EQ(code(overlap.serialize(), 1000), NvmErrc::overlapping_partitions);
}

TEST(Layout, ComputeIsOrderedDisjointAndCoversTags)
{
    auto l = NvmLayout::compute(2048, 100);
    EXPECT_EQ(l.boot, (LbaRange{1, 100}));
    EXPECT_EQ(l.data.start, l.boot.end());
    EXPECT_EQ(l.meta.start, l.data.end());
    EXPECT_LE(l.meta.end(), 2048u);
    EXPECT_EQ(l.meta.count, meta_sectors_for(l.tagged_sectors()));
    // The data partition is as large as it can be.
    EXPECT_GT(l.tagged_sectors() + 1 + meta_sectors_for(l.tagged_sectors() + 1), 2048u);

    EXPECT_EQ(l.tag_slot(0).lba, l.meta.start);
    EXPECT_EQ(l.tag_slot(17).lba, l.meta.start + 1);
    EXPECT_EQ(l.tag_slot(17).offset, 32u);
    EXPECT_EQ(NvmLayout::from_partitions(2048, l.boot, l.data), l);
    EXPECT_THROW(NvmLayout::compute(64, 60), NvmError);
}

TEST(FileTable, EncodeDecodeAndAllocate)
{
    std::vector<FileRecord> r = {{"x", 4096, 10}, {"long-label", 5120, 1024}};
    auto t = encode_file_table(r);
    EXPECT_EQ(t.size(), file_table_sectors * sector_size);
    EXPECT_EQ(decode_file_table(t), r);

    // First fit: sector 8 and 10-11 are taken, so 9 takes one sector and 12 takes two.
    EXPECT_EQ(allocate_extent(r, 100, 1), 9u * 512);
    EXPECT_EQ(allocate_extent(r, 100, 513), 12u * 512);
    std::vector<FileRecord> gap = {{"x", 20 * 512, 512}};
    EXPECT_EQ(allocate_extent(gap, 100, 512 * 12), 8u * 512);
    EXPECT_EQ(allocate_extent(gap, 100, 512 * 13), 21u * 512);
    EXPECT_FALSE(allocate_extent(gap, 30, 512 * 13));

    std::vector<FileRecord> many;
    for (int i = 0; i < 400; ++i)
        many.push_back({std::string(10, 'a') + std::to_string(i), 0, 0});
    EXPECT_THROW(encode_file_table(many), NvmError);
}

TEST(Provision, PlaintextRoundTripThroughOracle)
{
    Pair p;
    auto pp = params();
    auto entries = sample_entries();
    auto files = sample_files();
    auto prov = provision(entries, files, p.dev, p.card, pp);
    auto const &l = prov.manifest.layout;
    auto plain = decrypt_all(prov.image, oracle_keys(p, pp), l.tagged_sectors());

    auto mbr = parse_mbr(plain[0], l.geometry);
    ASSERT_EQ(mbr.used_partitions().size(), 2u);
    EXPECT_EQ(mbr.partitions[0].range(), l.boot);
    EXPECT_EQ(mbr.partitions[1].range(), l.data);
    EXPECT_EQ(mbr.partitions[0].status, 0x80);

    auto container = build_boot_image(entries);
    Bytes boot;
    for (auto lba = l.boot.start; lba < l.boot.end(); ++lba)
        boot.insert(boot.end(), plain[lba].begin(), plain[lba].end());
    EXPECT_EQ(boot, Bytes(container.bytes().begin(), container.bytes().end()));

    Bytes table;
    for (std::uint64_t i = 0; i < file_table_sectors; ++i)
        table.insert(table.end(), plain[l.data.start + i].begin(), plain[l.data.start + i].end());
    auto records = decode_file_table(table);
    ASSERT_EQ(records.size(), 2u);
    for (std::size_t k = 0; k < 2; ++k)
    {
        EXPECT_EQ(records[k].label, files[k].label);
        Bytes got;
        for (std::uint64_t pos = 0; pos < records[k].length; ++pos)
        {
            auto abs = records[k].offset + pos;
            got.push_back(plain[l.data.start + abs / 512][abs % 512]);
        }
        EXPECT_EQ(got, files[k].blob);
    }
}

TEST(Provision, AnchorsAndManifest)
{
    Pair p;
    auto pp = params();
    auto entries = sample_entries();
    auto prov = provision(entries, sample_files(), p.dev, p.card, pp);
    auto keys = oracle_keys(p, pp);
    auto const &a = prov.manifest.anchors;

    auto mbr_tag = oracle::sector_tag(keys.mac, 0, prov.image.sector(0));
    EXPECT_EQ(a.mbr_digest().hex(), to_hex(mbr_tag));
    EXPECT_EQ(a.device_checksum().hex(), to_hex(oracle::sha256(p.dev.encoded())));
    EXPECT_EQ(a.nvm_checksum().hex(), to_hex(oracle::sha256(p.card.cid())));
    EXPECT_EQ(a.kdf_repetitions(), 20u);

    ASSERT_EQ(prov.manifest.entries.size(), entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i)
    {
        EXPECT_EQ(prov.manifest.entries[i].kind, entries[i].kind);
        EXPECT_EQ(prov.manifest.entries[i].digest, sha256(entries[i].blob));
    }

    auto text = prov.manifest.to_text();
    EXPECT_NE(text.find("geometry=2048"), std::string::npos);
    EXPECT_NE(text.find("boot_lba=1,"), std::string::npos);
    auto back = Manifest::from_text(text);
    EXPECT_EQ(back.anchors, a);
    EXPECT_EQ(back.layout, prov.manifest.layout);
    EXPECT_EQ(back.entries, prov.manifest.entries);
    EXPECT_EQ(back.device_dna, p.dev.dna());
    EXPECT_EQ(back.card_cid, p.card.cid());
}

TEST(Provision, EveryTagVerifiesAndSingleFlipsAreLocal)
{
    Pair p;
    auto pp = params();
    auto prov = provision(sample_entries(), sample_files(), p.dev, p.card, pp);
    auto const &l = prov.manifest.layout;

    auto clean = audit_image(prov.image, prov.manifest, p.dev, p.card);
    EXPECT_TRUE(clean.mbr_anchor_ok);
    EXPECT_TRUE(clean.failed_lbas.empty());
    EXPECT_TRUE(clean.malformed_meta_lbas.empty());

    std::mt19937_64 rng(5);
    for (int i = 0; i < 40; ++i)
    {
        auto img = prov.image;
        auto lba = rng() % l.tagged_sectors();
        img.sector(lba)[rng() % 512] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
        auto a = audit_image(img, prov.manifest, p.dev, p.card);
        ASSERT_EQ(a.failed_lbas, std::vector<std::uint64_t>{lba});
        ASSERT_EQ(a.mbr_anchor_ok, lba != 0);
    }
}

TEST(Provision, NoPlaintextWindowsAndHighEntropy)
{
    Pair p;
    auto pp = params();
    auto entries = sample_entries();
    auto prov = provision(entries, sample_files(), p.dev, p.card, pp);
    auto raw = prov.image.to_bytes();

    auto container = build_boot_image(entries);
    auto c = container.bytes();
    for (std::size_t off = 0; off + 16 <= c.size(); off += 16)
        ASSERT_FALSE(contains_bytes(raw, c.subspan(off, 16))) << off;

    for (std::uint64_t lba = 0; lba < prov.manifest.layout.meta.end(); ++lba)
        ASSERT_GT(entropy(prov.image.sector(lba)), 7.0) << lba;
}

TEST(Provision, DeterministicForSameInputs)
{
    Pair p;
    auto a = provision(sample_entries(), sample_files(), p.dev, p.card, params());
    auto b = provision(sample_entries(), sample_files(), p.dev, p.card, params());
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.manifest.to_text(), b.manifest.to_text());
}

TEST(Provision, ErrorCases)
{
    Pair p;
    auto code = [&](auto &&fn) {
        try
        {
            fn();
        }
        catch (NvmError const &e)
        {
            return e.code();
        }
        return NvmErrc::io_error;
    };
    std::vector<BootEntry> huge = {{EntryKind::kernel, Bytes(2048 * 512, 1)}};
    EXPECT_EQ(code([&] { provision(huge, {}, p.dev, p.card, params()); }),
              NvmErrc::capacity_exceeded);

    std::vector<DataFile> big_file = {{"big", Bytes(1900 * 512, 1)}};
    EXPECT_EQ(code([&] { provision(sample_entries(), big_file, p.dev, p.card, params()); }),
              NvmErrc::capacity_exceeded);

    EXPECT_EQ(code([&] { provision(sample_entries(), {}, p.dev, p.card, params(4096)); }),
              NvmErrc::capacity_exceeded);

    auto cid = p.card.cid();
    cid[3] ^= 1;
    CardIdentity bad(cid, p.card.csd());
    EXPECT_EQ(code([&] { provision(sample_entries(), {}, p.dev, bad, params()); }),
              NvmErrc::invalid_identity);
}

TEST(NvmImageFile, SaveLoadRoundTrip)
{
    auto w = reference_world(3, 1024);
    auto dir = std::filesystem::temp_directory_path() / "tmiu_nvm_test";
    std::filesystem::create_directories(dir);
    w.image.save(dir / "c.nvm");
    w.manifest.save(dir / "c.manifest");
    EXPECT_EQ(NvmImage::load(dir / "c.nvm"), w.image);
    EXPECT_EQ(Manifest::load(dir / "c.manifest").to_text(), w.manifest.to_text());
    EXPECT_EQ(std::filesystem::file_size(dir / "c.nvm"), 1024u * 512);
    EXPECT_THROW(NvmImage::from_bytes(Bytes(1000)), NvmError);
    EXPECT_THROW(NvmImage::load(dir / "missing.nvm"), NvmError);
    std::filesystem::remove_all(dir);
}

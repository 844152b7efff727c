#include <tmiu/scenario.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <memory>
#include <random>

using namespace tmiu;

namespace
{

auto world() -> World const &
{
    static World const w = reference_world(21, 1024);
    return w;
}

auto make_sim(World const &w) -> std::unique_ptr<Simulator>
{
    return std::make_unique<Simulator>(w.image, w.card, w.manifest.anchors, w.device,
                                       w.manifest.entries);
}

auto host_code(auto &&fn) -> std::optional<HostErrc>
{
    try
    {
        fn();
    }
    catch (HostError const &e)
    {
        return e.code();
    }
    return std::nullopt;
}

auto entropy(ByteView b) -> double
{
    std::array<double, 256> hist{};
    for (auto x : b)
        hist[x] += 1;
    double h = 0;
    for (auto c : hist)
        if (c > 0)
            h -= c / b.size() * std::log2(c / b.size());
    return h;
}

} // namespace

TEST(Host, CleanBootRunsOs)
{
    auto s = make_sim(world());
    auto out = s->boot();
    EXPECT_TRUE(out.granted());
    EXPECT_EQ(out.outcome_class(), "Granted");
    EXPECT_EQ(s->host.phase(), HostPhase::os_running);
    EXPECT_EQ(leds_to_string(out.report.leds), "1111");
    auto const &loaded = s->host.loaded_entries();
    ASSERT_EQ(loaded.size(), world().manifest.entries.size());
    for (std::size_t i = 0; i < loaded.size(); ++i)
    {
        EXPECT_EQ(loaded[i].kind, world().manifest.entries[i].kind);
        EXPECT_EQ(loaded[i].digest, world().manifest.entries[i].digest);
    }
    EXPECT_EQ(s->host.boot_bytes_received(), world().manifest.layout.boot.count * 512);
}

TEST(Host, WrongCardDeliversNothing)
{
    CidFields f;
    f.serial = 999;
    Simulator s(world().image, CardIdentity(make_cid(f), world().card.csd()),
                world().manifest.anchors, world().device, world().manifest.entries);
    auto out = s.boot();
    EXPECT_FALSE(out.granted());
    EXPECT_EQ(out.reason, LockdownReason::nvm_mismatch);
    EXPECT_EQ(s.host.phase(), HostPhase::halted);
    EXPECT_EQ(s.host.boot_bytes_received(), 0u);
    EXPECT_TRUE(s.host.loaded_entries().empty());
}

TEST(Host, TamperedKernelIsDeniedBeforeOsRuns)
{
    auto w = world();
    auto const &l = w.manifest.layout;
    w.image.sector(l.boot.end() - 30)[7] ^= 0x80;
    auto s = make_sim(w);
    auto out = s->boot();
    EXPECT_EQ(out.outcome_class(), "ImageDigestMismatch");
    EXPECT_EQ(s->host.phase(), HostPhase::halted);
    EXPECT_EQ(s->host.boot_bytes_received(), 0u);
    EXPECT_TRUE(s->host.loaded_entries().empty());
}

TEST(Host, ManifestDisagreementHaltsHost)
{
    auto entries = world().manifest.entries;
    entries[1].digest.bytes[0] ^= 1;
    Simulator s(world().image, world().card, world().manifest.anchors, world().device, entries);
    auto out = s.boot();
    EXPECT_EQ(out.outcome_class(), "EntryMismatch");
    EXPECT_EQ(s.host.phase(), HostPhase::halted);
    EXPECT_EQ(host_code([&] { s.read_file("config.txt"); }), HostErrc::not_running);
}

TEST(Host, ProvisionedFilesReadBack)
{
    auto s = make_sim(world());
    ASSERT_TRUE(s->boot().granted());
    EXPECT_EQ(s->read_file("config.txt"), Bytes(1500, 'c'));
    EXPECT_EQ(s->read_file("rootfs.img").size(), 20u * 1024);
    EXPECT_EQ(host_code([&] { s->read_file("nope"); }), HostErrc::not_found);
    auto files = s->host.list_files(s->tmiu, s->bus);
    ASSERT_EQ(files.size(), 2u);
    EXPECT_EQ(files[0].label, "rootfs.img");
}

TEST(Host, TamperedFileSectorLocksDownAndWithholdsBlob)
{
    auto s = make_sim(world());
    ASSERT_TRUE(s->boot().granted());
    auto files = s->host.list_files(s->tmiu, s->bus);
    auto const &cfg = files[1];
    auto lba = world().manifest.layout.data.start + cfg.offset / 512;
    s->bus.card().backing_mut().sector(lba)[0] ^= 0xFF;
    EXPECT_EQ(host_code([&] { s->read_file("config.txt"); }), HostErrc::denied);
    EXPECT_EQ(s->tmiu.lockdown_reason(), LockdownReason::sector_tag_mismatch);
    EXPECT_EQ(s->tmiu.lockdown_lba(), lba);
    EXPECT_EQ(s->host.phase(), HostPhase::halted);
}

TEST(Host, WriteRebootReadPersists)
{
    auto s = make_sim(world());
    ASSERT_TRUE(s->boot().granted());
    Bytes blob(3000);
    for (std::size_t i = 0; i < blob.size(); ++i)
        blob[i] = static_cast<std::uint8_t>(i * 7);
    s->write_file("new.bin", blob);
    s->write_file("config.txt", Bytes{'x'});
    s->power_cycle();
    ASSERT_TRUE(s->boot().granted());
    EXPECT_EQ(s->read_file("new.bin"), blob);
    EXPECT_EQ(s->read_file("config.txt"), Bytes{'x'});
    EXPECT_EQ(s->read_file("rootfs.img").size(), 20u * 1024);
    EXPECT_TRUE(s->scrub());
}

TEST(Host, OversizedWriteLeavesTableUntouched)
{
    auto s = make_sim(world());
    ASSERT_TRUE(s->boot().granted());
    auto before = s->host.list_files(s->tmiu, s->bus);
    auto data_bytes = world().manifest.layout.data.count * 512;
    EXPECT_EQ(host_code([&] { s->write_file("huge", Bytes(data_bytes, 1)); }),
              HostErrc::capacity_exceeded);
    EXPECT_EQ(s->host.list_files(s->tmiu, s->bus), before);
}

TEST(Host, WrittenSectorsAreCiphertextOnly)
{
    auto s = make_sim(world());
    ASSERT_TRUE(s->boot().granted());
    Bytes text;
    for (int i = 0; i < 200; ++i)
        for (char c : std::string("all work and no play "))
            text.push_back(static_cast<std::uint8_t>(c));
    s->write_file("dull.txt", text);
    auto rec = s->host.list_files(s->tmiu, s->bus).back();
    auto first = world().manifest.layout.data.start + rec.offset / 512;
    auto raw = s->bus.card().backing().to_bytes();
    EXPECT_FALSE(contains_bytes(raw, ByteView(text).first(16)));
    for (auto lba = first; lba < first + (rec.length + 511) / 512; ++lba)
        EXPECT_GT(entropy(s->bus.card().backing().sector(lba)), 7.0) << lba;
}

TEST(Host, FileOpsNeedRunningOs)
{
    auto s = make_sim(world());
    EXPECT_EQ(host_code([&] { s->read_file("config.txt"); }), HostErrc::not_running);
    EXPECT_FALSE(s->scrub());
}

TEST(Host, SmallRandomInterleavingBehavesLikeMap)
{
    auto s = make_sim(world());
    ASSERT_TRUE(s->boot().granted());
    std::map<std::string, Bytes> model;
    std::mt19937_64 rng(5);
    for (int op = 0; op < 60; ++op)
    {
        auto label = "f" + std::to_string(rng() % 4);
        switch (rng() % 3)
        {
        case 0: {
            Bytes b(rng() % 2000);
            for (auto &x : b)
                x = static_cast<std::uint8_t>(rng());
            s->write_file(label, b);
            model[label] = b;
            break;
        }
        case 1:
            if (model.count(label))
                ASSERT_EQ(s->read_file(label), model[label]);
            else
                ASSERT_EQ(host_code([&] { s->read_file(label); }), HostErrc::not_found);
            break;
        default:
            s->power_cycle();
            ASSERT_TRUE(s->boot().granted());
        }
    }
}

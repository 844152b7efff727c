#include <tmiu/scenario.hpp>

#include <gtest/gtest.h>

using namespace tmiu;

namespace
{
auto world() -> World const &
{
    static World const w = reference_world(1, 1024);
    return w;
}
} // namespace

TEST(ScenarioParse, LineFormat)
{
    auto s = Scenario::parse("# comment\nname=x\n\ntarget=boot:3 mutate=flip_bit:100:2 "
                             "expect=ImageDigestMismatch\n");
    EXPECT_EQ(s.name, "x");
    ASSERT_EQ(s.steps.size(), 1u);
    EXPECT_EQ(s.steps[0].target.region, Region::boot);
    EXPECT_EQ(s.steps[0].target.index, 3u);
    EXPECT_EQ(s.steps[0].mutation.kind, Mutation::Kind::flip_bit);
    EXPECT_EQ(s.steps[0].mutation.offset, 100u);
    EXPECT_EQ(s.steps[0].mutation.bit, 2u);
    EXPECT_EQ(s.expected, "ImageDigestMismatch");
    EXPECT_EQ(Scenario::parse(s.to_text()).to_text(), s.to_text());
}

TEST(ScenarioParse, AllMutationForms)
{
    auto s = Scenario::parse("target=mbr mutate=set_byte:0x1C6:255 expect=MbrMismatch\n"
                             "target=data:2 mutate=replace:10:deadbeef expect=MbrMismatch\n"
                             "target=data:3 mutate=copy_from:data:2 expect=MbrMismatch\n"
                             "target=meta:0 mutate=copy_from:mbr expect=MbrMismatch\n"
                             "target=cid mutate=swap:77 expect=MbrMismatch\n"
                             "target=bus:rsp mutate=inject:2 expect=MbrMismatch\n");
    ASSERT_EQ(s.steps.size(), 6u);
    EXPECT_EQ(s.steps[0].mutation.offset, 0x1C6u);
    EXPECT_EQ(s.steps[0].mutation.value, 255);
    EXPECT_EQ(s.steps[1].mutation.bytes, (Bytes{0xde, 0xad, 0xbe, 0xef}));
    EXPECT_EQ(s.steps[2].mutation.source.region, Region::data);
    EXPECT_EQ(s.steps[3].mutation.source.region, Region::mbr);
    EXPECT_EQ(s.steps[4].mutation.amount, 77u);
    EXPECT_EQ(s.steps[5].target.region, Region::bus_rsp);
    EXPECT_EQ(Scenario::parse(s.to_text()).to_text(), s.to_text());
}

TEST(ScenarioParse, Rejections)
{
    for (auto bad : {"target=mbr mutate=flip_bit:0:0\n",
                     "target=mbr mutate=flip_bit:0:8 expect=MbrMismatch\n",
                     "target=mbr mutate=set_byte:0:256 expect=MbrMismatch\n",
                     "target=disk mutate=flip_bit:0:0 expect=MbrMismatch\n",
                     "target=mbr mutate=explode expect=MbrMismatch\n",
                     "target=mbr expect=MbrMismatch\n",
                     "target=mbr mutate=inject:1 expect=MbrMismatch\n",
                     "target=bus:cmd mutate=flip_bit:0:0 expect=Granted\n",
                     "target=mbr mutate=swap:1 expect=Granted\n",
                     "target=mbr mutate=flip_bit:0:0 expect=Kaboom\n",
                     "target=mbr mutate=flip_bit:0:0 expect=none\n",
                     "expect=Granted\nexpect=MbrMismatch\n", "junk\n"})
        EXPECT_THROW(Scenario::parse(bad), std::invalid_argument) << bad;
}

TEST(ScenarioApply, TargetsMustResolve)
{
    auto const &l = world().manifest.layout;
    auto s = Scenario::parse("target=boot:" + std::to_string(l.boot.count) +
                             " mutate=flip_bit:0:0 expect=Granted\n");
    EXPECT_THROW(apply_scenario(world(), s), std::invalid_argument);
    auto off = Scenario::parse("target=mbr mutate=flip_bit:512:0 expect=Granted\n");
    EXPECT_THROW(apply_scenario(world(), off), std::invalid_argument);
    auto cid = Scenario::parse("target=cid mutate=flip_bit:16:0 expect=Granted\n");
    EXPECT_THROW(apply_scenario(world(), cid), std::invalid_argument);
}

TEST(ScenarioApply, DoesNotTouchTheOriginal)
{
    auto s = Scenario::parse("target=data:0 mutate=set_byte:0:1 expect=Granted\n");
    auto w = apply_scenario(world(), s);
    auto lba = world().manifest.layout.data.start;
    EXPECT_NE(w.image.sector(lba), world().image.sector(lba));
}

TEST(Bundled, EveryScenarioMeetsItsExpectation)
{
    auto all = bundled_scenarios();
    std::vector<std::string> names;
    for (auto const &s : all)
    {
        names.push_back(s.name);
        auto r = run_scenario(world(), s);
        EXPECT_TRUE(r.matched) << s.name << ": expected " << s.expected << " observed "
                               << r.observed;
    }
    // Threat model coverage.
    for (auto want : {"device_swap", "card_swap", "mbr_partition_tamper", "bootimage_bitflip",
                      "data_sector_tamper", "meta_tamper", "bus_bitflip", "sector_replay"})
        EXPECT_NE(std::find(names.begin(), names.end(), want), names.end()) << want;
}

TEST(Bundled, ReplayReportsTheOverwrittenLba)
{
    for (auto const &s : bundled_scenarios())
    {
        if (s.name != "sector_replay")
            continue;
        auto r = run_scenario(world(), s);
        EXPECT_EQ(r.lba, world().manifest.layout.data.start + 9);
    }
}

TEST(Bench, ThirteenMegabytesMatchesReferenceBands)
{
    auto out = run_bench(13);
    ASSERT_TRUE(out.granted());
    EXPECT_NEAR(out.report.boot_ms, 526, 526 * 0.05);
    EXPECT_NEAR(out.report.rate_mbps, 24.7, 24.7 * 0.05);
    EXPECT_NEAR(out.report.prom_ms, 98, 98 * 0.02);
}

TEST(Bench, RateApproachesLineRateMonotonically)
{
    double last = 0;
    for (double mb : {0.1, 0.5, 2.0, 6.0})
    {
        auto out = run_bench(mb);
        ASSERT_TRUE(out.granted());
        EXPECT_GT(out.report.rate_mbps, last) << mb;
        EXPECT_LT(out.report.rate_mbps, 25.0);
        last = out.report.rate_mbps;
    }
}

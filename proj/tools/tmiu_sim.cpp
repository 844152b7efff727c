// tmiu_sim: provision, boot, tamper, bench, and inspect simulated cards.
//
// Exit codes: 0 success or expected outcome, 1 mismatch or audit failure,
// 2 usage/IO/capacity error, 3 boot denied.

#include <tmiu/scenario.hpp>

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace tmiu;

namespace
{

constexpr int exit_ok = 0;
constexpr int exit_mismatch = 1;
constexpr int exit_usage = 2;
constexpr int exit_denied = 3;

auto read_file(fs::path const &path) -> Bytes
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), {});
}

auto read_text(fs::path const &path) -> std::string
{
    auto b = read_file(path);
    return std::string(b.begin(), b.end());
}

void write_text(fs::path const &path, std::string const &text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text))
        throw std::runtime_error("cannot write " + path.string());
}

auto parse_u64(std::string const &s) -> std::uint64_t
{
    std::size_t used = 0;
    auto v = std::stoull(s, &used, 0);
    if (used != s.size())
        throw std::invalid_argument("bad number '" + s + "'");
    return v;
}

auto guess_kind(fs::path const &path) -> EntryKind
{
    auto name = path.filename().string();
    auto has = [&](std::string_view s) { return name.find(s) != std::string::npos; };
    if (has("fsbl"))
        return EntryKind::fsbl;
    if (has("ssbl") || has("u-boot") || has("uboot"))
        return EntryKind::ssbl;
    if (path.extension() == ".dtb" || has("devicetree"))
        return EntryKind::devicetree;
    if (path.extension() == ".bit" || has("bitstream"))
        return EntryKind::partial_bitstream;
    return EntryKind::kernel;
}

// `kind:path` or `path`.
auto load_boot_entry(std::string const &arg) -> BootEntry
{
    auto colon = arg.find(':');
    if (colon != std::string::npos)
    {
        if (auto kind = entry_kind_from_string(arg.substr(0, colon)))
            return {*kind, read_file(arg.substr(colon + 1))};
    }
    return {guess_kind(arg), read_file(arg)};
}

// `label=path` or `path` (label = file name).
auto load_data_file(std::string const &arg) -> DataFile
{
    auto eq = arg.find('=');
    if (eq != std::string::npos)
        return {arg.substr(0, eq), read_file(arg.substr(eq + 1))};
    return {fs::path(arg).filename().string(), read_file(arg)};
}

auto cid_from_args(std::string const &cid_hex, std::optional<std::uint32_t> serial)
    -> std::optional<CardRegister>
{
    if (!cid_hex.empty())
        return fixed_from_hex<16>(cid_hex);
    if (serial)
    {
        CidFields f;
        f.serial = *serial;
        return make_cid(f);
    }
    return std::nullopt;
}

void print_layout(std::ostream &out, NvmLayout const &l)
{
    out << "geometry=" << l.geometry << '\n'
        << "mbr=0\n"
        << "boot=" << l.boot.start << '+' << l.boot.count << '\n'
        << "data=" << l.data.start << '+' << l.data.count << '\n'
        << "meta=" << l.meta.start << '+' << l.meta.count << '\n'
        << "slack=" << l.meta.end() << '+' << (l.geometry - l.meta.end()) << '\n';
}

struct PhysicalIds
{
    std::string dna;
    std::string cid;
    std::string csd;
};

// Physical chip and card default to the identities the secure environment
// recorded; flags stand in for a different chip or card.
auto load_world(fs::path const &image_path, fs::path const &manifest_path,
                PhysicalIds const &ids) -> World
{
    auto manifest = Manifest::load(manifest_path);
    auto image = NvmImage::load(image_path);

    std::optional<std::uint64_t> dna = manifest.device_dna;
    if (!ids.dna.empty())
        dna = parse_u64(ids.dna);
    auto cid = manifest.card_cid;
    if (!ids.cid.empty())
        cid = fixed_from_hex<16>(ids.cid);
    auto csd = manifest.card_csd;
    if (!ids.csd.empty())
        csd = fixed_from_hex<16>(ids.csd);
    if (!csd)
        csd = make_csd(image.geometry());
    if (!dna || !cid)
        throw std::invalid_argument("device DNA and card CID must come from flags or manifest");

    return World{std::move(image), std::move(manifest), DeviceIdentity(*dna),
                 CardIdentity(*cid, *csd)};
}

auto fixed(double v, int digits) -> std::string
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

// ---------------------------------------------------------------------------

struct ProvisionArgs
{
    std::vector<std::string> boot;
    std::vector<std::string> data;
    std::string out;
    std::string manifest;
    std::string dna;
    std::string cid;
    std::optional<std::uint32_t> serial;
    std::uint64_t sectors = 8192;
    std::uint32_t kdf_counter = 1;
    std::uint32_t kdf_reps = default_kdf_repetitions;
    bool bind_csd = false;
};

auto cmd_provision(ProvisionArgs const &a) -> int
{
    std::vector<BootEntry> entries;
    for (auto const &b : a.boot)
        entries.push_back(load_boot_entry(b));
    std::vector<DataFile> files;
    for (auto const &d : a.data)
        files.push_back(load_data_file(d));

    auto cid = cid_from_args(a.cid, a.serial);
    if (!cid)
        cid = make_cid(CidFields{});
    CardIdentity card(*cid, make_csd(a.sectors));
    DeviceIdentity dev(parse_u64(a.dna));

    ProvisionParams params;
    params.geometry = a.sectors;
    params.kdf = {a.kdf_counter, a.kdf_reps};
    params.bind_csd = a.bind_csd;

    Provisioned p = [&] {
        try
        {
            return provision(entries, files, dev, card, params);
        }
        catch (NvmError const &e)
        {
            if (e.code() == NvmErrc::capacity_exceeded)
            {
                std::cerr << e.what() << '\n';
                std::exit(exit_usage);
            }
            throw;
        }
    }();

    auto manifest_path = a.manifest.empty() ? a.out + ".manifest" : a.manifest;
    p.image.save(a.out);
    p.manifest.save(manifest_path);

    print_layout(std::cout, p.manifest.layout);
    for (auto const &e : p.manifest.entries)
        std::cout << "entry " << to_string(e.kind) << " length=" << e.length << '\n';
    std::cout << "image=" << a.out << "\nmanifest=" << manifest_path << '\n';
    return exit_ok;
}

// ---------------------------------------------------------------------------

struct BootArgs
{
    std::string image;
    std::string manifest;
    PhysicalIds ids;
    std::string trace;
};

auto cmd_boot(BootArgs const &a) -> int
{
    auto w = load_world(a.image, a.manifest, a.ids);
    Simulator sim(std::move(w.image), w.card, w.manifest.anchors, w.device, w.manifest.entries);
    sim.bus.enable_trace(!a.trace.empty());

    auto outcome = sim.boot();
    std::cout << "outcome=" << outcome.outcome_class() << '\n'
              << "phase=" << to_string(sim.host.phase()) << '\n'
              << outcome.report.to_text();

    if (!a.trace.empty())
    {
        std::string text;
        for (auto const &line : sim.bus.transcript())
            text += line + '\n';
        write_text(a.trace, text);
    }
    return outcome.granted() ? exit_ok : exit_denied;
}

// ---------------------------------------------------------------------------

struct TamperArgs
{
    std::vector<std::string> scenarios;
    std::vector<std::string> bundled;
    std::string image;
    std::string manifest;
    std::string export_dir;
    bool list = false;
};

auto cmd_tamper(TamperArgs const &a) -> int
{
    auto all = bundled_scenarios();
    if (a.list)
    {
        for (auto const &s : all)
            std::cout << s.name << '\n';
        return exit_ok;
    }
    if (!a.export_dir.empty())
    {
        fs::create_directories(a.export_dir);
        for (auto const &s : all)
            write_text(fs::path(a.export_dir) / (s.name + ".scn"), s.to_text());
        return exit_ok;
    }

    std::vector<Scenario> chosen;
    for (auto const &path : a.scenarios)
    {
        auto s = Scenario::parse(read_text(path));
        if (s.name.empty())
            s.name = fs::path(path).stem().string();
        chosen.push_back(std::move(s));
    }
    for (auto const &name : a.bundled)
    {
        bool found = false;
        for (auto const &s : all)
        {
            if (name == "all" || s.name == name)
            {
                chosen.push_back(s);
                found = true;
            }
        }
        if (!found)
            throw std::invalid_argument("no bundled scenario '" + name + "'");
    }
    if (chosen.empty())
        throw std::invalid_argument("give --scenario or --bundled");

    auto world = a.image.empty() ? reference_world() : load_world(a.image, a.manifest, {});

    bool all_matched = true;
    for (auto const &s : chosen)
    {
        auto r = run_scenario(world, s);
        all_matched &= r.matched;
        std::cout << (r.matched ? "PASS " : "FAIL ") << s.name << " expected=" << s.expected
                  << " observed=" << r.observed;
        if (r.lba)
            std::cout << " lba=" << *r.lba;
        std::cout << '\n';
    }
    return all_matched ? exit_ok : exit_mismatch;
}

// ---------------------------------------------------------------------------

struct BenchArgs
{
    double size_mb = 13;
    double prom_mb = 1.9;
    double prom_rate = 19.4;
};

auto cmd_bench(BenchArgs const &a) -> int
{
    if (!(a.size_mb > 0) || a.size_mb > 1000)
        throw std::invalid_argument("--size must be in (0, 1000]");
    auto outcome = run_bench(a.size_mb, PromStore{static_cast<std::uint64_t>(std::llround(a.prom_mb * 1e6)),
                                                   static_cast<std::uint64_t>(std::llround(a.prom_rate * 1e6))});
    auto const &r = outcome.report;

    std::cout << "size_mb=" << fixed(a.size_mb, 3) << '\n'
              << "outcome=" << outcome.outcome_class() << '\n'
              << "prom_ms=" << fixed(r.prom_ms, 3) << '\n'
              << "boot_ms=" << fixed(r.boot_ms, 3) << '\n'
              << "total_ms=" << fixed(r.total_ms, 3) << '\n'
              << "rate_mbps=" << fixed(r.rate_mbps, 3) << '\n';

    auto band = [](double v, double ref, double tol) {
        return std::abs(v - ref) <= ref * tol ? "within" : "outside";
    };
    std::cout << "reference prom_ms=98 +-2% " << band(r.prom_ms, 98, 0.02) << '\n';
    if (std::abs(a.size_mb - 13) < 1e-9)
    {
        std::cout << "reference boot_ms=526 +-5% " << band(r.boot_ms, 526, 0.05) << '\n'
                  << "reference rate_mbps=24.7 +-5% " << band(r.rate_mbps, 24.7, 0.05) << '\n';
    }
    return outcome.granted() ? exit_ok : exit_denied;
}

// ---------------------------------------------------------------------------

struct InspectArgs
{
    std::string image;
    std::string manifest;
    PhysicalIds ids;
    std::string transcript;
};

auto cmd_inspect(InspectArgs const &a) -> int
{
    if (a.manifest.empty() || !fs::exists(a.manifest))
    {
        std::cerr << "manifest not found: " << a.manifest << '\n';
        return exit_usage;
    }
    auto w = load_world(a.image, a.manifest, a.ids);
    auto const &l = w.manifest.layout;
    print_layout(std::cout, l);

    auto audit = audit_image(w.image, w.manifest, w.device, w.card);
    bool clean = audit.mbr_anchor_ok && audit.failed_lbas.empty() &&
                 audit.malformed_meta_lbas.empty();

    struct Named
    {
        std::string_view name;
        LbaRange range;
    };
    Named regions[] = {{"mbr", {0, 1}}, {"boot", l.boot}, {"data", l.data}, {"meta", l.meta}};
    for (auto const &[name, range] : regions)
    {
        std::vector<std::uint64_t> bad;
        for (auto lba : audit.failed_lbas)
            if (range.contains(lba))
                bad.push_back(lba);
        for (auto lba : audit.malformed_meta_lbas)
            if (range.contains(lba))
                bad.push_back(lba);
        if (name == "mbr" && !audit.mbr_anchor_ok && bad.empty())
            bad.push_back(0);
        if (bad.empty())
            std::cout << "region " << name << " OK\n";
        for (auto lba : bad)
            std::cout << "region " << name << " FAIL lba=" << lba << '\n';
    }

    if (!a.transcript.empty())
    {
        std::map<std::string, std::size_t> counts;
        std::size_t lines = 0;
        std::istringstream in(read_text(a.transcript));
        std::string line;
        while (std::getline(in, line))
        {
            ++lines;
            auto k = line.find("KIND=");
            auto d = line.find("DIR=");
            if (k == std::string::npos || d == std::string::npos)
                continue;
            auto kind = line.substr(k + 5, line.find(' ', k) - k - 5);
            auto dir = line.substr(d + 4, line.find(' ', d) - d - 4);
            ++counts[kind + " " + dir];
        }
        std::cout << "transcript frames=" << lines << '\n';
        for (auto const &[key, n] : counts)
            std::cout << "transcript " << key << ' ' << n << '\n';
    }
    return clean ? exit_ok : exit_mismatch;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Trusted memory interface simulator"};
    app.require_subcommand(1);

    ProvisionArgs pa;
    auto *prov = app.add_subcommand("provision", "Build an encrypted card image and manifest");
    prov->add_option("--boot", pa.boot, "Boot entry, [kind:]path")->required();
    prov->add_option("--data", pa.data, "Data file, [label=]path");
    prov->add_option("--out", pa.out, "Output image")->required();
    prov->add_option("--manifest", pa.manifest, "Output manifest (default <out>.manifest)");
    prov->add_option("--dna", pa.dna, "57-bit device DNA")->required();
    prov->add_option("--cid", pa.cid, "Card CID, 32 hex digits");
    prov->add_option("--cid-serial", pa.serial, "Card serial for a generated CID");
    prov->add_option("--sectors", pa.sectors, "Card geometry in sectors");
    prov->add_option("--kdf-counter", pa.kdf_counter, "KDF counter");
    prov->add_option("--kdf-reps", pa.kdf_reps, "KDF chain length");
    prov->add_flag("--bind-csd", pa.bind_csd, "Bind to the CSD as well as the CID");

    BootArgs ba;
    auto *boot = app.add_subcommand("boot", "Boot an image through the unit");
    boot->add_option("--image", ba.image)->required();
    boot->add_option("--manifest", ba.manifest)->required();
    boot->add_option("--dna", ba.ids.dna, "Physical device DNA");
    boot->add_option("--cid", ba.ids.cid, "Physical card CID (hex)");
    boot->add_option("--csd", ba.ids.csd, "Physical card CSD (hex)");
    boot->add_option("--trace", ba.trace, "Write the bus transcript here");

    TamperArgs ta;
    auto *tamper = app.add_subcommand("tamper", "Run attack scenarios");
    tamper->add_option("--scenario", ta.scenarios, "Scenario file");
    tamper->add_option("--bundled", ta.bundled, "Bundled scenario name or 'all'");
    tamper->add_option("--image", ta.image, "Image to attack (default: reference pair)");
    tamper->add_option("--manifest", ta.manifest);
    tamper->add_option("--export", ta.export_dir, "Write bundled scenarios to a directory");
    tamper->add_flag("--list", ta.list, "List bundled scenarios");

    BenchArgs bn;
    auto *bench = app.add_subcommand("bench", "Boot a synthetic payload and report timing");
    bench->add_option("--size", bn.size_mb, "Boot payload in MB (10^6 bytes)");
    bench->add_option("--prom-mb", bn.prom_mb, "Configuration size in MB");
    bench->add_option("--prom-rate", bn.prom_rate, "Configuration load rate in MB/s");

    InspectArgs ia;
    auto *inspect = app.add_subcommand("inspect", "Audit an image's integrity tags");
    inspect->add_option("--image", ia.image)->required();
    inspect->add_option("--manifest", ia.manifest)->required();
    inspect->add_option("--dna", ia.ids.dna);
    inspect->add_option("--cid", ia.ids.cid);
    inspect->add_option("--csd", ia.ids.csd);
    inspect->add_option("--transcript", ia.transcript);

    try
    {
        app.parse(argc, argv);
    }
    catch (CLI::CallForHelp const &e)
    {
        return app.exit(e);
    }
    catch (CLI::ParseError const &e)
    {
        app.exit(e);
        return exit_usage;
    }

    try
    {
        if (*prov)
            return cmd_provision(pa);
        if (*boot)
            return cmd_boot(ba);
        if (*tamper)
            return cmd_tamper(ta);
        if (*bench)
            return cmd_bench(bn);
        if (*inspect)
            return cmd_inspect(ia);
    }
    catch (std::exception const &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return exit_usage;
    }
    return exit_usage;
}

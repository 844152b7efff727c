#include <tmiu/scenario.hpp>

#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

namespace tmiu
{

namespace
{

struct RegionName
{
    Region region;
    std::string_view name;
};

constexpr std::array<RegionName, 9> region_names = {{
    {Region::mbr, "mbr"},
    {Region::boot, "boot"},
    {Region::data, "data"},
    {Region::meta, "meta"},
    {Region::cid, "cid"},
    {Region::device_dna, "device_dna"},
    {Region::bus_cmd, "bus:cmd"},
    {Region::bus_rsp, "bus:rsp"},
    {Region::bus_data, "bus:data"},
}};

auto split(std::string_view s, char sep) -> std::vector<std::string_view>
{
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    for (;;)
    {
        auto pos = s.find(sep, start);
        parts.push_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos)
            return parts;
        start = pos + 1;
    }
}

auto parse_number(std::string_view s) -> std::uint64_t
{
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X'))
    {
        s.remove_prefix(2);
        base = 16;
    }
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw std::invalid_argument("bad number '" + std::string(s) + "'");
    return v;
}

auto is_sector_region(Region r) -> bool
{
    return r == Region::mbr || r == Region::boot || r == Region::data || r == Region::meta;
}

auto parse_target(std::string_view s) -> Target
{
    for (auto const &rn : region_names)
    {
        if (s == rn.name)
            return {rn.region, 0};
    }
    auto colon = s.rfind(':');
    if (colon != std::string_view::npos)
    {
        auto head = s.substr(0, colon);
        for (auto const &rn : region_names)
        {
            if (head == rn.name && is_sector_region(rn.region) && rn.region != Region::mbr)
                return {rn.region, parse_number(s.substr(colon + 1))};
        }
    }
    throw std::invalid_argument("unknown target '" + std::string(s) + "'");
}

auto target_text(Target t) -> std::string
{
    auto name = std::string(to_string(t.region));
    if (t.region == Region::boot || t.region == Region::data || t.region == Region::meta)
        name += ":" + std::to_string(t.index);
    return name;
}

auto parse_mutation(std::string_view s) -> Mutation
{
    auto parts = split(s, ':');
    auto want = [&](std::size_t n) {
        if (parts.size() != n)
            throw std::invalid_argument("bad mutation '" + std::string(s) + "'");
    };
    Mutation m;
    auto const op = parts[0];
    if (op == "flip_bit")
    {
        want(3);
        m.kind = Mutation::Kind::flip_bit;
        m.offset = parse_number(parts[1]);
        m.bit = static_cast<unsigned>(parse_number(parts[2]));
        if (m.bit > 7)
            throw std::invalid_argument("bit index out of range");
    }
    else if (op == "set_byte")
    {
        want(3);
        m.kind = Mutation::Kind::set_byte;
        m.offset = parse_number(parts[1]);
        auto v = parse_number(parts[2]);
        if (v > 0xff)
            throw std::invalid_argument("byte value out of range");
        m.value = static_cast<std::uint8_t>(v);
    }
    else if (op == "replace")
    {
        want(3);
        m.kind = Mutation::Kind::replace;
        m.offset = parse_number(parts[1]);
        m.bytes = from_hex(parts[2]);
    }
    else if (op == "copy_from")
    {
        // copy_from:data:8 or copy_from:mbr
        if (parts.size() < 2 || parts.size() > 3)
            throw std::invalid_argument("bad mutation '" + std::string(s) + "'");
        m.kind = Mutation::Kind::copy_from;
        auto src = std::string(parts[1]);
        if (parts.size() == 3)
            src += ":" + std::string(parts[2]);
        m.source = parse_target(src);
        if (!is_sector_region(m.source.region))
            throw std::invalid_argument("copy_from needs a sector region");
    }
    else if (op == "swap")
    {
        want(2);
        m.kind = Mutation::Kind::swap;
        m.amount = parse_number(parts[1]);
    }
    else if (op == "inject")
    {
        want(2);
        m.kind = Mutation::Kind::inject;
        m.amount = parse_number(parts[1]);
    }
    else
    {
        throw std::invalid_argument("unknown mutation '" + std::string(op) + "'");
    }
    return m;
}

auto mutation_text(Mutation const &m) -> std::string
{
    std::ostringstream out;
    switch (m.kind)
    {
    case Mutation::Kind::flip_bit:
        out << "flip_bit:" << m.offset << ':' << m.bit;
        break;
    case Mutation::Kind::set_byte:
        out << "set_byte:" << m.offset << ':' << unsigned{m.value};
        break;
    case Mutation::Kind::replace:
        out << "replace:" << m.offset << ':' << to_hex(m.bytes);
        break;
    case Mutation::Kind::copy_from:
        out << "copy_from:" << target_text(m.source);
        break;
    case Mutation::Kind::swap:
        out << "swap:" << m.amount;
        break;
    case Mutation::Kind::inject:
        out << "inject:" << m.amount;
        break;
    }
    return out.str();
}

auto valid_outcome_class(std::string_view c) -> bool
{
    if (c == "Granted" || c == "EntryMismatch")
        return true;
    auto r = lockdown_reason_from_string(c);
    return r && *r != LockdownReason::none;
}

void mutate_bytes(std::span<std::uint8_t> bytes, Mutation const &m)
{
    switch (m.kind)
    {
    case Mutation::Kind::flip_bit:
        if (m.offset >= bytes.size())
            throw std::invalid_argument("offset out of range");
        bytes[m.offset] ^= static_cast<std::uint8_t>(1u << m.bit);
        return;
    case Mutation::Kind::set_byte:
        if (m.offset >= bytes.size())
            throw std::invalid_argument("offset out of range");
        bytes[m.offset] = m.value;
        return;
    case Mutation::Kind::replace:
        if (m.offset > bytes.size() || m.bytes.size() > bytes.size() - m.offset)
            throw std::invalid_argument("replacement out of range");
        std::copy(m.bytes.begin(), m.bytes.end(), bytes.begin() + static_cast<std::ptrdiff_t>(m.offset));
        return;
    default:
        throw std::invalid_argument("mutation does not apply to raw bytes");
    }
}

auto resolve_lba(NvmLayout const &layout, Target t) -> std::uint64_t
{
    auto in = [&](LbaRange r) {
        if (t.index >= r.count)
            throw std::invalid_argument("index out of range for " + target_text(t));
        return r.start + t.index;
    };
    switch (t.region)
    {
    case Region::mbr:
        return 0;
    case Region::boot:
        return in(layout.boot);
    case Region::data:
        return in(layout.data);
    case Region::meta:
        return in(layout.meta);
    default:
        throw std::invalid_argument("not a sector region");
    }
}

auto pseudo_random_blob(std::mt19937_64 &rng, std::size_t n) -> Bytes
{
    Bytes b(n);
    for (auto &x : b)
        x = static_cast<std::uint8_t>(rng());
    return b;
}

} // namespace

auto to_string(Region r) -> std::string_view
{
    for (auto const &rn : region_names)
    {
        if (rn.region == r)
            return rn.name;
    }
    return "?";
}

auto Scenario::parse(std::string_view text) -> Scenario
{
    Scenario sc;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line))
    {
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#')
            continue;
        line = line.substr(first);
        while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
            line.pop_back();

        std::optional<Target> target;
        std::optional<Mutation> mutation;
        std::istringstream words(line);
        std::string word;
        while (words >> word)
        {
            auto eq = word.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("expected key=value, got '" + word + "'");
            auto key = std::string_view(word).substr(0, eq);
            auto value = std::string_view(word).substr(eq + 1);
            if (key == "name")
                sc.name = value;
            else if (key == "target")
                target = parse_target(value);
            else if (key == "mutate")
                mutation = parse_mutation(value);
            else if (key == "expect")
            {
                if (!valid_outcome_class(value))
                    throw std::invalid_argument("unknown outcome class '" + std::string(value) + "'");
                if (!sc.expected.empty() && sc.expected != value)
                    throw std::invalid_argument("conflicting expectations");
                sc.expected = value;
            }
            else
                throw std::invalid_argument("unknown key '" + std::string(key) + "'");
        }
        if (target.has_value() != mutation.has_value())
            throw std::invalid_argument("target and mutate must appear together");
        if (target)
        {
            auto bus = target->region == Region::bus_cmd || target->region == Region::bus_rsp ||
                       target->region == Region::bus_data;
            if (bus != (mutation->kind == Mutation::Kind::inject))
                throw std::invalid_argument("inject applies to bus targets only");
            if (mutation->kind == Mutation::Kind::swap && target->region != Region::cid)
                throw std::invalid_argument("swap applies to the cid target only");
            if (mutation->kind == Mutation::Kind::copy_from && !is_sector_region(target->region))
                throw std::invalid_argument("copy_from needs a sector target");
            sc.steps.push_back({*target, *mutation});
        }
    }
    if (sc.expected.empty())
        throw std::invalid_argument("scenario has no expect=");
    return sc;
}

auto Scenario::to_text() const -> std::string
{
    std::ostringstream out;
    if (!name.empty())
        out << "name=" << name << '\n';
    for (auto const &s : steps)
        out << "target=" << target_text(s.target) << " mutate=" << mutation_text(s.mutation)
            << " expect=" << expected << '\n';
    if (steps.empty())
        out << "expect=" << expected << '\n';
    return out.str();
}

auto reference_world(std::uint64_t seed, std::uint64_t geometry) -> World
{
    std::mt19937_64 rng(seed);
    DeviceIdentity device(0x0123456789ABCDull ^ (seed & 0xffff));
    CidFields fields;
    fields.serial = static_cast<std::uint32_t>(0xC0FFEE00u + seed);
    CardIdentity card(make_cid(fields), make_csd(geometry));

    std::vector<BootEntry> entries = {
        {EntryKind::fsbl, pseudo_random_blob(rng, 12 * 1024)},
        {EntryKind::ssbl, pseudo_random_blob(rng, 24 * 1024)},
        {EntryKind::kernel, pseudo_random_blob(rng, 60 * 1024)},
        {EntryKind::devicetree, pseudo_random_blob(rng, 3000)},
    };
    std::vector<DataFile> files = {
        {"rootfs.img", pseudo_random_blob(rng, 20 * 1024)},
        {"config.txt", Bytes(1500, 'c')},
    };
    ProvisionParams params;
    params.geometry = geometry;
    auto p = provision(entries, files, device, card, params);
    return World{std::move(p.image), std::move(p.manifest), device, card};
}

auto run_bench(double size_mb, PromStore prom, TimingConfig timing) -> BootOutcome
{
    if (!(size_mb > 0))
        throw std::invalid_argument("payload size must be positive");
    auto payload = static_cast<std::size_t>(std::llround(size_mb * 1e6));

    std::vector<BootEntry> entries = {{EntryKind::kernel, Bytes(payload, 0)}};
    for (std::size_t i = 0; i < payload; ++i)
        entries[0].blob[i] = static_cast<std::uint8_t>((i * 2654435761u) >> 24);
    std::size_t lengths[] = {payload};
    auto boot_sectors = boot_image_size(lengths) / sector_size;
    // MBR, boot, a small data partition, and tags, rounded to CSD granularity.
    auto tagged = 1 + boot_sectors + 2048;
    auto geometry = ((tagged + meta_sectors_for(tagged)) / 1024 + 1) * 1024;

    DeviceIdentity dev(0x00C0FFEE123456ull);
    CidFields f;
    f.serial = 0xBE7C4;
    CardIdentity card(make_cid(f), make_csd(geometry));
    ProvisionParams params;
    params.geometry = geometry;
    auto p = provision(entries, {}, dev, card, params);
    secure_wipe(entries[0].blob);

    Simulator sim(std::move(p.image), card, p.manifest.anchors, dev, p.manifest.entries, prom,
                  timing);
    return sim.boot();
}

auto apply_scenario(World const &world, Scenario const &scenario) -> World
{
    World w = world;
    for (auto const &step : scenario.steps)
    {
        auto const &m = step.mutation;
        switch (step.target.region)
        {
        case Region::mbr:
        case Region::boot:
        case Region::data:
        case Region::meta: {
            auto lba = resolve_lba(w.manifest.layout, step.target);
            if (m.kind == Mutation::Kind::copy_from)
                w.image.sector(lba) = w.image.sector(resolve_lba(w.manifest.layout, m.source));
            else
                mutate_bytes(w.image.sector(lba), m);
            break;
        }
        case Region::cid: {
            if (m.kind == Mutation::Kind::swap)
            {
                CidFields f;
                f.serial = static_cast<std::uint32_t>(m.amount);
                w.card = CardIdentity(make_cid(f), w.card.csd());
            }
            else
            {
                auto cid = w.card.cid();
                mutate_bytes(cid, m);
                w.card = CardIdentity(cid, w.card.csd());
            }
            break;
        }
        case Region::device_dna: {
            auto enc = w.device.encoded();
            mutate_bytes(enc, m);
            auto dna = get_be64(enc.data()) & ((std::uint64_t{1} << 57) - 1);
            w.device = DeviceIdentity(dna, w.device.jtag_disabled());
            break;
        }
        case Region::bus_cmd:
        case Region::bus_rsp:
        case Region::bus_data:
            break;
        }
    }
    return w;
}

auto run_scenario(World const &world, Scenario const &scenario) -> ScenarioResult
{
    auto w = apply_scenario(world, scenario);
    Simulator sim(std::move(w.image), w.card, w.manifest.anchors, w.device, w.manifest.entries);

    for (auto const &step : scenario.steps)
    {
        auto n = static_cast<int>(step.mutation.amount);
        if (step.target.region == Region::bus_cmd)
            sim.bus.faults().commands += n;
        else if (step.target.region == Region::bus_rsp)
            sim.bus.faults().responses += n;
        else if (step.target.region == Region::bus_data)
            sim.bus.faults().read_blocks += n;
    }

    ScenarioResult r;
    auto outcome = sim.boot();
    if (!outcome.granted())
        r.observed = outcome.outcome_class();
    else if (!sim.scrub())
        r.observed = sim.tmiu.stage() == Stage::lockdown
                         ? std::string(to_string(sim.tmiu.lockdown_reason()))
                         : "ScrubFailed";
    else
        r.observed = "Granted";
    r.report = sim.tmiu.report();
    r.lba = sim.tmiu.lockdown_lba();
    r.matched = r.observed == scenario.expected;
    return r;
}

auto bundled_scenarios() -> std::vector<Scenario>
{
    auto sc = [](std::string_view text) { return Scenario::parse(text); };
    return {
        sc("name=mbr_partition_tamper\ntarget=mbr mutate=flip_bit:454:0 expect=MbrMismatch\n"),
        sc("name=mbr_signature_tamper\ntarget=mbr mutate=set_byte:510:0 expect=MbrMismatch\n"),
        sc("name=card_swap\ntarget=cid mutate=swap:305419896 expect=NvmMismatch\n"),
        sc("name=cid_corrupt\ntarget=cid mutate=flip_bit:9:4 expect=MalformedCid\n"),
        sc("name=device_swap\ntarget=device_dna mutate=flip_bit:7:0 expect=DeviceMismatch\n"),
        sc("name=bootimage_bitflip\ntarget=boot:3 mutate=flip_bit:100:2 "
           "expect=ImageDigestMismatch\n"),
        sc("name=bootimage_header_tamper\ntarget=boot:0 mutate=set_byte:0:0 "
           "expect=ImageDigestMismatch\n"),
        sc("name=data_sector_tamper\ntarget=data:8 mutate=flip_bit:17:5 "
           "expect=SectorTagMismatch\n"),
        sc("name=file_table_tamper\ntarget=data:0 mutate=set_byte:0:255 "
           "expect=SectorTagMismatch\n"),
        sc("name=meta_tamper\ntarget=meta:0 mutate=flip_bit:40:0 expect=SectorTagMismatch\n"),
        sc("name=bus_bitflip\ntarget=bus:data mutate=inject:2 expect=Granted\n"
           "target=bus:rsp mutate=inject:1 expect=Granted\n"
           "target=bus:cmd mutate=inject:1 expect=Granted\n"),
        sc("name=bus_dead\ntarget=bus:rsp mutate=inject:64 expect=BusError\n"),
        sc("name=sector_replay\ntarget=data:9 mutate=copy_from:data:8 "
           "expect=SectorTagMismatch\n"),
        sc("name=clean\nexpect=Granted\n"),
    };
}

} // namespace tmiu

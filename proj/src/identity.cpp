#include <tmiu/identity.hpp>

#include <charconv>
#include <sstream>
#include <stdexcept>

namespace tmiu
{

DeviceIdentity::DeviceIdentity(std::uint64_t dna, bool jtag_disabled)
    : dna_(dna), jtag_disabled_(jtag_disabled)
{
    if (dna >= device_dna_limit)
    {
        throw std::invalid_argument("device DNA exceeds 57 bits");
    }
}

auto DeviceIdentity::encoded() const noexcept -> std::array<std::uint8_t, 8>
{
    std::array<std::uint8_t, 8> out{};
    put_be64(out.data(), dna_);
    return out;
}

namespace
{
void seal_register(CardRegister &reg)
{
    auto crc = crc7(ByteView(reg.data(), 15));
    reg[15] = static_cast<std::uint8_t>((crc.value << 1) | 1);
}
} // namespace

auto make_cid(CidFields const &f) -> CardRegister
{
    CardRegister cid{};
    cid[0] = f.manufacturer_id;
    cid[1] = static_cast<std::uint8_t>(f.oem_id[0]);
    cid[2] = static_cast<std::uint8_t>(f.oem_id[1]);
    for (std::size_t i = 0; i < 5; ++i)
        cid[3 + i] = static_cast<std::uint8_t>(f.product_name[i]);
    cid[8] = f.product_revision;
    put_be32(cid.data() + 9, f.serial);
    cid[13] = static_cast<std::uint8_t>((f.manufacture_date >> 8) & 0x0f);
    cid[14] = static_cast<std::uint8_t>(f.manufacture_date);
    seal_register(cid);
    return cid;
}

auto make_csd(std::uint64_t sectors) -> CardRegister
{
    if (sectors == 0)
    {
        throw std::invalid_argument("card capacity must be positive");
    }
    auto c_size = (sectors + 1023) / 1024 - 1;
    if (c_size >= (1u << 22))
    {
        throw std::invalid_argument("card capacity exceeds CSD v2 range");
    }
    CardRegister csd{};
    csd[0] = 0x40; // CSD_STRUCTURE = 1
    csd[1] = 0x0e; // TAAC
    csd[3] = 0x5a; // TRAN_SPEED: 50 MHz
    csd[4] = 0x5b; // CCC
    csd[5] = 0x59; // CCC | READ_BL_LEN = 9
    csd[7] = static_cast<std::uint8_t>((c_size >> 16) & 0x3f);
    csd[8] = static_cast<std::uint8_t>(c_size >> 8);
    csd[9] = static_cast<std::uint8_t>(c_size);
    csd[10] = 0x7f;
    csd[11] = 0x80;
    csd[12] = 0x0a;
    csd[13] = 0x40;
    seal_register(csd);
    return csd;
}

auto csd_capacity_sectors(CardRegister const &csd) noexcept -> std::uint64_t
{
    std::uint64_t c_size = (std::uint64_t{csd[7] & 0x3fu} << 16) |
                           (std::uint64_t{csd[8]} << 8) | csd[9];
    return (c_size + 1) * 1024;
}

auto register_crc_valid(CardRegister const &reg) noexcept -> bool
{
    auto crc = crc7(ByteView(reg.data(), 15));
    return reg[15] == static_cast<std::uint8_t>((crc.value << 1) | 1);
}

TrustAnchors::TrustAnchors(Digest256 device_checksum, Digest256 nvm_checksum,
                           Digest256 mbr_digest, std::uint32_t kdf_counter,
                           std::uint32_t kdf_repetitions, bool binds_csd)
    : device_checksum_(device_checksum), nvm_checksum_(nvm_checksum),
      mbr_digest_(mbr_digest), kdf_counter_(kdf_counter),
      kdf_repetitions_(kdf_repetitions), binds_csd_(binds_csd)
{
    if (kdf_repetitions == 0)
    {
        throw std::invalid_argument("kdf_repetitions must be at least 1");
    }
}

auto device_checksum(DeviceIdentity const &dev) -> Digest256
{
    return sha256(dev.encoded());
}

auto nvm_checksum(CardIdentity const &card, bool bind_csd) -> Digest256
{
    Sha256 h;
    h.update(card.cid());
    if (bind_csd)
    {
        h.update(card.csd());
    }
    return h.finish();
}

auto to_string(AuthResult r) -> std::string_view
{
    switch (r)
    {
    case AuthResult::pass:
        return "Pass";
    case AuthResult::device_mismatch:
        return "DeviceMismatch";
    case AuthResult::nvm_mismatch:
        return "NvmMismatch";
    case AuthResult::malformed_cid:
        return "MalformedCid";
    }
    return "?";
}

auto authenticate_device(TrustAnchors const &anchors, DeviceIdentity const &dev)
    -> AuthResult
{
    return device_checksum(dev) == anchors.device_checksum()
               ? AuthResult::pass
               : AuthResult::device_mismatch;
}

auto authenticate_nvm(TrustAnchors const &anchors, CardIdentity const &card)
    -> AuthResult
{
    if (!card.cid_crc_valid())
    {
        return AuthResult::malformed_cid;
    }
    return nvm_checksum(card, anchors.binds_csd()) == anchors.nvm_checksum()
               ? AuthResult::pass
               : AuthResult::nvm_mismatch;
}

auto make_kdf_input(DeviceIdentity const &dev, CardIdentity const &card,
                    std::uint32_t counter, std::uint32_t repetitions) -> KdfInput
{
    KdfInput in;
    in.counter = counter;
    in.secret = dev.encoded();
    in.other_info = card.cid();
    in.repetitions = repetitions;
    return in;
}

auto anchors_to_text(TrustAnchors const &a) -> std::string
{
    std::ostringstream out;
    out << "device_checksum=" << a.device_checksum().hex() << '\n'
        << "nvm_checksum=" << a.nvm_checksum().hex() << '\n'
        << "mbr_digest=" << a.mbr_digest().hex() << '\n'
        << "kdf_counter=" << a.kdf_counter() << '\n'
        << "kdf_repetitions=" << a.kdf_repetitions() << '\n';
    if (a.binds_csd())
    {
        out << "bind_csd=1\n";
    }
    return out.str();
}

namespace
{
auto require(std::map<std::string, std::string> const &fields,
             std::string const &key) -> std::string const &
{
    auto it = fields.find(key);
    if (it == fields.end())
    {
        throw std::invalid_argument("manifest is missing field '" + key + "'");
    }
    return it->second;
}

auto parse_u32(std::string const &text, std::string const &key) -> std::uint32_t
{
    std::uint32_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
    {
        throw std::invalid_argument("field '" + key + "' is not a u32");
    }
    return v;
}
} // namespace

auto anchors_from_fields(std::map<std::string, std::string> const &fields)
    -> TrustAnchors
{
    auto bind = fields.find("bind_csd");
    return TrustAnchors(
        Digest256::from_hex(require(fields, "device_checksum")),
        Digest256::from_hex(require(fields, "nvm_checksum")),
        Digest256::from_hex(require(fields, "mbr_digest")),
        parse_u32(require(fields, "kdf_counter"), "kdf_counter"),
        parse_u32(require(fields, "kdf_repetitions"), "kdf_repetitions"),
        bind != fields.end() && bind->second == "1");
}

auto parse_key_values(std::string_view text) -> std::map<std::string, std::string>
{
    std::map<std::string, std::string> out;
    std::size_t line_no = 0;
    while (!text.empty())
    {
        auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text = (nl == std::string_view::npos) ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        if (line.empty() || line.front() == '#')
            continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos || eq == 0)
        {
            throw std::invalid_argument("malformed line " + std::to_string(line_no));
        }
        auto [it, inserted] =
            out.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
        if (!inserted)
        {
            throw std::invalid_argument("duplicate key '" + it->first + "'");
        }
    }
    return out;
}

} // namespace tmiu

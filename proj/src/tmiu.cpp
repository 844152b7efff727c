#include <tmiu/tmiu.hpp>

#include <tmiu/sector_crypto.hpp>

#include <cstdio>
#include <map>
#include <sstream>

namespace tmiu
{

auto to_string(LockdownReason r) -> std::string_view
{
    switch (r)
    {
    case LockdownReason::none:
        return "none";
    case LockdownReason::device_mismatch:
        return "DeviceMismatch";
    case LockdownReason::nvm_mismatch:
        return "NvmMismatch";
    case LockdownReason::malformed_cid:
        return "MalformedCid";
    case LockdownReason::bus_error:
        return "BusError";
    case LockdownReason::mbr_mismatch:
        return "MbrMismatch";
    case LockdownReason::sector_tag_mismatch:
        return "SectorTagMismatch";
    case LockdownReason::image_digest_mismatch:
        return "ImageDigestMismatch";
    case LockdownReason::malformed_image:
        return "MalformedImage";
    }
    return "?";
}

auto lockdown_reason_from_string(std::string_view name) -> std::optional<LockdownReason>
{
    for (int i = 0; i <= static_cast<int>(LockdownReason::malformed_image); ++i)
    {
        auto r = static_cast<LockdownReason>(i);
        if (to_string(r) == name)
            return r;
    }
    return std::nullopt;
}

auto leds_to_string(Leds const &leds) -> std::string
{
    std::string s;
    for (auto on : leds)
        s.push_back(on ? '1' : '0');
    return s;
}

auto to_string(DataStatus s) -> std::string_view
{
    switch (s)
    {
    case DataStatus::ok:
        return "ok";
    case DataStatus::crc_error:
        return "ProtocolCrcError";
    case DataStatus::policy_violation:
        return "PolicyViolation";
    case DataStatus::denied:
        return "Denied";
    }
    return "?";
}

auto BootReport::to_text() const -> std::string
{
    auto fixed = [](double v, int digits) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
        return std::string(buf);
    };
    std::ostringstream out;
    out << "stage=" << to_string(stage) << '\n' << "reason=" << to_string(reason) << '\n';
    if (lba)
        out << "lba=" << *lba << '\n';
    out << "leds=" << leds_to_string(leds) << '\n'
        << "cycles=" << cycles << '\n'
        << "bytes=" << bytes << '\n'
        << "prom_ms=" << fixed(prom_ms, 3) << '\n'
        << "boot_ms=" << fixed(boot_ms, 3) << '\n'
        << "total_ms=" << fixed(total_ms, 3) << '\n'
        << "rate_mbps=" << fixed(rate_mbps, 3) << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------

Tmiu::Tmiu(TrustAnchors anchors, DeviceIdentity device, PromStore prom, TimingConfig timing)
    : anchors_(anchors), device_(device), prom_(prom), ledger_(timing)
{
}

void Tmiu::attach(SdioBus &bus)
{
    bus.set_timing_hook([this](FrameKind kind, std::size_t bits) {
        if (kind == FrameKind::dat)
            ledger_.charge_block();
        else
            ledger_.charge_bits(bits);
    });
    bus.set_clock([this] { return ledger_.cycles(); });
}

void Tmiu::enter(Stage s)
{
    stage_ = s;
    history_.push_back(s);
    ledger_.mark(s);
}

void Tmiu::erase_keys() noexcept
{
    if (keys_)
    {
        keys_->aes.wipe();
        keys_->mac.wipe();
        keys_.reset();
    }
}

void Tmiu::lockdown(SdioBus &bus, LockdownReason reason, std::optional<std::uint64_t> lba)
{
    if (stage_ == Stage::lockdown)
        return;
    reason_ = reason;
    reason_lba_ = lba;
    erase_keys();
    secure_wipe(released_image_);
    released_image_.clear();
    bus.suspend_io();
    enter(Stage::lockdown);
}

void Tmiu::reset() noexcept
{
    erase_keys();
    secure_wipe(released_image_);
    released_image_.clear();
    stage_ = Stage::prom_load;
    reason_ = LockdownReason::none;
    reason_lba_.reset();
    leds_ = {};
    history_.clear();
    ledger_.clear();
    card_.reset();
    card_capacity_ = 0;
    layout_.reset();
    boot_image_bytes_ = 0;
    keys_ready_at_.reset();
    operational_at_.reset();
}

void Tmiu::power_on(SdioBus &bus)
{
    if (stage_ != Stage::prom_load || !history_.empty())
        return;
    attach(bus);
    enter(Stage::prom_load);
    ledger_.charge_prom(prom_);

    enter(Stage::device_auth);
    if (authenticate_device(anchors_, device_) != AuthResult::pass)
    {
        lockdown(bus, LockdownReason::device_mismatch);
        return;
    }
    leds_[0] = true;
    enter(Stage::memory_auth);
}

namespace
{
auto r1_ok(std::optional<ResponseFrame> const &rsp) -> bool
{
    return rsp && rsp->type == ResponseFrame::Type::r1 && rsp->crc_valid() &&
           (rsp->status & (card_status::illegal_command | card_status::out_of_range |
                           card_status::block_len_error)) == 0;
}

auto r2_received(std::optional<ResponseFrame> const &rsp) -> bool
{
    return rsp && rsp->type == ResponseFrame::Type::r2;
}

auto provoke_crc_error(DataBlock const &block) -> DataBlock
{
    auto out = DataBlock::make(block.payload);
    out.payload[sector_size - 1] ^= 0xff;
    return out;
}
} // namespace

void Tmiu::authenticate_memory(SdioBus &bus)
{
    if (stage_ != Stage::memory_auth)
        return;

    if (!r1_ok(bus.command(sd_cmd::go_idle, 0)))
        return lockdown(bus, LockdownReason::bus_error);

    // A register that fails its CRC on every retry is kept and judged by
    // authentication rather than treated as line noise.
    auto cid = bus.command(sd_cmd::all_send_cid, 0);
    if (!r2_received(cid))
        return lockdown(bus, LockdownReason::bus_error);

    auto const rca_arg = std::uint32_t{VirtualCard::default_rca} << 16;
    auto csd = bus.command(sd_cmd::send_csd, rca_arg);
    if (!r2_received(csd) || !csd->crc_valid())
        return lockdown(bus, LockdownReason::bus_error);

    CardIdentity presented(cid->reg, csd->reg);
    switch (authenticate_nvm(anchors_, presented))
    {
    case AuthResult::pass:
        break;
    case AuthResult::malformed_cid:
        return lockdown(bus, LockdownReason::malformed_cid);
    default:
        return lockdown(bus, LockdownReason::nvm_mismatch);
    }
    card_ = presented;
    card_capacity_ = csd_capacity_sectors(csd->reg);

    if (!r1_ok(bus.command(sd_cmd::select_card, rca_arg)) ||
        !r1_ok(bus.command(sd_cmd::set_blocklen, sector_size)))
        return lockdown(bus, LockdownReason::bus_error);

    leds_[1] = true;
    enter(Stage::keygen_image_auth);
}

void Tmiu::generate_keys()
{
    if (stage_ != Stage::keygen_image_auth || keys_ || !card_)
        return;
    auto in = make_kdf_input(device_, *card_, anchors_.kdf_counter(), anchors_.kdf_repetitions());
    keys_.emplace(SessionKeys{derive_key(in), derive_mac_key(in)});
    secure_wipe(in.secret);
    keys_ready_at_ = ledger_.cycles();
}

auto Tmiu::fetch_block(SdioBus &bus, std::uint64_t lba) -> std::optional<DataBlock>
{
    for (int attempt = 0; attempt <= SdioBus::max_retries; ++attempt)
    {
        auto block = bus.read_block(lba);
        if (block && block->crc_valid())
            return block;
    }
    return std::nullopt;
}

auto Tmiu::stream_boot_partition(SdioBus &bus, Bytes &plain, std::vector<Digest256> &tags)
    -> bool
{
    auto const boot = layout_->boot;
    plain.assign(boot.count * sector_size, 0);
    tags.assign(boot.count, Digest256{});
    Aes128 cipher(keys_->aes);

    auto lba = boot.start;
    int failures = 0;
    while (lba < boot.end())
    {
        if (!r1_ok(bus.command(sd_cmd::read_multiple, static_cast<std::uint32_t>(lba))))
            return false;
        bool restart = false;
        for (; lba < boot.end(); ++lba)
        {
            auto block = bus.receive_block();
            if (!block || !block->crc_valid())
            {
                restart = true;
                break;
            }
            failures = 0;
            auto i = lba - boot.start;
            tags[i] = sector_tag(keys_->mac, lba, block->payload);
            apply_sector_keystream(cipher, lba, block->payload,
                                   std::span<std::uint8_t, sector_size>(
                                       plain.data() + i * sector_size, sector_size));
            ledger_.charge_sector_processing(lba + 1 < boot.end());
        }
        if (!r1_ok(bus.command(sd_cmd::stop_transmission, 0)))
            return false;
        if (restart && ++failures > SdioBus::max_retries)
            return false;
    }
    return true;
}

auto Tmiu::load_tag(SdioBus &bus, std::uint64_t lba, bool retry, Digest256 &tag) -> TagFetch
{
    auto slot = layout_->tag_slot(lba);
    auto block = retry ? fetch_block(bus, slot.lba) : bus.read_block(slot.lba);
    if (!block)
        return TagFetch::bus_error;
    if (!block->crc_valid())
        return TagFetch::crc_error;

    auto plain = decrypt_sector(keys_->aes, slot.lba, block->payload);
    auto first_covered = (slot.lba - layout_->meta.start) * tags_per_sector;
    for (std::size_t k = 0; k < tags_per_sector; ++k)
    {
        if (first_covered + k < layout_->tagged_sectors())
            continue;
        for (std::size_t b = 0; b < 32; ++b)
        {
            if (plain[k * 32 + b] != 0)
                return TagFetch::malformed;
        }
    }
    std::copy_n(plain.begin() + static_cast<std::ptrdiff_t>(slot.offset), 32, tag.bytes.begin());
    return TagFetch::ok;
}

auto Tmiu::locate_tampered_sector(SdioBus &bus, std::vector<Digest256> const &tags)
    -> std::optional<std::uint64_t>
{
    auto const boot = layout_->boot;
    for (std::uint64_t i = 0; i < boot.count; ++i)
    {
        Digest256 stored;
        auto fetched = load_tag(bus, boot.start + i, true, stored);
        if (fetched != TagFetch::ok || stored != tags[i])
            return boot.start + i;
    }
    return std::nullopt;
}

void Tmiu::verify_mbr_and_image(SdioBus &bus)
{
    if (stage_ != Stage::keygen_image_auth || !keys_)
        return;

    auto mbr_block = fetch_block(bus, 0);
    if (!mbr_block)
        return lockdown(bus, LockdownReason::bus_error);
    if (sector_tag(keys_->mac, 0, mbr_block->payload) != anchors_.mbr_digest())
        return lockdown(bus, LockdownReason::mbr_mismatch, 0);

    auto mbr_plain = decrypt_sector(keys_->aes, 0, mbr_block->payload);
    ledger_.charge_sector_processing(false);
    try
    {
        auto mbr = parse_mbr(mbr_plain, card_capacity_);
        auto const &p = mbr.partitions;
        if (mbr.used_partitions().size() != 2 || p[0].type != boot_partition_type ||
            p[1].type != data_partition_type)
            return lockdown(bus, LockdownReason::mbr_mismatch, 0);
        layout_ = NvmLayout::from_partitions(card_capacity_, p[0].range(), p[1].range());
    }
    catch (NvmError const &)
    {
        return lockdown(bus, LockdownReason::mbr_mismatch, 0);
    }

    Bytes image;
    std::vector<Digest256> tags;
    if (!stream_boot_partition(bus, image, tags))
        return lockdown(bus, LockdownReason::bus_error);

    auto check = verify_boot_image(image);
    if (check != ImageCheck::pass)
    {
        secure_wipe(image);
        auto lba = locate_tampered_sector(bus, tags);
        return lockdown(bus,
                        check == ImageCheck::digest_mismatch ? LockdownReason::image_digest_mismatch
                                                             : LockdownReason::malformed_image,
                        lba);
    }

    leds_[2] = true;
    leds_[3] = true;
    boot_image_bytes_ = image.size();
    released_image_ = std::move(image);
    enter(Stage::operational);
    operational_at_ = ledger_.cycles();
}

auto Tmiu::take_boot_image() -> Bytes
{
    if (stage_ != Stage::operational)
        return {};
    return std::exchange(released_image_, {});
}

auto Tmiu::mediate_read(SdioBus &bus, std::uint64_t lba) -> MediatedRead
{
    if (stage_ != Stage::operational)
        return {DataStatus::denied, std::nullopt};
    if (lba >= layout_->tagged_sectors())
        return {DataStatus::policy_violation, std::nullopt};

    auto block = bus.read_block(lba);
    if (!block)
    {
        lockdown(bus, LockdownReason::bus_error);
        return {DataStatus::denied, std::nullopt};
    }
    // Damaged on the wire: pass it through undecrypted so the host's own
    // CRC check fails and it retransmits.
    if (!block->crc_valid())
        return {DataStatus::crc_error, block};

    Digest256 stored;
    switch (load_tag(bus, lba, false, stored))
    {
    case TagFetch::ok:
        break;
    case TagFetch::crc_error:
        return {DataStatus::crc_error, provoke_crc_error(*block)};
    case TagFetch::bus_error:
        lockdown(bus, LockdownReason::bus_error);
        return {DataStatus::denied, std::nullopt};
    case TagFetch::malformed: {
        auto out = provoke_crc_error(*block);
        lockdown(bus, LockdownReason::sector_tag_mismatch, layout_->tag_slot(lba).lba);
        return {DataStatus::crc_error, out};
    }
    }

    if (sector_tag(keys_->mac, lba, block->payload) != stored)
    {
        auto out = provoke_crc_error(*block);
        lockdown(bus, LockdownReason::sector_tag_mismatch, lba);
        return {DataStatus::crc_error, out};
    }

    auto plain = decrypt_sector(keys_->aes, lba, block->payload);
    ledger_.charge_sector_processing(false);
    auto out = DataBlock::make(plain);
    secure_wipe(plain);
    return {DataStatus::ok, out};
}

auto Tmiu::store_tag(SdioBus &bus, std::uint64_t lba, Digest256 const &tag) -> bool
{
    auto slot = layout_->tag_slot(lba);
    auto block = fetch_block(bus, slot.lba);
    if (!block)
        return false;
    auto plain = decrypt_sector(keys_->aes, slot.lba, block->payload);
    std::copy(tag.bytes.begin(), tag.bytes.end(),
              plain.begin() + static_cast<std::ptrdiff_t>(slot.offset));
    auto updated = DataBlock::make(encrypt_sector(keys_->aes, slot.lba, plain));
    for (int attempt = 0; attempt <= SdioBus::max_retries; ++attempt)
    {
        if (bus.write_block(slot.lba, updated) == WriteToken::accepted)
            return true;
    }
    return false;
}

auto Tmiu::mediate_write(SdioBus &bus, std::uint64_t lba, DataBlock const &from_host)
    -> DataStatus
{
    if (stage_ != Stage::operational)
        return DataStatus::denied;
    if (!layout_->data.contains(lba))
        return DataStatus::policy_violation;
    if (!from_host.crc_valid())
        return DataStatus::crc_error;

    auto cipher_block = DataBlock::make(encrypt_sector(keys_->aes, lba, from_host.payload));
    bool written = false;
    for (int attempt = 0; attempt <= SdioBus::max_retries && !written; ++attempt)
    {
        written = bus.write_block(lba, cipher_block) == WriteToken::accepted;
    }
    if (!written)
    {
        lockdown(bus, LockdownReason::bus_error);
        return DataStatus::denied;
    }
    ledger_.charge_sector_processing(false);

    if (!store_tag(bus, lba, sector_tag(keys_->mac, lba, cipher_block.payload)))
    {
        lockdown(bus, LockdownReason::bus_error);
        return DataStatus::denied;
    }
    return DataStatus::ok;
}

auto Tmiu::report() const -> BootReport
{
    BootReport r;
    r.stage = stage_;
    r.reason = reason_;
    r.lba = reason_lba_;
    r.leds = leds_;
    r.cycles = ledger_.cycles();
    r.bytes = ledger_.bytes_moved();
    r.total_ms = ledger_.to_ms(ledger_.cycles());
    r.prom_ms = ledger_.to_ms(keys_ready_at_ ? *keys_ready_at_ : ledger_.cycles());
    if (keys_ready_at_ && operational_at_)
    {
        r.boot_ms = ledger_.to_ms(*operational_at_ - *keys_ready_at_);
        if (r.boot_ms > 0)
            r.rate_mbps = static_cast<double>(boot_image_bytes_) / (r.boot_ms * 1000.0);
    }
    return r;
}

} // namespace tmiu

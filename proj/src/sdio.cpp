#include <tmiu/sdio.hpp>

namespace tmiu
{

auto to_string(CardState s) -> std::string_view
{
    switch (s)
    {
    case CardState::idle:
        return "idle";
    case CardState::ready:
        return "ready";
    case CardState::identification:
        return "identification";
    case CardState::standby:
        return "standby";
    case CardState::transfer:
        return "transfer";
    case CardState::sending_data:
        return "sending-data";
    case CardState::receive_data:
        return "receive-data";
    }
    return "?";
}

auto CommandFrame::make(std::uint8_t index, std::uint32_t argument) -> CommandFrame
{
    CommandFrame f{static_cast<std::uint8_t>(index & 0x3f), argument, {}};
    auto wire = f.serialize();
    f.crc = crc7(ByteView(wire.data(), 5));
    return f;
}

auto CommandFrame::serialize() const -> std::array<std::uint8_t, 6>
{
    std::array<std::uint8_t, 6> w{};
    w[0] = static_cast<std::uint8_t>(0x40 | (index & 0x3f));
    put_be32(w.data() + 1, argument);
    w[5] = static_cast<std::uint8_t>((crc.value << 1) | 1);
    return w;
}

auto CommandFrame::parse(ByteView wire) -> std::optional<CommandFrame>
{
    if (wire.size() != 6 || (wire[0] & 0xc0) != 0x40 || (wire[5] & 1) == 0)
        return std::nullopt;
    return CommandFrame{static_cast<std::uint8_t>(wire[0] & 0x3f), get_be32(wire.data() + 1),
                        Crc7{static_cast<std::uint8_t>(wire[5] >> 1)}};
}

auto CommandFrame::crc_valid() const -> bool
{
    auto w = serialize();
    return crc7(ByteView(w.data(), 5)) == crc;
}

auto ResponseFrame::r1(std::uint8_t index, std::uint32_t status) -> ResponseFrame
{
    ResponseFrame f;
    f.type = Type::r1;
    f.index = static_cast<std::uint8_t>(index & 0x3f);
    f.status = status;
    auto wire = f.serialize();
    f.crc = crc7(ByteView(wire.data(), 5));
    return f;
}

auto ResponseFrame::r2(CardRegister const &reg) -> ResponseFrame
{
    ResponseFrame f;
    f.type = Type::r2;
    f.index = 0x3f;
    f.reg = reg;
    return f;
}

auto ResponseFrame::serialize() const -> Bytes
{
    if (type == Type::r1)
    {
        Bytes w(6);
        w[0] = static_cast<std::uint8_t>(index & 0x3f);
        put_be32(w.data() + 1, status);
        w[5] = static_cast<std::uint8_t>((crc.value << 1) | 1);
        return w;
    }
    Bytes w(17);
    w[0] = 0x3f;
    std::copy(reg.begin(), reg.end(), w.begin() + 1);
    return w;
}

auto ResponseFrame::parse(ByteView wire) -> std::optional<ResponseFrame>
{
    if (wire.size() == 6 && (wire[0] & 0xc0) == 0 && (wire[5] & 1))
    {
        ResponseFrame f;
        f.type = Type::r1;
        f.index = wire[0] & 0x3f;
        f.status = get_be32(wire.data() + 1);
        f.crc = Crc7{static_cast<std::uint8_t>(wire[5] >> 1)};
        return f;
    }
    if (wire.size() == 17 && wire[0] == 0x3f)
    {
        ResponseFrame f;
        f.type = Type::r2;
        f.index = 0x3f;
        std::copy(wire.begin() + 1, wire.end(), f.reg.begin());
        return f;
    }
    return std::nullopt;
}

auto ResponseFrame::crc_valid() const -> bool
{
    if (type == Type::r2)
        return register_crc_valid(reg);
    auto w = serialize();
    return crc7(ByteView(w.data(), 5)) == crc;
}

auto DataBlock::make(Sector const &payload) -> DataBlock
{
    return DataBlock{payload, crc16(payload)};
}

auto DataBlock::serialize() const -> std::array<std::uint8_t, sector_size + 2>
{
    std::array<std::uint8_t, sector_size + 2> w{};
    std::copy(payload.begin(), payload.end(), w.begin());
    w[sector_size] = static_cast<std::uint8_t>(crc.value >> 8);
    w[sector_size + 1] = static_cast<std::uint8_t>(crc.value);
    return w;
}

auto DataBlock::parse(ByteView wire) -> std::optional<DataBlock>
{
    if (wire.size() != sector_size + 2)
        return std::nullopt;
    DataBlock b;
    std::copy_n(wire.begin(), sector_size, b.payload.begin());
    b.crc = Crc16{static_cast<std::uint16_t>((wire[sector_size] << 8) | wire[sector_size + 1])};
    return b;
}

// ---------------------------------------------------------------------------
// Bus

namespace
{
auto kind_name(FrameKind k) -> char const *
{
    switch (k)
    {
    case FrameKind::cmd:
        return "CMD";
    case FrameKind::rsp:
        return "RSP";
    case FrameKind::dat:
        return "DAT";
    case FrameKind::tok:
        return "TOK";
    }
    return "?";
}

// Flips one bit away from the start/end markers so the frame still parses
// and only the checksum catches it.
void flip_payload_bit(std::span<std::uint8_t> wire)
{
    if (wire.size() > 2)
        wire[1] ^= 0x01;
}

auto take_fault(int &counter) -> bool
{
    if (counter > 0)
    {
        --counter;
        return true;
    }
    return false;
}
} // namespace

auto format_trace(std::uint64_t cycle, Direction dir, FrameKind kind, ByteView wire)
    -> std::string
{
    std::string line = "t=" + std::to_string(cycle) + " DIR=";
    line += (dir == Direction::host_to_card) ? "H→C" : "C→H";
    line += " KIND=";
    line += kind_name(kind);
    line += ' ';
    line += to_hex(wire);
    return line;
}

void SdioBus::emit(Direction dir, FrameKind kind, ByteView wire)
{
    if (tracing_)
    {
        transcript_.push_back(format_trace(clock_ ? clock_() : 0, dir, kind, wire));
    }
    if (timing_)
    {
        timing_(kind, wire.size() * 8);
    }
}

auto SdioBus::command(std::uint8_t index, std::uint32_t argument)
    -> std::optional<ResponseFrame>
{
    auto frame = CommandFrame::make(index, argument);
    std::optional<ResponseFrame> last_bad;
    for (int attempt = 0; attempt <= max_retries; ++attempt)
    {
        if (attempt > 0)
            ++retries_;
        auto wire = frame.serialize();
        if (take_fault(faults_.commands))
            flip_payload_bit(wire);
        emit(Direction::host_to_card, FrameKind::cmd, wire);

        auto received = CommandFrame::parse(wire);
        auto response = received ? card_.issue(*received) : std::nullopt;
        if (take_fault(faults_.silence))
            response.reset();
        if (!response)
            continue;

        auto rsp_wire = response->serialize();
        if (take_fault(faults_.responses))
            flip_payload_bit(rsp_wire);
        emit(Direction::card_to_host, FrameKind::rsp, rsp_wire);

        auto parsed = ResponseFrame::parse(rsp_wire);
        if (parsed && parsed->crc_valid())
            return parsed;
        if (parsed)
            last_bad = parsed;
    }
    return last_bad;
}

auto SdioBus::receive_block() -> std::optional<DataBlock>
{
    auto block = card_.send_block();
    if (!block)
        return std::nullopt;
    auto wire = block->serialize();
    if (take_fault(faults_.read_blocks))
        wire[7] ^= 0x10;
    emit(Direction::card_to_host, FrameKind::dat, wire);
    return DataBlock::parse(wire);
}

auto SdioBus::send_block(DataBlock const &block) -> std::optional<WriteToken>
{
    auto wire = block.serialize();
    if (take_fault(faults_.write_blocks))
        wire[7] ^= 0x10;
    emit(Direction::host_to_card, FrameKind::dat, wire);
    auto token = card_.receive_block(*DataBlock::parse(wire));
    if (token)
    {
        std::array<std::uint8_t, 1> tok{static_cast<std::uint8_t>(*token)};
        emit(Direction::card_to_host, FrameKind::tok, tok);
    }
    return token;
}

auto SdioBus::read_block(std::uint64_t lba) -> std::optional<DataBlock>
{
    auto rsp = command(sd_cmd::read_single, static_cast<std::uint32_t>(lba));
    if (!rsp || !rsp->crc_valid() ||
        (rsp->status & (card_status::out_of_range | card_status::illegal_command)))
        return std::nullopt;
    return receive_block();
}

auto SdioBus::write_block(std::uint64_t lba, DataBlock const &block)
    -> std::optional<WriteToken>
{
    auto rsp = command(sd_cmd::write_single, static_cast<std::uint32_t>(lba));
    if (!rsp || !rsp->crc_valid() ||
        (rsp->status & (card_status::out_of_range | card_status::illegal_command)))
        return std::nullopt;
    return send_block(block);
}

} // namespace tmiu

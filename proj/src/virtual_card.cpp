#include <tmiu/sdio.hpp>

namespace tmiu
{

VirtualCard::VirtualCard(CardIdentity identity, NvmImage backing)
    : identity_(identity), backing_(std::move(backing))
{
}

void VirtualCard::power_cycle() noexcept
{
    state_ = CardState::idle;
    io_suspended_ = false;
    sticky_status_ = 0;
    next_lba_ = 0;
    multi_block_ = false;
}

auto VirtualCard::r1(std::uint8_t index, std::uint32_t extra, CardState reported)
    -> ResponseFrame
{
    auto status = sticky_status_ | extra |
                  (static_cast<std::uint32_t>(reported) << card_status::current_state_shift);
    if (reported == CardState::transfer)
        status |= card_status::ready_for_data;
    sticky_status_ = 0;
    return ResponseFrame::r1(index, status);
}

auto VirtualCard::issue(CommandFrame const &cmd) -> std::optional<ResponseFrame>
{
    if (io_suspended_)
        return std::nullopt;
    if (!cmd.crc_valid())
    {
        sticky_status_ |= card_status::com_crc_error;
        return std::nullopt;
    }

    auto const before = state_;
    auto illegal = [&] { return r1(cmd.index, card_status::illegal_command, before); };
    auto in_transfer = before == CardState::transfer || before == CardState::sending_data ||
                       before == CardState::receive_data;

    switch (cmd.index)
    {
    case sd_cmd::go_idle:
        state_ = CardState::idle;
        sticky_status_ = 0;
        multi_block_ = false;
        return r1(cmd.index, 0, CardState::idle);

    case sd_cmd::all_send_cid:
        // Identification is collapsed: voltage negotiation and RCA
        // publication are implied. Re-sends are allowed for retransmission.
        if (before != CardState::idle && before != CardState::ready &&
            before != CardState::identification)
            return illegal();
        state_ = CardState::identification;
        return ResponseFrame::r2(identity_.cid());

    case sd_cmd::send_csd:
        if (before != CardState::identification && before != CardState::standby)
            return illegal();
        return ResponseFrame::r2(identity_.csd());

    case sd_cmd::select_card:
        if ((cmd.argument >> 16) == rca())
        {
            if (before != CardState::identification && before != CardState::standby &&
                before != CardState::transfer)
                return illegal();
            state_ = CardState::transfer;
            return r1(cmd.index, 0, before);
        }
        if (!in_transfer && before != CardState::standby)
            return illegal();
        state_ = CardState::standby;
        return r1(cmd.index, 0, before);

    case sd_cmd::set_blocklen:
        if (before != CardState::transfer)
            return illegal();
        return r1(cmd.index, cmd.argument == sector_size ? 0 : card_status::block_len_error,
                  before);

    case sd_cmd::read_single:
    case sd_cmd::read_multiple:
    case sd_cmd::write_single:
    case sd_cmd::write_multiple: {
        if (!in_transfer)
            return illegal();
        if (cmd.argument >= backing_.geometry())
        {
            state_ = CardState::transfer;
            return r1(cmd.index, card_status::out_of_range, before);
        }
        auto reading = cmd.index == sd_cmd::read_single || cmd.index == sd_cmd::read_multiple;
        next_lba_ = cmd.argument;
        multi_block_ = cmd.index == sd_cmd::read_multiple || cmd.index == sd_cmd::write_multiple;
        state_ = reading ? CardState::sending_data : CardState::receive_data;
        return r1(cmd.index, 0, before);
    }

    case sd_cmd::stop_transmission:
        if (!in_transfer)
            return illegal();
        state_ = CardState::transfer;
        return r1(cmd.index, 0, before);

    default:
        return illegal();
    }
}

auto VirtualCard::send_block() -> std::optional<DataBlock>
{
    if (io_suspended_ || state_ != CardState::sending_data)
        return std::nullopt;
    if (next_lba_ >= backing_.geometry())
    {
        sticky_status_ |= card_status::out_of_range;
        state_ = CardState::transfer;
        return std::nullopt;
    }
    auto block = DataBlock::make(backing_.sector(next_lba_));
    ++next_lba_;
    if (!multi_block_)
        state_ = CardState::transfer;
    return block;
}

auto VirtualCard::receive_block(DataBlock const &block) -> std::optional<WriteToken>
{
    if (io_suspended_ || state_ != CardState::receive_data)
        return std::nullopt;
    if (next_lba_ >= backing_.geometry())
    {
        sticky_status_ |= card_status::out_of_range;
        state_ = CardState::transfer;
        return WriteToken::write_error;
    }
    if (!block.crc_valid())
    {
        if (!multi_block_)
            state_ = CardState::transfer;
        return WriteToken::crc_error;
    }
    backing_.sector(next_lba_) = block.payload;
    ++next_lba_;
    if (!multi_block_)
        state_ = CardState::transfer;
    return WriteToken::accepted;
}

} // namespace tmiu

#pragma once

#include <tmiu/crc.hpp>
#include <tmiu/identity.hpp>
#include <tmiu/nvm_image.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace tmiu
{

namespace sd_cmd
{
inline constexpr std::uint8_t go_idle = 0;
inline constexpr std::uint8_t all_send_cid = 2;
inline constexpr std::uint8_t select_card = 7;
inline constexpr std::uint8_t send_csd = 9;
inline constexpr std::uint8_t stop_transmission = 12;
inline constexpr std::uint8_t set_blocklen = 16;
inline constexpr std::uint8_t read_single = 17;
inline constexpr std::uint8_t read_multiple = 18;
inline constexpr std::uint8_t write_single = 24;
inline constexpr std::uint8_t write_multiple = 25;
} // namespace sd_cmd

/// R1 card-status bits (SD physical layer, table "card status").
namespace card_status
{
inline constexpr std::uint32_t out_of_range = 1u << 31;
inline constexpr std::uint32_t block_len_error = 1u << 29;
inline constexpr std::uint32_t com_crc_error = 1u << 23;
inline constexpr std::uint32_t illegal_command = 1u << 22;
inline constexpr std::uint32_t ready_for_data = 1u << 8;
inline constexpr int current_state_shift = 9;
} // namespace card_status

enum class CardState : std::uint8_t
{
    idle = 0,
    ready = 1,
    identification = 2,
    standby = 3,
    transfer = 4,
    sending_data = 5,
    receive_data = 6,
};

auto to_string(CardState s) -> std::string_view;

/// 48-bit host-to-card command: 0 | 1 | index:6 | argument:32 | crc7 | 1.
struct CommandFrame
{
    std::uint8_t index = 0;
    std::uint32_t argument = 0;
    Crc7 crc;

    static auto make(std::uint8_t index, std::uint32_t argument) -> CommandFrame;

    auto serialize() const -> std::array<std::uint8_t, 6>;
    /// Keeps the received CRC as-is; nullopt on bad start/direction/end bits.
    static auto parse(ByteView wire) -> std::optional<CommandFrame>;
    auto crc_valid() const -> bool;

    friend auto operator==(CommandFrame const &, CommandFrame const &) -> bool = default;
};

/// Card-to-host response. R1 is 48 bits; R2 is 136 bits carrying a
/// 128-bit register whose own trailing CRC7 protects it.
struct ResponseFrame
{
    enum class Type : std::uint8_t
    {
        r1,
        r2,
    };

    Type type = Type::r1;
    std::uint8_t index = 0;
    std::uint32_t status = 0;
    CardRegister reg{};
    Crc7 crc;

    static auto r1(std::uint8_t index, std::uint32_t status) -> ResponseFrame;
    static auto r2(CardRegister const &reg) -> ResponseFrame;

    auto serialize() const -> Bytes;
    static auto parse(ByteView wire) -> std::optional<ResponseFrame>;
    auto crc_valid() const -> bool;

    friend auto operator==(ResponseFrame const &, ResponseFrame const &) -> bool = default;
};

/// One sector on the DATA lines followed by its CRC16.
struct DataBlock
{
    Sector payload{};
    Crc16 crc;

    static auto make(Sector const &payload) -> DataBlock;

    auto serialize() const -> std::array<std::uint8_t, sector_size + 2>;
    static auto parse(ByteView wire) -> std::optional<DataBlock>;
    auto crc_valid() const -> bool { return crc16(payload) == crc; }

    friend auto operator==(DataBlock const &, DataBlock const &) -> bool = default;
};

enum class WriteToken : std::uint8_t
{
    accepted = 0b010,
    crc_error = 0b101,
    write_error = 0b110,
};

/// SD card model answering the modeled command subset from a backing image.
class VirtualCard
{
public:
    static constexpr std::uint16_t default_rca = 0x0001;

    VirtualCard(CardIdentity identity, NvmImage backing);

    /// nullopt models NoResponse (bad CRC7 or suspended I/O).
    auto issue(CommandFrame const &cmd) -> std::optional<ResponseFrame>;
    /// Next block of a pending read; nullopt if none is pending.
    auto send_block() -> std::optional<DataBlock>;
    /// Block for a pending write; commits only when its CRC16 matches.
    auto receive_block(DataBlock const &block) -> std::optional<WriteToken>;

    /// Irreversible until power_cycle; idempotent.
    void suspend_io() noexcept { io_suspended_ = true; }
    void power_cycle() noexcept;

    auto state() const noexcept -> CardState { return state_; }
    auto io_suspended() const noexcept -> bool { return io_suspended_; }
    auto identity() const noexcept -> CardIdentity const & { return identity_; }
    auto rca() const noexcept -> std::uint16_t { return default_rca; }

    auto backing() const noexcept -> NvmImage const & { return backing_; }
    /// Physical access to the medium, bypassing the protocol.
    auto backing_mut() noexcept -> NvmImage & { return backing_; }

private:
    auto r1(std::uint8_t index, std::uint32_t extra, CardState reported)
        -> ResponseFrame;

    CardIdentity identity_;
    NvmImage backing_;
    CardState state_ = CardState::idle;
    bool io_suspended_ = false;
    std::uint32_t sticky_status_ = 0;
    std::uint64_t next_lba_ = 0;
    bool multi_block_ = false;
};

enum class FrameKind
{
    cmd,
    rsp,
    dat,
    tok,
};

enum class Direction
{
    host_to_card,
    card_to_host,
};

/// Counts of frames to corrupt in transit (one bit flip each).
struct BusFaults
{
    int commands = 0;
    int responses = 0;
    int read_blocks = 0;
    int write_blocks = 0;
    int silence = 0; ///< responses dropped entirely
};

/// Host-controller side of the SDIO link, owning the card exclusively.
/// Untimed: frame sizes are reported through the timing hook.
class SdioBus
{
public:
    static constexpr int max_retries = 3;

    using TimingHook = std::function<void(FrameKind, std::size_t wire_bits)>;
    using Clock = std::function<std::uint64_t()>;

    explicit SdioBus(VirtualCard card) : card_(std::move(card)) {}

    /// Issues a command, retrying up to max_retries on NoResponse or a
    /// response CRC failure. A response that fails its CRC on every attempt
    /// is returned as received; nullopt means the card stayed silent.
    auto command(std::uint8_t index, std::uint32_t argument) -> std::optional<ResponseFrame>;
    auto receive_block() -> std::optional<DataBlock>;
    auto send_block(DataBlock const &block) -> std::optional<WriteToken>;

    /// CMD17 followed by the data block; no CRC judgement on the block.
    auto read_block(std::uint64_t lba) -> std::optional<DataBlock>;
    /// CMD24 followed by the data block; returns the card's CRC token.
    auto write_block(std::uint64_t lba, DataBlock const &block) -> std::optional<WriteToken>;

    auto card() const noexcept -> VirtualCard const & { return card_; }
    auto card() noexcept -> VirtualCard & { return card_; }
    void suspend_io() noexcept { card_.suspend_io(); }

    auto faults() noexcept -> BusFaults & { return faults_; }
    auto retries() const noexcept -> std::uint64_t { return retries_; }

    void set_timing_hook(TimingHook hook) { timing_ = std::move(hook); }
    void set_clock(Clock clock) { clock_ = std::move(clock); }

    void enable_trace(bool on) noexcept { tracing_ = on; }
    auto transcript() const noexcept -> std::vector<std::string> const & { return transcript_; }
    void clear_transcript() { transcript_.clear(); }

private:
    void emit(Direction dir, FrameKind kind, ByteView wire);

    VirtualCard card_;
    BusFaults faults_;
    std::uint64_t retries_ = 0;
    TimingHook timing_;
    Clock clock_;
    bool tracing_ = false;
    std::vector<std::string> transcript_;
};

/// Transcript line: `t=<cycle> DIR=<H→C|C→H> KIND=<CMD|RSP|DAT|TOK> <hex>`.
auto format_trace(std::uint64_t cycle, Direction dir, FrameKind kind, ByteView wire)
    -> std::string;

} // namespace tmiu

#pragma once

// Tracker <-> server wire format. The same 64-byte record codec is used on the
// wire, in the device flash buffer and in the server's at-rest logs.
//
// Data frame:   'R' '1' | ver u8 | imei u64 | count u16 | count x 64 B | crc u16
// Ack:          'A' '1' | accepted u16
// Command:      'C' '1' | id u32 | len u8 | ASCII command text          (server -> device)
// Reply:        'K' '1' | id u32 | status u8 | len u8 | ASCII reply     (device -> server)
//
// All multi-byte integers are big-endian. The frame CRC is CRC-16/CCITT-FALSE
// over version .. last record byte.

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "radfleet/expected.hpp"
#include "radfleet/time.hpp"

namespace radfleet::wire {

inline constexpr std::size_t kRecordSize = 64;
inline constexpr std::size_t kFrameHeaderSize = 13;
inline constexpr std::size_t kFrameTrailerSize = 2;
inline constexpr std::size_t kLoginFrameSize = kFrameHeaderSize + kFrameTrailerSize;
inline constexpr std::size_t kMaxRecordsPerFrame = 255;
inline constexpr std::uint8_t kProtocolVersion = 0x01;
inline constexpr std::uint64_t kMaxImei = 999'999'999'999'999ULL;
inline constexpr std::size_t kSmsMaxLength = 160;

inline constexpr std::uint16_t kDefaultTcpPort = 5027;
inline constexpr std::uint16_t kDefaultUdpPort = 5028;
inline constexpr TimestampMs kRetransmitTimeoutMs = 5000;
inline constexpr int kMaxSendAttempts = 5;

std::uint16_t crc16(std::span<const std::uint8_t> bytes);

enum class EventCode : std::uint8_t {
    Periodic = 0,
    DistanceTrig,
    AngleTrig,
    IgnitionOn,
    IgnitionOff,
    Overspeed,
    Panic,
    Towing,
    GeofenceEnter,
    GeofenceExit,
    HarshAccel,
    HarshBrake,
    HarshCorner,
    JammingDetected,
    IoChange,
    UnauthorizedDriver,
    PowerCutoff,
};
inline constexpr std::uint8_t kEventCodeCount = 17;

std::string_view to_string(EventCode c);
std::optional<EventCode> event_code_from_string(std::string_view name);

/// Alert-class codes carry the priority flag and jump the flush queue.
bool is_alert(EventCode c);

namespace flags {
inline constexpr std::uint8_t kPriority = 0x01;
inline constexpr std::uint8_t kBufferedReplay = 0x02;
// Bits 2 and 3 extend the flag byte so reports can tell GPS dropouts and
// ignition state apart without a side channel.
inline constexpr std::uint8_t kFixValid = 0x04;
inline constexpr std::uint8_t kIgnition = 0x08;
}  // namespace flags

/// Wire-level representation; every field is the exact integer that goes on
/// the wire. Build from physical units with make_record().
struct TelemetryRecord {
    std::uint64_t timestamp_ms = 0;
    std::uint8_t flags = 0;
    std::int32_t lat_e7 = 0;
    std::int32_t lon_e7 = 0;
    std::int16_t altitude_m = 0;
    std::uint16_t heading_ddeg = 0;  // 0..3599
    std::uint16_t speed_dkmh = 0;
    std::uint8_t satellites = 0;
    std::uint8_t hdop_x10 = 0;
    std::uint8_t event_code = 0;
    std::uint8_t digital_in = 0;
    std::uint8_t digital_out = 0;
    std::uint16_t analog1_mv = 0;
    std::uint16_t analog2_mv = 0;
    std::uint16_t fuel_level_dpct = 0;
    std::uint16_t fuel_rate_dlph = 0;
    std::uint32_t odometer_m = 0;
    std::uint16_t battery_mv = 0;
    std::int16_t accel_x_mg = 0;
    std::int16_t accel_y_mg = 0;
    std::int16_t accel_z_mg = 0;
    std::uint16_t geofence_id = 0;
    std::uint32_t seq = 0;

    friend bool operator==(const TelemetryRecord&, const TelemetryRecord&) = default;

    double lat() const { return lat_e7 / 1e7; }
    double lon() const { return lon_e7 / 1e7; }
    double speed_kmh() const { return speed_dkmh / 10.0; }
    double heading_deg() const { return heading_ddeg / 10.0; }
    double fuel_level_pct() const { return fuel_level_dpct / 10.0; }
    double fuel_rate_lph() const { return fuel_rate_dlph / 10.0; }
    double hdop() const { return hdop_x10 / 10.0; }
    TimestampMs time() const { return static_cast<TimestampMs>(timestamp_ms); }
    EventCode event() const { return static_cast<EventCode>(event_code); }
    bool priority() const { return (flags & flags::kPriority) != 0; }
    bool fix_valid() const { return (flags & flags::kFixValid) != 0; }
    bool ignition() const { return (flags & flags::kIgnition) != 0; }
};

/// Physical-unit inputs for make_record().
struct RecordFields {
    TimestampMs timestamp_ms = 0;
    bool priority = false;
    bool buffered_replay = false;
    bool fix_valid = false;
    bool ignition = false;
    double lat = 0.0;
    double lon = 0.0;
    double altitude_m = 0.0;
    double heading_deg = 0.0;
    double speed_kmh = 0.0;
    int satellites = 0;
    double hdop = 0.0;
    EventCode event = EventCode::Periodic;
    std::uint8_t digital_in = 0;
    std::uint8_t digital_out = 0;
    double analog1_mv = 0.0;
    double analog2_mv = 0.0;
    double fuel_level_pct = 0.0;
    double fuel_rate_lph = 0.0;
    double odometer_m = 0.0;
    double battery_mv = 0.0;
    double accel_x_mg = 0.0;
    double accel_y_mg = 0.0;
    double accel_z_mg = 0.0;
    std::uint16_t geofence_id = 0;
    std::uint32_t seq = 0;
};

enum class RecordError { OutOfRange, WrongLength };

/// Quantizes and range-checks. Values that do not fit their wire field are
/// rejected here, never at encode time.
Expected<TelemetryRecord, RecordError> make_record(const RecordFields& f);

using RecordBytes = std::array<std::uint8_t, kRecordSize>;

RecordBytes encode_record(const TelemetryRecord& r);

struct DecodedRecord {
    TelemetryRecord record;
    bool reserved_nonzero = false;  // tolerated, reported as a warning
};
Expected<DecodedRecord, RecordError> decode_record(std::span<const std::uint8_t> bytes);

enum class FrameErrorKind { BadMagic, BadVersion, BadCrc, NeedMoreBytes, TooManyRecords, InvalidImei, BadLength };
std::string_view to_string(FrameErrorKind k);

struct FrameError {
    FrameErrorKind kind{};
    /// NeedMoreBytes: additional bytes required before decoding can progress.
    /// BadCrc: total size of the rejected frame (so a stream can skip it).
    std::size_t bytes = 0;
};

struct Frame {
    std::uint64_t imei = 0;
    std::vector<TelemetryRecord> records;

    bool is_login() const { return records.empty(); }
    friend bool operator==(const Frame&, const Frame&) = default;
};

Expected<std::vector<std::uint8_t>, FrameError> encode_frame(std::uint64_t imei,
                                                             std::span<const TelemetryRecord> records);

struct DecodedFrame {
    Frame frame;
    std::size_t consumed = 0;
    bool reserved_nonzero = false;
};

/// Decodes the frame at the start of `bytes`. Reads at most the declared
/// header + count x 64 + trailer bytes.
Expected<DecodedFrame, FrameError> decode_frame(std::span<const std::uint8_t> bytes);

struct Ack {
    std::uint16_t accepted_count = 0;
    friend bool operator==(const Ack&, const Ack&) = default;
};
inline constexpr std::size_t kAckSize = 4;

std::array<std::uint8_t, kAckSize> encode_ack(const Ack& ack);

struct CommandFrame {
    std::uint32_t command_id = 0;
    std::string text;
    friend bool operator==(const CommandFrame&, const CommandFrame&) = default;
};

struct CommandReplyFrame {
    std::uint32_t command_id = 0;
    std::uint8_t status = 0;  // 0 = ok
    std::string text;
    friend bool operator==(const CommandReplyFrame&, const CommandReplyFrame&) = default;
};

std::vector<std::uint8_t> encode_command(const CommandFrame& c);
std::vector<std::uint8_t> encode_command_reply(const CommandReplyFrame& r);

using Message = std::variant<Frame, Ack, CommandFrame, CommandReplyFrame>;

struct DecodedMessage {
    Message message;
    std::size_t consumed = 0;
};

/// Dispatches on the two magic bytes.
Expected<DecodedMessage, FrameError> decode_message(std::span<const std::uint8_t> bytes);

/// Reassembles messages from an arbitrarily chunked byte stream (TCP).
class StreamDecoder {
public:
    void feed(std::span<const std::uint8_t> bytes);

    /// Next complete message, or nullopt when more bytes are needed. Corrupt
    /// input is skipped and counted rather than returned.
    std::optional<Message> next();

    std::size_t buffered() const { return buf_.size(); }
    std::size_t crc_failures() const { return crc_failures_; }
    std::size_t resync_bytes() const { return resync_bytes_; }

private:
    std::vector<std::uint8_t> buf_;
    std::size_t crc_failures_ = 0;
    std::size_t resync_bytes_ = 0;
};

// ---- SMS text channel -------------------------------------------------------

struct SmsMessage {
    std::string peer;  // phone number of the other side
    std::string text;
    friend bool operator==(const SmsMessage&, const SmsMessage&) = default;
};

/// "POS,<imei>,<iso8601>,<lat 6dp>,<lon 6dp>,<speed 1dp>,<heading int>,<event>"
std::string format_position_sms(std::uint64_t imei, const TelemetryRecord& r);

struct PositionSms {
    std::uint64_t imei = 0;
    TimestampMs timestamp_ms = 0;
    double lat = 0.0;
    double lon = 0.0;
    double speed_kmh = 0.0;
    int heading_deg = 0;
    EventCode event = EventCode::Periodic;
};

enum class SmsError { NotPosition, BadField, TooLong, NonAscii };
Expected<PositionSms, SmsError> parse_position_sms(std::string_view text);

struct GetGps {
    friend bool operator==(const GetGps&, const GetGps&) = default;
};
struct SetParam {
    std::string key;
    std::string value;
    friend bool operator==(const SetParam&, const SetParam&) = default;
};
struct SetOutput {
    int bit = 0;  // 0..3; bit 0 drives the immobilizer
    bool on = false;
    friend bool operator==(const SetOutput&, const SetOutput&) = default;
};
using Command = std::variant<GetGps, SetParam, SetOutput>;

enum class CommandError { Empty, UnknownVerb, BadSyntax, TooLong, NonAscii };
std::string_view to_string(CommandError e);

/// "GETGPS" | "SETPARAM <key>=<value>" | "OUT <0-3> <0|1>"
Expected<Command, CommandError> parse_command(std::string_view text);
std::string format_command(const Command& c);

struct SmsCommand {
    std::string sender;
    Command command;
};
Expected<SmsCommand, CommandError> parse_sms_command(std::string_view text, std::string_view sender);

}  // namespace radfleet::wire

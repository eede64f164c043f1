#include "radfleet/wire.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>

namespace radfleet::wire {

namespace {

constexpr std::array<std::uint16_t, 256> make_crc_table() {
    std::array<std::uint16_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint16_t crc = static_cast<std::uint16_t>(i << 8);
        for (int bit = 0; bit < 8; ++bit) {
            crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021) : static_cast<std::uint16_t>(crc << 1);
        }
        table[i] = crc;
    }
    return table;
}

constexpr auto kCrcTable = make_crc_table();

class Writer {
public:
    explicit Writer(std::uint8_t* out) : p_(out) {}

    void u8(std::uint8_t v) { *p_++ = v; }
    void u16(std::uint16_t v) {
        u8(static_cast<std::uint8_t>(v >> 8));
        u8(static_cast<std::uint8_t>(v));
    }
    void u32(std::uint32_t v) {
        u16(static_cast<std::uint16_t>(v >> 16));
        u16(static_cast<std::uint16_t>(v));
    }
    void u64(std::uint64_t v) {
        u32(static_cast<std::uint32_t>(v >> 32));
        u32(static_cast<std::uint32_t>(v));
    }
    void i16(std::int16_t v) { u16(static_cast<std::uint16_t>(v)); }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void zeros(std::size_t n) {
        std::fill_n(p_, n, std::uint8_t{0});
        p_ += n;
    }

private:
    std::uint8_t* p_;
};

class Reader {
public:
    explicit Reader(const std::uint8_t* in) : p_(in) {}

    std::uint8_t u8() { return *p_++; }
    std::uint16_t u16() {
        const std::uint16_t hi = u8();
        return static_cast<std::uint16_t>(hi << 8 | u8());
    }
    std::uint32_t u32() {
        const std::uint32_t hi = u16();
        return hi << 16 | u16();
    }
    std::uint64_t u64() {
        const std::uint64_t hi = u32();
        return hi << 32 | u32();
    }
    std::int16_t i16() { return static_cast<std::int16_t>(u16()); }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    const std::uint8_t* pos() const { return p_; }
    void skip(std::size_t n) { p_ += n; }

private:
    const std::uint8_t* p_;
};

template <class Int>
bool quantize(double value, double scale, Int& out) {
    if (!std::isfinite(value)) return false;
    const double q = std::round(value * scale);
    if (q < static_cast<double>(std::numeric_limits<Int>::min()) ||
        q > static_cast<double>(std::numeric_limits<Int>::max())) {
        return false;
    }
    out = static_cast<Int>(q);
    return true;
}

bool is_ascii(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return c >= 0x20 && c <= 0x7E; });
}

constexpr std::string_view kEventNames[kEventCodeCount] = {
    "Periodic",   "DistanceTrig", "AngleTrig",   "IgnitionOn",      "IgnitionOff", "Overspeed",
    "Panic",      "Towing",       "GeofenceEnter", "GeofenceExit",  "HarshAccel",  "HarshBrake",
    "HarshCorner", "JammingDetected", "IoChange", "UnauthorizedDriver", "PowerCutoff",
};

}  // namespace

std::uint16_t crc16(std::span<const std::uint8_t> bytes) {
    std::uint16_t crc = 0xFFFF;
    for (std::uint8_t b : bytes) crc = static_cast<std::uint16_t>((crc << 8) ^ kCrcTable[((crc >> 8) ^ b) & 0xFF]);
    return crc;
}

std::string_view to_string(EventCode c) {
    const auto i = static_cast<std::size_t>(c);
    return i < kEventCodeCount ? kEventNames[i] : std::string_view("Unknown");
}

std::optional<EventCode> event_code_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kEventCodeCount; ++i) {
        if (kEventNames[i] == name) return static_cast<EventCode>(i);
    }
    return std::nullopt;
}

bool is_alert(EventCode c) {
    switch (c) {
        case EventCode::Panic:
        case EventCode::Overspeed:
        case EventCode::Towing:
        case EventCode::JammingDetected:
        case EventCode::GeofenceEnter:
        case EventCode::GeofenceExit:
        case EventCode::UnauthorizedDriver:
            return true;
        default:
            return false;
    }
}

Expected<TelemetryRecord, RecordError> make_record(const RecordFields& f) {
    TelemetryRecord r;
    if (f.timestamp_ms < 0) return fail(RecordError::OutOfRange);
    if (!(f.lat >= -90.0 && f.lat <= 90.0) || !(f.lon >= -180.0 && f.lon <= 180.0)) {
        return fail(RecordError::OutOfRange);
    }
    if (!(f.heading_deg >= 0.0 && f.heading_deg < 360.0)) return fail(RecordError::OutOfRange);
    if (f.satellites < 0 || f.satellites > 255 || f.digital_in > 0x0F || f.digital_out > 0x0F) {
        return fail(RecordError::OutOfRange);
    }
    if (!(f.fuel_level_pct >= 0.0 && f.fuel_level_pct <= 100.0)) return fail(RecordError::OutOfRange);
    if (static_cast<std::uint8_t>(f.event) >= kEventCodeCount) return fail(RecordError::OutOfRange);

    r.timestamp_ms = static_cast<std::uint64_t>(f.timestamp_ms);
    r.flags = static_cast<std::uint8_t>((f.priority ? flags::kPriority : 0) |
                                        (f.buffered_replay ? flags::kBufferedReplay : 0) |
                                        (f.fix_valid ? flags::kFixValid : 0) | (f.ignition ? flags::kIgnition : 0));
    bool ok = quantize(f.lat, 1e7, r.lat_e7) && quantize(f.lon, 1e7, r.lon_e7) &&
              quantize(f.altitude_m, 1.0, r.altitude_m) && quantize(f.heading_deg, 10.0, r.heading_ddeg) &&
              quantize(f.speed_kmh, 10.0, r.speed_dkmh) && quantize(f.hdop, 10.0, r.hdop_x10) &&
              quantize(f.analog1_mv, 1.0, r.analog1_mv) && quantize(f.analog2_mv, 1.0, r.analog2_mv) &&
              quantize(f.fuel_level_pct, 10.0, r.fuel_level_dpct) && quantize(f.fuel_rate_lph, 10.0, r.fuel_rate_dlph) &&
              quantize(f.odometer_m, 1.0, r.odometer_m) && quantize(f.battery_mv, 1.0, r.battery_mv) &&
              quantize(f.accel_x_mg, 1.0, r.accel_x_mg) && quantize(f.accel_y_mg, 1.0, r.accel_y_mg) &&
              quantize(f.accel_z_mg, 1.0, r.accel_z_mg);
    if (!ok) return fail(RecordError::OutOfRange);
    // 359.96 rounds to 3600 decidegrees, which wraps to north.
    if (r.heading_ddeg >= 3600) r.heading_ddeg = 0;
    r.satellites = static_cast<std::uint8_t>(f.satellites);
    r.event_code = static_cast<std::uint8_t>(f.event);
    r.digital_in = f.digital_in;
    r.digital_out = f.digital_out;
    r.geofence_id = f.geofence_id;
    r.seq = f.seq;
    return r;
}

RecordBytes encode_record(const TelemetryRecord& r) {
    RecordBytes out{};
    Writer w(out.data());
    w.u64(r.timestamp_ms);
    w.u8(r.flags);
    w.i32(r.lat_e7);
    w.i32(r.lon_e7);
    w.i16(r.altitude_m);
    w.u16(r.heading_ddeg);
    w.u16(r.speed_dkmh);
    w.u8(r.satellites);
    w.u8(r.hdop_x10);
    w.u8(r.event_code);
    w.u8(r.digital_in);
    w.u8(r.digital_out);
    w.u16(r.analog1_mv);
    w.u16(r.analog2_mv);
    w.u16(r.fuel_level_dpct);
    w.u16(r.fuel_rate_dlph);
    w.u32(r.odometer_m);
    w.u16(r.battery_mv);
    w.i16(r.accel_x_mg);
    w.i16(r.accel_y_mg);
    w.i16(r.accel_z_mg);
    w.u16(r.geofence_id);
    w.u32(r.seq);
    w.zeros(10);
    return out;
}

Expected<DecodedRecord, RecordError> decode_record(std::span<const std::uint8_t> bytes) {
    if (bytes.size() != kRecordSize) return fail(RecordError::WrongLength);
    DecodedRecord d;
    TelemetryRecord& r = d.record;
    Reader rd(bytes.data());
    r.timestamp_ms = rd.u64();
    r.flags = rd.u8();
    r.lat_e7 = rd.i32();
    r.lon_e7 = rd.i32();
    r.altitude_m = rd.i16();
    r.heading_ddeg = rd.u16();
    r.speed_dkmh = rd.u16();
    r.satellites = rd.u8();
    r.hdop_x10 = rd.u8();
    r.event_code = rd.u8();
    r.digital_in = rd.u8();
    r.digital_out = rd.u8();
    r.analog1_mv = rd.u16();
    r.analog2_mv = rd.u16();
    r.fuel_level_dpct = rd.u16();
    r.fuel_rate_dlph = rd.u16();
    r.odometer_m = rd.u32();
    r.battery_mv = rd.u16();
    r.accel_x_mg = rd.i16();
    r.accel_y_mg = rd.i16();
    r.accel_z_mg = rd.i16();
    r.geofence_id = rd.u16();
    r.seq = rd.u32();
    d.reserved_nonzero = std::any_of(rd.pos(), bytes.data() + kRecordSize, [](std::uint8_t b) { return b != 0; });
    return d;
}

std::string_view to_string(FrameErrorKind k) {
    switch (k) {
        case FrameErrorKind::BadMagic: return "BadMagic";
        case FrameErrorKind::BadVersion: return "BadVersion";
        case FrameErrorKind::BadCrc: return "BadCrc";
        case FrameErrorKind::NeedMoreBytes: return "NeedMoreBytes";
        case FrameErrorKind::TooManyRecords: return "TooManyRecords";
        case FrameErrorKind::InvalidImei: return "InvalidImei";
        case FrameErrorKind::BadLength: return "BadLength";
    }
    return "?";
}

Expected<std::vector<std::uint8_t>, FrameError> encode_frame(std::uint64_t imei,
                                                             std::span<const TelemetryRecord> records) {
    if (records.size() > kMaxRecordsPerFrame) return fail(FrameError{FrameErrorKind::TooManyRecords});
    if (imei > kMaxImei) return fail(FrameError{FrameErrorKind::InvalidImei});
    std::vector<std::uint8_t> out(kFrameHeaderSize + records.size() * kRecordSize + kFrameTrailerSize);
    Writer w(out.data());
    w.u8('R');
    w.u8('1');
    w.u8(kProtocolVersion);
    w.u64(imei);
    w.u16(static_cast<std::uint16_t>(records.size()));
    std::size_t off = kFrameHeaderSize;
    for (const auto& r : records) {
        const auto bytes = encode_record(r);
        std::copy(bytes.begin(), bytes.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
        off += kRecordSize;
    }
    const std::uint16_t crc = crc16(std::span(out).subspan(2, off - 2));
    Writer(out.data() + off).u16(crc);
    return out;
}

Expected<DecodedFrame, FrameError> decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2) {
        if (!bytes.empty() && bytes[0] != 'R') return fail(FrameError{FrameErrorKind::BadMagic});
        return fail(FrameError{FrameErrorKind::NeedMoreBytes, kFrameHeaderSize - bytes.size()});
    }
    if (bytes[0] != 'R' || bytes[1] != '1') return fail(FrameError{FrameErrorKind::BadMagic});
    if (bytes.size() >= 3 && bytes[2] != kProtocolVersion) return fail(FrameError{FrameErrorKind::BadVersion});
    if (bytes.size() < kFrameHeaderSize) {
        return fail(FrameError{FrameErrorKind::NeedMoreBytes, kFrameHeaderSize - bytes.size()});
    }
    Reader rd(bytes.data() + 3);
    const std::uint64_t imei = rd.u64();
    const std::uint16_t count = rd.u16();
    const std::size_t total = kFrameHeaderSize + std::size_t{count} * kRecordSize + kFrameTrailerSize;
    if (bytes.size() < total) return fail(FrameError{FrameErrorKind::NeedMoreBytes, total - bytes.size()});

    const std::size_t crc_off = total - kFrameTrailerSize;
    const std::uint16_t stored = Reader(bytes.data() + crc_off).u16();
    if (crc16(bytes.subspan(2, crc_off - 2)) != stored) return fail(FrameError{FrameErrorKind::BadCrc, total});

    DecodedFrame d;
    d.frame.imei = imei;
    d.consumed = total;
    d.frame.records.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto rec = decode_record(bytes.subspan(kFrameHeaderSize + i * kRecordSize, kRecordSize));
        d.reserved_nonzero = d.reserved_nonzero || rec->reserved_nonzero;
        d.frame.records.push_back(rec->record);
    }
    return d;
}

std::array<std::uint8_t, kAckSize> encode_ack(const Ack& ack) {
    std::array<std::uint8_t, kAckSize> out{};
    Writer w(out.data());
    w.u8('A');
    w.u8('1');
    w.u16(ack.accepted_count);
    return out;
}

std::vector<std::uint8_t> encode_command(const CommandFrame& c) {
    const std::size_t len = std::min<std::size_t>(c.text.size(), 255);
    std::vector<std::uint8_t> out(7 + len);
    Writer w(out.data());
    w.u8('C');
    w.u8('1');
    w.u32(c.command_id);
    w.u8(static_cast<std::uint8_t>(len));
    std::copy_n(c.text.begin(), len, out.begin() + 7);
    return out;
}

std::vector<std::uint8_t> encode_command_reply(const CommandReplyFrame& r) {
    const std::size_t len = std::min<std::size_t>(r.text.size(), 255);
    std::vector<std::uint8_t> out(8 + len);
    Writer w(out.data());
    w.u8('K');
    w.u8('1');
    w.u32(r.command_id);
    w.u8(r.status);
    w.u8(static_cast<std::uint8_t>(len));
    std::copy_n(r.text.begin(), len, out.begin() + 8);
    return out;
}

Expected<DecodedMessage, FrameError> decode_message(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) return fail(FrameError{FrameErrorKind::NeedMoreBytes, 2});
    const std::uint8_t m0 = bytes[0];
    if (m0 != 'R' && m0 != 'A' && m0 != 'C' && m0 != 'K') return fail(FrameError{FrameErrorKind::BadMagic});
    if (bytes.size() < 2) return fail(FrameError{FrameErrorKind::NeedMoreBytes, 1});
    if (bytes[1] != '1') return fail(FrameError{FrameErrorKind::BadMagic});

    if (m0 == 'R') {
        auto f = decode_frame(bytes);
        if (!f) return fail(f.error());
        return DecodedMessage{std::move(f->frame), f->consumed};
    }
    if (m0 == 'A') {
        if (bytes.size() < kAckSize) return fail(FrameError{FrameErrorKind::NeedMoreBytes, kAckSize - bytes.size()});
        return DecodedMessage{Ack{Reader(bytes.data() + 2).u16()}, kAckSize};
    }
    const std::size_t header = m0 == 'C' ? 7 : 8;
    if (bytes.size() < header) return fail(FrameError{FrameErrorKind::NeedMoreBytes, header - bytes.size()});
    Reader rd(bytes.data() + 2);
    const std::uint32_t id = rd.u32();
    const std::uint8_t status = m0 == 'K' ? rd.u8() : 0;
    const std::size_t len = rd.u8();
    if (bytes.size() < header + len) {
        return fail(FrameError{FrameErrorKind::NeedMoreBytes, header + len - bytes.size()});
    }
    std::string text(reinterpret_cast<const char*>(bytes.data() + header), len);
    if (m0 == 'C') return DecodedMessage{CommandFrame{id, std::move(text)}, header + len};
    return DecodedMessage{CommandReplyFrame{id, status, std::move(text)}, header + len};
}

void StreamDecoder::feed(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

std::optional<Message> StreamDecoder::next() {
    while (!buf_.empty()) {
        auto m = decode_message(buf_);
        if (m) {
            buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(m->consumed));
            return std::move(m->message);
        }
        const FrameError e = m.error();
        if (e.kind == FrameErrorKind::NeedMoreBytes) return std::nullopt;
        if (e.kind == FrameErrorKind::BadCrc) {
            ++crc_failures_;
            buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(e.bytes));
            continue;
        }
        // Unknown magic or version: drop one byte and hunt for the next header.
        ++resync_bytes_;
        buf_.erase(buf_.begin());
    }
    return std::nullopt;
}

// ---- SMS --------------------------------------------------------------------

std::string format_position_sms(std::uint64_t imei, const TelemetryRecord& r) {
    char buf[kSmsMaxLength + 1];
    const std::string ts = format_iso8601(r.time());
    std::snprintf(buf, sizeof buf, "POS,%015llu,%s,%.6f,%.6f,%.1f,%d,%.*s", static_cast<unsigned long long>(imei),
                  ts.c_str(), r.lat(), r.lon(), r.speed_kmh(), static_cast<int>(std::lround(r.heading_deg())) % 360,
                  static_cast<int>(to_string(r.event()).size()), to_string(r.event()).data());
    return buf;
}

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    while (true) {
        const std::size_t p = s.find(sep);
        out.push_back(s.substr(0, p));
        if (p == std::string_view::npos) break;
        s.remove_prefix(p + 1);
    }
    return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

}  // namespace

Expected<PositionSms, SmsError> parse_position_sms(std::string_view text) {
    if (text.size() > kSmsMaxLength) return fail(SmsError::TooLong);
    if (!is_ascii(text)) return fail(SmsError::NonAscii);
    const auto parts = split(text, ',');
    if (parts.size() != 8 || parts[0] != "POS") return fail(SmsError::NotPosition);
    PositionSms p;
    const auto ts = parse_iso8601(parts[2]);
    const auto ev = event_code_from_string(parts[7]);
    if (!parse_number(parts[1], p.imei) || p.imei > kMaxImei || !ts || !parse_number(parts[3], p.lat) ||
        !parse_number(parts[4], p.lon) || !parse_number(parts[5], p.speed_kmh) ||
        !parse_number(parts[6], p.heading_deg) || !ev) {
        return fail(SmsError::BadField);
    }
    p.timestamp_ms = *ts;
    p.event = *ev;
    return p;
}

std::string_view to_string(CommandError e) {
    switch (e) {
        case CommandError::Empty: return "Empty";
        case CommandError::UnknownVerb: return "UnknownVerb";
        case CommandError::BadSyntax: return "BadSyntax";
        case CommandError::TooLong: return "TooLong";
        case CommandError::NonAscii: return "NonAscii";
    }
    return "?";
}

Expected<Command, CommandError> parse_command(std::string_view text) {
    if (text.size() > kSmsMaxLength) return fail(CommandError::TooLong);
    if (!is_ascii(text)) return fail(CommandError::NonAscii);
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
    if (text.empty()) return fail(CommandError::Empty);

    std::vector<std::string_view> words;
    for (auto w : split(text, ' ')) {
        if (!w.empty()) words.push_back(w);
    }
    const std::string_view verb = words[0];
    if (verb == "GETGPS") {
        if (words.size() != 1) return fail(CommandError::BadSyntax);
        return Command{GetGps{}};
    }
    if (verb == "SETPARAM") {
        if (words.size() != 2) return fail(CommandError::BadSyntax);
        const std::size_t eq = words[1].find('=');
        if (eq == std::string_view::npos || eq == 0 || eq + 1 == words[1].size()) return fail(CommandError::BadSyntax);
        return Command{SetParam{std::string(words[1].substr(0, eq)), std::string(words[1].substr(eq + 1))}};
    }
    if (verb == "OUT") {
        if (words.size() != 3 || words[1].size() != 1 || words[2].size() != 1) return fail(CommandError::BadSyntax);
        const char n = words[1][0];
        const char v = words[2][0];
        if (n < '0' || n > '3' || (v != '0' && v != '1')) return fail(CommandError::BadSyntax);
        return Command{SetOutput{n - '0', v == '1'}};
    }
    return fail(CommandError::UnknownVerb);
}

std::string format_command(const Command& c) {
    if (std::holds_alternative<GetGps>(c)) return "GETGPS";
    if (const auto* p = std::get_if<SetParam>(&c)) return "SETPARAM " + p->key + "=" + p->value;
    const auto& o = std::get<SetOutput>(c);
    return "OUT " + std::to_string(o.bit) + " " + (o.on ? "1" : "0");
}

Expected<SmsCommand, CommandError> parse_sms_command(std::string_view text, std::string_view sender) {
    auto cmd = parse_command(text);
    if (!cmd) return fail(cmd.error());
    return SmsCommand{std::string(sender), std::move(*cmd)};
}

}  // namespace radfleet::wire

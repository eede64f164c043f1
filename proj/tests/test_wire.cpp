#include <gtest/gtest.h>

#include <random>

#include "radfleet/wire.hpp"

using namespace radfleet;
using namespace radfleet::wire;

namespace {

// Bit-at-a-time CRC-16/CCITT-FALSE, independent of the table-driven version.
std::uint16_t crc_bitwise(std::span<const std::uint8_t> data) {
    std::uint32_t crc = 0xFFFF;
    for (std::uint8_t byte : data) {
        for (int i = 7; i >= 0; --i) {
            const bool bit = ((byte >> i) & 1) != ((crc >> 15) & 1);
            crc = (crc << 1) & 0xFFFF;
            if (bit) crc ^= 0x1021;
        }
    }
    return static_cast<std::uint16_t>(crc);
}

std::vector<std::uint8_t> bytes_of(std::string_view s) { return {s.begin(), s.end()}; }

TelemetryRecord random_record(std::mt19937_64& rng) {
    auto u = [&](std::uint64_t mod) { return rng() % mod; };
    TelemetryRecord r;
    r.timestamp_ms = rng();
    r.flags = static_cast<std::uint8_t>(u(16));
    r.lat_e7 = static_cast<std::int32_t>(static_cast<std::int64_t>(u(1'800'000'001)) - 900'000'000);
    r.lon_e7 = static_cast<std::int32_t>(static_cast<std::int64_t>(u(3'600'000'001)) - 1'800'000'000);
    r.altitude_m = static_cast<std::int16_t>(u(65536));
    r.heading_ddeg = static_cast<std::uint16_t>(u(3600));
    r.speed_dkmh = static_cast<std::uint16_t>(u(65536));
    r.satellites = static_cast<std::uint8_t>(u(256));
    r.hdop_x10 = static_cast<std::uint8_t>(u(256));
    r.event_code = static_cast<std::uint8_t>(u(kEventCodeCount));
    r.digital_in = static_cast<std::uint8_t>(u(16));
    r.digital_out = static_cast<std::uint8_t>(u(16));
    r.analog1_mv = static_cast<std::uint16_t>(u(32001));
    r.analog2_mv = static_cast<std::uint16_t>(u(32001));
    r.fuel_level_dpct = static_cast<std::uint16_t>(u(1001));
    r.fuel_rate_dlph = static_cast<std::uint16_t>(u(65536));
    r.odometer_m = static_cast<std::uint32_t>(rng());
    r.battery_mv = static_cast<std::uint16_t>(u(65536));
    r.accel_x_mg = static_cast<std::int16_t>(u(65536));
    r.accel_y_mg = static_cast<std::int16_t>(u(65536));
    r.accel_z_mg = static_cast<std::int16_t>(u(65536));
    r.geofence_id = static_cast<std::uint16_t>(u(65536));
    r.seq = static_cast<std::uint32_t>(rng());
    return r;
}

std::vector<TelemetryRecord> three_records() {
    std::mt19937_64 rng(42);
    return {random_record(rng), random_record(rng), random_record(rng)};
}

}  // namespace

TEST(Crc16, CheckValues) {
    EXPECT_EQ(crc16({}), 0xFFFF);
    const auto digits = bytes_of("123456789");
    EXPECT_EQ(crc_bitwise(digits), 0x29B1);
    EXPECT_EQ(crc16(digits), 0x29B1);
    EXPECT_EQ(crc16(digits), crc16(digits));
}

TEST(Crc16, TableMatchesBitwise) {
    std::mt19937 rng(1);
    for (int i = 0; i < 2000; ++i) {
        std::vector<std::uint8_t> v(rng() % 300);
        for (auto& b : v) b = static_cast<std::uint8_t>(rng());
        ASSERT_EQ(crc16(v), crc_bitwise(v));
    }
}

TEST(Record, ZeroRecordIsZeroBytes) {
    const TelemetryRecord zero{};
    const auto bytes = encode_record(zero);
    EXPECT_EQ(bytes.size(), 64u);
    for (auto b : bytes) EXPECT_EQ(b, 0);
    const auto back = decode_record(bytes);
    ASSERT_TRUE(back);
    EXPECT_EQ(back->record, zero);
    EXPECT_FALSE(back->reserved_nonzero);
}

TEST(Record, FixedPointLatitude) {
    RecordFields f;
    f.lat = 35.1234567;
    const auto r = make_record(f);
    ASSERT_TRUE(r);
    EXPECT_EQ(r->lat_e7, 351234567);
    const auto bytes = encode_record(*r);
    // lat occupies bytes 9..12, big-endian
    const std::uint32_t v = 351234567u;
    EXPECT_EQ(bytes[9], v >> 24);
    EXPECT_EQ(bytes[10], (v >> 16) & 0xFF);
    EXPECT_EQ(bytes[11], (v >> 8) & 0xFF);
    EXPECT_EQ(bytes[12], v & 0xFF);
    const auto back = decode_record(bytes);
    EXPECT_EQ(back->record.lat_e7, 351234567);
    EXPECT_DOUBLE_EQ(back->record.lat(), 351234567 / 1e7);
}

TEST(Record, LayoutOffsets) {
    TelemetryRecord r;
    r.timestamp_ms = 0x0102030405060708ULL;
    r.seq = 0xA1B2C3D4;
    r.geofence_id = 0xBEEF;
    const auto b = encode_record(r);
    EXPECT_EQ(b[0], 0x01);
    EXPECT_EQ(b[7], 0x08);
    EXPECT_EQ(b[48], 0xBE);
    EXPECT_EQ(b[49], 0xEF);
    EXPECT_EQ(b[50], 0xA1);
    EXPECT_EQ(b[53], 0xD4);
    for (int i = 54; i < 64; ++i) EXPECT_EQ(b[i], 0);
}

TEST(Record, RandomRoundTrip) {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 10000; ++i) {
        const auto r = random_record(rng);
        const auto back = decode_record(encode_record(r));
        ASSERT_TRUE(back);
        ASSERT_EQ(back->record, r);
    }
}

TEST(Record, BuildRejectsOutOfRange) {
    RecordFields f;
    f.lat = 90.5;
    EXPECT_EQ(make_record(f).error(), RecordError::OutOfRange);
    f = {};
    f.heading_deg = 360.0;
    EXPECT_FALSE(make_record(f));
    f = {};
    f.speed_kmh = 7000;
    EXPECT_FALSE(make_record(f));
    f = {};
    f.digital_in = 0x10;
    EXPECT_FALSE(make_record(f));
    f = {};
    f.fuel_level_pct = 101;
    EXPECT_FALSE(make_record(f));
    f = {};
    f.heading_deg = 359.97;
    EXPECT_EQ(make_record(f)->heading_ddeg, 0);
}

TEST(Record, DecodeErrors) {
    std::vector<std::uint8_t> short_buf(63);
    EXPECT_EQ(decode_record(short_buf).error(), RecordError::WrongLength);
    auto bytes = encode_record(TelemetryRecord{});
    bytes[60] = 0x5A;
    const auto d = decode_record(bytes);
    ASSERT_TRUE(d);
    EXPECT_TRUE(d->reserved_nonzero);
    EXPECT_EQ(d->record, TelemetryRecord{});
}

TEST(Frame, LoginFrameGolden) {
    const std::uint64_t imei = 356938035643809ULL;
    const auto f = encode_frame(imei, {});
    ASSERT_TRUE(f);
    ASSERT_EQ(f->size(), 15u);  // 2 + 1 + 8 + 2 + 2
    std::vector<std::uint8_t> want{'R', '1', 0x01};
    for (int s = 56; s >= 0; s -= 8) want.push_back(static_cast<std::uint8_t>(imei >> s));
    want.push_back(0);
    want.push_back(0);
    const std::uint16_t crc = crc_bitwise(std::span(want).subspan(2));
    want.push_back(static_cast<std::uint8_t>(crc >> 8));
    want.push_back(static_cast<std::uint8_t>(crc));
    EXPECT_EQ(*f, want);

    const auto d = decode_frame(*f);
    ASSERT_TRUE(d);
    EXPECT_TRUE(d->frame.is_login());
    EXPECT_EQ(d->frame.imei, imei);
    EXPECT_EQ(d->consumed, 15u);
}

TEST(Frame, RoundTripAndSize) {
    const auto recs = three_records();
    const auto f = encode_frame(123456789012345ULL, recs);
    ASSERT_TRUE(f);
    EXPECT_EQ(f->size(), 13u + 3 * 64 + 2);
    const auto d = decode_frame(*f);
    ASSERT_TRUE(d);
    EXPECT_EQ(d->frame.records, recs);
}

TEST(Frame, EncodeLimits) {
    std::vector<TelemetryRecord> many(256);
    EXPECT_EQ(encode_frame(1, many).error().kind, FrameErrorKind::TooManyRecords);
    many.pop_back();
    EXPECT_TRUE(encode_frame(1, many));
    EXPECT_EQ(encode_frame(kMaxImei + 1, {}).error().kind, FrameErrorKind::InvalidImei);
}

TEST(Frame, ExhaustiveSingleBitCorruption) {
    const auto golden = *encode_frame(356938035643809ULL, three_records());
    int bad_crc = 0;
    for (std::size_t byte = 0; byte < golden.size(); ++byte) {
        for (int bit = 0; bit < 8; ++bit) {
            auto corrupt = golden;
            corrupt[byte] ^= static_cast<std::uint8_t>(1u << bit);
            const auto d = decode_frame(corrupt);
            ASSERT_FALSE(d) << "byte " << byte << " bit " << bit;
            const auto kind = d.error().kind;
            if (byte < 2) {
                EXPECT_EQ(kind, FrameErrorKind::BadMagic);
            } else if (byte == 2) {
                EXPECT_EQ(kind, FrameErrorKind::BadVersion);
            } else if (byte == 11 || byte == 12) {
                // record count: longer frames wait for bytes, shorter ones fail the CRC
                EXPECT_TRUE(kind == FrameErrorKind::NeedMoreBytes || kind == FrameErrorKind::BadCrc);
            } else {
                EXPECT_EQ(kind, FrameErrorKind::BadCrc);
                ++bad_crc;
            }
        }
    }
    EXPECT_EQ(bad_crc, static_cast<int>((golden.size() - 5) * 8));
}

TEST(Frame, TruncationReportsExactShortfall) {
    const auto golden = *encode_frame(7, three_records());
    for (std::size_t cut = 0; cut < golden.size(); ++cut) {
        const auto d = decode_frame(std::span(golden).first(cut));
        ASSERT_FALSE(d);
        ASSERT_EQ(d.error().kind, FrameErrorKind::NeedMoreBytes) << cut;
        if (cut >= kFrameHeaderSize) {
            EXPECT_EQ(d.error().bytes, golden.size() - cut);
        } else {
            EXPECT_EQ(d.error().bytes, kFrameHeaderSize - cut);
        }
    }
}

TEST(Frame, DoesNotReadPastDeclaredLength) {
    auto buf = *encode_frame(7, three_records());
    const std::size_t n = buf.size();
    buf.insert(buf.end(), {0xDE, 0xAD, 0xBE, 0xEF});
    const auto d = decode_frame(buf);
    ASSERT_TRUE(d);
    EXPECT_EQ(d->consumed, n);
}

TEST(Frame, BadHeader) {
    auto buf = *encode_frame(7, {});
    buf[2] = 2;
    EXPECT_EQ(decode_frame(buf).error().kind, FrameErrorKind::BadVersion);
    buf[0] = 'X';
    EXPECT_EQ(decode_frame(buf).error().kind, FrameErrorKind::BadMagic);
}

TEST(Messages, AckAndCommandRoundTrip) {
    const auto ack = encode_ack({10});
    EXPECT_EQ(ack[0], 'A');
    EXPECT_EQ(ack[1], '1');
    const auto m = decode_message(ack);
    ASSERT_TRUE(m);
    EXPECT_EQ(std::get<Ack>(m->message).accepted_count, 10);

    const CommandFrame cmd{77, "OUT 0 1"};
    const auto c = decode_message(encode_command(cmd));
    EXPECT_EQ(std::get<CommandFrame>(c->message), cmd);

    const CommandReplyFrame rep{77, 0, "OK OUT 0 1"};
    const auto r = decode_message(encode_command_reply(rep));
    EXPECT_EQ(std::get<CommandReplyFrame>(r->message), rep);
}

TEST(StreamDecoder, ArbitraryChunking) {
    std::mt19937_64 rng(5);
    std::vector<Message> sent;
    std::vector<std::uint8_t> stream;
    for (int i = 0; i < 60; ++i) {
        std::vector<TelemetryRecord> recs;
        for (std::uint64_t k = 0; k < rng() % 6; ++k) recs.push_back(random_record(rng));
        const std::uint64_t imei = rng() % kMaxImei;
        const auto bytes = *encode_frame(imei, recs);
        stream.insert(stream.end(), bytes.begin(), bytes.end());
        sent.push_back(Frame{imei, recs});
        if (i % 7 == 0) {
            const auto a = encode_ack({static_cast<std::uint16_t>(i)});
            stream.insert(stream.end(), a.begin(), a.end());
            sent.push_back(Ack{static_cast<std::uint16_t>(i)});
        }
    }
    for (int trial = 0; trial < 200; ++trial) {
        StreamDecoder dec;
        std::vector<Message> got;
        std::size_t pos = 0;
        while (pos < stream.size()) {
            const std::size_t n = std::min<std::size_t>(stream.size() - pos, 1 + rng() % 97);
            dec.feed(std::span(stream).subspan(pos, n));
            pos += n;
            while (auto msg = dec.next()) got.push_back(std::move(*msg));
        }
        ASSERT_EQ(got, sent);
        EXPECT_EQ(dec.buffered(), 0u);
    }
}

TEST(StreamDecoder, SkipsCorruptFrameAndGarbage) {
    auto a = *encode_frame(1, three_records());
    const auto b = *encode_frame(2, {});
    a[40] ^= 0x10;
    std::vector<std::uint8_t> stream{0x00, 0x13, 'Q'};
    stream.insert(stream.end(), a.begin(), a.end());
    stream.insert(stream.end(), b.begin(), b.end());
    StreamDecoder dec;
    dec.feed(stream);
    const auto m = dec.next();
    ASSERT_TRUE(m);
    EXPECT_EQ(std::get<Frame>(*m).imei, 2u);
    EXPECT_EQ(dec.crc_failures(), 1u);
    EXPECT_EQ(dec.resync_bytes(), 3u);
}

TEST(Sms, PositionFormatAndParse) {
    RecordFields f;
    f.timestamp_ms = *parse_iso8601("2024-11-01T06:30:00Z");
    f.lat = 35.6892;
    f.lon = 51.3890;
    f.speed_kmh = 72.4;
    f.heading_deg = 181.6;
    f.event = EventCode::Panic;
    const auto r = *make_record(f);
    const std::string text = format_position_sms(356938035643809ULL, r);
    EXPECT_EQ(text, "POS,356938035643809,2024-11-01T06:30:00Z,35.689200,51.389000,72.4,182,Panic");
    EXPECT_LE(text.size(), kSmsMaxLength);
    const auto p = parse_position_sms(text);
    ASSERT_TRUE(p);
    EXPECT_EQ(p->imei, 356938035643809ULL);
    EXPECT_EQ(p->timestamp_ms, f.timestamp_ms);
    EXPECT_EQ(p->event, EventCode::Panic);
    EXPECT_EQ(parse_position_sms("HELLO").error(), SmsError::NotPosition);
}

TEST(Sms, CommandGrammar) {
    EXPECT_TRUE(std::holds_alternative<GetGps>(*parse_command("GETGPS")));
    const auto sp = parse_command("SETPARAM speed_limit=90");
    ASSERT_TRUE(sp);
    EXPECT_EQ(std::get<SetParam>(*sp), (SetParam{"speed_limit", "90"}));
    EXPECT_EQ(std::get<SetOutput>(*parse_command("OUT 0 1")), (SetOutput{0, true}));
    EXPECT_EQ(std::get<SetOutput>(*parse_command("  OUT 3 0 ")), (SetOutput{3, false}));

    EXPECT_EQ(parse_command("DROP TABLE").error(), CommandError::UnknownVerb);
    EXPECT_EQ(parse_command("getgps").error(), CommandError::UnknownVerb);
    EXPECT_EQ(parse_command("").error(), CommandError::Empty);
    EXPECT_EQ(parse_command("OUT 4 1").error(), CommandError::BadSyntax);
    EXPECT_EQ(parse_command("OUT 1 2").error(), CommandError::BadSyntax);
    EXPECT_EQ(parse_command("OUT 1").error(), CommandError::BadSyntax);
    EXPECT_EQ(parse_command("SETPARAM speed_limit").error(), CommandError::BadSyntax);
    EXPECT_EQ(parse_command("SETPARAM =5").error(), CommandError::BadSyntax);
    EXPECT_EQ(parse_command("GETGPS now").error(), CommandError::BadSyntax);
    EXPECT_EQ(parse_command(std::string(161, 'A')).error(), CommandError::TooLong);
    EXPECT_EQ(parse_command("GETGPS\x01").error(), CommandError::NonAscii);

    for (const char* text : {"GETGPS", "SETPARAM angle_trigger=15", "OUT 2 1"}) {
        EXPECT_EQ(format_command(*parse_command(text)), text);
    }
    const auto sms = parse_sms_command("OUT 0 1", "+989121234567");
    ASSERT_TRUE(sms);
    EXPECT_EQ(sms->sender, "+989121234567");
}

#pragma once

// NMEA 0183 sentence codec: checksum, tokenizing parser, per-epoch fix fusion
// and the RMC/GGA serializers used by the trace synthesizer.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "radfleet/expected.hpp"
#include "radfleet/time.hpp"

namespace radfleet::nmea {

inline constexpr double kKnotsToKmh = 1.852;
inline constexpr int kMinSatellitesForFix = 4;
inline constexpr double kDefaultHdop = 99.9;

// GLL stands in for the "GGL" some device datasheets list; no GGL sentence
// exists in NMEA 0183.
enum class SentenceType { RMC, GGA, GLL, GSA, GSV, VTG };

std::string_view to_string(SentenceType t);

struct Sentence {
    std::string talker;               // "GP", "GL", "GN", ...
    SentenceType type{};
    std::vector<std::string> fields;  // tokens after the address field
    std::uint8_t checksum = 0;
};

enum class ParseError { BadFraming, BadChecksum, UnsupportedType, MalformedField };
std::string_view to_string(ParseError e);

/// XOR fold of every byte of `body` (the text strictly between '$' and '*').
constexpr std::uint8_t compute_checksum(std::string_view body) noexcept {
    std::uint8_t sum = 0;
    for (char c : body) sum ^= static_cast<std::uint8_t>(c);
    return sum;
}

/// Parses one line. A trailing "\r\n" (or lone '\n') is tolerated.
/// Never throws on arbitrary input.
Expected<Sentence, ParseError> parse_sentence(std::string_view line);

/// "$<body>*HH\r\n"
std::string frame_sentence(std::string_view body);

struct Fix {
    TimestampMs timestamp_ms = 0;
    double lat = 0.0;
    double lon = 0.0;
    double speed_kmh = 0.0;
    double heading_deg = 0.0;  // [0, 360)
    double altitude_m = 0.0;
    int satellites = 0;
    double hdop = kDefaultHdop;
    bool valid = false;

    friend bool operator==(const Fix&, const Fix&) = default;
};

enum class FuseError { NoRmc, MalformedField };
std::string_view to_string(FuseError e);

/// Fuses all sentences of one epoch. Position, speed and heading come from
/// RMC; satellites, hdop and altitude from GGA when present.
Expected<Fix, FuseError> fuse_fix(std::span<const Sentence> sentences);

/// Satellites used (GSA) or in view (GSV); other sentence types report 0.
int satellite_count(const Sentence& s);

enum class SerializeError { OutOfRange };

/// Both serializers emit the full line including "\r\n".
Expected<std::string, SerializeError> serialize_rmc(const Fix& fix, std::string_view talker = "GN");
Expected<std::string, SerializeError> serialize_gga(const Fix& fix, std::string_view talker = "GN");

}  // namespace radfleet::nmea

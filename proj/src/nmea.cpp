#include "radfleet/nmea.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>

namespace radfleet::nmea {

std::string_view to_string(SentenceType t) {
    switch (t) {
        case SentenceType::RMC: return "RMC";
        case SentenceType::GGA: return "GGA";
        case SentenceType::GLL: return "GLL";
        case SentenceType::GSA: return "GSA";
        case SentenceType::GSV: return "GSV";
        case SentenceType::VTG: return "VTG";
    }
    return "?";
}

std::string_view to_string(ParseError e) {
    switch (e) {
        case ParseError::BadFraming: return "BadFraming";
        case ParseError::BadChecksum: return "BadChecksum";
        case ParseError::UnsupportedType: return "UnsupportedType";
        case ParseError::MalformedField: return "MalformedField";
    }
    return "?";
}

std::string_view to_string(FuseError e) {
    switch (e) {
        case FuseError::NoRmc: return "NoRmc";
        case FuseError::MalformedField: return "MalformedField";
    }
    return "?";
}

namespace {

constexpr char kHexDigits[] = "0123456789ABCDEF";

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
}

std::optional<SentenceType> type_from_code(std::string_view code) {
    if (code == "RMC") return SentenceType::RMC;
    if (code == "GGA") return SentenceType::GGA;
    if (code == "GLL") return SentenceType::GLL;
    if (code == "GSA") return SentenceType::GSA;
    if (code == "GSV") return SentenceType::GSV;
    if (code == "VTG") return SentenceType::VTG;
    return std::nullopt;
}

std::size_t min_field_count(SentenceType t) {
    switch (t) {
        case SentenceType::RMC: return 11;
        case SentenceType::GGA: return 14;
        case SentenceType::GLL: return 6;
        case SentenceType::GSA: return 17;
        case SentenceType::GSV: return 3;
        case SentenceType::VTG: return 8;
    }
    return 0;
}

std::optional<double> to_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<int> to_int(std::string_view s) {
    if (s.empty()) return std::nullopt;
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

bool all_digits(std::string_view s) {
    for (char c : s) {
        if (c < '0' || c > '9') return false;
    }
    return true;
}

// "ddmm.mmmm" / "dddmm.mmmm" with hemisphere letter.
std::optional<double> parse_coordinate(std::string_view value, std::string_view hemi, int degree_digits) {
    if (value.size() < static_cast<std::size_t>(degree_digits) + 2 || hemi.size() != 1) return std::nullopt;
    if (!all_digits(value.substr(0, degree_digits))) return std::nullopt;
    const auto deg = to_int(value.substr(0, degree_digits));
    const auto minutes = to_double(value.substr(degree_digits));
    if (!deg || !minutes || *minutes < 0.0 || *minutes >= 60.0) return std::nullopt;
    double v = *deg + *minutes / 60.0;
    const char h = hemi[0];
    if (h == 'S' || h == 'W') {
        v = -v;
    } else if (h != 'N' && h != 'E') {
        return std::nullopt;
    }
    return v;
}

// hhmmss[.sss] -> ms of day
std::optional<TimestampMs> parse_time_of_day(std::string_view s) {
    if (s.size() < 6 || !all_digits(s.substr(0, 6))) return std::nullopt;
    const int h = *to_int(s.substr(0, 2));
    const int m = *to_int(s.substr(2, 2));
    const int sec = *to_int(s.substr(4, 2));
    if (h > 23 || m > 59 || sec > 60) return std::nullopt;
    TimestampMs ms = 0;
    if (s.size() > 6) {
        if (s[6] != '.') return std::nullopt;
        const std::string_view frac = s.substr(7);
        if (frac.empty() || frac.size() > 3 || !all_digits(frac)) return std::nullopt;
        ms = *to_int(frac);
        for (std::size_t i = frac.size(); i < 3; ++i) ms *= 10;
    }
    return h * kMsPerHour + m * kMsPerMinute + sec * kMsPerSecond + ms;
}

// ddmmyy; two-digit years always map to 20yy.
std::optional<CivilDate> parse_date(std::string_view s) {
    if (s.size() != 6 || !all_digits(s)) return std::nullopt;
    CivilDate d{2000 + *to_int(s.substr(4, 2)), *to_int(s.substr(2, 2)), *to_int(s.substr(0, 2))};
    if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > days_in_month(d.year, d.month)) return std::nullopt;
    return d;
}

struct SplitTime {
    CivilDate date;
    int h, m, s, ms;
};

SplitTime split_time(TimestampMs t) {
    std::int64_t days = t / kMsPerDay;
    std::int64_t rem = t % kMsPerDay;
    if (rem < 0) {
        rem += kMsPerDay;
        --days;
    }
    return {civil_from_days(days), static_cast<int>(rem / kMsPerHour), static_cast<int>(rem / kMsPerMinute % 60),
            static_cast<int>(rem / kMsPerSecond % 60), static_cast<int>(rem % 1000)};
}

bool fix_in_range(const Fix& f) {
    if (!std::isfinite(f.lat) || !std::isfinite(f.lon) || !std::isfinite(f.speed_kmh) ||
        !std::isfinite(f.heading_deg) || !std::isfinite(f.altitude_m) || !std::isfinite(f.hdop)) {
        return false;
    }
    if (f.lat < -90.0 || f.lat > 90.0 || f.lon < -180.0 || f.lon > 180.0) return false;
    if (f.speed_kmh < 0.0 || f.speed_kmh > 3000.0) return false;
    if (f.satellites < 0 || f.satellites > 99 || f.hdop < 0.0 || f.hdop > 99.9) return false;
    if (f.altitude_m < -9999.0 || f.altitude_m > 99999.0) return false;
    const int year = split_time(f.timestamp_ms).date.year;
    return year >= 2000 && year <= 2099;
}

// Quantizes to 1e-5 arc-minutes and writes (d)ddmm.mmmmm.
int format_coordinate(char* out, std::size_t cap, double value, int degree_digits) {
    const long long units = std::llround(std::fabs(value) * 60.0 * 1e5);
    const long long deg = units / 6000000;
    const long long rem = units % 6000000;
    return std::snprintf(out, cap, "%0*lld%02lld.%05lld", degree_digits, deg, rem / 100000, rem % 100000);
}

}  // namespace

std::string frame_sentence(std::string_view body) {
    const std::uint8_t sum = compute_checksum(body);
    std::string out;
    out.reserve(body.size() + 6);
    out.push_back('$');
    out.append(body);
    out.push_back('*');
    out.push_back(kHexDigits[sum >> 4]);
    out.push_back(kHexDigits[sum & 0x0F]);
    out.append("\r\n");
    return out;
}

Expected<Sentence, ParseError> parse_sentence(std::string_view line) {
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
    if (line.size() < 4 || line.front() != '$') return fail(ParseError::BadFraming);
    const std::size_t star = line.rfind('*');
    if (star == std::string_view::npos || star + 3 != line.size()) return fail(ParseError::BadFraming);
    const int hi = hex_value(line[star + 1]);
    const int lo = hex_value(line[star + 2]);
    if (hi < 0 || lo < 0) return fail(ParseError::BadFraming);

    const std::string_view body = line.substr(1, star - 1);
    const auto expected_sum = static_cast<std::uint8_t>(hi << 4 | lo);
    if (compute_checksum(body) != expected_sum) return fail(ParseError::BadChecksum);

    for (char c : body) {
        if (c < 0x20 || c > 0x7E || c == '$' || c == '*') return fail(ParseError::MalformedField);
    }

    const std::size_t comma = body.find(',');
    const std::string_view address = body.substr(0, comma);
    if (address.size() != 5) return fail(ParseError::MalformedField);
    for (char c : address) {
        if (!((c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9'))) return fail(ParseError::MalformedField);
    }
    const auto type = type_from_code(address.substr(2));
    if (!type) return fail(ParseError::UnsupportedType);

    Sentence s;
    s.talker = std::string(address.substr(0, 2));
    s.type = *type;
    s.checksum = expected_sum;
    if (comma != std::string_view::npos) {
        std::string_view rest = body.substr(comma + 1);
        while (true) {
            const std::size_t next = rest.find(',');
            s.fields.emplace_back(rest.substr(0, next));
            if (next == std::string_view::npos) break;
            rest.remove_prefix(next + 1);
        }
    }
    if (s.fields.size() < min_field_count(s.type)) return fail(ParseError::MalformedField);
    return s;
}

int satellite_count(const Sentence& s) {
    if (s.type == SentenceType::GSA) {
        int used = 0;
        for (std::size_t i = 2; i < 14 && i < s.fields.size(); ++i) {
            if (!s.fields[i].empty()) ++used;
        }
        return used;
    }
    if (s.type == SentenceType::GSV) return to_int(s.fields[2]).value_or(0);
    if (s.type == SentenceType::GGA) return to_int(s.fields[6]).value_or(0);
    return 0;
}

Expected<Fix, FuseError> fuse_fix(std::span<const Sentence> sentences) {
    const Sentence* rmc = nullptr;
    const Sentence* gga = nullptr;
    for (const auto& s : sentences) {
        if (s.type == SentenceType::RMC && rmc == nullptr) rmc = &s;
        if (s.type == SentenceType::GGA && gga == nullptr) gga = &s;
    }
    if (rmc == nullptr) return fail(FuseError::NoRmc);

    const auto& f = rmc->fields;
    const auto tod = parse_time_of_day(f[0]);
    const auto date = parse_date(f[8]);
    if (!tod || !date) return fail(FuseError::MalformedField);
    if (f[1] != "A" && f[1] != "V") return fail(FuseError::MalformedField);

    Fix fix;
    fix.timestamp_ms = days_from_civil(*date) * kMsPerDay + *tod;
    const bool active = f[1] == "A";

    if (!f[2].empty() || !f[4].empty()) {
        const auto lat = parse_coordinate(f[2], f[3], 2);
        const auto lon = parse_coordinate(f[4], f[5], 3);
        if (!lat || !lon || *lat < -90.0 || *lat > 90.0 || *lon < -180.0 || *lon > 180.0) {
            return fail(FuseError::MalformedField);
        }
        fix.lat = *lat;
        fix.lon = *lon;
    } else if (active) {
        return fail(FuseError::MalformedField);
    }

    if (!f[6].empty()) {
        const auto knots = to_double(f[6]);
        if (!knots || *knots < 0.0) return fail(FuseError::MalformedField);
        fix.speed_kmh = *knots * kKnotsToKmh;
    }
    if (!f[7].empty()) {
        const auto course = to_double(f[7]);
        if (!course) return fail(FuseError::MalformedField);
        double h = std::fmod(*course, 360.0);
        if (h < 0.0) h += 360.0;
        fix.heading_deg = h >= 360.0 ? 0.0 : h;
    }

    if (gga != nullptr) {
        const auto& g = gga->fields;
        if (!g[6].empty()) {
            const auto sats = to_int(g[6]);
            if (!sats || *sats < 0) return fail(FuseError::MalformedField);
            fix.satellites = *sats;
        }
        if (!g[7].empty()) {
            const auto hdop = to_double(g[7]);
            if (!hdop || *hdop < 0.0) return fail(FuseError::MalformedField);
            fix.hdop = *hdop;
        }
        if (!g[8].empty()) {
            const auto alt = to_double(g[8]);
            if (!alt) return fail(FuseError::MalformedField);
            fix.altitude_m = *alt;
        }
    }

    fix.valid = active && fix.satellites >= kMinSatellitesForFix;
    return fix;
}

Expected<std::string, SerializeError> serialize_rmc(const Fix& fix, std::string_view talker) {
    if (!fix_in_range(fix) || talker.size() != 2) return fail(SerializeError::OutOfRange);
    const SplitTime t = split_time(fix.timestamp_ms);

    char lat[48];
    char lon[48];
    format_coordinate(lat, sizeof lat, fix.lat, 2);
    format_coordinate(lon, sizeof lon, fix.lon, 3);

    double heading = std::fmod(fix.heading_deg, 360.0);
    if (heading < 0.0) heading += 360.0;
    if (std::round(heading * 100.0) >= 36000.0) heading = 0.0;

    char body[160];
    std::snprintf(body, sizeof body, "%.*sRMC,%02d%02d%02d.%03d,%c,%s,%c,%s,%c,%.2f,%.2f,%02d%02d%02d,,,%c",
                  static_cast<int>(talker.size()), talker.data(), t.h, t.m, t.s, t.ms, fix.valid ? 'A' : 'V', lat,
                  fix.lat < 0.0 ? 'S' : 'N', lon, fix.lon < 0.0 ? 'W' : 'E', fix.speed_kmh / kKnotsToKmh, heading,
                  t.date.day, t.date.month, t.date.year % 100, fix.valid ? 'A' : 'N');
    return frame_sentence(body);
}

Expected<std::string, SerializeError> serialize_gga(const Fix& fix, std::string_view talker) {
    if (!fix_in_range(fix) || talker.size() != 2) return fail(SerializeError::OutOfRange);
    const SplitTime t = split_time(fix.timestamp_ms);

    char lat[48];
    char lon[48];
    format_coordinate(lat, sizeof lat, fix.lat, 2);
    format_coordinate(lon, sizeof lon, fix.lon, 3);

    char body[160];
    std::snprintf(body, sizeof body, "%.*sGGA,%02d%02d%02d.%03d,%s,%c,%s,%c,%d,%02d,%.1f,%.1f,M,0.0,M,,",
                  static_cast<int>(talker.size()), talker.data(), t.h, t.m, t.s, t.ms, lat, fix.lat < 0.0 ? 'S' : 'N',
                  lon, fix.lon < 0.0 ? 'W' : 'E', fix.valid ? 1 : 0, fix.satellites, fix.hdop, fix.altitude_m);
    return frame_sentence(body);
}

}  // namespace radfleet::nmea

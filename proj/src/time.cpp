#include "radfleet/time.hpp"

#include <charconv>
#include <cstdio>

namespace radfleet {

// Howard Hinnant's civil-calendar algorithms (proleptic Gregorian).
std::int64_t days_from_civil(const CivilDate& d) {
    const std::int64_t y = d.month <= 2 ? d.year - 1 : d.year;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const std::int64_t yoe = y - era * 400;
    const std::int64_t mp = (d.month + 9) % 12;
    const std::int64_t doy = (153 * mp + 2) / 5 + d.day - 1;
    const std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + doe - 719468;
}

CivilDate civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const std::int64_t doe = z - era * 146097;
    const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const std::int64_t mp = (5 * doy + 2) / 153;
    const int day = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    const int month = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
    const int year = static_cast<int>(yoe + era * 400 + (month <= 2 ? 1 : 0));
    return {year, month, day};
}

int days_in_month(int year, int month) {
    static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month == 2) {
        const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
        return leap ? 29 : 28;
    }
    return kDays[month - 1];
}

TimestampMs local_midnight(const CivilDate& d, int utc_offset_min) {
    return days_from_civil(d) * kMsPerDay - static_cast<TimestampMs>(utc_offset_min) * kMsPerMinute;
}

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size()) return false;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
    }
    auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, out);
    return ec == std::errc{};
}

}  // namespace

CivilDate local_date(TimestampMs t, int utc_offset_min) {
    const TimestampMs local = t + static_cast<TimestampMs>(utc_offset_min) * kMsPerMinute;
    return civil_from_days(floor_div(local, kMsPerDay));
}

std::string format_iso8601(TimestampMs t) {
    const std::int64_t days = floor_div(t, kMsPerDay);
    const std::int64_t ms_of_day = t - days * kMsPerDay;
    const CivilDate d = civil_from_days(days);
    const int h = static_cast<int>(ms_of_day / kMsPerHour);
    const int m = static_cast<int>((ms_of_day / kMsPerMinute) % 60);
    const int s = static_cast<int>((ms_of_day / kMsPerSecond) % 60);
    const int ms = static_cast<int>(ms_of_day % 1000);
    char buf[40];
    if (ms != 0) {
        std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", d.year, d.month, d.day, h, m, s, ms);
    } else {
        std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", d.year, d.month, d.day, h, m, s);
    }
    return buf;
}

std::optional<TimestampMs> parse_iso8601(std::string_view text) {
    CivilDate d;
    if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    if (!read_int(text, 0, 4, d.year) || !read_int(text, 5, 2, d.month) || !read_int(text, 8, 2, d.day)) {
        return std::nullopt;
    }
    if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > days_in_month(d.year, d.month)) return std::nullopt;
    TimestampMs t = days_from_civil(d) * kMsPerDay;
    if (text.size() == 10) return t;

    if (text.size() < 20 || (text[10] != 'T' && text[10] != ' ') || text[13] != ':' || text[16] != ':') {
        return std::nullopt;
    }
    int h = 0, m = 0, s = 0, ms = 0;
    if (!read_int(text, 11, 2, h) || !read_int(text, 14, 2, m) || !read_int(text, 17, 2, s)) return std::nullopt;
    if (h > 23 || m > 59 || s > 59) return std::nullopt;
    std::size_t pos = 19;
    if (text[pos] == '.') {
        if (!read_int(text, pos + 1, 3, ms)) return std::nullopt;
        pos += 4;
    }
    if (pos + 1 != text.size() || text[pos] != 'Z') return std::nullopt;
    return t + h * kMsPerHour + m * kMsPerMinute + s * kMsPerSecond + ms;
}

std::optional<YearMonth> parse_year_month(std::string_view text) {
    YearMonth ym;
    if (text.size() != 7 || text[4] != '-') return std::nullopt;
    if (!read_int(text, 0, 4, ym.year) || !read_int(text, 5, 2, ym.month)) return std::nullopt;
    if (ym.month < 1 || ym.month > 12) return std::nullopt;
    return ym;
}

std::string format_year_month(const YearMonth& ym) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", ym.year, ym.month);
    return buf;
}

std::string format_date(const CivilDate& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

std::optional<int> parse_utc_offset(std::string_view text) {
    if (text == "Z") return 0;
    if (text.size() != 6 || (text[0] != '+' && text[0] != '-') || text[3] != ':') return std::nullopt;
    int h = 0, m = 0;
    if (!read_int(text, 1, 2, h) || !read_int(text, 4, 2, m) || h > 14 || m > 59) return std::nullopt;
    const int total = h * 60 + m;
    return text[0] == '-' ? -total : total;
}

}  // namespace radfleet

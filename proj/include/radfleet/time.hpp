#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace radfleet {

/// Milliseconds since the Unix epoch, UTC.
using TimestampMs = std::int64_t;

inline constexpr TimestampMs kMsPerSecond = 1000;
inline constexpr TimestampMs kMsPerMinute = 60 * kMsPerSecond;
inline constexpr TimestampMs kMsPerHour = 60 * kMsPerMinute;
inline constexpr TimestampMs kMsPerDay = 24 * kMsPerHour;

struct CivilDate {
    int year = 1970;
    int month = 1;  // 1..12
    int day = 1;    // 1..31

    friend bool operator==(const CivilDate&, const CivilDate&) = default;
};

struct YearMonth {
    int year = 1970;
    int month = 1;

    friend bool operator==(const YearMonth&, const YearMonth&) = default;
    friend auto operator<=>(const YearMonth&, const YearMonth&) = default;

    YearMonth next() const { return month == 12 ? YearMonth{year + 1, 1} : YearMonth{year, month + 1}; }
};

std::int64_t days_from_civil(const CivilDate& d);
CivilDate civil_from_days(std::int64_t days);
int days_in_month(int year, int month);

/// UTC midnight of the given civil date shifted so that it is local midnight at `utc_offset_min`.
TimestampMs local_midnight(const CivilDate& d, int utc_offset_min);

/// Civil date of `t` as seen from a fleet-local UTC offset.
CivilDate local_date(TimestampMs t, int utc_offset_min);

/// "2024-11-01T06:00:00Z"; milliseconds appended only when non-zero.
std::string format_iso8601(TimestampMs t);

/// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM:SS[.mmm]Z" (UTC).
std::optional<TimestampMs> parse_iso8601(std::string_view text);

/// Accepts "YYYY-MM".
std::optional<YearMonth> parse_year_month(std::string_view text);

std::string format_year_month(const YearMonth& ym);
std::string format_date(const CivilDate& d);

/// Parses "+03:30" / "-05:00" / "Z" into minutes.
std::optional<int> parse_utc_offset(std::string_view text);

}  // namespace radfleet

#pragma once

// Fleet reports derived from stored records. Every function here is pure:
// same records in, same rows out.
//
// Distances only use records with a valid fix; consecutive valid fixes are
// joined by great-circle segments. Day boundaries are taken in a fleet-local
// UTC offset (minutes).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "radfleet/expected.hpp"
#include "radfleet/geo.hpp"
#include "radfleet/time.hpp"
#include "radfleet/wire.hpp"

namespace radfleet::analytics {

using Records = std::span<const wire::TelemetryRecord>;

inline constexpr int kDefaultUtcOffsetMin = 3 * 60 + 30;
inline constexpr double kDefaultStalenessS = 900.0;
inline constexpr double kMovingSpeedKmh = 3.0;

enum class AnalyticsError { UnorderedInput, NoFuelData };
std::string_view to_string(AnalyticsError e);

/// Path length in meters over the valid fixes of `records`.
double path_length_m(Records records);

// ---- trips ----------------------------------------------------------------------

struct TripParams {
    double stop_speed_kmh = 3.0;
    double min_stop_s = 300.0;
    double ignition_stop_s = 60.0;
    double min_trip_dist_m = 200.0;
    double tank_capacity_l = 60.0;  // for level-based fuel
};

struct Trip {
    std::uint64_t vehicle = 0;
    TimestampMs start_time = 0;
    TimestampMs end_time = 0;
    geo::GeoPoint start;
    geo::GeoPoint end;
    double distance_km = 0.0;  // rounded to 3 decimals
    double fuel_used_l = 0.0;
    double max_speed_kmh = 0.0;
    double avg_speed_kmh = 0.0;
    std::vector<std::uint16_t> route_signature;
};

struct StopEvent {
    std::uint64_t vehicle = 0;
    geo::GeoPoint location;
    TimestampMs start_time = 0;
    double duration_s = 0.0;
};

struct Segmentation {
    std::vector<Trip> trips;
    std::vector<StopEvent> stops;
    double short_movement_m = 0.0;  // movement not in any kept trip
};

/// A record is "halted" when its speed is below stop_speed or ignition is off.
/// A maximal run of halted records is a stop when it lasts at least min_stop,
/// or when its ignition-off part lasts at least ignition_stop. The spans
/// between stops are trips; trips shorter than min_trip_dist are dropped.
/// Adjacent trips and stops share their boundary record.
Expected<Segmentation, AnalyticsError> segment_trips(std::uint64_t vehicle, Records records,
                                                     const TripParams& params = {},
                                                     std::span<const geo::GeofenceZone> zones = {});

// ---- fuel -----------------------------------------------------------------------

enum class FuelMethod { RateIntegration, LevelDrop };
std::string_view to_string(FuelMethod m);

struct FuelResult {
    double liters = 0.0;
    int refuel_events = 0;
    FuelMethod method = FuelMethod::RateIntegration;
};

inline constexpr double kRefuelThresholdPct = 5.0;

/// Rate integration (left Riemann sum of fuel_rate over record gaps) when any
/// record carries a positive rate, else summed level drops.
Expected<FuelResult, AnalyticsError> fuel_consumption(Records records, double tank_capacity_l = 60.0);

// ---- mileage reports ------------------------------------------------------------

struct DayRow {
    CivilDate day;
    double km = 0.0;
    double liters = 0.0;
};

/// One row per day of `month`. Segments spanning local midnight count for
/// neither day.
std::vector<DayRow> daily_mileage(Records records, YearMonth month, int utc_offset_min = kDefaultUtcOffsetMin,
                                  double tank_capacity_l = 60.0);

struct MonthRow {
    YearMonth month;
    double km = 0.0;
    double liters = 0.0;
};

/// Inclusive month range; each row is the in-order sum of its daily rows.
std::vector<MonthRow> monthly_report(Records records, YearMonth from, YearMonth to,
                                     int utc_offset_min = kDefaultUtcOffsetMin, double tank_capacity_l = 60.0);

struct CompareRow {
    int day_of_month = 0;
    double km_a = 0.0;
    double km_b = 0.0;
    double liters_a = 0.0;
    double liters_b = 0.0;
};

std::vector<CompareRow> compare_months(Records records, YearMonth a, YearMonth b,
                                       int utc_offset_min = kDefaultUtcOffsetMin, double tank_capacity_l = 60.0);

// ---- fleet position queries -----------------------------------------------------

struct VehiclePosition {
    std::uint64_t vehicle = 0;
    std::string label;
    geo::GeoPoint position;
    TimestampMs time = 0;
};

struct NearestEntry {
    std::uint64_t vehicle = 0;
    std::string label;
    double distance_m = 0.0;
    double age_s = 0.0;
};

struct NearestResult {
    std::vector<NearestEntry> ranked;  // fresh, ascending distance, ties by vehicle id
    std::vector<NearestEntry> stale;   // ascending distance
};

NearestResult nearest_vehicles(const geo::GeoPoint& point, std::span<const VehiclePosition> fleet, std::size_t limit,
                               TimestampMs now, double staleness_max_s = kDefaultStalenessS);

// ---- driving behavior -----------------------------------------------------------

struct SpeedStats {
    double avg_kmh = 0.0;  // time-weighted over moving samples
    double max_kmh = 0.0;
};

/// Each valid sample's speed holds until the next record. Moving means at
/// least 3 km/h.
SpeedStats speed_stats(Records records);

struct Violation {
    TimestampMs start = 0;
    double duration_s = 0.0;
    double peak_kmh = 0.0;
};

/// Maximal runs of valid records with speed > limit. A run lasts until the
/// first record after it (or its own last record at the end of data).
std::vector<Violation> overspeed_report(Records records, double limit_kmh);

struct SpeedBinRow {
    int lower_kmh = 0;
    std::optional<int> upper_kmh;  // absent for the open top bin
    double km = 0.0;
    double liters = 0.0;
    std::optional<double> l_per_100km;  // absent when km < 1
};

inline constexpr int kSpeedBinWidth = 10;
inline constexpr int kSpeedBinTop = 120;

/// Each moving valid sample contributes the distance to the next valid sample
/// and fuel_rate x gap, both in the bin of its own speed. 13 rows.
std::vector<SpeedBinRow> fuel_by_speed(Records records);

struct RouteRank {
    std::vector<std::uint16_t> signature;
    std::size_t trips = 0;
    double mean_l_per_100km = 0.0;
    double mean_duration_s = 0.0;
};

std::vector<RouteRank> route_fuel_ranking(std::span<const Trip> trips, std::uint16_t origin_zone,
                                          std::uint16_t dest_zone);

struct EcoScore {
    int harsh_events = 0;
    double km = 0.0;
    double score = 10.0;  // max(0, 10 - events per 100 km)
};

EcoScore eco_score(Records records);

// ---- maintenance ----------------------------------------------------------------

struct MaintenanceItem {
    std::string name;
    std::optional<std::uint64_t> vehicle;  // per-vehicle scope
    std::string vehicle_class;             // class scope when vehicle is absent
    double interval_km = 0.0;
    double last_service_odometer_km = 0.0;
    double warn_fraction = 0.9;
};

enum class MaintenanceState { Ok, Warn, Due };
std::string_view to_string(MaintenanceState s);

struct MaintenanceStatus {
    std::string name;
    double km_remaining = 0.0;
    MaintenanceState state = MaintenanceState::Ok;
};

/// Items apply when scoped to this vehicle, or to its class unless a
/// per-vehicle item of the same name overrides. Sorted by name.
std::vector<MaintenanceStatus> maintenance_due(std::uint64_t vehicle, std::string_view vehicle_class,
                                               double odometer_km, std::span<const MaintenanceItem> items);

// ---- missions -------------------------------------------------------------------

struct Mission {
    std::uint64_t id = 0;
    std::uint64_t vehicle = 0;
    std::string driver;
    std::string purpose;
    TimestampMs start = 0;  // inclusive
    TimestampMs end = 0;    // exclusive
};

bool missions_overlap(const Mission& a, const Mission& b);

struct MissionReport {
    double mileage_km = 0.0;
    double fuel_l = 0.0;
    std::vector<Trip> trips;
};

/// `records` may cover more than the window; only [start, end) is used.
MissionReport mission_report(const Mission& mission, Records records, const TripParams& params = {});

// ---- tables and CSV ---------------------------------------------------------------

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// RFC 4180: CRLF line ends, fields quoted when they contain a comma, quote,
/// CR or LF.
std::string export_csv(const Table& t);

/// Space-aligned plain text, one row per line.
std::string format_text_table(const Table& t);

std::string format_fixed(double v, int decimals);

Table daily_table(std::span<const DayRow> rows);
Table monthly_table(std::span<const MonthRow> rows);
Table compare_table(std::span<const CompareRow> rows);
Table fuel_by_speed_table(std::span<const SpeedBinRow> rows);
Table maintenance_table(std::span<const MaintenanceStatus> rows);
Table trips_table(std::span<const Trip> trips);
Table stops_table(std::span<const StopEvent> stops);
Table nearest_table(std::span<const NearestEntry> rows);
Table overspeed_table(std::span<const Violation> rows);
Table mission_table(const Mission& m, const MissionReport& r);

}  // namespace radfleet::analytics

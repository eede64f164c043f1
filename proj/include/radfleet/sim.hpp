#pragma once

// Scenario engine: synthetic vehicle motion, a modeled GSM network and N
// tracker state machines driven against an ingest server in virtual time.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "radfleet/analytics.hpp"
#include "radfleet/expected.hpp"
#include "radfleet/geo.hpp"
#include "radfleet/time.hpp"
#include "radfleet/tracker.hpp"

namespace radfleet::sim {

// ---- motion -----------------------------------------------------------------------

struct Waypoint {
    geo::GeoPoint point;
    double speed_kmh = 50.0;  // cruise speed on the leg that ends here
    double dwell_s = 0.0;     // stop after arriving
    bool engine_off = true;   // ignition during the dwell
    std::optional<TimestampMs> depart_at;  // dwell lasts at least until then
};

struct FuelModel {
    double idle_lph = 0.8;
    double per_km_l = 0.08;  // rate = idle + per_km * speed
    double tank_l = 60.0;
    double start_pct = 80.0;
    double refuel_below_pct = 15.0;  // refilled at the next engine-off dwell
};

enum class InjectionKind { Panic, KeySwipe, Jamming, PowerCut };
std::string_view to_string(InjectionKind k);

struct Injection {
    InjectionKind kind = InjectionKind::Panic;
    TimestampMs at = 0;
    TimestampMs until = 0;  // windows: Jamming, PowerCut
    std::uint64_t key = 0;  // KeySwipe
};

struct RouteScript {
    TimestampMs start = 0;  // departure from origin
    geo::GeoPoint origin;
    std::vector<Waypoint> waypoints;
    FuelModel fuel;
    std::vector<Injection> events;
    double max_accel_mps2 = 1.5;
    double max_decel_mps2 = 2.0;
    double gps_noise_m = 0.0;  // 1-sigma per axis
    bool can_odometer = false;
};

Expected<Ok, std::string> validate(const RouteScript& route);

struct TraceTick {
    TimestampMs time = 0;
    geo::GeoPoint position;     // true position
    geo::GeoPoint reported;     // with GPS noise
    double speed_kmh = 0.0;     // distance over the preceding tick / tick length
    double heading_deg = 0.0;
    double accel_long_mps2 = 0.0;
    double accel_lat_mps2 = 0.0;
    bool ignition = false;
    double fuel_rate_lph = 0.0;
    double fuel_level_pct = 0.0;
    double odometer_m = 0.0;
    bool panic = false;
    std::optional<std::uint64_t> key;
    bool jammed = false;
    bool power_cut = false;
    int satellites = 0;
    double hdop = 0.0;
    bool can_odometer = false;
};

/// Infinite tick stream starting at `begin`. Before the route start and after
/// the last waypoint the vehicle is parked with the engine off.
class TraceGenerator {
public:
    TraceGenerator(RouteScript route, std::uint64_t seed, TimestampMs begin, TimestampMs tick_ms = 1000);

    TraceTick next();
    bool route_done() const { return phase_ == Phase::Done; }

private:
    enum class Phase { Waiting, Driving, Dwelling, Done };

    void begin_leg();
    void arrive();
    double drive(double dt_s);

    RouteScript route_;
    std::mt19937_64 rng_;
    TimestampMs now_;
    TimestampMs tick_ms_;
    Phase phase_ = Phase::Waiting;
    std::size_t leg_ = 0;
    geo::GeoPoint pos_;
    geo::GeoPoint leg_start_;
    double leg_bearing_ = 0.0;
    double leg_len_ = 0.0;
    double leg_pos_ = 0.0;
    double exit_speed_ = 0.0;  // m/s allowed when reaching the leg end
    double v_ = 0.0;  // m/s at the end of the last tick
    double prev_speed_mps_ = 0.0;
    double heading_ = 0.0;
    TimestampMs dwell_until_ = 0;
    bool dwell_engine_on_ = false;
    double fuel_pct_ = 0.0;
    double odometer_ = 0.0;
    bool first_ = true;
};

/// NMEA RMC + GGA for the tick's reported position.
std::vector<std::string> nmea_lines(const TraceTick& t);

/// gsm_available is left true; the network model owns it.
tracker::SensorFrame to_sensor_frame(const TraceTick& t, bool with_nmea);

/// Finite trace [begin, end) with NMEA on every frame.
std::vector<tracker::SensorFrame> generate_trace(const RouteScript& route, std::uint64_t seed, TimestampMs begin,
                                                 TimestampMs end, TimestampMs tick_ms = 1000);

// ---- network ----------------------------------------------------------------------

struct Window {
    TimestampMs from = 0;
    TimestampMs to = 0;  // exclusive
    bool contains(TimestampMs t) const { return t >= from && t < to; }
};

struct NetworkModel {
    std::vector<Window> outages;  // GPRS and SMS both down
    TimestampMs latency_min_ms = 80;
    TimestampMs latency_max_ms = 400;
    TimestampMs sms_latency_min_ms = 1000;
    TimestampMs sms_latency_max_ms = 5000;
    double udp_drop_probability = 0.0;
    std::optional<std::uint64_t> seed;  // defaults to one derived from the scenario seed
};

// ---- scenario ---------------------------------------------------------------------

struct VehicleSpec {
    std::uint64_t imei = 0;
    std::string label;
    std::string phone;
    tracker::Transport transport = tracker::Transport::Tcp;
    std::optional<double> speed_limit_kmh;
    std::vector<Window> outages;  // in addition to the network-wide ones
    RouteScript route;
};

struct ScheduledCommand {
    TimestampMs at = 0;
    std::uint64_t imei = 0;
    std::string text;
};

struct DailyKmExpectation {
    std::uint64_t imei = 0;
    CivilDate date;
    double km = 0.0;
    double tolerance_pct = 1.0;
};

struct Expectations {
    bool full_delivery = true;
    std::size_t max_buffer_bytes = tracker::kFlashCapacityBytes;
    std::vector<DailyKmExpectation> daily_km;
    bool overspeed_consistency = true;
};

enum class BackendKind { InProcess, Loopback, Remote };
std::string_view to_string(BackendKind k);

struct Backend {
    BackendKind kind = BackendKind::InProcess;
    std::string host = "127.0.0.1";
    std::uint16_t tcp_port = 0;
    std::uint16_t udp_port = 0;
    std::uint16_t http_port = 0;
};

struct Scenario {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    TimestampMs start = 0;
    TimestampMs end = 0;
    TimestampMs tick_ms = 1000;
    int utc_offset_min = analytics::kDefaultUtcOffsetMin;
    NetworkModel network;
    Backend backend;
    std::vector<VehicleSpec> vehicles;
    std::vector<ScheduledCommand> commands;
    std::vector<std::string> zones;  // zone specs for trackers and server
    std::map<std::string, std::string> tracker_params;  // set_param overrides for every tracker
    Expectations expect;
};

/// JSON scenario. Times are ms numbers, ISO-8601 "...Z", "YYYY-MM-DD" (local
/// midnight) or "+<n>s|m|h|d" relative to the scenario start. Vehicles come
/// from an explicit list, a "fleet" generator, or a per-vehicle "daily_km"
/// plan; generators draw from the scenario seed.
Expected<Scenario, std::string> parse_scenario(std::string_view json_text, std::optional<std::uint64_t> seed = {});
Expected<Scenario, std::string> load_scenario(const std::filesystem::path& path,
                                              std::optional<std::uint64_t> seed = {});

/// Out-and-back day trips of the given length from `base`, departing at
/// `depart_min` minutes after local midnight. Days absent from `km_by_day`
/// stay parked.
RouteScript daily_km_route(const geo::GeoPoint& base, YearMonth month, const std::map<int, double>& km_by_day,
                           int utc_offset_min, int depart_min, std::uint64_t seed);

struct VehicleReport {
    std::uint64_t imei = 0;
    std::string label;
    std::uint64_t produced = 0;
    std::uint64_t acked = 0;
    std::optional<std::uint64_t> stored;  // absent for remote backends
    std::uint64_t buffered = 0;
    std::size_t peak_buffer_bytes = 0;
    std::uint64_t evicted = 0;
    std::uint64_t alerts = 0;
    std::optional<TimestampMs> max_alert_latency_ms;
    double route_km = 0.0;  // ground truth from the trace
};

struct OracleResult {
    std::string name;
    bool pass = true;
    std::string detail;
};

struct ScenarioReport {
    std::string name;
    std::uint64_t seed = 0;
    TimestampMs start = 0;
    TimestampMs end = 0;
    std::uint64_t ticks = 0;
    std::vector<VehicleReport> vehicles;
    std::vector<OracleResult> oracles;
    std::vector<std::string> delivery_log;  // filled when RunOptions::trace_deliveries

    bool passed() const;
};

enum class ScenarioErrorKind { BadConfig, ServerUnreachable, Storage, Tracker };

struct ScenarioError {
    ScenarioErrorKind kind = ScenarioErrorKind::BadConfig;
    std::string message;
};
std::string_view to_string(ScenarioErrorKind k);

struct RunOptions {
    std::filesystem::path data_dir;  // server store for in-process and loopback runs
    bool trace_deliveries = false;
};

Expected<ScenarioReport, ScenarioError> run_scenario(const Scenario& scenario, const RunOptions& options);

/// One row per vehicle.
std::string report_csv(const ScenarioReport& r);
std::string report_summary(const ScenarioReport& r);

}  // namespace radfleet::sim

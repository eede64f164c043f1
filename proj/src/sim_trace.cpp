#include <algorithm>
#include <cmath>
#include <numbers>

#include "radfleet/nmea.hpp"
#include "radfleet/sim.hpp"

namespace radfleet::sim {

namespace {

constexpr double kCornerMinMps = 15.0 / 3.6;
constexpr double kCornerFreeDeg = 15.0;
constexpr double kAltitudeM = 1190.0;

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double gaussian(std::mt19937_64& rng) {
    // Box-Muller; spelled out so traces do not depend on the library's distributions.
    const double u1 = std::max(uniform01(rng), 0x1.0p-53);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double bearing_or(const geo::GeoPoint& a, const geo::GeoPoint& b, double fallback) {
    const auto br = geo::initial_bearing(a, b);
    return br ? *br : fallback;
}

double wrap_pi(double rad) {
    while (rad > std::numbers::pi) rad -= 2.0 * std::numbers::pi;
    while (rad < -std::numbers::pi) rad += 2.0 * std::numbers::pi;
    return rad;
}

}  // namespace

std::string_view to_string(InjectionKind k) {
    switch (k) {
        case InjectionKind::Panic: return "panic";
        case InjectionKind::KeySwipe: return "key";
        case InjectionKind::Jamming: return "jamming";
        case InjectionKind::PowerCut: return "power_cut";
    }
    return "?";
}

Expected<Ok, std::string> validate(const RouteScript& r) {
    if (!geo::is_valid(r.origin)) return fail(std::string("origin out of range"));
    if (!(r.max_accel_mps2 > 0.0) || !(r.max_decel_mps2 > 0.0)) return fail(std::string("accel limits must be > 0"));
    if (r.gps_noise_m < 0.0) return fail(std::string("gps_noise_m must be >= 0"));
    TimestampMs last = r.start;
    for (std::size_t i = 0; i < r.waypoints.size(); ++i) {
        const auto& w = r.waypoints[i];
        const std::string at = "waypoint " + std::to_string(i) + ": ";
        if (!geo::is_valid(w.point)) return fail(at + "point out of range");
        if (!(w.speed_kmh >= 0.0)) return fail(at + "speed must be >= 0");
        if (!(w.dwell_s >= 0.0)) return fail(at + "dwell must be >= 0");
        if (w.depart_at) {
            if (*w.depart_at < last) return fail(at + "depart_at goes back in time");
            last = *w.depart_at;
        }
    }
    for (const auto& e : r.events)
        if ((e.kind == InjectionKind::Jamming || e.kind == InjectionKind::PowerCut) && e.until < e.at)
            return fail(std::string(to_string(e.kind)) + " window ends before it starts");
    const auto& f = r.fuel;
    if (f.idle_lph < 0 || f.per_km_l < 0 || !(f.tank_l > 0) || f.start_pct < 0 || f.start_pct > 100)
        return fail(std::string("fuel model out of range"));
    return Ok{};
}

TraceGenerator::TraceGenerator(RouteScript route, std::uint64_t seed, TimestampMs begin, TimestampMs tick_ms)
    : route_(std::move(route)), rng_(seed), now_(begin), tick_ms_(tick_ms), pos_(route_.origin) {
    fuel_pct_ = route_.fuel.start_pct;
    if (route_.waypoints.empty()) phase_ = Phase::Done;
}

void TraceGenerator::begin_leg() {
    const auto& wp = route_.waypoints[leg_];
    leg_start_ = pos_;
    leg_len_ = geo::haversine_distance(pos_, wp.point);
    leg_bearing_ = bearing_or(pos_, wp.point, heading_);
    leg_pos_ = 0.0;
    phase_ = Phase::Driving;

    const double cruise = wp.speed_kmh / 3.6;
    const bool stops = wp.dwell_s > 0.0 || wp.depart_at || leg_ + 1 == route_.waypoints.size();
    if (stops) {
        exit_speed_ = 0.0;
        return;
    }
    const auto& next = route_.waypoints[leg_ + 1];
    const double arrive_dir = bearing_or(wp.point, leg_start_, leg_bearing_ + 180.0) + 180.0;
    const double turn = geo::heading_difference(arrive_dir, bearing_or(wp.point, next.point, arrive_dir));
    double corner = cruise;
    if (turn > kCornerFreeDeg) corner = std::max(kCornerMinMps, cruise * (1.0 - turn / 180.0));
    exit_speed_ = std::min({cruise, next.speed_kmh / 3.6, corner});
}

void TraceGenerator::arrive() {
    const auto& wp = route_.waypoints[leg_];
    pos_ = wp.point;
    leg_pos_ = leg_len_;
    const bool last = leg_ + 1 == route_.waypoints.size();
    if (wp.dwell_s > 0.0 || wp.depart_at) {
        phase_ = Phase::Dwelling;
        dwell_until_ = now_ + static_cast<TimestampMs>(std::llround(wp.dwell_s * 1000.0));
        if (wp.depart_at) dwell_until_ = std::max(dwell_until_, *wp.depart_at);
        dwell_engine_on_ = !wp.engine_off;
        v_ = 0.0;
        if (wp.engine_off && fuel_pct_ < route_.fuel.refuel_below_pct) fuel_pct_ = 100.0;
    } else if (last) {
        phase_ = Phase::Done;
        v_ = 0.0;
    } else {
        ++leg_;
        begin_leg();
    }
}

double TraceGenerator::drive(double dt) {
    const auto& wp = route_.waypoints[leg_];
    const double cruise = wp.speed_kmh / 3.6;
    const double remaining = leg_len_ - leg_pos_;
    const double cap = std::sqrt(exit_speed_ * exit_speed_ + 2.0 * route_.max_decel_mps2 * remaining);
    const double v_new = std::max(0.0, std::min({cruise, v_ + route_.max_accel_mps2 * dt, cap}));
    double ds = 0.5 * (v_ + v_new) * dt;
    if (remaining <= 0.0 || (ds > 0.0 && ds >= remaining)) {
        ds = std::max(0.0, remaining);
        v_ = std::min(v_new, exit_speed_);
        arrive();
        return ds;
    }
    leg_pos_ += ds;
    if (ds > 0.0) pos_ = geo::destination_point(leg_start_, leg_bearing_, leg_pos_);
    v_ = v_new;
    return ds;
}

TraceTick TraceGenerator::next() {
    const double dt = static_cast<double>(tick_ms_) / 1000.0;
    const geo::GeoPoint before = pos_;
    double ds = 0.0;
    if (!first_ && phase_ == Phase::Driving) ds = drive(dt);
    first_ = false;

    if (phase_ == Phase::Waiting && now_ >= route_.start) {
        leg_ = 0;
        begin_leg();
    }
    if (phase_ == Phase::Dwelling && now_ >= dwell_until_) {
        if (++leg_ < route_.waypoints.size()) begin_leg();
        else phase_ = Phase::Done;
    }

    TraceTick t;
    t.time = now_;
    t.position = pos_;
    const double speed_mps = ds / dt;
    t.speed_kmh = speed_mps * 3.6;
    const double old_heading = heading_;
    if (ds > 0.0) heading_ = bearing_or(before, pos_, heading_);
    t.heading_deg = heading_;
    t.accel_long_mps2 = (speed_mps - prev_speed_mps_) / dt;
    t.accel_lat_mps2 = speed_mps * wrap_pi((heading_ - old_heading) * std::numbers::pi / 180.0) / dt;
    prev_speed_mps_ = speed_mps;

    t.ignition = phase_ == Phase::Driving || (phase_ == Phase::Dwelling && dwell_engine_on_);
    const auto& fm = route_.fuel;
    t.fuel_rate_lph = t.ignition ? fm.idle_lph + fm.per_km_l * t.speed_kmh : 0.0;
    fuel_pct_ = std::max(0.0, fuel_pct_ - t.fuel_rate_lph * dt / 3600.0 / fm.tank_l * 100.0);
    t.fuel_level_pct = fuel_pct_;
    odometer_ += ds;
    t.odometer_m = odometer_;
    t.can_odometer = route_.can_odometer;

    for (const auto& e : route_.events) {
        switch (e.kind) {
            case InjectionKind::Panic:
                if (now_ >= e.at && now_ < e.at + tick_ms_) t.panic = true;
                break;
            case InjectionKind::KeySwipe:
                if (now_ >= e.at && now_ < e.at + tick_ms_) t.key = e.key;
                break;
            case InjectionKind::Jamming:
                if (now_ >= e.at && now_ < e.until) t.jammed = true;
                break;
            case InjectionKind::PowerCut:
                if (now_ >= e.at && now_ < e.until) t.power_cut = true;
                break;
        }
    }

    // Receiver quality and noise are drawn every tick so the stream does not
    // depend on which ticks end up rendered.
    t.satellites = 7 + static_cast<int>(rng_() % 6);
    t.hdop = 0.7 + 0.1 * static_cast<double>(rng_() % 6);
    const double n_m = gaussian(rng_) * route_.gps_noise_m;
    const double e_m = gaussian(rng_) * route_.gps_noise_m;
    t.reported = pos_;
    if (route_.gps_noise_m > 0.0) {
        constexpr double kDegPerRad = 180.0 / std::numbers::pi;
        t.reported.lat = std::clamp(pos_.lat + n_m / geo::kEarthRadiusM * kDegPerRad, -90.0, 90.0);
        const double c = std::max(std::cos(pos_.lat / kDegPerRad), 1e-6);
        t.reported.lon = pos_.lon + e_m / (geo::kEarthRadiusM * c) * kDegPerRad;
        if (t.reported.lon > 180.0) t.reported.lon -= 360.0;
        if (t.reported.lon < -180.0) t.reported.lon += 360.0;
    }

    now_ += tick_ms_;
    return t;
}

std::vector<std::string> nmea_lines(const TraceTick& t) {
    nmea::Fix f;
    f.timestamp_ms = t.time;
    f.lat = t.reported.lat;
    f.lon = t.reported.lon;
    f.speed_kmh = t.speed_kmh;
    f.heading_deg = t.heading_deg;
    f.altitude_m = kAltitudeM;
    f.satellites = t.satellites;
    f.hdop = t.hdop;
    f.valid = true;
    std::vector<std::string> out;
    if (auto rmc = nmea::serialize_rmc(f)) out.push_back(std::move(*rmc));
    if (auto gga = nmea::serialize_gga(f)) out.push_back(std::move(*gga));
    return out;
}

tracker::SensorFrame to_sensor_frame(const TraceTick& t, bool with_nmea) {
    tracker::SensorFrame f;
    f.tick_time = t.time;
    if (with_nmea) f.nmea_lines = nmea_lines(t);
    f.ignition = t.ignition;
    f.accel.x_mg = t.accel_long_mps2 / tracker::kStandardGravityMps2 * 1000.0;
    f.accel.y_mg = t.accel_lat_mps2 / tracker::kStandardGravityMps2 * 1000.0;
    f.accel.z_mg = 1000.0;
    f.fuel_level_pct = t.fuel_level_pct;
    f.fuel_rate_lph = t.fuel_rate_lph;
    if (t.can_odometer) f.can_odometer_m = t.odometer_m;
    f.gsm_jammed = t.jammed;
    f.driver_key = t.key;
    f.panic_button = t.panic;
    f.external_power_v = t.power_cut ? 0.0 : 13.8;
    return f;
}

std::vector<tracker::SensorFrame> generate_trace(const RouteScript& route, std::uint64_t seed, TimestampMs begin,
                                                 TimestampMs end, TimestampMs tick_ms) {
    std::vector<tracker::SensorFrame> out;
    TraceGenerator gen(route, seed, begin, tick_ms);
    for (TimestampMs t = begin; t < end; t += tick_ms) out.push_back(to_sensor_frame(gen.next(), true));
    return out;
}

RouteScript daily_km_route(const geo::GeoPoint& base, YearMonth month, const std::map<int, double>& km_by_day,
                           int utc_offset_min, int depart_min, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    RouteScript r;
    r.origin = base;
    std::vector<std::pair<TimestampMs, double>> days;
    for (const auto& [day, km] : km_by_day) {
        if (km <= 0.0 || day < 1 || day > days_in_month(month.year, month.month)) continue;
        days.emplace_back(local_midnight({month.year, month.month, day}, utc_offset_min) + depart_min * kMsPerMinute,
                          km);
    }
    if (days.empty()) return r;
    r.start = days.front().first;
    for (std::size_t i = 0; i < days.size(); ++i) {
        const double km = days[i].second;
        const double bearing = uniform01(rng) * 360.0;
        const double speed = std::clamp(km / 10.0, 60.0, 110.0);
        Waypoint out;
        out.point = geo::destination_point(base, bearing, km * 500.0);
        out.speed_kmh = speed;
        Waypoint back;
        back.point = base;
        back.speed_kmh = speed;
        if (i + 1 < days.size()) back.depart_at = days[i + 1].first;
        r.waypoints.push_back(out);
        r.waypoints.push_back(back);
    }
    return r;
}

}  // namespace radfleet::sim

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "radfleet/sim.hpp"

namespace radfleet::sim {

namespace {

using json = nlohmann::json;

struct ParseError {
    std::string message;
};

[[noreturn]] void bad(const std::string& msg) { throw ParseError{msg}; }

void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) bad(where + ": expected an object");
    for (const auto& [k, _] : obj.items()) {
        bool known = false;
        for (const char* a : keys) known = known || k == a;
        if (!known) bad(where + ": unknown key '" + k + "'");
    }
}

double number(const json& j, const std::string& where) {
    if (!j.is_number()) bad(where + ": expected a number");
    return j.get<double>();
}

std::uint64_t uint(const json& j, const std::string& where) {
    if (!j.is_number_unsigned()) bad(where + ": expected a non-negative integer");
    return j.get<std::uint64_t>();
}

std::string text(const json& j, const std::string& where) {
    if (!j.is_string()) bad(where + ": expected a string");
    return j.get<std::string>();
}

bool boolean(const json& j, const std::string& where) {
    if (!j.is_boolean()) bad(where + ": expected true or false");
    return j.get<bool>();
}

geo::GeoPoint point(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2) bad(where + ": expected [lat, lon]");
    const geo::GeoPoint p{number(j[0], where), number(j[1], where)};
    if (!geo::is_valid(p)) bad(where + ": coordinates out of range");
    return p;
}

std::pair<double, double> range(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2) bad(where + ": expected [min, max]");
    const double lo = number(j[0], where), hi = number(j[1], where);
    if (hi < lo) bad(where + ": max below min");
    return {lo, hi};
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

struct Ctx {
    TimestampMs start = 0;
    int offset = analytics::kDefaultUtcOffsetMin;
    std::uint64_t seed = 1;

    TimestampMs time(const json& j, const std::string& where) const {
        if (j.is_number_integer()) return j.get<TimestampMs>();
        const std::string s = text(j, where);
        if (!s.empty() && s[0] == '+') return start + duration(s, where);
        if (s.size() == 10) {
            if (const auto t = parse_iso8601(s)) return *t - offset * kMsPerMinute;
        } else if (const auto t = parse_iso8601(s)) {
            return *t;
        }
        bad(where + ": bad time '" + s + "'");
    }

    static TimestampMs duration(const std::string& s, const std::string& where) {
        // "+<n><unit>", unit one of s m h d
        if (s.size() < 3) bad(where + ": bad duration '" + s + "'");
        const char unit = s.back();
        TimestampMs scale = 0;
        switch (unit) {
            case 's': scale = 1000; break;
            case 'm': scale = kMsPerMinute; break;
            case 'h': scale = kMsPerHour; break;
            case 'd': scale = kMsPerDay; break;
            default: bad(where + ": bad duration unit in '" + s + "'");
        }
        double n = 0;
        try {
            std::size_t used = 0;
            n = std::stod(s.substr(1, s.size() - 2), &used);
            if (used != s.size() - 2) bad(where + ": bad duration '" + s + "'");
        } catch (const std::logic_error&) {
            bad(where + ": bad duration '" + s + "'");
        }
        return static_cast<TimestampMs>(std::llround(n * static_cast<double>(scale)));
    }

    Window window(const json& j, const std::string& where) const {
        if (!j.is_array() || j.size() != 2) bad(where + ": expected [from, to]");
        const Window w{time(j[0], where), time(j[1], where)};
        if (w.to < w.from) bad(where + ": window ends before it starts");
        return w;
    }
};

FuelModel parse_fuel(const json& j, const std::string& where) {
    allow_keys(j, where, {"idle_lph", "per_km_l", "tank_l", "start_pct", "refuel_below_pct"});
    FuelModel f;
    if (j.contains("idle_lph")) f.idle_lph = number(j["idle_lph"], where);
    if (j.contains("per_km_l")) f.per_km_l = number(j["per_km_l"], where);
    if (j.contains("tank_l")) f.tank_l = number(j["tank_l"], where);
    if (j.contains("start_pct")) f.start_pct = number(j["start_pct"], where);
    if (j.contains("refuel_below_pct")) f.refuel_below_pct = number(j["refuel_below_pct"], where);
    return f;
}

Injection parse_injection(const json& j, const Ctx& ctx, const std::string& where) {
    allow_keys(j, where, {"kind", "at", "from", "to", "key"});
    Injection e;
    const std::string kind = text(j.value("kind", json()), where + ".kind");
    if (kind == "panic" || kind == "key") {
        e.kind = kind == "panic" ? InjectionKind::Panic : InjectionKind::KeySwipe;
        e.at = ctx.time(j.value("at", json()), where + ".at");
        if (kind == "key") e.key = uint(j.value("key", json()), where + ".key");
    } else if (kind == "jamming" || kind == "power_cut") {
        e.kind = kind == "jamming" ? InjectionKind::Jamming : InjectionKind::PowerCut;
        e.at = ctx.time(j.value("from", json()), where + ".from");
        e.until = ctx.time(j.value("to", json()), where + ".to");
    } else {
        bad(where + ": unknown event kind '" + kind + "'");
    }
    return e;
}

RouteScript parse_route(const json& j, const Ctx& ctx, const std::string& where) {
    allow_keys(j, where,
               {"start", "origin", "waypoints", "fuel", "events", "accel", "decel", "gps_noise_m", "can_odometer"});
    RouteScript r;
    r.start = j.contains("start") ? ctx.time(j["start"], where + ".start") : ctx.start;
    r.origin = point(j.value("origin", json()), where + ".origin");
    if (j.contains("waypoints")) {
        const auto& wps = j["waypoints"];
        if (!wps.is_array()) bad(where + ".waypoints: expected a list");
        for (std::size_t i = 0; i < wps.size(); ++i) {
            const std::string w = where + ".waypoints[" + std::to_string(i) + "]";
            allow_keys(wps[i], w, {"to", "speed_kmh", "dwell_s", "engine_off", "depart_at"});
            Waypoint wp;
            wp.point = point(wps[i].value("to", json()), w + ".to");
            if (wps[i].contains("speed_kmh")) wp.speed_kmh = number(wps[i]["speed_kmh"], w);
            if (wps[i].contains("dwell_s")) wp.dwell_s = number(wps[i]["dwell_s"], w);
            if (wps[i].contains("engine_off")) wp.engine_off = boolean(wps[i]["engine_off"], w);
            if (wps[i].contains("depart_at")) wp.depart_at = ctx.time(wps[i]["depart_at"], w + ".depart_at");
            r.waypoints.push_back(wp);
        }
    }
    if (j.contains("fuel")) r.fuel = parse_fuel(j["fuel"], where + ".fuel");
    if (j.contains("events")) {
        if (!j["events"].is_array()) bad(where + ".events: expected a list");
        for (std::size_t i = 0; i < j["events"].size(); ++i)
            r.events.push_back(parse_injection(j["events"][i], ctx, where + ".events[" + std::to_string(i) + "]"));
    }
    if (j.contains("accel")) r.max_accel_mps2 = number(j["accel"], where);
    if (j.contains("decel")) r.max_decel_mps2 = number(j["decel"], where);
    if (j.contains("gps_noise_m")) r.gps_noise_m = number(j["gps_noise_m"], where);
    if (j.contains("can_odometer")) r.can_odometer = boolean(j["can_odometer"], where);
    if (auto ok = validate(r); !ok) bad(where + ": " + ok.error());
    return r;
}

RouteScript parse_daily_km(const json& j, const Ctx& ctx, std::uint64_t vseed, const std::string& where) {
    allow_keys(j, where, {"month", "base", "depart", "km", "other_days_km"});
    const auto month = parse_year_month(text(j.value("month", json()), where + ".month"));
    if (!month) bad(where + ".month: expected YYYY-MM");
    const auto base = point(j.value("base", json()), where + ".base");
    int depart_min = 7 * 60;
    if (j.contains("depart")) {
        const std::string d = text(j["depart"], where + ".depart");
        int h = 0, m = 0;
        char colon = 0;
        std::istringstream in(d);
        if (!(in >> h >> colon >> m) || colon != ':' || h < 0 || h > 23 || m < 0 || m > 59)
            bad(where + ".depart: expected HH:MM");
        depart_min = h * 60 + m;
    }
    const int ndays = days_in_month(month->year, month->month);
    std::map<int, double> km;
    if (j.contains("km")) {
        if (!j["km"].is_object()) bad(where + ".km: expected {\"<day>\": km}");
        for (const auto& [day, v] : j["km"].items()) {
            int d = 0;
            try {
                d = std::stoi(day);
            } catch (const std::logic_error&) {
                bad(where + ".km: bad day '" + day + "'");
            }
            if (d < 1 || d > ndays) bad(where + ".km: day " + day + " not in month");
            const double k = number(v, where + ".km." + day);
            if (k < 0) bad(where + ".km." + day + ": negative distance");
            km[d] = k;
        }
    }
    if (j.contains("other_days_km")) {
        const auto [lo, hi] = range(j["other_days_km"], where + ".other_days_km");
        std::mt19937_64 rng(mix(vseed ^ 0x6461696C79ULL));
        for (int d = 1; d <= ndays; ++d) {
            const double k = uniform(rng, lo, hi);
            if (!km.count(d)) km[d] = std::round(k);
        }
    }
    auto r = daily_km_route(base, *month, km, ctx.offset, depart_min, mix(vseed ^ 0x726F757465ULL));
    if (r.waypoints.empty()) r.start = ctx.start;
    return r;
}

std::vector<VehicleSpec> parse_fleet(const json& j, const Ctx& ctx, const std::string& where) {
    allow_keys(j, where,
               {"count", "imei_base", "center", "radius_m", "legs", "speed_kmh", "dwell_s", "depart_within",
                "udp_share", "speed_limit_kmh", "gps_noise_m"});
    const auto count = uint(j.value("count", json()), where + ".count");
    const auto imei_base = j.contains("imei_base") ? uint(j["imei_base"], where) : std::uint64_t{356000000000001ULL};
    const auto center = point(j.value("center", json()), where + ".center");
    const double radius = j.contains("radius_m") ? number(j["radius_m"], where) : 10'000.0;
    const auto legs = j.contains("legs") ? uint(j["legs"], where) : 4;
    const auto speed = j.contains("speed_kmh") ? range(j["speed_kmh"], where + ".speed_kmh") : std::pair{30.0, 80.0};
    const auto dwell = j.contains("dwell_s") ? range(j["dwell_s"], where + ".dwell_s") : std::pair{0.0, 300.0};
    const TimestampMs within = j.contains("depart_within") ? ctx.time(j["depart_within"], where) - ctx.start : 0;
    const double udp_share = j.contains("udp_share") ? number(j["udp_share"], where) : 0.0;
    const double noise = j.contains("gps_noise_m") ? number(j["gps_noise_m"], where) : 0.0;
    std::optional<double> limit;
    if (j.contains("speed_limit_kmh")) limit = number(j["speed_limit_kmh"], where);

    std::mt19937_64 rng(mix(ctx.seed ^ 0x666C656574ULL));
    auto random_point = [&] {
        const double r = radius * std::sqrt(uniform(rng, 0.0, 1.0));
        return geo::destination_point(center, uniform(rng, 0.0, 360.0), r);
    };
    std::vector<VehicleSpec> out;
    for (std::uint64_t i = 0; i < count; ++i) {
        VehicleSpec v;
        v.imei = imei_base + i;
        v.label = "F" + std::to_string(i + 1);
        v.speed_limit_kmh = limit;
        v.transport = uniform(rng, 0.0, 1.0) < udp_share ? tracker::Transport::Udp : tracker::Transport::Tcp;
        v.route.origin = random_point();
        v.route.start = ctx.start + static_cast<TimestampMs>(uniform(rng, 0.0, static_cast<double>(within)));
        v.route.gps_noise_m = noise;
        for (std::uint64_t k = 0; k < legs; ++k) {
            Waypoint w;
            w.point = random_point();
            w.speed_kmh = std::round(uniform(rng, speed.first, speed.second));
            w.dwell_s = std::round(uniform(rng, dwell.first, dwell.second));
            w.engine_off = w.dwell_s >= 120.0;
            v.route.waypoints.push_back(w);
        }
        out.push_back(std::move(v));
    }
    return out;
}

Scenario parse(const json& root, std::optional<std::uint64_t> seed_override) {
    allow_keys(root, "scenario",
               {"name", "seed", "start", "end", "tick_ms", "utc_offset", "backend", "network", "zones", "tracker",
                "vehicles", "fleet", "commands", "expect"});
    Scenario sc;
    if (root.contains("name")) sc.name = text(root["name"], "name");
    if (root.contains("seed")) sc.seed = uint(root["seed"], "seed");
    if (seed_override) sc.seed = *seed_override;
    if (root.contains("utc_offset")) {
        const auto off = parse_utc_offset(text(root["utc_offset"], "utc_offset"));
        if (!off) bad("utc_offset: expected +HH:MM");
        sc.utc_offset_min = *off;
    }
    Ctx ctx;
    ctx.offset = sc.utc_offset_min;
    ctx.seed = sc.seed;
    sc.start = ctx.time(root.value("start", json()), "start");
    ctx.start = sc.start;
    sc.end = ctx.time(root.value("end", json()), "end");
    if (sc.end <= sc.start) bad("end: must be after start");
    if (root.contains("tick_ms")) sc.tick_ms = static_cast<TimestampMs>(uint(root["tick_ms"], "tick_ms"));
    if (sc.tick_ms <= 0) bad("tick_ms: must be positive");

    if (root.contains("backend")) {
        const auto& b = root["backend"];
        if (b.is_string()) {
            const auto k = b.get<std::string>();
            if (k == "inprocess") sc.backend.kind = BackendKind::InProcess;
            else if (k == "loopback") sc.backend.kind = BackendKind::Loopback;
            else bad("backend: expected inprocess, loopback or an endpoint object");
        } else {
            allow_keys(b, "backend", {"host", "tcp_port", "udp_port", "http_port"});
            sc.backend.kind = BackendKind::Remote;
            if (b.contains("host")) sc.backend.host = text(b["host"], "backend.host");
            auto port = [&](const char* k, std::uint16_t dflt) {
                if (!b.contains(k)) return dflt;
                const auto p = uint(b[k], std::string("backend.") + k);
                if (p == 0 || p > 65535) bad(std::string("backend.") + k + ": out of range");
                return static_cast<std::uint16_t>(p);
            };
            sc.backend.tcp_port = port("tcp_port", 5027);
            sc.backend.udp_port = port("udp_port", 5028);
            sc.backend.http_port = port("http_port", 8080);
        }
    }

    if (root.contains("network")) {
        const auto& n = root["network"];
        allow_keys(n, "network", {"outages", "latency_ms", "sms_latency_ms", "udp_drop", "seed"});
        if (n.contains("outages")) {
            if (!n["outages"].is_array()) bad("network.outages: expected a list");
            for (const auto& w : n["outages"]) sc.network.outages.push_back(ctx.window(w, "network.outages"));
        }
        if (n.contains("latency_ms")) {
            const auto [lo, hi] = range(n["latency_ms"], "network.latency_ms");
            if (lo < 0) bad("network.latency_ms: negative");
            sc.network.latency_min_ms = static_cast<TimestampMs>(lo);
            sc.network.latency_max_ms = static_cast<TimestampMs>(hi);
        }
        if (n.contains("sms_latency_ms")) {
            const auto [lo, hi] = range(n["sms_latency_ms"], "network.sms_latency_ms");
            if (lo < 0) bad("network.sms_latency_ms: negative");
            sc.network.sms_latency_min_ms = static_cast<TimestampMs>(lo);
            sc.network.sms_latency_max_ms = static_cast<TimestampMs>(hi);
        }
        if (n.contains("udp_drop")) {
            sc.network.udp_drop_probability = number(n["udp_drop"], "network.udp_drop");
            if (sc.network.udp_drop_probability < 0 || sc.network.udp_drop_probability > 1)
                bad("network.udp_drop: expected a probability");
        }
        if (n.contains("seed")) sc.network.seed = uint(n["seed"], "network.seed");
    }

    if (root.contains("zones")) {
        if (!root["zones"].is_array()) bad("zones: expected a list of zone specs");
        for (const auto& z : root["zones"]) sc.zones.push_back(text(z, "zones"));
    }
    if (root.contains("tracker")) {
        if (!root["tracker"].is_object()) bad("tracker: expected an object");
        for (const auto& [k, v] : root["tracker"].items())
            sc.tracker_params[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }

    if (root.contains("vehicles")) {
        const auto& vs = root["vehicles"];
        if (!vs.is_array()) bad("vehicles: expected a list");
        for (std::size_t i = 0; i < vs.size(); ++i) {
            const std::string w = "vehicles[" + std::to_string(i) + "]";
            const auto& vj = vs[i];
            allow_keys(vj, w, {"imei", "label", "phone", "transport", "speed_limit_kmh", "outages", "route", "daily_km"});
            VehicleSpec v;
            v.imei = uint(vj.value("imei", json()), w + ".imei");
            v.label = vj.contains("label") ? text(vj["label"], w) : "V" + std::to_string(i + 1);
            if (vj.contains("phone")) v.phone = text(vj["phone"], w);
            if (vj.contains("transport")) {
                const auto t = text(vj["transport"], w + ".transport");
                if (t == "udp") v.transport = tracker::Transport::Udp;
                else if (t != "tcp") bad(w + ".transport: expected tcp or udp");
            }
            if (vj.contains("speed_limit_kmh")) v.speed_limit_kmh = number(vj["speed_limit_kmh"], w);
            if (vj.contains("outages")) {
                if (!vj["outages"].is_array()) bad(w + ".outages: expected a list");
                for (const auto& o : vj["outages"]) v.outages.push_back(ctx.window(o, w + ".outages"));
            }
            const bool has_route = vj.contains("route"), has_plan = vj.contains("daily_km");
            if (has_route == has_plan) bad(w + ": give exactly one of route or daily_km");
            v.route = has_route ? parse_route(vj["route"], ctx, w + ".route")
                                : parse_daily_km(vj["daily_km"], ctx, mix(sc.seed ^ (i + 1)), w + ".daily_km");
            sc.vehicles.push_back(std::move(v));
        }
    }
    if (root.contains("fleet"))
        for (auto& v : parse_fleet(root["fleet"], ctx, "fleet")) sc.vehicles.push_back(std::move(v));
    if (sc.vehicles.empty()) bad("scenario has no vehicles");

    std::set<std::uint64_t> seen;
    for (std::size_t i = 0; i < sc.vehicles.size(); ++i) {
        auto& v = sc.vehicles[i];
        if (v.imei == 0 || v.imei > wire::kMaxImei) bad("vehicle imei " + std::to_string(v.imei) + " out of range");
        if (!seen.insert(v.imei).second) bad("duplicate vehicle imei " + std::to_string(v.imei));
        if (v.phone.empty()) {
            const std::string n = std::to_string(i + 1);
            v.phone = "+98912" + std::string(n.size() < 7 ? 7 - n.size() : 0, '0') + n;
        }
    }

    if (root.contains("commands")) {
        if (!root["commands"].is_array()) bad("commands: expected a list");
        for (std::size_t i = 0; i < root["commands"].size(); ++i) {
            const auto& c = root["commands"][i];
            const std::string w = "commands[" + std::to_string(i) + "]";
            allow_keys(c, w, {"at", "vehicle", "text"});
            sc.commands.push_back(
                {ctx.time(c.value("at", json()), w + ".at"), uint(c.value("vehicle", json()), w), text(c.value("text", json()), w)});
        }
    }

    if (root.contains("expect")) {
        const auto& e = root["expect"];
        allow_keys(e, "expect", {"full_delivery", "max_buffer_bytes", "daily_km", "overspeed_consistency"});
        if (e.contains("full_delivery")) sc.expect.full_delivery = boolean(e["full_delivery"], "expect.full_delivery");
        if (e.contains("max_buffer_bytes")) sc.expect.max_buffer_bytes = uint(e["max_buffer_bytes"], "expect");
        if (e.contains("overspeed_consistency"))
            sc.expect.overspeed_consistency = boolean(e["overspeed_consistency"], "expect.overspeed_consistency");
        if (e.contains("daily_km")) {
            if (!e["daily_km"].is_array()) bad("expect.daily_km: expected a list");
            for (const auto& d : e["daily_km"]) {
                allow_keys(d, "expect.daily_km", {"vehicle", "date", "km", "tolerance_pct"});
                DailyKmExpectation x;
                x.imei = uint(d.value("vehicle", json()), "expect.daily_km.vehicle");
                const auto day = parse_iso8601(text(d.value("date", json()), "expect.daily_km.date"));
                if (!day) bad("expect.daily_km.date: expected YYYY-MM-DD");
                x.date = civil_from_days(*day / kMsPerDay);
                x.km = number(d.value("km", json()), "expect.daily_km.km");
                if (d.contains("tolerance_pct")) x.tolerance_pct = number(d["tolerance_pct"], "expect.daily_km");
                if (!seen.count(x.imei)) bad("expect.daily_km: unknown vehicle " + std::to_string(x.imei));
                sc.expect.daily_km.push_back(x);
            }
        }
    }
    return sc;
}

std::string opt_text(const std::optional<std::uint64_t>& v) { return v ? std::to_string(*v) : ""; }

}  // namespace

std::string_view to_string(BackendKind k) {
    switch (k) {
        case BackendKind::InProcess: return "inprocess";
        case BackendKind::Loopback: return "loopback";
        case BackendKind::Remote: return "remote";
    }
    return "?";
}

std::string_view to_string(ScenarioErrorKind k) {
    switch (k) {
        case ScenarioErrorKind::BadConfig: return "BadConfig";
        case ScenarioErrorKind::ServerUnreachable: return "ServerUnreachable";
        case ScenarioErrorKind::Storage: return "Storage";
        case ScenarioErrorKind::Tracker: return "Tracker";
    }
    return "?";
}

Expected<Scenario, std::string> parse_scenario(std::string_view json_text, std::optional<std::uint64_t> seed) {
    try {
        return parse(json::parse(json_text), seed);
    } catch (const json::exception& e) {
        return fail(std::string("scenario: ") + e.what());
    } catch (const ParseError& e) {
        return fail("scenario: " + e.message);
    }
}

Expected<Scenario, std::string> load_scenario(const std::filesystem::path& path, std::optional<std::uint64_t> seed) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return fail("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    auto sc = parse_scenario(ss.str(), seed);
    if (!sc) return fail(path.string() + ": " + sc.error());
    return sc;
}

namespace {

analytics::Table vehicle_table(const ScenarioReport& r) {
    analytics::Table t;
    t.header = {"imei",    "label",  "produced", "acked",  "stored",  "buffered", "peak_buffer_bytes",
                "evicted", "alerts", "max_alert_latency_ms", "route_km"};
    for (const auto& v : r.vehicles) {
        const std::optional<std::uint64_t> lat =
            v.max_alert_latency_ms ? std::optional<std::uint64_t>(static_cast<std::uint64_t>(*v.max_alert_latency_ms))
                                   : std::nullopt;
        t.rows.push_back({std::to_string(v.imei), v.label, std::to_string(v.produced), std::to_string(v.acked),
                          opt_text(v.stored), std::to_string(v.buffered), std::to_string(v.peak_buffer_bytes),
                          std::to_string(v.evicted), std::to_string(v.alerts), opt_text(lat),
                          analytics::format_fixed(v.route_km, 3)});
    }
    return t;
}

}  // namespace

std::string report_csv(const ScenarioReport& r) { return analytics::export_csv(vehicle_table(r)); }

std::string report_summary(const ScenarioReport& r) {
    std::ostringstream out;
    out << "scenario " << r.name << " seed " << r.seed << ": " << format_iso8601(r.start) << " .. "
        << format_iso8601(r.end) << ", " << r.ticks << " ticks\n";
    out << analytics::format_text_table(vehicle_table(r));
    for (const auto& o : r.oracles) {
        out << (o.pass ? "PASS " : "FAIL ") << o.name;
        if (!o.detail.empty()) out << "  " << o.detail;
        out << '\n';
    }
    out << (r.passed() ? "all oracles passed" : "oracle violation") << '\n';
    return out.str();
}

}  // namespace radfleet::sim

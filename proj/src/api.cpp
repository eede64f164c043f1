#include "radfleet/api.hpp"

#include <charconv>
#include <limits>

#include "radfleet/json_io.hpp"

namespace radfleet::api {

using json = nlohmann::json;

namespace {

constexpr TimestampMs kMinTime = std::numeric_limits<TimestampMs>::min();
constexpr TimestampMs kMaxTime = std::numeric_limits<TimestampMs>::max();

template <typename T>
std::optional<T> parse_number(std::string_view s) {
    T v{};
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size()) return std::nullopt;
    return v;
}

ApiError bad(std::string msg) { return {400, std::move(msg)}; }

const std::string* get(const Params& p, const char* key) {
    const auto it = p.find(key);
    return it == p.end() || it->second.empty() ? nullptr : &it->second;
}

Expected<std::uint64_t, ApiError> vehicle_param(const server::IngestServer& srv, const Params& p) {
    const auto* v = get(p, "vehicle");
    if (!v) return fail(bad("missing vehicle"));
    const auto imei = parse_number<std::uint64_t>(*v);
    if (!imei) return fail(bad("vehicle must be an IMEI"));
    if (!srv.device(*imei)) return fail(ApiError{404, "unknown vehicle " + *v});
    return *imei;
}

Expected<YearMonth, ApiError> month_param(const Params& p, const char* key) {
    const auto* v = get(p, key);
    if (!v) return fail(bad(std::string("missing ") + key));
    const auto ym = parse_year_month(*v);
    if (!ym) return fail(bad(std::string(key) + " must be YYYY-MM"));
    return *ym;
}

Expected<TimestampMs, ApiError> time_param(const Params& p, const char* key, TimestampMs dflt, int offset) {
    const auto* v = get(p, key);
    if (!v) return dflt;
    const auto t = parse_time_param(*v, offset);
    if (!t) return fail(bad(std::string(key) + ": bad time '" + *v + "'"));
    return *t;
}

Response json_response(const json& j, int status = 200) { return {status, "application/json", j.dump()}; }
Response error_response(const ApiError& e) { return json_response(json{{"error", e.message}}, e.status); }

std::vector<std::string> split_path(std::string_view path) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < path.size()) {
        while (i < path.size() && path[i] == '/') ++i;
        const auto j = path.find('/', i);
        const auto end = j == std::string_view::npos ? path.size() : j;
        if (end > i) out.emplace_back(path.substr(i, end - i));
        i = end;
    }
    return out;
}

json vehicles_json(const server::IngestServer& srv) {
    std::map<std::uint64_t, server::LatestPosition> latest;
    for (auto& p : srv.latest_positions()) latest.emplace(p.device.imei, std::move(p));
    json out = json::array();
    for (const auto& d : srv.devices()) {
        json j = json_io::to_json(d);
        const auto it = latest.find(d.imei);
        if (it != latest.end() && it->second.record) {
            j["position"] = json_io::to_json(*it->second.record);
            j["age_s"] = it->second.age_s;
            j["stale"] = it->second.age_s > srv.config().staleness_s;
        } else {
            j["position"] = nullptr;
            j["age_s"] = nullptr;
            j["stale"] = true;
        }
        out.push_back(std::move(j));
    }
    return out;
}

json nearest_entry(const analytics::NearestEntry& e) {
    return {{"vehicle", e.vehicle}, {"label", e.label}, {"distance_m", e.distance_m}, {"age_s", e.age_s}};
}

json mission_json(const server::IngestServer& srv, const analytics::Mission& m) {
    json j = json_io::to_json(m);
    const auto dev = srv.device(m.vehicle);
    analytics::TripParams tp;
    if (dev) tp.tank_capacity_l = dev->tank_capacity_l;
    const auto records = srv.query_track(m.vehicle, m.start, m.end);
    const auto rep = analytics::mission_report(m, records, tp);
    j["mileage_km"] = rep.mileage_km;
    j["fuel_l"] = rep.fuel_l;
    j["trips"] = rep.trips.size();
    return j;
}

Response handle_get(server::IngestServer& srv, const std::vector<std::string>& parts, const Request& req) {
    const int offset = srv.config().utc_offset_min;
    if (parts.size() == 2 && parts[1] == "vehicles") return json_response(vehicles_json(srv));

    if (parts.size() == 4 && parts[1] == "vehicles" && parts[3] == "track") {
        const auto imei = parse_number<std::uint64_t>(parts[2]);
        if (!imei) return error_response(bad("vehicle must be an IMEI"));
        if (!srv.device(*imei)) return error_response({404, "unknown vehicle " + parts[2]});
        const auto from = time_param(req.query, "from", kMinTime, offset);
        const auto to = time_param(req.query, "to", kMaxTime, offset);
        if (!from) return error_response(from.error());
        if (!to) return error_response(to.error());
        json recs = json::array();
        for (const auto& r : srv.query_track(*imei, *from, *to)) recs.push_back(json_io::to_json(r));
        return json_response({{"imei", *imei}, {"records", recs}});
    }

    if (parts.size() == 2 && parts[1] == "nearest") {
        const auto* lat = get(req.query, "lat");
        const auto* lon = get(req.query, "lon");
        if (!lat || !lon) return error_response(bad("lat and lon are required"));
        const auto la = parse_number<double>(*lat), lo = parse_number<double>(*lon);
        if (!la || !lo || !geo::is_valid({*la, *lo})) return error_response(bad("bad coordinates"));
        std::size_t limit = 10;
        if (const auto* l = get(req.query, "limit")) {
            const auto v = parse_number<std::size_t>(*l);
            if (!v) return error_response(bad("limit must be a non-negative integer"));
            limit = *v;
        }
        const auto res = nearest(srv, {*la, *lo}, limit);
        json ranked = json::array(), stale = json::array();
        for (const auto& e : res.ranked) ranked.push_back(nearest_entry(e));
        for (const auto& e : res.stale) stale.push_back(nearest_entry(e));
        return json_response({{"ranked", ranked}, {"stale", stale}});
    }

    if (parts.size() == 3 && parts[1] == "reports") {
        const auto table = report_table(srv, parts[2], req.query);
        if (!table) return error_response(table.error());
        const auto* fmt = get(req.query, "format");
        if (fmt && *fmt == "csv") return {200, "text/csv; charset=utf-8", analytics::export_csv(*table)};
        return json_response(json_io::to_json(*table));
    }

    if (parts.size() == 2 && parts[1] == "missions") {
        json out = json::array();
        for (const auto& m : srv.missions()) out.push_back(mission_json(srv, m));
        return json_response(out);
    }

    if (parts.size() == 2 && parts[1] == "alerts") {
        const auto since = time_param(req.query, "since", 0, offset);
        if (!since) return error_response(since.error());
        json out = json::array();
        for (const auto& a : srv.alerts(*since)) out.push_back(json_io::to_json(a));
        return json_response(out);
    }

    if (parts.size() == 2 && parts[1] == "commands") {
        std::optional<std::uint64_t> imei;
        if (const auto* v = get(req.query, "vehicle")) {
            imei = parse_number<std::uint64_t>(*v);
            if (!imei) return error_response(bad("vehicle must be an IMEI"));
        }
        json out = json::array();
        for (const auto& t : srv.commands(imei)) out.push_back(json_io::to_json(t));
        return json_response(out);
    }

    if (parts.size() == 3 && parts[1] == "commands") {
        const auto id = parse_number<std::uint32_t>(parts[2]);
        const auto t = id ? srv.command(*id) : std::nullopt;
        if (!t) return error_response({404, "unknown command"});
        return json_response(json_io::to_json(*t));
    }

    if (parts.size() == 2 && parts[1] == "stats") {
        const auto s = srv.stats();
        return json_response({{"stored_records", s.stored_records},
                              {"duplicates", s.duplicates},
                              {"tampers", s.tampers},
                              {"rejected_logins", s.rejected_logins},
                              {"subscribers", s.subscribers}});
    }
    return error_response({404, "no such endpoint"});
}

Response handle_post(server::IngestServer& srv, const std::vector<std::string>& parts, const Request& req) {
    json body;
    try {
        body = json::parse(req.body);
    } catch (const json::exception&) {
        return error_response(bad("body must be JSON"));
    }
    if (parts.size() == 2 && parts[1] == "missions") {
        analytics::Mission m;
        try {
            m = json_io::mission_from_json(body);
        } catch (const json::exception& e) {
            return error_response(bad(std::string("mission: ") + e.what()));
        }
        const auto created = srv.create_mission(m);
        if (!created) {
            switch (created.error()) {
                case server::MissionError::UnknownDevice: return error_response({404, "unknown vehicle"});
                case server::MissionError::BadWindow: return error_response(bad("end must be after start"));
                case server::MissionError::Overlap: return error_response({409, "overlaps an existing mission"});
            }
        }
        return json_response(mission_json(srv, *created), 201);
    }
    if (parts.size() == 2 && parts[1] == "commands") {
        if (!body.is_object() || !body.contains("vehicle") || !body.contains("command"))
            return error_response(bad("vehicle and command are required"));
        std::uint64_t imei = 0;
        std::string text;
        try {
            imei = body["vehicle"].is_string() ? parse_number<std::uint64_t>(body["vehicle"].get<std::string>()).value_or(0)
                                               : body["vehicle"].get<std::uint64_t>();
            text = body["command"].get<std::string>();
        } catch (const json::exception&) {
            return error_response(bad("vehicle must be an IMEI and command a string"));
        }
        const auto t = srv.send_command(imei, text);
        if (!t) {
            switch (t.error()) {
                case server::CommandError::UnknownDevice: return error_response({404, "unknown vehicle"});
                case server::CommandError::BadCommand: return error_response(bad("bad command '" + text + "'"));
                case server::CommandError::NoRoute:
                    return error_response({503, "no route: device offline and SMS unavailable"});
            }
        }
        return json_response(json_io::to_json(*t), 202);
    }
    return error_response({404, "no such endpoint"});
}

}  // namespace

std::optional<TimestampMs> parse_time_param(std::string_view text, int utc_offset_min) {
    if (const auto ms = parse_number<TimestampMs>(text)) return ms;
    const auto t = parse_iso8601(text);
    if (!t) return std::nullopt;
    return text.size() == 10 ? *t - utc_offset_min * kMsPerMinute : *t;
}

double odometer_km(std::span<const wire::TelemetryRecord> records) {
    std::uint32_t can = 0;
    for (const auto& r : records) can = std::max(can, r.odometer_m);
    return can > 0 ? can / 1000.0 : analytics::path_length_m(records) / 1000.0;
}

analytics::NearestResult nearest(const server::IngestServer& srv, const geo::GeoPoint& point, std::size_t limit) {
    std::vector<analytics::VehiclePosition> fleet;
    for (const auto& p : srv.latest_positions())
        if (p.record) fleet.push_back({p.device.imei, p.device.label, {p.record->lat(), p.record->lon()}, p.record->time()});
    return analytics::nearest_vehicles(point, fleet, limit, srv.now(), srv.config().staleness_s);
}

Expected<analytics::Table, ApiError> report_table(const server::IngestServer& srv, std::string_view kind,
                                                  const Params& params) {
    const int offset = srv.config().utc_offset_min;
    if (kind == "mission") {
        const auto* id = get(params, "id");
        const auto n = id ? parse_number<std::uint64_t>(*id) : std::nullopt;
        if (!n) return fail(bad("mission report needs a numeric id"));
        for (const auto& m : srv.missions()) {
            if (m.id != *n) continue;
            analytics::TripParams tp;
            if (const auto d = srv.device(m.vehicle)) tp.tank_capacity_l = d->tank_capacity_l;
            const auto recs = srv.query_track(m.vehicle, m.start, m.end);
            return analytics::mission_table(m, analytics::mission_report(m, recs, tp));
        }
        return fail(ApiError{404, "unknown mission " + *id});
    }

    const auto imei = vehicle_param(srv, params);
    if (!imei) return fail(imei.error());
    const auto dev = *srv.device(*imei);
    const double tank = dev.tank_capacity_l;

    if (kind == "daily") {
        const auto m = month_param(params, "month");
        if (!m) return fail(m.error());
        const auto recs = srv.all_records(*imei);
        return analytics::daily_table(analytics::daily_mileage(recs, *m, offset, tank));
    }
    if (kind == "monthly") {
        const auto from = month_param(params, "from");
        const auto to = month_param(params, "to");
        if (!from) return fail(from.error());
        if (!to) return fail(to.error());
        if (*to < *from) return fail(bad("to is before from"));
        const auto recs = srv.all_records(*imei);
        return analytics::monthly_table(analytics::monthly_report(recs, *from, *to, offset, tank));
    }
    if (kind == "compare") {
        const auto a = month_param(params, "monthA");
        const auto b = month_param(params, "monthB");
        if (!a) return fail(a.error());
        if (!b) return fail(b.error());
        const auto recs = srv.all_records(*imei);
        return analytics::compare_table(analytics::compare_months(recs, *a, *b, offset, tank));
    }
    if (kind == "maintenance") {
        const auto recs = srv.all_records(*imei);
        return analytics::maintenance_table(
            analytics::maintenance_due(*imei, dev.vehicle_class, odometer_km(recs), srv.config().maintenance));
    }

    const auto from = time_param(params, "from", kMinTime, offset);
    const auto to = time_param(params, "to", kMaxTime, offset);
    if (!from) return fail(from.error());
    if (!to) return fail(to.error());
    const auto recs = srv.query_track(*imei, *from, *to);

    if (kind == "fuel-by-speed") return analytics::fuel_by_speed_table(analytics::fuel_by_speed(recs));
    if (kind == "trips" || kind == "stops") {
        analytics::TripParams tp;
        tp.tank_capacity_l = tank;
        const auto seg = analytics::segment_trips(*imei, recs, tp, srv.config().zones);
        if (!seg) return fail(ApiError{500, std::string(analytics::to_string(seg.error()))});
        return kind == "trips" ? analytics::trips_table(seg->trips) : analytics::stops_table(seg->stops);
    }
    if (kind == "overspeed") {
        double limit = dev.speed_limit_kmh.value_or(90.0);
        if (const auto* l = get(params, "limit")) {
            const auto v = parse_number<double>(*l);
            if (!v || *v < 0) return fail(bad("limit must be a non-negative number"));
            limit = *v;
        }
        return analytics::overspeed_table(analytics::overspeed_report(recs, limit));
    }
    return fail(ApiError{404, "unknown report '" + std::string(kind) + "'"});
}

Response handle(server::IngestServer& srv, const Request& req) {
    const auto parts = split_path(req.path);
    if (parts.empty() || parts[0] != "api") return error_response({404, "no such endpoint"});
    if (req.method == "GET") return handle_get(srv, parts, req);
    if (req.method == "POST") return handle_post(srv, parts, req);
    return error_response({405, "method not allowed"});
}

}  // namespace radfleet::api

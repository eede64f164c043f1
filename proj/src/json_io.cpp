#include "radfleet/json_io.hpp"

#include <charconv>

namespace radfleet::json_io {

json to_json(const store::DeviceInfo& d) {
    json j = {{"imei", d.imei},       {"label", d.label},
              {"enabled", d.enabled}, {"created_at", d.created_at},
              {"phone", d.phone},     {"vehicle_class", d.vehicle_class},
              {"tank_capacity_l", d.tank_capacity_l}};
    j["speed_limit_kmh"] = d.speed_limit_kmh ? json(*d.speed_limit_kmh) : json(nullptr);
    return j;
}

store::DeviceInfo device_from_json(const json& j) {
    store::DeviceInfo d;
    d.imei = j.at("imei").get<std::uint64_t>();
    d.label = j.value("label", "");
    d.enabled = j.value("enabled", true);
    d.created_at = j.value("created_at", TimestampMs{0});
    d.phone = j.value("phone", "");
    d.vehicle_class = j.value("vehicle_class", "");
    d.tank_capacity_l = j.value("tank_capacity_l", 60.0);
    if (j.contains("speed_limit_kmh") && !j["speed_limit_kmh"].is_null())
        d.speed_limit_kmh = j["speed_limit_kmh"].get<double>();
    return d;
}

json to_json(const wire::TelemetryRecord& r) {
    return {{"seq", r.seq},
            {"time", format_iso8601(r.time())},
            {"timestamp_ms", r.time()},
            {"fix_valid", r.fix_valid()},
            {"ignition", r.ignition()},
            {"priority", r.priority()},
            {"buffered", (r.flags & wire::flags::kBufferedReplay) != 0},
            {"lat", r.lat()},
            {"lon", r.lon()},
            {"altitude_m", r.altitude_m},
            {"heading_deg", r.heading_deg()},
            {"speed_kmh", r.speed_kmh()},
            {"satellites", r.satellites},
            {"hdop", r.hdop()},
            {"event", std::string(wire::to_string(r.event()))},
            {"digital_in", r.digital_in},
            {"digital_out", r.digital_out},
            {"fuel_level_pct", r.fuel_level_pct()},
            {"fuel_rate_lph", r.fuel_rate_lph()},
            {"odometer_m", r.odometer_m},
            {"battery_mv", r.battery_mv},
            {"geofence_id", r.geofence_id}};
}

json to_json(const server::Alert& a) {
    json j = {{"id", a.id},
              {"imei", a.imei},
              {"kind", a.kind},
              {"time", format_iso8601(a.time)},
              {"received_at", format_iso8601(a.received_at)},
              {"received_at_ms", a.received_at},
              {"lat", a.position.lat},
              {"lon", a.position.lon},
              {"detail", a.detail}};
    j["seq"] = a.seq ? json(*a.seq) : json(nullptr);
    return j;
}

json to_json(const server::CommandTicket& t) {
    return {{"id", t.id},
            {"imei", t.imei},
            {"text", t.text},
            {"state", std::string(server::to_string(t.state))},
            {"channel", std::string(server::to_string(t.channel))},
            {"created_at", format_iso8601(t.created_at)},
            {"updated_at", format_iso8601(t.updated_at)},
            {"reply", t.reply}};
}

json to_json(const analytics::Mission& m) {
    return {{"id", m.id},
            {"vehicle", m.vehicle},
            {"driver", m.driver},
            {"purpose", m.purpose},
            {"start", format_iso8601(m.start)},
            {"end", format_iso8601(m.end)}};
}

analytics::Mission mission_from_json(const json& j) {
    analytics::Mission m;
    m.id = j.value("id", std::uint64_t{0});
    m.vehicle = j.at("vehicle").get<std::uint64_t>();
    m.driver = j.value("driver", "");
    m.purpose = j.value("purpose", "");
    auto time_of = [&](const char* key) {
        const auto& v = j.at(key);
        if (v.is_number()) return v.get<TimestampMs>();
        const auto t = parse_iso8601(v.get<std::string>());
        if (!t) throw json::other_error::create(501, std::string("bad time in ") + key, &v);
        return *t;
    };
    m.start = time_of("start");
    m.end = time_of("end");
    return m;
}

json to_json(const server::LatestPosition& p) {
    json j = {{"imei", p.device.imei}, {"label", p.device.label}};
    if (p.record) {
        j["position"] = to_json(*p.record);
        j["age_s"] = p.age_s;
    } else {
        j["position"] = nullptr;
        j["age_s"] = nullptr;
    }
    return j;
}

json to_json(const analytics::Table& t) {
    json rows = json::array();
    for (const auto& row : t.rows) {
        json o = json::object();
        for (std::size_t i = 0; i < t.header.size() && i < row.size(); ++i) {
            const auto& cell = row[i];
            double v = 0;
            const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty()) o[t.header[i]] = nullptr;
            else if (ec == std::errc{} && end == cell.data() + cell.size()) o[t.header[i]] = v;
            else o[t.header[i]] = cell;
        }
        rows.push_back(std::move(o));
    }
    return {{"columns", t.header}, {"rows", rows}};
}

}  // namespace radfleet::json_io

#include "radfleet/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace radfleet::analytics {

namespace {

geo::GeoPoint point_of(const wire::TelemetryRecord& r) { return {r.lat(), r.lon()}; }

double hours_between(TimestampMs a, TimestampMs b) { return static_cast<double>(b - a) / 3'600'000.0; }

bool halted(const wire::TelemetryRecord& r, const TripParams& p) {
    return r.speed_kmh() < p.stop_speed_kmh || !r.ignition();
}

FuelMethod pick_method(Records records) {
    const bool any_rate = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.fuel_rate_dlph > 0; });
    return any_rate ? FuelMethod::RateIntegration : FuelMethod::LevelDrop;
}

FuelResult fuel_with_method(Records records, FuelMethod method, double tank_capacity_l) {
    FuelResult out;
    out.method = method;
    if (records.size() < 2) return out;
    if (method == FuelMethod::RateIntegration) {
        for (std::size_t i = 0; i + 1 < records.size(); ++i)
            out.liters += records[i].fuel_rate_lph() * hours_between(records[i].time(), records[i + 1].time());
        return out;
    }
    double drop_pct = 0.0;
    for (std::size_t i = 0; i + 1 < records.size(); ++i) {
        const double d = records[i + 1].fuel_level_pct() - records[i].fuel_level_pct();
        if (d < 0) drop_pct -= d;
        else if (d > kRefuelThresholdPct) ++out.refuel_events;
    }
    out.liters = drop_pct / 100.0 * tank_capacity_l;
    return out;
}

// [first, last) indices of records with begin <= t < end; records time-ordered.
Records window(Records records, TimestampMs begin, TimestampMs end) {
    const auto lo = std::lower_bound(records.begin(), records.end(), begin,
                                     [](const auto& r, TimestampMs t) { return r.time() < t; });
    const auto hi = std::lower_bound(lo, records.end(), end, [](const auto& r, TimestampMs t) { return r.time() < t; });
    return records.subspan(static_cast<std::size_t>(lo - records.begin()), static_cast<std::size_t>(hi - lo));
}

std::vector<std::uint16_t> route_signature(Records records, std::span<const geo::GeofenceZone> zones) {
    std::vector<std::uint16_t> sig;
    if (zones.empty()) return sig;
    std::vector<bool> inside(zones.size(), false);
    for (const auto& r : records) {
        if (!r.fix_valid()) continue;
        const auto p = point_of(r);
        for (std::size_t z = 0; z < zones.size(); ++z) {
            const bool now_in = zones[z].contains(p);
            if (now_in && !inside[z]) sig.push_back(zones[z].id());
            inside[z] = now_in;
        }
    }
    return sig;
}

}  // namespace

std::string_view to_string(AnalyticsError e) {
    switch (e) {
        case AnalyticsError::UnorderedInput: return "UnorderedInput";
        case AnalyticsError::NoFuelData: return "NoFuelData";
    }
    return "?";
}

std::string_view to_string(FuelMethod m) {
    return m == FuelMethod::RateIntegration ? "RateIntegration" : "LevelDrop";
}

std::string_view to_string(MaintenanceState s) {
    switch (s) {
        case MaintenanceState::Ok: return "OK";
        case MaintenanceState::Warn: return "Warn";
        case MaintenanceState::Due: return "Due";
    }
    return "?";
}

double path_length_m(Records records) {
    double total = 0.0;
    const wire::TelemetryRecord* prev = nullptr;
    for (const auto& r : records) {
        if (!r.fix_valid()) continue;
        if (prev) total += geo::haversine_distance(point_of(*prev), point_of(r));
        prev = &r;
    }
    return total;
}

// ---- trips ----------------------------------------------------------------------

Expected<Segmentation, AnalyticsError> segment_trips(std::uint64_t vehicle, Records records, const TripParams& p,
                                                     std::span<const geo::GeofenceZone> zones) {
    for (std::size_t i = 1; i < records.size(); ++i)
        if (records[i].time() < records[i - 1].time()) return fail(AnalyticsError::UnorderedInput);

    Segmentation seg;
    const std::size_t n = records.size();
    if (n == 0) return seg;

    // Stops as inclusive index ranges.
    std::vector<std::pair<std::size_t, std::size_t>> stops;
    for (std::size_t a = 0; a < n;) {
        if (!halted(records[a], p)) {
            ++a;
            continue;
        }
        std::size_t b = a;
        while (b + 1 < n && halted(records[b + 1], p)) ++b;

        const double dur_s = static_cast<double>(records[b].time() - records[a].time()) / 1000.0;
        double ign_off_s = 0.0;
        for (std::size_t c = a; c <= b;) {
            if (records[c].ignition()) {
                ++c;
                continue;
            }
            std::size_t d = c;
            while (d + 1 <= b && !records[d + 1].ignition()) ++d;
            const std::size_t seen_on = std::min(d + 1, b);
            ign_off_s = std::max(ign_off_s, static_cast<double>(records[seen_on].time() - records[c].time()) / 1000.0);
            c = d + 1;
        }
        if (dur_s >= p.min_stop_s || ign_off_s >= p.ignition_stop_s) stops.emplace_back(a, b);
        a = b + 1;
    }

    auto add_trip = [&](std::size_t s, std::size_t e) {
        if (e <= s) return;
        const Records members = records.subspan(s, e - s + 1);
        const double meters = path_length_m(members);
        if (meters < p.min_trip_dist_m) {
            seg.short_movement_m += meters;
            return;
        }
        Trip t;
        t.vehicle = vehicle;
        t.start_time = members.front().time();
        t.end_time = members.back().time();
        const auto first_valid = std::find_if(members.begin(), members.end(), [](const auto& r) { return r.fix_valid(); });
        const auto last_valid =
            std::find_if(members.rbegin(), members.rend(), [](const auto& r) { return r.fix_valid(); });
        t.start = point_of(*first_valid);
        t.end = point_of(*last_valid);
        t.distance_km = std::round(meters) / 1000.0;
        t.fuel_used_l = fuel_with_method(members, pick_method(members), p.tank_capacity_l).liters;
        for (const auto& r : members)
            if (r.fix_valid()) t.max_speed_kmh = std::max(t.max_speed_kmh, r.speed_kmh());
        t.avg_speed_kmh = speed_stats(members).avg_kmh;
        t.route_signature = route_signature(members, zones);
        seg.trips.push_back(std::move(t));
    };

    std::size_t cursor = 0;
    for (const auto& [a, b] : stops) {
        add_trip(cursor, a);
        seg.short_movement_m += path_length_m(records.subspan(a, b - a + 1));
        seg.stops.push_back({vehicle, point_of(records[a]), records[a].time(),
                             static_cast<double>(records[b].time() - records[a].time()) / 1000.0});
        cursor = b;
    }
    add_trip(cursor, n - 1);
    return seg;
}

// ---- fuel -----------------------------------------------------------------------

Expected<FuelResult, AnalyticsError> fuel_consumption(Records records, double tank_capacity_l) {
    const bool any_rate = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.fuel_rate_dlph > 0; });
    const bool any_level =
        std::any_of(records.begin(), records.end(), [](const auto& r) { return r.fuel_level_dpct > 0; });
    if (!any_rate && !any_level) return fail(AnalyticsError::NoFuelData);
    return fuel_with_method(records, any_rate ? FuelMethod::RateIntegration : FuelMethod::LevelDrop, tank_capacity_l);
}

// ---- mileage reports ------------------------------------------------------------

std::vector<DayRow> daily_mileage(Records records, YearMonth month, int utc_offset_min, double tank_capacity_l) {
    const FuelMethod method = pick_method(records);
    std::vector<DayRow> rows;
    const int days = days_in_month(month.year, month.month);
    for (int d = 1; d <= days; ++d) {
        const CivilDate day{month.year, month.month, d};
        const CivilDate next = civil_from_days(days_from_civil(day) + 1);
        const Records w = window(records, local_midnight(day, utc_offset_min), local_midnight(next, utc_offset_min));
        rows.push_back({day, path_length_m(w) / 1000.0, fuel_with_method(w, method, tank_capacity_l).liters});
    }
    return rows;
}

std::vector<MonthRow> monthly_report(Records records, YearMonth from, YearMonth to, int utc_offset_min,
                                     double tank_capacity_l) {
    std::vector<MonthRow> out;
    for (YearMonth m = from; m <= to; m = m.next()) {
        MonthRow row{m, 0.0, 0.0};
        for (const auto& d : daily_mileage(records, m, utc_offset_min, tank_capacity_l)) {
            row.km += d.km;
            row.liters += d.liters;
        }
        out.push_back(row);
    }
    return out;
}

std::vector<CompareRow> compare_months(Records records, YearMonth a, YearMonth b, int utc_offset_min,
                                       double tank_capacity_l) {
    const auto da = daily_mileage(records, a, utc_offset_min, tank_capacity_l);
    const auto db = daily_mileage(records, b, utc_offset_min, tank_capacity_l);
    std::vector<CompareRow> out;
    for (std::size_t i = 0; i < std::max(da.size(), db.size()); ++i) {
        CompareRow row;
        row.day_of_month = static_cast<int>(i) + 1;
        if (i < da.size()) {
            row.km_a = da[i].km;
            row.liters_a = da[i].liters;
        }
        if (i < db.size()) {
            row.km_b = db[i].km;
            row.liters_b = db[i].liters;
        }
        out.push_back(row);
    }
    return out;
}

// ---- fleet position queries -----------------------------------------------------

NearestResult nearest_vehicles(const geo::GeoPoint& point, std::span<const VehiclePosition> fleet, std::size_t limit,
                               TimestampMs now, double staleness_max_s) {
    NearestResult out;
    for (const auto& v : fleet) {
        NearestEntry e{v.vehicle, v.label, geo::haversine_distance(point, v.position),
                       static_cast<double>(now - v.time) / 1000.0};
        (e.age_s > staleness_max_s ? out.stale : out.ranked).push_back(std::move(e));
    }
    auto by_distance = [](const NearestEntry& a, const NearestEntry& b) {
        return a.distance_m != b.distance_m ? a.distance_m < b.distance_m : a.vehicle < b.vehicle;
    };
    std::sort(out.ranked.begin(), out.ranked.end(), by_distance);
    std::sort(out.stale.begin(), out.stale.end(), by_distance);
    if (out.ranked.size() > limit) out.ranked.resize(limit);
    return out;
}

// ---- driving behavior -----------------------------------------------------------

SpeedStats speed_stats(Records records) {
    SpeedStats s;
    double weight = 0.0, weighted = 0.0;
    const wire::TelemetryRecord* prev = nullptr;
    for (const auto& r : records) {
        if (!r.fix_valid()) continue;
        s.max_kmh = std::max(s.max_kmh, r.speed_kmh());
        if (prev && prev->speed_kmh() >= kMovingSpeedKmh) {
            const double dt = static_cast<double>(r.time() - prev->time());
            weight += dt;
            weighted += dt * prev->speed_kmh();
        }
        prev = &r;
    }
    s.avg_kmh = weight > 0 ? weighted / weight : 0.0;
    return s;
}

std::vector<Violation> overspeed_report(Records records, double limit_kmh) {
    std::vector<Violation> out;
    std::optional<Violation> cur;
    TimestampMs last_in_run = 0;
    for (const auto& r : records) {
        if (!r.fix_valid()) continue;
        if (r.speed_kmh() > limit_kmh) {
            if (!cur) cur = Violation{r.time(), 0.0, 0.0};
            cur->peak_kmh = std::max(cur->peak_kmh, r.speed_kmh());
            last_in_run = r.time();
        } else if (cur) {
            cur->duration_s = static_cast<double>(r.time() - cur->start) / 1000.0;
            out.push_back(*cur);
            cur.reset();
        }
    }
    if (cur) {
        cur->duration_s = static_cast<double>(last_in_run - cur->start) / 1000.0;
        out.push_back(*cur);
    }
    return out;
}

std::vector<SpeedBinRow> fuel_by_speed(Records records) {
    constexpr int bins = kSpeedBinTop / kSpeedBinWidth + 1;
    std::vector<SpeedBinRow> rows(bins);
    for (int b = 0; b < bins; ++b) {
        rows[b].lower_kmh = b * kSpeedBinWidth;
        if (b + 1 < bins) rows[b].upper_kmh = (b + 1) * kSpeedBinWidth;
    }
    const wire::TelemetryRecord* prev = nullptr;
    for (const auto& r : records) {
        if (!r.fix_valid()) continue;
        if (prev && prev->speed_kmh() >= kMovingSpeedKmh) {
            const int b = std::min(static_cast<int>(prev->speed_kmh() / kSpeedBinWidth), bins - 1);
            rows[b].km += geo::haversine_distance(point_of(*prev), point_of(r)) / 1000.0;
            rows[b].liters += prev->fuel_rate_lph() * hours_between(prev->time(), r.time());
        }
        prev = &r;
    }
    for (auto& row : rows)
        if (row.km >= 1.0) row.l_per_100km = row.liters / row.km * 100.0;
    return rows;
}

std::vector<RouteRank> route_fuel_ranking(std::span<const Trip> trips, std::uint16_t origin_zone,
                                          std::uint16_t dest_zone) {
    struct Acc {
        std::size_t n = 0;
        double l100 = 0.0;
        double dur = 0.0;
    };
    std::map<std::vector<std::uint16_t>, Acc> groups;
    for (const auto& t : trips) {
        if (t.route_signature.empty() || t.distance_km <= 0) continue;
        if (t.route_signature.front() != origin_zone || t.route_signature.back() != dest_zone) continue;
        auto& g = groups[t.route_signature];
        ++g.n;
        g.l100 += t.fuel_used_l / t.distance_km * 100.0;
        g.dur += static_cast<double>(t.end_time - t.start_time) / 1000.0;
    }
    std::vector<RouteRank> out;
    for (const auto& [sig, g] : groups)
        out.push_back({sig, g.n, g.l100 / static_cast<double>(g.n), g.dur / static_cast<double>(g.n)});
    std::stable_sort(out.begin(), out.end(), [](const RouteRank& a, const RouteRank& b) {
        if (a.mean_l_per_100km != b.mean_l_per_100km) return a.mean_l_per_100km < b.mean_l_per_100km;
        return a.mean_duration_s < b.mean_duration_s;
    });
    return out;
}

EcoScore eco_score(Records records) {
    EcoScore e;
    for (const auto& r : records) {
        const auto c = r.event();
        if (c == wire::EventCode::HarshAccel || c == wire::EventCode::HarshBrake || c == wire::EventCode::HarshCorner)
            ++e.harsh_events;
    }
    e.km = path_length_m(records) / 1000.0;
    if (e.km > 0) e.score = std::max(0.0, 10.0 - e.harsh_events / e.km * 100.0);
    return e;
}

// ---- maintenance ----------------------------------------------------------------

std::vector<MaintenanceStatus> maintenance_due(std::uint64_t vehicle, std::string_view vehicle_class,
                                               double odometer_km, std::span<const MaintenanceItem> items) {
    auto has_override = [&](const std::string& name) {
        return std::any_of(items.begin(), items.end(),
                           [&](const MaintenanceItem& i) { return i.vehicle == vehicle && i.name == name; });
    };
    std::vector<MaintenanceStatus> out;
    for (const auto& item : items) {
        const bool mine = item.vehicle == vehicle;
        const bool by_class = !item.vehicle && !item.vehicle_class.empty() && item.vehicle_class == vehicle_class &&
                              !has_override(item.name);
        if (!mine && !by_class) continue;
        const double used = odometer_km - item.last_service_odometer_km;
        MaintenanceStatus s{item.name, item.interval_km - used, MaintenanceState::Ok};
        if (used >= item.interval_km) s.state = MaintenanceState::Due;
        else if (used >= item.warn_fraction * item.interval_km) s.state = MaintenanceState::Warn;
        out.push_back(std::move(s));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    return out;
}

// ---- missions -------------------------------------------------------------------

bool missions_overlap(const Mission& a, const Mission& b) {
    return a.vehicle == b.vehicle && a.start < b.end && b.start < a.end;
}

MissionReport mission_report(const Mission& mission, Records records, const TripParams& params) {
    MissionReport r;
    const Records w = window(records, mission.start, mission.end);
    r.mileage_km = path_length_m(w) / 1000.0;
    if (const auto f = fuel_consumption(w, params.tank_capacity_l)) r.fuel_l = f->liters;
    if (auto seg = segment_trips(mission.vehicle, w, params)) r.trips = std::move(seg->trips);
    return r;
}

// ---- tables and CSV ---------------------------------------------------------------

std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string s = buf;
    if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

std::string export_csv(const Table& t) {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            const auto& c = cells[i];
            if (c.find_first_of(",\"\r\n") == std::string::npos) {
                out += c;
                continue;
            }
            out += '"';
            for (char ch : c) {
                if (ch == '"') out += '"';
                out += ch;
            }
            out += '"';
        }
        out += "\r\n";
    };
    line(t.header);
    for (const auto& r : t.rows) line(r);
    return out;
}

std::string format_text_table(const Table& t) {
    std::vector<std::size_t> width(t.header.size(), 0);
    auto measure = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size() && i < width.size(); ++i) width[i] = std::max(width[i], cells[i].size());
    };
    measure(t.header);
    for (const auto& r : t.rows) measure(r);
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
        std::string l;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) l += "  ";
            l += cells[i];
            if (i + 1 < cells.size() && i < width.size()) l.append(width[i] - cells[i].size(), ' ');
        }
        out += l + "\n";
    };
    line(t.header);
    for (const auto& r : t.rows) line(r);
    return out;
}

Table daily_table(std::span<const DayRow> rows) {
    Table t{{"date", "km", "liters"}, {}};
    for (const auto& r : rows) t.rows.push_back({format_date(r.day), format_fixed(r.km, 3), format_fixed(r.liters, 3)});
    return t;
}

Table monthly_table(std::span<const MonthRow> rows) {
    Table t{{"month", "km", "liters"}, {}};
    for (const auto& r : rows)
        t.rows.push_back({format_year_month(r.month), format_fixed(r.km, 3), format_fixed(r.liters, 3)});
    return t;
}

Table compare_table(std::span<const CompareRow> rows) {
    Table t{{"day", "km_a", "km_b", "liters_a", "liters_b"}, {}};
    for (const auto& r : rows)
        t.rows.push_back({std::to_string(r.day_of_month), format_fixed(r.km_a, 3), format_fixed(r.km_b, 3),
                          format_fixed(r.liters_a, 3), format_fixed(r.liters_b, 3)});
    return t;
}

Table fuel_by_speed_table(std::span<const SpeedBinRow> rows) {
    Table t{{"speed_bin", "km", "liters", "l_per_100km"}, {}};
    for (const auto& r : rows) {
        const std::string bin = r.upper_kmh ? std::to_string(r.lower_kmh) + "-" + std::to_string(*r.upper_kmh)
                                            : std::to_string(r.lower_kmh) + "+";
        t.rows.push_back({bin, format_fixed(r.km, 3), format_fixed(r.liters, 3),
                          r.l_per_100km ? format_fixed(*r.l_per_100km, 2) : std::string{}});
    }
    return t;
}

Table maintenance_table(std::span<const MaintenanceStatus> rows) {
    Table t{{"item", "km_remaining", "state"}, {}};
    for (const auto& r : rows)
        t.rows.push_back({r.name, format_fixed(r.km_remaining, 1), std::string(to_string(r.state))});
    return t;
}

Table trips_table(std::span<const Trip> trips) {
    Table t{{"start", "end", "start_lat", "start_lon", "end_lat", "end_lon", "distance_km", "fuel_l", "max_kmh",
             "avg_kmh", "route"},
            {}};
    for (const auto& tr : trips) {
        std::string route;
        for (std::size_t i = 0; i < tr.route_signature.size(); ++i)
            route += (i ? ">" : "") + std::to_string(tr.route_signature[i]);
        t.rows.push_back({format_iso8601(tr.start_time), format_iso8601(tr.end_time), format_fixed(tr.start.lat, 6),
                          format_fixed(tr.start.lon, 6), format_fixed(tr.end.lat, 6), format_fixed(tr.end.lon, 6),
                          format_fixed(tr.distance_km, 3), format_fixed(tr.fuel_used_l, 3),
                          format_fixed(tr.max_speed_kmh, 1), format_fixed(tr.avg_speed_kmh, 1), route});
    }
    return t;
}

Table stops_table(std::span<const StopEvent> stops) {
    Table t{{"start", "duration_s", "lat", "lon"}, {}};
    for (const auto& s : stops)
        t.rows.push_back({format_iso8601(s.start_time), format_fixed(s.duration_s, 0), format_fixed(s.location.lat, 6),
                          format_fixed(s.location.lon, 6)});
    return t;
}

Table nearest_table(std::span<const NearestEntry> rows) {
    Table t{{"rank", "vehicle", "label", "distance_m", "age_s"}, {}};
    for (std::size_t i = 0; i < rows.size(); ++i)
        t.rows.push_back({std::to_string(i + 1), std::to_string(rows[i].vehicle), rows[i].label,
                          format_fixed(rows[i].distance_m, 1), format_fixed(rows[i].age_s, 0)});
    return t;
}

Table overspeed_table(std::span<const Violation> rows) {
    Table t{{"start", "duration_s", "peak_kmh"}, {}};
    for (const auto& v : rows)
        t.rows.push_back({format_iso8601(v.start), format_fixed(v.duration_s, 0), format_fixed(v.peak_kmh, 1)});
    return t;
}

Table mission_table(const Mission& m, const MissionReport& r) {
    return Table{{"mission", "vehicle", "driver", "purpose", "start", "end", "mileage_km", "fuel_l", "trips"},
                 {{std::to_string(m.id), std::to_string(m.vehicle), m.driver, m.purpose, format_iso8601(m.start),
                   format_iso8601(m.end), format_fixed(r.mileage_km, 3), format_fixed(r.fuel_l, 3),
                   std::to_string(r.trips.size())}}};
}

}  // namespace radfleet::analytics

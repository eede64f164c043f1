#pragma once

// HTTP JSON API as a plain function of (method, path, query, body). The socket
// side (net.hpp) only adapts httplib requests to this; the CLI reuses the
// report builders so its tables and the API rows come from the same code.

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "radfleet/analytics.hpp"
#include "radfleet/expected.hpp"
#include "radfleet/server.hpp"

namespace radfleet::api {

using Params = std::map<std::string, std::string>;

struct Request {
    std::string method = "GET";
    std::string path;
    Params query;
    std::string body;
};

struct Response {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

Response handle(server::IngestServer& srv, const Request& req);

struct ApiError {
    int status = 400;
    std::string message;
};

/// Integer milliseconds, "YYYY-MM-DDTHH:MM:SSZ", or "YYYY-MM-DD" (local
/// midnight at utc_offset_min).
std::optional<TimestampMs> parse_time_param(std::string_view text, int utc_offset_min);

/// Report kinds: daily, monthly, compare, fuel-by-speed, maintenance, mission,
/// trips, stops, overspeed.
///   daily:          vehicle, month
///   monthly:        vehicle, from, to (months)
///   compare:        vehicle, monthA, monthB
///   fuel-by-speed:  vehicle, [from], [to]
///   maintenance:    vehicle
///   mission:        id
///   trips/stops:    vehicle, [from], [to]
///   overspeed:      vehicle, [from], [to], [limit]
Expected<analytics::Table, ApiError> report_table(const server::IngestServer& srv, std::string_view kind,
                                                  const Params& params);

analytics::NearestResult nearest(const server::IngestServer& srv, const geo::GeoPoint& point, std::size_t limit);

/// Odometer for maintenance: the largest CAN odometer reading, or GPS path
/// length when the vehicle never reports one.
double odometer_km(std::span<const wire::TelemetryRecord> records);

}  // namespace radfleet::api

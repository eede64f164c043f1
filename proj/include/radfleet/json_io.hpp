#pragma once

// JSON shapes shared by the registry file, the HTTP API and the event stream.

#include <json.hpp>

#include "radfleet/analytics.hpp"
#include "radfleet/server.hpp"
#include "radfleet/store.hpp"
#include "radfleet/wire.hpp"

namespace radfleet::json_io {

using json = nlohmann::json;

json to_json(const store::DeviceInfo& d);
/// Throws nlohmann::json::exception on missing or mistyped fields.
store::DeviceInfo device_from_json(const json& j);

/// Record in display units (degrees, km/h, ISO 8601 time).
json to_json(const wire::TelemetryRecord& r);
json to_json(const server::Alert& a);
json to_json(const server::CommandTicket& t);
json to_json(const analytics::Mission& m);
analytics::Mission mission_from_json(const json& j);
json to_json(const server::LatestPosition& p);

/// Rows as objects keyed by column name; cells that are plain numbers become
/// JSON numbers, empty cells become null.
json to_json(const analytics::Table& t);

}  // namespace radfleet::json_io

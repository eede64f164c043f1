#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "radfleet/expected.hpp"

namespace radfleet::geo {

/// Mean Earth radius of the spherical model, meters.
inline constexpr double kEarthRadiusM = 6'371'000.0;
inline constexpr std::size_t kMaxZones = 150;
/// Triangles wider than this are rejected: the local planar test degrades.
inline constexpr double kMaxTriangleSpanM = 100'000.0;

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

bool is_valid(const GeoPoint& p);

double haversine_distance(const GeoPoint& a, const GeoPoint& b);

enum class BearingError { DegeneratePair };

/// Forward azimuth from `a` towards `b`, degrees in [0, 360).
Expected<double, BearingError> initial_bearing(const GeoPoint& a, const GeoPoint& b);

/// Point reached from `start` after `distance_m` along the great circle with
/// the given initial bearing.
GeoPoint destination_point(const GeoPoint& start, double bearing_deg, double distance_m);

/// Sum of consecutive haversine legs; 0 for fewer than two points.
double path_length(std::span<const GeoPoint> points);

/// Smallest absolute difference between two headings, degrees in [0, 180].
double heading_difference(double a_deg, double b_deg);

struct Rectangle {
    GeoPoint corner_sw;
    GeoPoint corner_ne;
};

struct Circle {
    GeoPoint center;
    double radius_m = 0.0;
};

struct Triangle {
    GeoPoint a, b, c;
};

using Shape = std::variant<Rectangle, Circle, Triangle>;

enum class ZoneError {
    InvalidId,
    InvalidCoordinate,
    InvertedRectangle,  // also covers antimeridian-crossing rectangles
    NonPositiveRadius,
    CollinearTriangle,
    ZoneTooLarge,
};
std::string_view to_string(ZoneError e);

class GeofenceZone {
public:
    static Expected<GeofenceZone, ZoneError> make(std::uint32_t id, Shape shape);

    std::uint16_t id() const { return id_; }
    const Shape& shape() const { return shape_; }

    /// Boundary points count as inside.
    bool contains(const GeoPoint& p) const;

private:
    GeofenceZone(std::uint16_t id, Shape shape) : id_(id), shape_(shape) {}

    std::uint16_t id_;
    Shape shape_;
};

inline bool zone_contains(const GeofenceZone& zone, const GeoPoint& p) { return zone.contains(p); }

/// Local equirectangular projection (meters) anchored at `origin`.
struct PlanarPoint {
    double x = 0.0;
    double y = 0.0;
};
PlanarPoint project_local(const GeoPoint& origin, const GeoPoint& p);

enum class Transition { Enter, Exit };

struct ZoneEvent {
    std::uint16_t zone_id = 0;
    Transition transition{};

    friend bool operator==(const ZoneEvent&, const ZoneEvent&) = default;
};

enum class TransitionError { TooManyZones };

/// Enter when prev is outside and cur inside, Exit for the reverse; events are
/// ordered like `zones`. An absent `prev` only establishes a baseline.
Expected<std::vector<ZoneEvent>, TransitionError> zone_transitions(const std::optional<GeoPoint>& prev,
                                                                  const GeoPoint& cur,
                                                                  std::span<const GeofenceZone> zones);

}  // namespace radfleet::geo

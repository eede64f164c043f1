#include "radfleet/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace radfleet::geo {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double wrap_lon_delta(double d) {
    while (d > 180.0) d -= 360.0;
    while (d < -180.0) d += 360.0;
    return d;
}

double cross(const PlanarPoint& o, const PlanarPoint& a, const PlanarPoint& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

GeoPoint centroid(const Triangle& t) {
    const double lon_b = t.a.lon + wrap_lon_delta(t.b.lon - t.a.lon);
    const double lon_c = t.a.lon + wrap_lon_delta(t.c.lon - t.a.lon);
    return {(t.a.lat + t.b.lat + t.c.lat) / 3.0, (t.a.lon + lon_b + lon_c) / 3.0};
}

bool triangle_contains(const Triangle& t, const GeoPoint& p) {
    const GeoPoint origin = centroid(t);
    const PlanarPoint a = project_local(origin, t.a);
    const PlanarPoint b = project_local(origin, t.b);
    const PlanarPoint c = project_local(origin, t.c);
    const PlanarPoint q = project_local(origin, p);
    const double d1 = cross(a, b, q);
    const double d2 = cross(b, c, q);
    const double d3 = cross(c, a, q);
    const bool has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    const bool has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    return !(has_neg && has_pos);
}

}  // namespace

bool is_valid(const GeoPoint& p) {
    return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 && p.lat <= 90.0 && p.lon >= -180.0 &&
           p.lon <= 180.0;
}

double haversine_distance(const GeoPoint& a, const GeoPoint& b) {
    const double phi1 = a.lat * kDegToRad;
    const double phi2 = b.lat * kDegToRad;
    const double dphi = (b.lat - a.lat) * kDegToRad;
    const double dlambda = (b.lon - a.lon) * kDegToRad;
    const double s1 = std::sin(dphi / 2.0);
    const double s2 = std::sin(dlambda / 2.0);
    const double h = std::clamp(s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2, 0.0, 1.0);
    return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

Expected<double, BearingError> initial_bearing(const GeoPoint& a, const GeoPoint& b) {
    if (a == b) return fail(BearingError::DegeneratePair);
    const double phi1 = a.lat * kDegToRad;
    const double phi2 = b.lat * kDegToRad;
    const double dlambda = (b.lon - a.lon) * kDegToRad;
    const double y = std::sin(dlambda) * std::cos(phi2);
    const double x = std::cos(phi1) * std::sin(phi2) - std::sin(phi1) * std::cos(phi2) * std::cos(dlambda);
    double deg = std::atan2(y, x) * kRadToDeg;
    deg = std::fmod(deg + 360.0, 360.0);
    return deg >= 360.0 ? 0.0 : deg;
}

GeoPoint destination_point(const GeoPoint& start, double bearing_deg, double distance_m) {
    const double delta = distance_m / kEarthRadiusM;
    const double theta = bearing_deg * kDegToRad;
    const double phi1 = start.lat * kDegToRad;
    const double lambda1 = start.lon * kDegToRad;
    const double sin_phi2 = std::sin(phi1) * std::cos(delta) + std::cos(phi1) * std::sin(delta) * std::cos(theta);
    const double phi2 = std::asin(std::clamp(sin_phi2, -1.0, 1.0));
    const double y = std::sin(theta) * std::sin(delta) * std::cos(phi1);
    const double x = std::cos(delta) - std::sin(phi1) * sin_phi2;
    const double lambda2 = lambda1 + std::atan2(y, x);
    return {phi2 * kRadToDeg, wrap_lon_delta(lambda2 * kRadToDeg)};
}

double path_length(std::span<const GeoPoint> points) {
    double total = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) total += haversine_distance(points[i - 1], points[i]);
    return total;
}

double heading_difference(double a_deg, double b_deg) {
    double d = std::fmod(std::fabs(a_deg - b_deg), 360.0);
    return d > 180.0 ? 360.0 - d : d;
}

std::string_view to_string(ZoneError e) {
    switch (e) {
        case ZoneError::InvalidId: return "InvalidId";
        case ZoneError::InvalidCoordinate: return "InvalidCoordinate";
        case ZoneError::InvertedRectangle: return "InvertedRectangle";
        case ZoneError::NonPositiveRadius: return "NonPositiveRadius";
        case ZoneError::CollinearTriangle: return "CollinearTriangle";
        case ZoneError::ZoneTooLarge: return "ZoneTooLarge";
    }
    return "?";
}

PlanarPoint project_local(const GeoPoint& origin, const GeoPoint& p) {
    const double k = kEarthRadiusM * kDegToRad;
    return {wrap_lon_delta(p.lon - origin.lon) * k * std::cos(origin.lat * kDegToRad), (p.lat - origin.lat) * k};
}

Expected<GeofenceZone, ZoneError> GeofenceZone::make(std::uint32_t id, Shape shape) {
    if (id == 0 || id > 65535) return fail(ZoneError::InvalidId);
    if (const auto* r = std::get_if<Rectangle>(&shape)) {
        if (!is_valid(r->corner_sw) || !is_valid(r->corner_ne)) return fail(ZoneError::InvalidCoordinate);
        if (r->corner_sw.lat > r->corner_ne.lat || r->corner_sw.lon > r->corner_ne.lon) {
            return fail(ZoneError::InvertedRectangle);
        }
    } else if (const auto* c = std::get_if<Circle>(&shape)) {
        if (!is_valid(c->center)) return fail(ZoneError::InvalidCoordinate);
        if (!(c->radius_m > 0.0) || !std::isfinite(c->radius_m)) return fail(ZoneError::NonPositiveRadius);
    } else {
        const auto& t = std::get<Triangle>(shape);
        if (!is_valid(t.a) || !is_valid(t.b) || !is_valid(t.c)) return fail(ZoneError::InvalidCoordinate);
        const double span = std::max({haversine_distance(t.a, t.b), haversine_distance(t.b, t.c),
                                      haversine_distance(t.c, t.a)});
        if (span > kMaxTriangleSpanM) return fail(ZoneError::ZoneTooLarge);
        const GeoPoint origin = centroid(t);
        const double area2 = cross(project_local(origin, t.a), project_local(origin, t.b), project_local(origin, t.c));
        // 1 m^2 is far below anything a geofence could sensibly mean.
        if (std::fabs(area2) < 2.0) return fail(ZoneError::CollinearTriangle);
    }
    return GeofenceZone(static_cast<std::uint16_t>(id), shape);
}

bool GeofenceZone::contains(const GeoPoint& p) const {
    if (const auto* r = std::get_if<Rectangle>(&shape_)) {
        return p.lat >= r->corner_sw.lat && p.lat <= r->corner_ne.lat && p.lon >= r->corner_sw.lon &&
               p.lon <= r->corner_ne.lon;
    }
    if (const auto* c = std::get_if<Circle>(&shape_)) return haversine_distance(c->center, p) <= c->radius_m;
    return triangle_contains(std::get<Triangle>(shape_), p);
}

Expected<std::vector<ZoneEvent>, TransitionError> zone_transitions(const std::optional<GeoPoint>& prev,
                                                                  const GeoPoint& cur,
                                                                  std::span<const GeofenceZone> zones) {
    if (zones.size() > kMaxZones) return fail(TransitionError::TooManyZones);
    std::vector<ZoneEvent> events;
    if (!prev) return events;
    for (const auto& z : zones) {
        const bool was_in = z.contains(*prev);
        const bool is_in = z.contains(cur);
        if (!was_in && is_in) events.push_back({z.id(), Transition::Enter});
        if (was_in && !is_in) events.push_back({z.id(), Transition::Exit});
    }
    return events;
}

}  // namespace radfleet::geo

#pragma once

#include <cmath>
#include <string>

#include "citypano/error.hpp"
#include "citypano/geo/vec3.hpp"

namespace citypano {

struct GeodeticPoint {
    double latitude_deg = 0.0;
    double longitude_deg = 0.0;
    double height_m = 0.0;

    bool valid() const {
        return std::isfinite(latitude_deg) && std::isfinite(longitude_deg) &&
               std::isfinite(height_m) && std::abs(latitude_deg) <= 90.0 &&
               std::abs(longitude_deg) <= 180.0;
    }
    bool operator==(const GeodeticPoint&) const = default;
};

inline constexpr double kEarthRadiusM = 6378137.0;
inline constexpr double kDegToRad = M_PI / 180.0;
inline constexpr double kRadToDeg = 180.0 / M_PI;

inline void require_valid(const GeodeticPoint& p, const char* what) {
    if (!p.valid()) {
        throw Error(ErrorCode::InvalidArgument, std::string("invalid geodetic point: ") + what);
    }
}

// Spherical local-tangent-plane approximation. Fine at city-district scale
// (a few km); not a datum-aware projection.
inline Vec3 enu_from_geodetic(const GeodeticPoint& origin, const GeodeticPoint& p) {
    require_valid(origin, "origin");
    require_valid(p, "point");
    const double dlat = (p.latitude_deg - origin.latitude_deg) * kDegToRad;
    const double dlon = (p.longitude_deg - origin.longitude_deg) * kDegToRad;
    return {kEarthRadiusM * dlon * std::cos(origin.latitude_deg * kDegToRad),
            kEarthRadiusM * dlat, p.height_m - origin.height_m};
}

inline GeodeticPoint geodetic_from_enu(const GeodeticPoint& origin, const Vec3& v) {
    require_valid(origin, "origin");
    const double lat = origin.latitude_deg + v.y / kEarthRadiusM * kRadToDeg;
    const double lon = origin.longitude_deg +
                       v.x / (kEarthRadiusM * std::cos(origin.latitude_deg * kDegToRad)) * kRadToDeg;
    return {lat, lon, origin.height_m + v.z};
}

} // namespace citypano

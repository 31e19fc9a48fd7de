#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "citypano/city/polygon.hpp"
#include "citypano/city/terrain.hpp"
#include "citypano/error.hpp"
#include "citypano/geo/geodetic.hpp"

namespace citypano {

struct Building {
    std::string id;
    Polygon2 footprint; // counter-clockwise, simple
    double base_elevation_m = 0.0;
    double height_m = 0.0;
    std::map<std::string, std::string> attributes;

    double top_elevation_m() const { return base_elevation_m + height_m; }
};

/// Horizontal water surface for one flood scenario. Several bodies may share
/// a scenario id (disjoint flooded areas, possibly at different levels).
struct WaterBody {
    std::string scenario_id;
    double level_m = 0.0;
    Polygon2 extent;
};

struct CityScene {
    GeodeticPoint origin;
    std::vector<Building> buildings;
    Terrain terrain;
    std::vector<WaterBody> water;

    const Building* find_building(const std::string& id) const {
        for (const Building& b : buildings) {
            if (b.id == id) return &b;
        }
        return nullptr;
    }

    std::vector<std::string> scenario_ids() const {
        std::vector<std::string> ids;
        for (const WaterBody& w : water) {
            if (std::find(ids.begin(), ids.end(), w.scenario_id) == ids.end()) ids.push_back(w.scenario_id);
        }
        return ids;
    }

    bool has_scenario(const std::string& id) const {
        for (const WaterBody& w : water) {
            if (w.scenario_id == id) return true;
        }
        return false;
    }

    /// Checks every scene invariant; throws on the first violation.
    void validate() const {
        terrain.validate();
        std::unordered_set<std::string> ids;
        for (const Building& b : buildings) {
            if (!ids.insert(b.id).second) throw Error(ErrorCode::InvalidFormat, "duplicate building id " + b.id);
            if (!(b.height_m > 0.0)) throw Error(ErrorCode::InvalidFormat, "non-positive height for " + b.id);
            if (b.footprint.size() < 3 || !is_simple(b.footprint) || signed_area(b.footprint) <= 0.0) {
                throw Error(ErrorCode::InvalidPolygon, "footprint of " + b.id);
            }
            for (const Vec2& p : b.footprint) {
                if (!terrain.contains(p)) throw Error(ErrorCode::OutOfBounds, "footprint of " + b.id);
            }
        }
        for (const WaterBody& w : water) {
            if (!std::isfinite(w.level_m)) throw Error(ErrorCode::InvalidFormat, "water level of " + w.scenario_id);
            if (!is_simple(w.extent)) throw Error(ErrorCode::InvalidPolygon, "water extent of " + w.scenario_id);
        }
    }
};

/// Smallest x/y box covering `scene`'s building footprints.
inline std::pair<Vec2, Vec2> footprint_bounds(const std::vector<Building>& buildings) {
    Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
    for (const Building& b : buildings) {
        for (const Vec2& p : b.footprint) {
            lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
            hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
        }
    }
    return {lo, hi};
}

inline double terrain_elevation(const CityScene& scene, const Vec2& p) {
    return scene.terrain.elevation(p);
}

} // namespace citypano

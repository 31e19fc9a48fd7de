#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "citypano/city/mesh.hpp"
#include "citypano/city/polygon.hpp"
#include "citypano/city/scene.hpp"
#include "citypano/error.hpp"
#include "citypano/geo/pose.hpp"
#include "citypano/overlays/sun.hpp"
#include "citypano/parallel.hpp"
#include "citypano/raster/pano_mask.hpp"
#include "citypano/raster/render.hpp"

namespace citypano {

inline constexpr double kShadowEpsilonM = 0.01;

inline std::string flood_attribute_key(const std::string& scenario) { return "flood_depth:" + scenario; }

/// Flood depth at a building for one scenario. A `flood_depth:<scenario>`
/// attribute wins; otherwise the level of the scenario's water body that
/// contains the footprint centroid minus the terrain there, floored at 0.
/// Buildings outside every extent of the scenario get 0.
inline double flood_depth(const CityScene& scene, const std::string& building_id, const std::string& scenario) {
    const Building* b = scene.find_building(building_id);
    if (!b) throw Error(ErrorCode::UnknownBuilding, building_id);
    if (!scene.has_scenario(scenario)) throw Error(ErrorCode::UnknownScenario, scenario);
    if (auto it = b->attributes.find(flood_attribute_key(scenario)); it != b->attributes.end()) {
        try {
            std::size_t used = 0;
            const double v = std::stod(it->second, &used);
            if (used != it->second.size() || !std::isfinite(v)) throw std::invalid_argument("trailing");
            return std::max(0.0, v);
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::InvalidFormat, building_id + ": non-numeric " + it->first);
        }
    }
    const Vec2 c = polygon_centroid(b->footprint);
    double depth = 0.0;
    for (const WaterBody& w : scene.water) {
        if (w.scenario_id != scenario || !point_in_polygon(w.extent, c)) continue;
        depth = std::max(depth, w.level_m - terrain_elevation(scene, c));
    }
    return depth;
}

struct WaterLayer {
    OverlayLayer layer;
    bool camera_under_water = false;
};

/// Pixels whose ray meets the scenario's water surface (level plane clipped
/// to the extent) before any mesh surface.
inline WaterLayer water_mask(const TriangleMesh& mesh, const RayIndex& index, const CityScene& scene,
                             const CameraPose& pose, const std::string& scenario, int width, int height,
                             unsigned threads = 1) {
    if (!scene.has_scenario(scenario)) throw Error(ErrorCode::UnknownScenario, scenario);
    if (index.inside_building(pose.position)) throw Error(ErrorCode::CameraInsideGeometry, "water mask");
    require_pano_shape(width, height);
    (void)mesh;
    WaterLayer out{OverlayLayer(width, height, kWaterValue), false};
    std::vector<const WaterBody*> bodies;
    for (const WaterBody& w : scene.water) {
        if (w.scenario_id != scenario) continue;
        bodies.push_back(&w);
        if (pose.position.z < w.level_m) out.camera_under_water = true;
    }
    const Vec3 cam = pose.position;
    parallel_for(static_cast<std::size_t>(height), threads, [&](std::size_t row) {
        const int v = static_cast<int>(row);
        for (int u = 0; u < width; ++u) {
            const Vec3 d = pose.orientation.rotate(pixel_ray(u, v, width, height));
            if (d.z == 0.0) continue;
            double t_water = std::numeric_limits<double>::infinity();
            for (const WaterBody* w : bodies) {
                const double t = (w->level_m - cam.z) / d.z;
                if (!(t > 0.0) || t >= t_water) continue;
                const Vec3 p = cam + d * t;
                if (point_in_polygon(w->extent, xy(p))) t_water = t;
            }
            if (!std::isfinite(t_water)) continue;
            if (index.bvh().any({cam, d}, t_water)) continue;
            out.layer.mark(u, v);
        }
    });
    return out;
}

/// Pixels whose visible surface point cannot see the sun (parallel light).
inline OverlayLayer shadow_mask(const TriangleMesh& mesh, const RayIndex& index, const CameraPose& pose,
                                const SunState& sun, int width, int height, unsigned threads = 1) {
    if (sun.below_horizon || sun.direction.z < 0.0) {
        throw Error(ErrorCode::SunBelowHorizon, "elevation " + std::to_string(sun.elevation_deg) + " deg");
    }
    if (index.inside_building(pose.position)) throw Error(ErrorCode::CameraInsideGeometry, "shadow mask");
    require_pano_shape(width, height);
    OverlayLayer out(width, height, kShadowValue);
    const Vec3 s = sun.direction.normalized();
    const double inf = std::numeric_limits<double>::infinity();
    parallel_for(static_cast<std::size_t>(height), threads, [&](std::size_t row) {
        const int v = static_cast<int>(row);
        for (int u = 0; u < width; ++u) {
            const Vec3 d = pose.orientation.rotate(pixel_ray(u, v, width, height));
            const Hit h = index.bvh().closest({pose.position, d});
            if (!h.hit()) continue;
            const auto& tri = mesh.triangles[h.triangle];
            const Vec3& a = mesh.vertices[tri[0]];
            Vec3 n = (mesh.vertices[tri[1]] - a).cross(mesh.vertices[tri[2]] - a).normalized();
            if (n.dot(d) > 0.0) n = n * -1.0;
            // Lift off the surface on the camera side so shadow rays never graze their own face.
            const Vec3 p = pose.position + d * h.t + (n + s) * kShadowEpsilonM;
            if (index.bvh().any({p, s}, inf)) out.mark(u, v);
        }
    });
    return out;
}

} // namespace citypano

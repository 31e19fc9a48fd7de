#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "citypano/city/mesh.hpp"
#include "citypano/city/polygon.hpp"
#include "citypano/city/scene.hpp"
#include "citypano/error.hpp"
#include "citypano/geo/pose.hpp"
#include "citypano/parallel.hpp"
#include "citypano/raster/bvh.hpp"
#include "citypano/raster/pano_mask.hpp"

namespace citypano {

/// Vertical prisms of a scene plus its terrain plane (when the terrain is
/// planar). Lets an upright camera be rendered one column at a time: an
/// equirectangular column of such a camera is a vertical half-plane, and its
/// section through a prism is a rectangle.
struct PrismSet {
    struct Prism {
        Polygon2 footprint;
        double z_base = 0.0;
        double z_top = 0.0;
        Vec2 center;
        double radius = 0.0;
    };
    std::vector<Prism> prisms;
    bool planar_terrain = false;
    double plane_a = 0.0, plane_b = 0.0, plane_c = 0.0; // z = a + b x + c y
    Vec2 terrain_lo, terrain_hi;
    Terrain terrain;

    explicit PrismSet(const CityScene& scene) {
        for (const Building& b : scene.buildings) {
            Prism p;
            p.footprint = b.footprint;
            p.z_base = b.base_elevation_m;
            p.z_top = b.top_elevation_m();
            Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
            for (const Vec2& v : b.footprint) {
                lo = {std::min(lo.x, v.x), std::min(lo.y, v.y)};
                hi = {std::max(hi.x, v.x), std::max(hi.y, v.y)};
            }
            p.center = (lo + hi) * 0.5;
            for (const Vec2& v : b.footprint) p.radius = std::max(p.radius, (v - p.center).norm());
            prisms.push_back(std::move(p));
        }
        planar_terrain = scene.terrain.planar_fit(plane_a, plane_b, plane_c);
        terrain_lo = scene.terrain.origin;
        terrain_hi = scene.terrain.max_corner();
        terrain = scene.terrain;
    }

    bool inside(const Vec3& p) const {
        for (const Prism& pr : prisms) {
            if (p.z < pr.z_base || p.z > pr.z_top) continue;
            if ((xy(p) - pr.center).norm() > pr.radius) continue;
            if (point_in_polygon(pr.footprint, xy(p))) return true;
        }
        return false;
    }

    bool below_terrain(const Vec3& p) const { return terrain.contains(xy(p)) && p.z < terrain.elevation(xy(p)); }
};

/// Acceleration structure for a TriangleMesh; optionally carries the scene's
/// prisms for the column renderer and exact point-in-prism tests.
class RayIndex {
public:
    RayIndex() = default;

    static RayIndex build(const TriangleMesh& mesh) {
        RayIndex idx;
        idx.bvh_ = std::make_shared<const Bvh>(mesh);
        idx.labels_ = mesh.labels;
        return idx;
    }

    static RayIndex build(const TriangleMesh& mesh, const CityScene& scene) {
        RayIndex idx = build(mesh);
        idx.prisms_ = std::make_shared<const PrismSet>(scene);
        return idx;
    }

    const Bvh& bvh() const { return *bvh_; }
    const PrismSet* prisms() const { return prisms_.get(); }
    std::int32_t label(std::uint32_t triangle) const { return labels_[triangle]; }
    std::size_t triangle_count() const { return labels_.size(); }

    /// Point-in-prism test. Without prisms, counts crossings of a horizontal
    /// ray with each building's walls (odd => inside).
    bool inside_building(const Vec3& p) const {
        if (prisms_) return prisms_->inside(p);
        thread_local std::vector<Hit> hits;
        bvh_->all_hits({p, {1.0, 0.1234567, 0.0}}, hits);
        std::vector<std::pair<std::int32_t, int>> parity;
        for (const Hit& h : hits) {
            const std::int32_t l = labels_[h.triangle];
            if (l < 0) continue;
            auto it = std::find_if(parity.begin(), parity.end(), [&](const auto& e) { return e.first == l; });
            if (it == parity.end()) parity.emplace_back(l, 1);
            else ++it->second;
        }
        return std::any_of(parity.begin(), parity.end(), [](const auto& e) { return e.second % 2 == 1; });
    }

    /// Strictly under the terrain surface. Without prisms, the first surface
    /// straight up is terrain.
    bool below_terrain(const Vec3& p) const {
        if (prisms_) return prisms_->below_terrain(p);
        const Hit h = bvh_->closest({p, Vec3::unit_z()});
        return h.hit() && labels_[h.triangle] < 0;
    }

private:
    std::shared_ptr<const Bvh> bvh_ = std::make_shared<const Bvh>();
    std::vector<std::int32_t> labels_;
    std::shared_ptr<const PrismSet> prisms_;
};

struct RenderOptions {
    unsigned threads = 1;
    /// Allow the column renderer when its preconditions hold.
    bool column_path = true;
};

namespace detail {

inline bool upright(const Quaternion& q) {
    const Vec3 up = q.rotate(Vec3::unit_z());
    return std::abs(up.x) < 1e-12 && std::abs(up.y) < 1e-12;
}

inline bool column_path_applies(const PrismSet* prisms, const CameraPose& pose) {
    if (!prisms || !prisms->planar_terrain || !upright(pose.orientation)) return false;
    const Vec3& c = pose.position;
    if (c.x < prisms->terrain_lo.x || c.y < prisms->terrain_lo.y || c.x > prisms->terrain_hi.x ||
        c.y > prisms->terrain_hi.y) {
        return false;
    }
    return c.z > prisms->plane_a + prisms->plane_b * c.x + prisms->plane_c * c.y;
}

inline void render_columns(const PrismSet& ps, const CameraPose& pose, PanoMask& mask) {
    const int W = mask.width;
    const int H = mask.height;
    const Vec3 cam = pose.position;
    const Vec2 cxy = xy(cam);
    const double yaw = pose.orientation.yaw();
    const double g0 = ps.plane_a + ps.plane_b * cam.x + ps.plane_c * cam.y;
    const double two_pi = 2.0 * M_PI;

    std::vector<std::pair<double, double>> spans;
    std::array<std::pair<double, double>, 8> poly{};
    std::array<std::pair<double, double>, 8> clipped{};

    for (const PrismSet::Prism& pr : ps.prisms) {
        const Vec2 to_center = pr.center - cxy;
        const double dist = to_center.norm();
        int u_lo = 0, u_hi = W - 1;
        if (dist > pr.radius * (1.0 + 1e-9) + 1e-9) {
            const double half = std::asin(pr.radius / dist) + 1e-9;
            const double mid = std::atan2(to_center.y, to_center.x) - yaw;
            u_lo = static_cast<int>(std::floor((mid - half + M_PI) * W / two_pi - 0.5)) - 1;
            u_hi = static_cast<int>(std::ceil((mid + half + M_PI) * W / two_pi - 0.5)) + 1;
            if (u_hi - u_lo >= W) {
                u_lo = 0;
                u_hi = W - 1;
            }
        }
        for (int uu = u_lo; uu <= u_hi; ++uu) {
            const int u = ((uu % W) + W) % W;
            const double theta = yaw + pixel_longitude(u, W);
            const Vec2 dir{std::cos(theta), std::sin(theta)};
            ray_polygon_intervals(pr.footprint, cxy, dir, spans);
            if (spans.empty()) continue;
            const double g1 = ps.plane_b * dir.x + ps.plane_c * dir.y;
            for (const auto& [r1, r2] : spans) {
                if (r2 <= r1) continue;
                // Section rectangle clipped to the part above the terrain plane.
                poly = {{{r1, pr.z_base}, {r2, pr.z_base}, {r2, pr.z_top}, {r1, pr.z_top}}};
                int n_out = 0;
                for (int i = 0; i < 4; ++i) {
                    const auto& a = poly[i];
                    const auto& b = poly[(i + 1) % 4];
                    const double fa = a.second - (g0 + g1 * a.first);
                    const double fb = b.second - (g0 + g1 * b.first);
                    if (fa >= 0.0) clipped[n_out++] = a;
                    if ((fa >= 0.0) != (fb >= 0.0)) {
                        const double s = fa / (fa - fb);
                        clipped[n_out++] = {a.first + s * (b.first - a.first), a.second + s * (b.second - a.second)};
                    }
                }
                if (n_out < 2) continue;
                double lat_lo = M_PI, lat_hi = -M_PI;
                for (int i = 0; i < n_out; ++i) {
                    const double lat = std::atan2(clipped[i].second - cam.z, clipped[i].first);
                    lat_lo = std::min(lat_lo, lat);
                    lat_hi = std::max(lat_hi, lat);
                }
                const int v_lo = std::max(0, static_cast<int>(std::ceil((M_PI / 2.0 - lat_hi) * H / M_PI - 0.5)));
                const int v_hi = std::min(H - 1, static_cast<int>(std::floor((M_PI / 2.0 - lat_lo) * H / M_PI - 0.5)));
                for (int v = v_lo; v <= v_hi; ++v) mask.labels[static_cast<std::size_t>(v) * W + u] = BUILDING;
            }
        }
    }
}

inline void render_pixels(const TriangleMesh& mesh, const RayIndex& index, const CameraPose& pose,
                          PanoMask& mask, unsigned threads) {
    const int W = mask.width;
    const int H = mask.height;
    std::vector<double> cos_lon(W), sin_lon(W);
    for (int u = 0; u < W; ++u) {
        cos_lon[u] = std::cos(pixel_longitude(u, W));
        sin_lon[u] = std::sin(pixel_longitude(u, W));
    }
    parallel_for(static_cast<std::size_t>(H), threads, [&](std::size_t row) {
        const int v = static_cast<int>(row);
        const double lat = pixel_latitude(v, H);
        const double cl = std::cos(lat), sl = std::sin(lat);
        for (int u = 0; u < W; ++u) {
            const Vec3 d = pose.orientation.rotate({cl * cos_lon[u], cl * sin_lon[u], sl});
            const Hit h = index.bvh().closest({pose.position, d});
            if (h.hit() && mesh.labels[h.triangle] >= 0) mask.labels[row * W + u] = BUILDING;
        }
    });
}

} // namespace detail

/// Equirectangular building mask seen from `pose`: BUILDING where the
/// closest surface along the pixel ray belongs to a building.
inline PanoMask render_building_mask(const TriangleMesh& mesh, const RayIndex& index, const CameraPose& pose,
                                     int width, int height, const RenderOptions& options = {}) {
    if (mesh.triangles.size() != index.triangle_count()) {
        throw Error(ErrorCode::InvalidArgument, "ray index was built for a different mesh");
    }
    if (index.inside_building(pose.position)) {
        throw Error(ErrorCode::CameraInsideGeometry, "camera position lies inside a building");
    }
    if (index.below_terrain(pose.position)) {
        throw Error(ErrorCode::CameraInsideGeometry, "camera position lies below the terrain");
    }
    PanoMask mask(width, height);
    if (options.column_path && detail::column_path_applies(index.prisms(), pose)) {
        detail::render_columns(*index.prisms(), pose, mask);
    } else {
        detail::render_pixels(mesh, index, pose, mask, options.threads);
    }
    return mask;
}

/// Closest surface along a world ray: distance, hit label (kGroundLabel for
/// terrain), or nullopt on a miss.
struct SurfaceHit {
    double distance;
    std::int32_t label;
    Vec3 point;
};

inline std::optional<SurfaceHit> cast_ray(const TriangleMesh& mesh, const RayIndex& index, const Vec3& origin,
                                          const Vec3& unit_dir) {
    const Hit h = index.bvh().closest({origin, unit_dir});
    if (!h.hit()) return std::nullopt;
    return SurfaceHit{h.t, mesh.labels[h.triangle], origin + unit_dir * h.t};
}

} // namespace citypano

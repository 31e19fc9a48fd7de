#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "citypano/align/alignment.hpp"
#include "citypano/align/trajectory.hpp"
#include "citypano/align/transform.hpp"
#include "citypano/city/mesh.hpp"
#include "citypano/city/scene.hpp"
#include "citypano/raster/render.hpp"

namespace citypano {

/// Parameters of a synthetic Manhattan-grid city and its street videos.
struct SynthSpec {
    std::uint64_t seed = 1;
    int block_rows = 5;
    int block_cols = 5;
    double block_size_m = 40.0;
    int lots_per_side = 2;               // lots per block = lots_per_side^2
    double street_width_m = 16.0;
    double margin_m = 20.0;              // open ground around the grid
    double footprint_min_m = 8.0;
    double footprint_max_m = 18.0;
    double height_min_m = 10.0;
    double height_max_m = 30.0;
    double slope_x = 0.0;                // terrain dz/dx
    double slope_y = 0.0;
    double base_elevation_m = 0.0;
    double terrain_cell_m = 2.0;
    GeodeticPoint origin{35.6984, 139.7731, 0.0};

    int frames_per_street = 150;
    double camera_height_m = kDefaultCameraHeightM;
    double street_trim_m = 4.0;          // start/end distance from the grid edge
    double jitter_m = 0.0;               // RMS of the 3-D per-frame offset
    double yaw_jitter_deg = 0.0;
    double drift_m = 0.0;                // per-frame random-walk step in the local frame
    double local_scale = 1.0;            // |global| / |local|
    double gravity_noise_deg = 0.0;
    double occluder_fraction = 0.0;
    double label_noise = 0.0;            // fraction of visible pixels flipped

    void validate() const {
        auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, "synth spec: " + what); };
        if (block_rows < 1 || block_cols < 1 || lots_per_side < 1) bad("grid counts must be >= 1");
        if (!(block_size_m > 0 && street_width_m > 0 && margin_m >= 0 && terrain_cell_m > 0)) bad("sizes");
        if (!(footprint_min_m > 0 && footprint_min_m <= footprint_max_m)) bad("footprint range");
        if (footprint_max_m > block_size_m / lots_per_side - 1.0) bad("footprint larger than lot");
        if (!(height_min_m > 0 && height_min_m <= height_max_m)) bad("height range");
        if (frames_per_street < 2) bad("frames per street");
        if (!(occluder_fraction >= 0 && occluder_fraction <= 0.5)) bad("occluder fraction outside [0, 0.5]");
        if (!(label_noise >= 0 && label_noise <= 1)) bad("label noise");
        if (!(local_scale > 0)) bad("local scale");
        if (jitter_m < 0 || drift_m < 0 || yaw_jitter_deg < 0 || gravity_noise_deg < 0) bad("noise must be >= 0");
    }

    double pitch() const { return block_size_m + street_width_m; }
    double grid_width() const { return block_cols * block_size_m + (block_cols - 1) * street_width_m; }
    double grid_height() const { return block_rows * block_size_m + (block_rows - 1) * street_width_m; }
    int street_count() const { return (block_rows - 1) + (block_cols - 1); }
};

/// SplitMix64 step; derives independent stream seeds from one seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline double synth_terrain_z(const SynthSpec& spec, double x, double y) {
    return spec.base_elevation_m + spec.slope_x * x + spec.slope_y * y;
}

/// Manhattan grid of rectangular buildings on planar terrain.
inline CityScene generate_city(const SynthSpec& spec) {
    spec.validate();
    CityScene scene;
    scene.origin = spec.origin;
    const double w = spec.grid_width() + 2.0 * spec.margin_m;
    const double h = spec.grid_height() + 2.0 * spec.margin_m;
    Terrain& t = scene.terrain;
    t.origin = {0.0, 0.0};
    t.cell_size = spec.terrain_cell_m;
    t.cols = std::max(2, static_cast<int>(std::ceil(w / t.cell_size)) + 1);
    t.rows = std::max(2, static_cast<int>(std::ceil(h / t.cell_size)) + 1);
    t.heights.resize(static_cast<std::size_t>(t.rows) * t.cols);
    for (int r = 0; r < t.rows; ++r) {
        for (int c = 0; c < t.cols; ++c) {
            const Vec2 p = t.node_xy(r, c);
            t.at(r, c) = synth_terrain_z(spec, p.x, p.y);
        }
    }
    std::mt19937_64 rng(mix_seed(spec.seed, 0xC17));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double lot = spec.block_size_m / spec.lots_per_side;
    for (int br = 0; br < spec.block_rows; ++br) {
        for (int bc = 0; bc < spec.block_cols; ++bc) {
            const double bx = spec.margin_m + bc * spec.pitch();
            const double by = spec.margin_m + br * spec.pitch();
            for (int lr = 0; lr < spec.lots_per_side; ++lr) {
                for (int lc = 0; lc < spec.lots_per_side; ++lc) {
                    const double fw = spec.footprint_min_m + unit(rng) * (spec.footprint_max_m - spec.footprint_min_m);
                    const double fh = spec.footprint_min_m + unit(rng) * (spec.footprint_max_m - spec.footprint_min_m);
                    const double x0 = bx + lc * lot + 0.5 + unit(rng) * (lot - 1.0 - fw);
                    const double y0 = by + lr * lot + 0.5 + unit(rng) * (lot - 1.0 - fh);
                    Building b;
                    b.id = "B" + std::to_string(br) + "_" + std::to_string(bc) + "_" + std::to_string(lr) + "_" +
                           std::to_string(lc);
                    b.footprint = {{x0, y0}, {x0 + fw, y0}, {x0 + fw, y0 + fh}, {x0, y0 + fh}};
                    b.height_m = spec.height_min_m + unit(rng) * (spec.height_max_m - spec.height_min_m);
                    b.base_elevation_m = synth_terrain_z(spec, x0 + fw / 2, y0 + fh / 2);
                    b.attributes["measured_height"] = std::to_string(b.height_m);
                    scene.buildings.push_back(std::move(b));
                }
            }
        }
    }
    scene.validate();
    return scene;
}

/// Centerline endpoints of interior street `k`: first the east-west streets
/// between block rows (south to north), then the north-south ones.
inline std::pair<Vec2, Vec2> street_segment(const SynthSpec& spec, int k) {
    if (k < 0 || k >= spec.street_count()) {
        throw Error(ErrorCode::InvalidArgument, "street index " + std::to_string(k) + " out of range");
    }
    const double lo = spec.margin_m + spec.street_trim_m;
    if (k < spec.block_rows - 1) {
        const double y = spec.margin_m + (k + 1) * spec.block_size_m + (k + 0.5) * spec.street_width_m;
        return {{lo, y}, {spec.margin_m + spec.grid_width() - spec.street_trim_m, y}};
    }
    const int j = k - (spec.block_rows - 1);
    const double x = spec.margin_m + (j + 1) * spec.block_size_m + (j + 0.5) * spec.street_width_m;
    return {{x, lo}, {x, spec.margin_m + spec.grid_height() - spec.street_trim_m}};
}

struct SynthStreet {
    AlignParams gt;
    GlobalTrajectory global;       // true camera poses (reference masks are rendered here)
    LocalTrajectory local;         // what SLAM would report
    SimilarityTransform gt_transform;
};

inline std::string street_name(int k) { return "S" + std::to_string(k); }

/// Walks the street centerline at camera height and derives the local
/// trajectory through a random similarity (plus the configured corruptions).
inline SynthStreet generate_street(const CityScene& scene, int k, const SynthSpec& spec) {
    const auto [a, b] = street_segment(spec, k);
    std::mt19937_64 rng(mix_seed(spec.seed, 0x5700 + static_cast<std::uint64_t>(k)));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int F = spec.frames_per_street;
    const Vec2 dir2 = (b - a) * (1.0 / (b - a).norm());
    const double heading = std::atan2(dir2.y, dir2.x);
    const double axis_sigma = spec.jitter_m / std::sqrt(3.0);

    SynthStreet s;
    GlobalTrajectory truth;
    truth.street_id = street_name(k);
    for (int i = 0; i < F; ++i) {
        const double f = static_cast<double>(i) / (F - 1);
        const Vec2 p = a + (b - a) * f;
        Vec3 pos{p.x, p.y, terrain_elevation(scene, p) + spec.camera_height_m};
        if (spec.jitter_m > 0) pos += Vec3{normal(rng), normal(rng), normal(rng)} * axis_sigma;
        const double yaw = heading + spec.yaw_jitter_deg * kDegToRad * normal(rng);
        truth.frames.push_back({pos, Quaternion::from_yaw(yaw)});
    }

    // Random local frame: x_local = Q (x_global - c) / scale.
    const Vec3 axis{normal(rng), normal(rng), normal(rng)};
    const Quaternion q = Quaternion::from_axis_angle(axis, 2.0 * M_PI * unit(rng));
    const Vec3 c = truth.frames.front().position + Vec3{normal(rng), normal(rng), normal(rng)} * 50.0;
    SimilarityTransform to_local{1.0 / spec.local_scale, q, q.rotate(c) * (-1.0 / spec.local_scale)};

    LocalTrajectory& local = s.local;
    local.street_id = truth.street_id;
    local.gravity_local = q.rotate({0.0, 0.0, -1.0});
    Vec3 drift;
    for (const CameraPose& g : truth.frames) {
        CameraPose l = transform_pose(to_local, g);
        if (spec.drift_m > 0) {
            drift += Vec3{normal(rng), normal(rng), normal(rng)} * (spec.drift_m / spec.local_scale);
            l.position += drift;
        }
        local.frames.push_back(l);
    }
    if (spec.gravity_noise_deg > 0) {
        const Vec3 g = local.gravity_local;
        Vec3 perp = g.cross(Vec3{normal(rng), normal(rng), normal(rng)});
        local.gravity_local =
            Quaternion::from_axis_angle(perp, spec.gravity_noise_deg * kDegToRad).rotate(g).normalized();
    }
    local.annotated_start = geodetic_from_enu(scene.origin, truth.frames.front().position);
    local.annotated_end = geodetic_from_enu(scene.origin, truth.frames.back().position);

    s.gt = {truth.frames.front().position, truth.frames.back().position, 0.0};
    s.gt_transform = build_transform(local, s.gt);
    const bool corrupted = spec.drift_m > 0 || spec.gravity_noise_deg > 0;
    // Without corruption the true poses are taken through the same code path
    // as the objective so ground truth scores exactly zero.
    s.global = corrupted ? truth : apply_transform(s.gt_transform, local);
    s.global.street_id = truth.street_id;
    return s;
}

/// Reference masks at the true poses with random rectangular occluders
/// covering `occluder_fraction` of each frame.
inline MaskMap render_reference_masks(const TriangleMesh& mesh, const RayIndex& index, const GlobalTrajectory& traj,
                                      double occluder_fraction, std::uint64_t seed, int width, int height,
                                      unsigned threads = 1, double label_noise = 0.0) {
    if (!(occluder_fraction >= 0 && occluder_fraction <= 1)) {
        throw Error(ErrorCode::InvalidArgument, "occluder fraction outside [0, 1]");
    }
    std::vector<PanoMask> masks(traj.size());
    parallel_for(traj.size(), threads, [&](std::size_t i) {
        masks[i] = render_building_mask(mesh, index, traj.frames[i], width, height);
    });
    MaskMap out;
    for (std::size_t i = 0; i < masks.size(); ++i) {
        PanoMask& m = masks[i];
        std::mt19937_64 rng(mix_seed(seed, 0x0CC + i));
        const auto target = static_cast<std::size_t>(std::llround(occluder_fraction * static_cast<double>(m.size())));
        std::size_t occluded = 0;
        std::uniform_int_distribution<int> rw(std::max(1, width / 48), std::max(1, width / 12));
        std::uniform_int_distribution<int> rh(std::max(1, height / 24), std::max(1, height / 6));
        std::uniform_int_distribution<int> ru(0, width - 1), rv(0, height - 1);
        while (occluded < target) {
            const int w = rw(rng), h = rh(rng), u0 = ru(rng), v0 = rv(rng);
            for (int dv = 0; dv < h && occluded < target; ++dv) {
                const int v = v0 + dv;
                if (v >= height) break;
                for (int du = 0; du < w && occluded < target; ++du) {
                    std::uint8_t& px = m.at((u0 + du) % width, v);
                    if (px != OCCLUDED) {
                        px = OCCLUDED;
                        ++occluded;
                    }
                }
            }
        }
        if (label_noise > 0) {
            std::bernoulli_distribution flip(label_noise);
            for (std::uint8_t& px : m.labels) {
                if (px != OCCLUDED && flip(rng)) px = px == BUILDING ? NON_BUILDING : BUILDING;
            }
        }
        out.emplace(i, std::move(m));
    }
    return out;
}

/// Gaussian horizontal error on both endpoints and on lambda; z is put back
/// on terrain + camera height.
inline AlignParams perturb_params(const AlignParams& gt, const CityScene& scene, double sigma_m, double sigma_deg,
                                  std::uint64_t seed, double camera_height_m = kDefaultCameraHeightM) {
    if (sigma_m < 0 || sigma_deg < 0) throw Error(ErrorCode::InvalidArgument, "negative perturbation");
    if (sigma_m == 0 && sigma_deg == 0) return gt;
    std::mt19937_64 rng(mix_seed(seed, 0x9E7));
    std::normal_distribution<double> normal(0.0, 1.0);
    AlignParams p = gt;
    for (Vec3* v : {&p.v_s, &p.v_e}) {
        v->x += sigma_m * normal(rng);
        v->y += sigma_m * normal(rng);
        v->z = terrain_elevation(scene, xy(*v)) + camera_height_m;
    }
    p.lambda_rad += sigma_deg * kDegToRad * normal(rng);
    return p;
}

} // namespace citypano

#pragma once

#include <array>
#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "citypano/align/trajectory.hpp"
#include "citypano/city/scene.hpp"
#include "citypano/error.hpp"
#include "citypano/geo/pose.hpp"

namespace citypano {

inline constexpr const char* kAlignParamsFormat = "alignparams/1";
inline constexpr double kDefaultCameraHeightM = 2.0;

/// The seven optimized scalars: start point, end point, and the residual
/// rotation about the gravity axis.
struct AlignParams {
    Vec3 v_s;
    Vec3 v_e;
    double lambda_rad = 0.0;

    std::array<double, 7> to_array() const { return {v_s.x, v_s.y, v_s.z, v_e.x, v_e.y, v_e.z, lambda_rad}; }
    static AlignParams from_array(const std::array<double, 7>& a) {
        return {{a[0], a[1], a[2]}, {a[3], a[4], a[5]}, a[6]};
    }
    bool operator==(const AlignParams&) const = default;
};

struct SimilarityTransform {
    double scale = 1.0;
    Quaternion rotation;
    Vec3 translation;

    Vec3 apply(const Vec3& p) const { return rotation.rotate(p) * scale + translation; }

    SimilarityTransform inverse() const {
        const Quaternion r = rotation.inverse();
        return {1.0 / scale, r, r.rotate(translation) * (-1.0 / scale)};
    }
};

inline CameraPose transform_pose(const SimilarityTransform& t, const CameraPose& pose) {
    return {t.apply(pose.position), t.rotation * pose.orientation};
}

/// Local-to-global transform. Gravity is aligned with world-down exactly,
/// the local start lands on v_s exactly, |v_e - v_s| sets the scale, the
/// horizontal direction of v_e - v_s sets the base azimuth and lambda adds
/// a further rotation about the vertical through v_s.
inline SimilarityTransform build_transform(const LocalTrajectory& traj, const AlignParams& params) {
    if (traj.frames.size() < 2) throw Error(ErrorCode::DegenerateStreet, traj.street_id + ": fewer than 2 frames");
    const Vec3 g = traj.gravity_local;
    if (!g.finite() || !(g.norm() > 0.5)) throw Error(ErrorCode::GravityDegenerate, traj.street_id);
    const Quaternion r_g = Quaternion::from_two_vectors(g, {0.0, 0.0, -1.0});
    const Vec3 local_start = traj.frames.front().position;
    const Vec3 a = r_g.rotate(traj.frames.back().position - local_start);
    const Vec3 b = params.v_e - params.v_s;
    if (a.norm() < 1.0) throw Error(ErrorCode::DegenerateStreet, traj.street_id + ": local street shorter than 1 m");
    if (b.horizontal_norm() < 1.0) {
        throw Error(ErrorCode::DegenerateStreet, traj.street_id + ": |v_e - v_s| horizontal below 1 m");
    }
    if (a.horizontal_norm() < 1e-6 * a.norm()) {
        throw Error(ErrorCode::GravityDegenerate, traj.street_id + ": street runs along gravity");
    }
    SimilarityTransform t;
    t.scale = b.norm() / a.norm();
    const double phi = std::atan2(a.x * b.y - a.y * b.x, a.x * b.x + a.y * b.y);
    t.rotation = Quaternion::from_yaw(phi + params.lambda_rad) * r_g;
    t.translation = params.v_s - t.rotation.rotate(local_start) * t.scale;
    return t;
}

inline GlobalTrajectory apply_transform(const SimilarityTransform& t, const LocalTrajectory& traj) {
    GlobalTrajectory out;
    out.street_id = traj.street_id;
    out.frame_ids = traj.frame_ids;
    out.frames.reserve(traj.frames.size());
    for (const CameraPose& p : traj.frames) out.frames.push_back(transform_pose(t, p));
    return out;
}

/// Several parameter vectors describe the same transform (v_e may slide
/// along the sphere around v_s while lambda compensates). This picks the
/// representative with lambda = 0 and v_e = image of the local end.
inline AlignParams canonicalize(const LocalTrajectory& traj, const AlignParams& params) {
    const SimilarityTransform t = build_transform(traj, params);
    return {params.v_s, t.apply(traj.frames.back().position), 0.0};
}

inline AlignParams init_params(const LocalTrajectory& traj, const CityScene& scene,
                               double camera_height_m = kDefaultCameraHeightM) {
    AlignParams p;
    const Vec3 s = enu_from_geodetic(scene.origin, {traj.annotated_start.latitude_deg,
                                                    traj.annotated_start.longitude_deg, scene.origin.height_m});
    const Vec3 e = enu_from_geodetic(scene.origin, {traj.annotated_end.latitude_deg,
                                                    traj.annotated_end.longitude_deg, scene.origin.height_m});
    for (const Vec3* v : {&s, &e}) {
        if (!scene.terrain.contains(xy(*v))) {
            throw Error(ErrorCode::OutOfBounds, traj.street_id + ": annotated endpoint outside terrain");
        }
    }
    p.v_s = {s.x, s.y, terrain_elevation(scene, xy(s)) + camera_height_m};
    p.v_e = {e.x, e.y, terrain_elevation(scene, xy(e)) + camera_height_m};
    p.lambda_rad = 0.0;
    return p;
}

inline nlohmann::ordered_json params_to_json(const AlignParams& p) {
    nlohmann::ordered_json j;
    j["format"] = kAlignParamsFormat;
    j["v_s"] = {p.v_s.x, p.v_s.y, p.v_s.z};
    j["v_e"] = {p.v_e.x, p.v_e.y, p.v_e.z};
    j["lambda_rad"] = p.lambda_rad;
    return j;
}

inline AlignParams params_from_json(const nlohmann::ordered_json& j) {
    try {
        if (j.at("format").get<std::string>() != kAlignParamsFormat) {
            throw Error(ErrorCode::InvalidFormat, "unsupported params format " + j.at("format").dump());
        }
        auto vec = [&](const char* key) {
            const auto& a = j.at(key);
            if (a.size() != 3) throw Error(ErrorCode::InvalidFormat, std::string(key) + " must have 3 entries");
            return Vec3{a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
        };
        return {vec("v_s"), vec("v_e"), j.at("lambda_rad").get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidFormat, std::string("align params: ") + e.what());
    }
}

} // namespace citypano

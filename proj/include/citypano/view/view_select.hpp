#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "citypano/align/trajectory.hpp"
#include "citypano/error.hpp"
#include "citypano/geo/pose.hpp"

namespace citypano {

inline constexpr double kDefaultAlphaM = 5.0;
inline constexpr double kDefaultSmoothing = 0.96;
inline constexpr double kChestHeightM = 1.4;
inline constexpr double kHandoverLeaveM = 8.0;
inline constexpr double kHandoverJoinM = 5.0;

struct AvatarState {
    Vec3 position; // feet
    double facing = 0.0;
};

struct ViewState {
    std::size_t street = 0; // index into the trajectory set
    std::size_t frame_index = 0;
    Quaternion q_view_rel;  // relative view, smoothed
    Quaternion q_view;      // q_view_rel * q_i
    double alpha_m = kDefaultAlphaM;
    double smoothing = kDefaultSmoothing;
    bool held = false;      // orientation update skipped on the last tick
    bool switched = false;  // street handover on the last tick

    bool operator==(const ViewState& o) const {
        return street == o.street && frame_index == o.frame_index && q_view_rel.wxyz() == o.q_view_rel.wxyz() &&
               q_view.wxyz() == o.q_view.wxyz() && alpha_m == o.alpha_m && smoothing == o.smoothing &&
               held == o.held && switched == o.switched;
    }
};

inline ViewState initial_view_state(const GlobalTrajectory& traj, std::size_t street = 0, std::size_t frame = 0) {
    if (traj.frames.empty()) throw Error(ErrorCode::EmptyInput, "trajectory " + traj.street_id + " has no frames");
    ViewState s;
    s.street = street;
    s.frame_index = frame;
    s.q_view = traj.frames.at(frame).orientation;
    return s;
}

/// Distance the avatar has moved along the frame's forward axis; positive
/// means ahead of the camera.
inline double signed_forward_distance(const CameraPose& pose_i, const Vec3& x_avatar) {
    return pose_i.forward().dot(x_avatar - pose_i.position);
}

/// Steps to the adjacent frame once the avatar is more than alpha ahead of
/// or behind the current one. At most one step per call; clamped at the ends.
inline ViewState update_viewpoint(const ViewState& state, const GlobalTrajectory& traj, const AvatarState& avatar) {
    ViewState s = state;
    const double d = signed_forward_distance(traj.frames.at(s.frame_index), avatar.position);
    if (d > s.alpha_m && s.frame_index + 1 < traj.frames.size()) ++s.frame_index;
    else if (d < -s.alpha_m && s.frame_index > 0) --s.frame_index;
    return s;
}

/// One smoothing tick toward the look-at orientation from the current
/// viewpoint to the avatar's chest. Holds the previous orientation when no
/// direction can be formed.
inline ViewState update_orientation(const ViewState& state, const GlobalTrajectory& traj, const AvatarState& avatar) {
    ViewState s = state;
    const CameraPose& frame = traj.frames.at(s.frame_index);
    const Quaternion& q_i = frame.orientation;
    const Vec3 target = avatar.position + Vec3{0.0, 0.0, kChestHeightM};
    Quaternion q_avatar;
    try {
        q_avatar = look_at_quaternion(frame.position, target, s.q_view.rotate(Vec3::unit_z()));
    } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateDirection && e.code() != ErrorCode::GimbalCase) throw;
        s.held = true;
        s.q_view = s.q_view_rel * q_i;
        return s;
    }
    s.held = false;
    const Quaternion q_avatar_rel = q_avatar * q_i.inverse();
    s.q_view_rel = slerp(q_avatar_rel, s.q_view_rel, s.smoothing);
    s.q_view = s.q_view_rel * q_i;
    return s;
}

/// Horizontal distance from `p` to the polyline through the frame positions.
inline double distance_to_trajectory(const GlobalTrajectory& traj, const Vec3& p) {
    const Vec2 q = xy(p);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < traj.frames.size(); ++i) {
        const Vec2 a = xy(traj.frames[i].position);
        if (i + 1 == traj.frames.size()) {
            best = std::min(best, (q - a).norm());
            break;
        }
        const Vec2 b = xy(traj.frames[i + 1].position);
        const Vec2 ab = b - a;
        const double len2 = ab.dot(ab);
        const double t = len2 > 0.0 ? std::clamp((q - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        best = std::min(best, (q - (a + ab * t)).norm());
    }
    return best;
}

/// Nearest frame by horizontal distance.
inline std::pair<std::size_t, double> nearest_frame(const GlobalTrajectory& traj, const Vec3& p) {
    std::size_t best_i = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < traj.frames.size(); ++i) {
        const double d = (xy(traj.frames[i].position) - xy(p)).norm();
        if (d < best) {
            best = d;
            best_i = i;
        }
    }
    return {best_i, best};
}

/// One tick: street handover (if the avatar left the current street and is
/// near another), else the adjacent-frame rule, then orientation smoothing
/// against the possibly new frame.
inline ViewState step(const ViewState& state, const std::vector<GlobalTrajectory>& trajectories,
                      const AvatarState& avatar) {
    ViewState s = state;
    s.switched = false;
    const GlobalTrajectory& current = trajectories.at(s.street);
    bool moved = false;
    if (trajectories.size() > 1 && distance_to_trajectory(current, avatar.position) > kHandoverLeaveM) {
        std::optional<std::pair<std::size_t, std::size_t>> pick;
        double pick_d = kHandoverJoinM;
        for (std::size_t k = 0; k < trajectories.size(); ++k) {
            if (k == s.street || trajectories[k].frames.empty()) continue;
            const auto [i, d] = nearest_frame(trajectories[k], avatar.position);
            if (d <= pick_d) {
                pick_d = d;
                pick = {k, i};
            }
        }
        if (pick) {
            s.street = pick->first;
            s.frame_index = pick->second;
            s.q_view_rel = Quaternion::identity();
            s.q_view = trajectories[s.street].frames[s.frame_index].orientation;
            s.switched = true;
            moved = true;
        }
    }
    if (!moved) s = update_viewpoint(s, trajectories.at(s.street), avatar);
    return update_orientation(s, trajectories.at(s.street), avatar);
}

} // namespace citypano

#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "citypano/error.hpp"
#include "citypano/geo/geodetic.hpp"
#include "citypano/geo/pose.hpp"

namespace citypano {

/// Camera trajectory in a SLAM-local frame, with the SLAM gravity estimate
/// and the map-annotated street endpoints (lat/lon only).
struct LocalTrajectory {
    std::string street_id;
    std::vector<CameraPose> frames;
    std::vector<int> frame_ids; // wire frame indices; empty means 0..F-1
    Vec3 gravity_local{0.0, 0.0, -1.0};
    GeodeticPoint annotated_start;
    GeodeticPoint annotated_end;

    std::size_t size() const { return frames.size(); }
    int frame_id(std::size_t i) const { return frame_ids.empty() ? static_cast<int>(i) : frame_ids[i]; }

    void validate() const {
        if (frames.size() < 2) throw Error(ErrorCode::InvalidFormat, street_id + ": trajectory needs >= 2 frames");
        if (!frame_ids.empty() && frame_ids.size() != frames.size()) {
            throw Error(ErrorCode::InvalidFormat, street_id + ": frame id count mismatch");
        }
        if (!gravity_local.finite() || std::abs(gravity_local.norm() - 1.0) > 1e-6) {
            throw Error(ErrorCode::InvalidFormat, street_id + ": gravity must be a unit vector");
        }
        for (std::size_t i = 0; i < frames.size(); ++i) {
            if (!frames[i].position.finite()) throw Error(ErrorCode::InvalidFormat, street_id + ": non-finite pose");
            if (i > 0 && frames[i].position == frames[i - 1].position) {
                throw Error(ErrorCode::InvalidFormat,
                            street_id + ": repeated position at frame " + std::to_string(frame_id(i)));
            }
        }
    }
};

/// Frames in the global ENU frame of the city model.
struct GlobalTrajectory {
    std::string street_id;
    std::vector<CameraPose> frames;
    std::vector<int> frame_ids;

    std::size_t size() const { return frames.size(); }
    int frame_id(std::size_t i) const { return frame_ids.empty() ? static_cast<int>(i) : frame_ids[i]; }
};

inline std::string format_trajectory(const LocalTrajectory& traj) {
    std::ostringstream out;
    out.precision(17);
    out << "#street " << traj.street_id << "\n";
    out << "#gravity " << traj.gravity_local.x << " " << traj.gravity_local.y << " " << traj.gravity_local.z << "\n";
    out << "#start " << traj.annotated_start.latitude_deg << " " << traj.annotated_start.longitude_deg << "\n";
    out << "#end " << traj.annotated_end.latitude_deg << " " << traj.annotated_end.longitude_deg << "\n";
    for (std::size_t i = 0; i < traj.frames.size(); ++i) {
        const CameraPose& p = traj.frames[i];
        const Quaternion& q = p.orientation;
        out << traj.frame_id(i) << " " << p.position.x << " " << p.position.y << " " << p.position.z << " "
            << q.x() << " " << q.y() << " " << q.z() << " " << q.w() << "\n";
    }
    return out.str();
}

/// Parses the line-oriented trajectory format. Quaternions are scalar-last
/// on the wire.
inline LocalTrajectory parse_trajectory(const std::string& text) {
    LocalTrajectory traj;
    bool have_street = false, have_gravity = false, have_start = false, have_end = false;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& what) {
        throw Error(ErrorCode::InvalidFormat, "trajectory line " + std::to_string(line_no) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::istringstream ls(line);
        if (line[0] == '#') {
            std::string key;
            ls >> key;
            if (key == "#street") {
                if (!(ls >> traj.street_id)) fail("missing street id");
                have_street = true;
            } else if (key == "#gravity") {
                Vec3& g = traj.gravity_local;
                if (!(ls >> g.x >> g.y >> g.z)) fail("bad gravity");
                const double n = g.norm();
                if (!(n > 0.0) || !std::isfinite(n)) fail("zero gravity");
                g = g / n;
                have_gravity = true;
            } else if (key == "#start" || key == "#end") {
                GeodeticPoint& p = key == "#start" ? traj.annotated_start : traj.annotated_end;
                if (!(ls >> p.latitude_deg >> p.longitude_deg)) fail("bad " + key.substr(1));
                if (!p.valid()) fail("invalid geodetic point");
                (key == "#start" ? have_start : have_end) = true;
            }
            continue;
        }
        int idx = 0;
        double tx, ty, tz, qx, qy, qz, qw;
        if (!(ls >> idx >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) fail("expected 'idx tx ty tz qx qy qz qw'");
        try {
            traj.frames.push_back({{tx, ty, tz}, Quaternion(qw, qx, qy, qz)});
        } catch (const Error&) {
            fail("degenerate quaternion");
        }
        traj.frame_ids.push_back(idx);
    }
    if (!have_street || !have_gravity || !have_start || !have_end) {
        throw Error(ErrorCode::InvalidFormat, "trajectory header needs #street, #gravity, #start and #end");
    }
    traj.validate();
    return traj;
}

inline LocalTrajectory load_trajectory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_trajectory(ss.str());
}

} // namespace citypano

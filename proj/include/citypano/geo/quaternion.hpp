#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>

#include "citypano/error.hpp"
#include "citypano/geo/vec3.hpp"

namespace citypano {

/// Unit quaternion, scalar first. Every constructor and every operation
/// renormalizes, so a Quaternion value is always a rotation.
class Quaternion {
public:
    Quaternion() = default;

    Quaternion(double w, double x, double y, double z) : w_(w), x_(x), y_(y), z_(z) {
        normalize();
    }

    static Quaternion identity() { return {}; }

    /// `angle_rad` about `axis` (axis need not be unit, must be nonzero).
    static Quaternion from_axis_angle(const Vec3& axis, double angle_rad) {
        const Vec3 a = axis.normalized();
        const double h = 0.5 * angle_rad;
        const double s = std::sin(h);
        return {std::cos(h), a.x * s, a.y * s, a.z * s};
    }

    static Quaternion from_yaw(double yaw_rad) { return from_axis_angle(Vec3::unit_z(), yaw_rad); }

    /// Rotation whose matrix has the given columns (images of +X, +Y, +Z).
    static Quaternion from_basis(const Vec3& cx, const Vec3& cy, const Vec3& cz) {
        const double m00 = cx.x, m10 = cx.y, m20 = cx.z;
        const double m01 = cy.x, m11 = cy.y, m21 = cy.z;
        const double m02 = cz.x, m12 = cz.y, m22 = cz.z;
        const double trace = m00 + m11 + m22;
        if (trace > 0.0) {
            const double s = 0.5 / std::sqrt(trace + 1.0);
            return {0.25 / s, (m21 - m12) * s, (m02 - m20) * s, (m10 - m01) * s};
        }
        if (m00 > m11 && m00 > m22) {
            const double s = 2.0 * std::sqrt(1.0 + m00 - m11 - m22);
            return {(m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s};
        }
        if (m11 > m22) {
            const double s = 2.0 * std::sqrt(1.0 + m11 - m00 - m22);
            return {(m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s};
        }
        const double s = 2.0 * std::sqrt(1.0 + m22 - m00 - m11);
        return {(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s};
    }

    /// Minimal rotation taking unit direction `from` onto unit direction `to`.
    static Quaternion from_two_vectors(const Vec3& from, const Vec3& to) {
        const Vec3 f = from.normalized();
        const Vec3 t = to.normalized();
        const double c = f.dot(t);
        if (c < -1.0 + 1e-12) {
            // Antiparallel: any axis orthogonal to `from` works.
            Vec3 axis = f.cross(Vec3::unit_x());
            if (axis.squared_norm() < 1e-12) axis = f.cross(Vec3::unit_y());
            return from_axis_angle(axis, M_PI);
        }
        const Vec3 v = f.cross(t);
        return {1.0 + c, v.x, v.y, v.z};
    }

    double w() const { return w_; }
    double x() const { return x_; }
    double y() const { return y_; }
    double z() const { return z_; }

    Quaternion operator*(const Quaternion& o) const {
        return {w_ * o.w_ - x_ * o.x_ - y_ * o.y_ - z_ * o.z_,
                w_ * o.x_ + x_ * o.w_ + y_ * o.z_ - z_ * o.y_,
                w_ * o.y_ - x_ * o.z_ + y_ * o.w_ + z_ * o.x_,
                w_ * o.z_ + x_ * o.y_ - y_ * o.x_ + z_ * o.w_};
    }

    Quaternion inverse() const { return {w_, -x_, -y_, -z_}; }
    Quaternion negated() const { return {-w_, -x_, -y_, -z_}; }

    double dot(const Quaternion& o) const {
        return w_ * o.w_ + x_ * o.x_ + y_ * o.y_ + z_ * o.z_;
    }

    Vec3 rotate(const Vec3& v) const {
        // v + 2w(u x v) + 2 u x (u x v)
        const Vec3 u{x_, y_, z_};
        const Vec3 t = u.cross(v) * 2.0;
        return v + t * w_ + u.cross(t);
    }

    /// Rotation angle in [0, pi] of this quaternion (sign-insensitive).
    double angle() const {
        const double vn = std::sqrt(x_ * x_ + y_ * y_ + z_ * z_);
        return 2.0 * std::atan2(vn, std::abs(w_));
    }

    /// Yaw about +Z of the rotated +X axis.
    double yaw() const {
        const Vec3 f = rotate(Vec3::unit_x());
        return std::atan2(f.y, f.x);
    }

    std::array<double, 4> wxyz() const { return {w_, x_, y_, z_}; }

private:
    void normalize() {
        const double n = std::sqrt(w_ * w_ + x_ * x_ + y_ * y_ + z_ * z_);
        if (!(n > 0.0) || !std::isfinite(n)) {
            throw Error(ErrorCode::InvalidArgument, "quaternion with zero or non-finite norm");
        }
        w_ /= n;
        x_ /= n;
        y_ /= n;
        z_ /= n;
    }

    double w_ = 1.0;
    double x_ = 0.0;
    double y_ = 0.0;
    double z_ = 0.0;
};

/// Angle in [0, pi] of the relative rotation between two orientations.
inline double angle_between(const Quaternion& a, const Quaternion& b) {
    const double d = std::clamp(std::abs(a.dot(b)), 0.0, 1.0);
    // acos is ill-conditioned near 1; use the relative rotation instead.
    if (d > 0.9999) return (a.inverse() * b).angle();
    return 2.0 * std::acos(d);
}

/// Spherical linear interpolation along the shorter arc. p = 0 gives q1,
/// p = 1 gives q2 (or its antipode when the arc was flipped).
inline Quaternion slerp(const Quaternion& q1, Quaternion q2, double p) {
    double c = q1.dot(q2);
    if (c < 0.0) {
        q2 = q2.negated();
        c = -c;
    }
    c = std::min(c, 1.0);
    const double theta = std::acos(c);
    if (theta < 1e-7) {
        return {q1.w() + p * (q2.w() - q1.w()), q1.x() + p * (q2.x() - q1.x()),
                q1.y() + p * (q2.y() - q1.y()), q1.z() + p * (q2.z() - q1.z())};
    }
    const double s = std::sin(theta);
    const double a = std::sin((1.0 - p) * theta) / s;
    const double b = std::sin(p * theta) / s;
    return {a * q1.w() + b * q2.w(), a * q1.x() + b * q2.x(), a * q1.y() + b * q2.y(),
            a * q1.z() + b * q2.z()};
}

/// Roll-free orientation whose +X axis points from `eye` to `target`; the
/// camera +Z stays in the plane of world-up and the forward axis.
///
/// When the forward axis is within 0.5 deg of vertical, world-up cannot fix
/// the roll; `up_hint` (typically the previous camera up) is used instead,
/// and without one the call fails with GimbalCase.
inline Quaternion look_at_quaternion(const Vec3& eye, const Vec3& target,
                                     const std::optional<Vec3>& up_hint = std::nullopt) {
    const Vec3 delta = target - eye;
    const double len = delta.norm();
    if (!(len > 1e-6)) {
        throw Error(ErrorCode::DegenerateDirection, "look-at target coincides with eye");
    }
    const Vec3 forward = delta / len;
    Vec3 up = Vec3::unit_z();
    if (std::abs(forward.z) > std::cos(0.5 * M_PI / 180.0)) {
        if (!up_hint || up_hint->cross(forward).squared_norm() < 1e-12) {
            throw Error(ErrorCode::GimbalCase, "look-at direction is vertical");
        }
        up = *up_hint;
    }
    const Vec3 left = up.cross(forward).normalized();
    const Vec3 cam_up = forward.cross(left);
    return Quaternion::from_basis(forward, left, cam_up);
}

} // namespace citypano

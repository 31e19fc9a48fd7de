#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "citypano/error.hpp"
#include "citypano/geo/vec3.hpp"

namespace citypano {

using Polygon2 = std::vector<Vec2>;

inline double signed_area(std::span<const Vec2> ring) {
    double a = 0.0;
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) a += ring[i].cross(ring[(i + 1) % n]);
    return 0.5 * a;
}

inline Vec2 polygon_centroid(std::span<const Vec2> ring) {
    const double area = signed_area(ring);
    const std::size_t n = ring.size();
    if (std::abs(area) < 1e-12) {
        Vec2 c;
        for (const Vec2& p : ring) c = c + p;
        return c * (1.0 / static_cast<double>(n));
    }
    double cx = 0.0, cy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = ring[i];
        const Vec2& b = ring[(i + 1) % n];
        const double f = a.cross(b);
        cx += (a.x + b.x) * f;
        cy += (a.y + b.y) * f;
    }
    return {cx / (6.0 * area), cy / (6.0 * area)};
}

/// Crossing-number test; points exactly on the boundary may go either way.
inline bool point_in_polygon(std::span<const Vec2> ring, const Vec2& p) {
    bool inside = false;
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = ring[i];
        const Vec2& b = ring[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < x) inside = !inside;
        }
    }
    return inside;
}

namespace detail {

inline double orient(const Vec2& a, const Vec2& b, const Vec2& c) { return (b - a).cross(c - a); }

inline bool on_segment(const Vec2& a, const Vec2& b, const Vec2& p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}

inline bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
    const double d1 = orient(q1, q2, p1);
    const double d2 = orient(q1, q2, p2);
    const double d3 = orient(p1, p2, q1);
    const double d4 = orient(p1, p2, q2);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
        return true;
    }
    if (d1 == 0 && on_segment(q1, q2, p1)) return true;
    if (d2 == 0 && on_segment(q1, q2, p2)) return true;
    if (d3 == 0 && on_segment(p1, p2, q1)) return true;
    if (d4 == 0 && on_segment(p1, p2, q2)) return true;
    return false;
}

} // namespace detail

/// True when no two non-adjacent edges touch and the ring has nonzero area.
inline bool is_simple(std::span<const Vec2> ring) {
    const std::size_t n = ring.size();
    if (n < 3 || std::abs(signed_area(ring)) < 1e-12) return false;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = ring[i];
        const Vec2& b = ring[(i + 1) % n];
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if (adjacent) continue;
            if (detail::segments_intersect(a, b, ring[j], ring[(j + 1) % n])) return false;
        }
    }
    return true;
}

/// Drops a closing duplicate, repeated vertices and exactly collinear
/// vertices, then orients the ring counter-clockwise.
inline Polygon2 clean_ring(Polygon2 ring, double tol = 1e-9) {
    if (ring.size() >= 2 && (ring.front() - ring.back()).norm() <= tol) ring.pop_back();
    Polygon2 out;
    for (const Vec2& p : ring) {
        if (out.empty() || (p - out.back()).norm() > tol) out.push_back(p);
    }
    if (out.size() >= 2 && (out.front() - out.back()).norm() <= tol) out.pop_back();
    bool changed = true;
    while (changed && out.size() > 3) {
        changed = false;
        for (std::size_t i = 0; i < out.size(); ++i) {
            const Vec2& prev = out[(i + out.size() - 1) % out.size()];
            const Vec2& next = out[(i + 1) % out.size()];
            const Vec2 e1 = out[i] - prev;
            const Vec2 e2 = next - out[i];
            if (std::abs(e1.cross(e2)) <= tol * (e1.norm() + e2.norm()) && e1.dot(e2) > 0.0) {
                out.erase(out.begin() + static_cast<std::ptrdiff_t>(i));
                changed = true;
                break;
            }
        }
    }
    if (signed_area(out) < 0.0) std::reverse(out.begin(), out.end());
    return out;
}

/// Ear-clipping triangulation of a simple counter-clockwise ring. Returns
/// index triples into `ring`, all counter-clockwise and non-degenerate.
inline std::vector<std::array<int, 3>> ear_clip(std::span<const Vec2> ring) {
    const int n = static_cast<int>(ring.size());
    if (n < 3) throw Error(ErrorCode::TriangulationFailure, "ring with fewer than 3 vertices");
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::vector<std::array<int, 3>> tris;
    tris.reserve(n - 2);

    auto inside_or_on = [](const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p) {
        return detail::orient(a, b, p) >= 0 && detail::orient(b, c, p) >= 0 &&
               detail::orient(c, a, p) >= 0;
    };

    while (idx.size() > 3) {
        const int m = static_cast<int>(idx.size());
        bool clipped = false;
        for (int k = 0; k < m; ++k) {
            const int ia = idx[(k + m - 1) % m];
            const int ib = idx[k];
            const int ic = idx[(k + 1) % m];
            const Vec2& a = ring[ia];
            const Vec2& b = ring[ib];
            const Vec2& c = ring[ic];
            if (detail::orient(a, b, c) <= 1e-12) continue;
            bool ear = true;
            for (int j = 0; j < m && ear; ++j) {
                const int ip = idx[j];
                if (ip == ia || ip == ib || ip == ic) continue;
                const Vec2& p = ring[ip];
                if (p == a || p == b || p == c) continue;
                if (inside_or_on(a, b, c, p)) ear = false;
            }
            if (!ear) continue;
            tris.push_back({ia, ib, ic});
            idx.erase(idx.begin() + k);
            clipped = true;
            break;
        }
        if (!clipped) throw Error(ErrorCode::TriangulationFailure, "no ear found");
    }
    if (detail::orient(ring[idx[0]], ring[idx[1]], ring[idx[2]]) <= 1e-12) {
        throw Error(ErrorCode::TriangulationFailure, "degenerate final triangle");
    }
    tris.push_back({idx[0], idx[1], idx[2]});
    return tris;
}

/// Parameters t >= 0 along `origin + t * dir` where the ray is inside the
/// polygon, as sorted [enter, exit] pairs.
inline void ray_polygon_intervals(std::span<const Vec2> ring, const Vec2& origin, const Vec2& dir,
                                  std::vector<std::pair<double, double>>& out) {
    out.clear();
    thread_local std::vector<double> hits;
    hits.clear();
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = ring[i];
        const Vec2& b = ring[(i + 1) % n];
        const Vec2 e = b - a;
        const double denom = dir.cross(e);
        if (denom == 0.0) continue;
        const Vec2 w = a - origin;
        const double t = w.cross(e) / denom;
        const double s = w.cross(dir) / denom;
        // Half-open on the edge parameter so a vertex crossing counts once.
        if (s >= 0.0 && s < 1.0 && t >= 0.0) hits.push_back(t);
    }
    std::sort(hits.begin(), hits.end());
    const bool inside = point_in_polygon(ring, origin);
    std::size_t i = 0;
    if (inside) {
        out.emplace_back(0.0, hits.empty() ? 0.0 : hits[0]);
        i = 1;
    }
    for (; i + 1 < hits.size(); i += 2) out.emplace_back(hits[i], hits[i + 1]);
}

} // namespace citypano

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "citypano/city/mesh.hpp"
#include "citypano/geo/vec3.hpp"

namespace citypano {

struct Ray {
    Vec3 origin;
    Vec3 dir; // need not be unit; hit distances are in units of |dir|
};

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    std::uint32_t triangle = std::numeric_limits<std::uint32_t>::max();
    bool hit() const { return triangle != std::numeric_limits<std::uint32_t>::max(); }
};

/// Double-sided Moller-Trumbore. Returns t > t_min or +inf.
inline double intersect_triangle(const Ray& ray, const Vec3& v0, const Vec3& e1, const Vec3& e2,
                                 double t_min = 1e-9) {
    const Vec3 p = ray.dir.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-14) return std::numeric_limits<double>::infinity();
    const double inv = 1.0 / det;
    const Vec3 s = ray.origin - v0;
    const double u = s.dot(p) * inv;
    if (u < 0.0 || u > 1.0) return std::numeric_limits<double>::infinity();
    const Vec3 q = s.cross(e1);
    const double v = ray.dir.dot(q) * inv;
    if (v < 0.0 || u + v > 1.0) return std::numeric_limits<double>::infinity();
    const double t = e2.dot(q) * inv;
    return t > t_min ? t : std::numeric_limits<double>::infinity();
}

/// Bounding-volume hierarchy over mesh triangles (binned SAH build).
class Bvh {
public:
    Bvh() = default;

    explicit Bvh(const TriangleMesh& mesh) {
        const std::size_t n = mesh.triangles.size();
        tris_.resize(n);
        std::vector<Box> boxes(n);
        std::vector<Vec3> centers(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& t = mesh.triangles[i];
            const Vec3& a = mesh.vertices[t[0]];
            const Vec3& b = mesh.vertices[t[1]];
            const Vec3& c = mesh.vertices[t[2]];
            tris_[i] = {a, b - a, c - a};
            boxes[i].grow(a);
            boxes[i].grow(b);
            boxes[i].grow(c);
            centers[i] = (a + b + c) / 3.0;
        }
        order_.resize(n);
        for (std::size_t i = 0; i < n; ++i) order_[i] = static_cast<std::uint32_t>(i);
        if (n == 0) return;
        nodes_.reserve(2 * n);
        nodes_.push_back({});
        build(0, 0, static_cast<std::uint32_t>(n), boxes, centers);
        // Reorder triangle data into leaf order.
        std::vector<Tri> sorted(n);
        for (std::size_t i = 0; i < n; ++i) sorted[i] = tris_[order_[i]];
        tris_ = std::move(sorted);
    }

    bool empty() const { return nodes_.empty(); }
    std::size_t triangle_count() const { return tris_.size(); }

    /// Closest hit with t in (t_min, t_max).
    Hit closest(const Ray& ray, double t_max = std::numeric_limits<double>::infinity(),
                double t_min = 1e-9) const {
        Hit best;
        best.t = t_max;
        if (nodes_.empty()) return Hit{};
        const Vec3 inv = inverse_dir(ray.dir);
        std::array<std::uint32_t, 128> stack;
        int sp = 0;
        stack[sp++] = 0;
        while (sp > 0) {
            const Node& node = nodes_[stack[--sp]];
            if (slab(node.box, ray.origin, inv, best.t) == kMiss) continue;
            if (node.count > 0) {
                for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
                    const Tri& tr = tris_[i];
                    const double t = intersect_triangle(ray, tr.v0, tr.e1, tr.e2, t_min);
                    if (t < best.t) {
                        best.t = t;
                        best.triangle = order_[i];
                    }
                }
                continue;
            }
            const std::uint32_t l = node.first;
            const std::uint32_t r = node.first + 1;
            const double tl = slab(nodes_[l].box, ray.origin, inv, best.t);
            const double tr = slab(nodes_[r].box, ray.origin, inv, best.t);
            // Push the farther child first so the nearer one is popped next.
            if (tl <= tr) {
                if (tr != kMiss) stack[sp++] = r;
                if (tl != kMiss) stack[sp++] = l;
            } else {
                if (tl != kMiss) stack[sp++] = l;
                if (tr != kMiss) stack[sp++] = r;
            }
        }
        if (!best.hit()) return Hit{};
        return best;
    }

    /// True if any triangle is hit with t in (t_min, t_max).
    bool any(const Ray& ray, double t_max, double t_min = 1e-9) const {
        if (nodes_.empty()) return false;
        const Vec3 inv = inverse_dir(ray.dir);
        std::array<std::uint32_t, 128> stack;
        int sp = 0;
        stack[sp++] = 0;
        while (sp > 0) {
            const Node& node = nodes_[stack[--sp]];
            if (slab(node.box, ray.origin, inv, t_max) == kMiss) continue;
            if (node.count > 0) {
                for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
                    const Tri& tr = tris_[i];
                    if (intersect_triangle(ray, tr.v0, tr.e1, tr.e2, t_min) < t_max) return true;
                }
                continue;
            }
            stack[sp++] = node.first;
            stack[sp++] = node.first + 1;
        }
        return false;
    }

    /// Every hit along the ray (unsorted), as original triangle indices.
    void all_hits(const Ray& ray, std::vector<Hit>& out) const {
        out.clear();
        if (nodes_.empty()) return;
        const Vec3 inv = inverse_dir(ray.dir);
        std::array<std::uint32_t, 128> stack;
        int sp = 0;
        stack[sp++] = 0;
        const double inf = std::numeric_limits<double>::infinity();
        while (sp > 0) {
            const Node& node = nodes_[stack[--sp]];
            if (slab(node.box, ray.origin, inv, inf) == kMiss) continue;
            if (node.count > 0) {
                for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
                    const Tri& tr = tris_[i];
                    const double t = intersect_triangle(ray, tr.v0, tr.e1, tr.e2);
                    if (t < inf) out.push_back({t, order_[i]});
                }
                continue;
            }
            stack[sp++] = node.first;
            stack[sp++] = node.first + 1;
        }
    }

private:
    struct Box {
        Vec3 lo{1e300, 1e300, 1e300};
        Vec3 hi{-1e300, -1e300, -1e300};
        void grow(const Vec3& p) {
            lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
            hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
        }
        void grow(const Box& b) {
            grow(b.lo);
            grow(b.hi);
        }
        double area() const {
            const Vec3 d = hi - lo;
            if (d.x < 0) return 0.0;
            return 2.0 * (d.x * d.y + d.y * d.z + d.z * d.x);
        }
    };
    struct Node {
        Box box;
        std::uint32_t first = 0; // child index (inner) or first triangle (leaf)
        std::uint32_t count = 0; // 0 for inner nodes
    };
    struct Tri {
        Vec3 v0, e1, e2;
    };

    static constexpr double kMiss = std::numeric_limits<double>::infinity();
    static constexpr std::uint32_t kLeafSize = 4;
    static constexpr int kBins = 16;

    static Vec3 inverse_dir(const Vec3& d) {
        auto inv = [](double x) {
            return x == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / x;
        };
        return {inv(d.x), inv(d.y), inv(d.z)};
    }

    /// Entry distance into the box, or kMiss.
    static double slab(const Box& b, const Vec3& o, const Vec3& inv, double t_max) {
        double t0 = 0.0, t1 = t_max;
        for (int a = 0; a < 3; ++a) {
            const double ia = inv[a];
            double tn = (b.lo[a] - o[a]) * ia;
            double tf = (b.hi[a] - o[a]) * ia;
            if (std::isnan(tn) || std::isnan(tf)) {
                // Ray parallel to the slab with the origin on its plane.
                if (o[a] < b.lo[a] || o[a] > b.hi[a]) return kMiss;
                continue;
            }
            if (tn > tf) std::swap(tn, tf);
            t0 = std::max(t0, tn);
            // Widen by a relative epsilon so grazing hits on flat boxes survive.
            t1 = std::min(t1, tf * (1.0 + 1e-12) + 1e-12);
            if (t0 > t1) return kMiss;
        }
        return t0;
    }

    void build(std::uint32_t node_index, std::uint32_t first, std::uint32_t count,
               const std::vector<Box>& boxes, const std::vector<Vec3>& centers) {
        Box box, cbox;
        for (std::uint32_t i = first; i < first + count; ++i) {
            box.grow(boxes[order_[i]]);
            cbox.grow(centers[order_[i]]);
        }
        nodes_[node_index].box = box;
        if (count <= kLeafSize) {
            nodes_[node_index].first = first;
            nodes_[node_index].count = count;
            return;
        }
        // Binned SAH over the widest centroid axis.
        const Vec3 ext = cbox.hi - cbox.lo;
        int axis = 0;
        if (ext.y > ext[axis]) axis = 1;
        if (ext.z > ext[axis]) axis = 2;
        std::uint32_t mid = first + count / 2;
        if (ext[axis] > 0.0) {
            std::array<Box, kBins> bin_box;
            std::array<std::uint32_t, kBins> bin_count{};
            const double scale = kBins / ext[axis];
            auto bin_of = [&](std::uint32_t tri) {
                return std::min(kBins - 1, static_cast<int>((centers[tri][axis] - cbox.lo[axis]) * scale));
            };
            for (std::uint32_t i = first; i < first + count; ++i) {
                const int b = bin_of(order_[i]);
                bin_box[b].grow(boxes[order_[i]]);
                ++bin_count[b];
            }
            double best_cost = std::numeric_limits<double>::infinity();
            int best_split = -1;
            for (int s = 1; s < kBins; ++s) {
                Box lb, rb;
                std::uint32_t lc = 0, rc = 0;
                for (int b = 0; b < s; ++b) {
                    if (bin_count[b]) lb.grow(bin_box[b]);
                    lc += bin_count[b];
                }
                for (int b = s; b < kBins; ++b) {
                    if (bin_count[b]) rb.grow(bin_box[b]);
                    rc += bin_count[b];
                }
                if (lc == 0 || rc == 0) continue;
                const double cost = lb.area() * lc + rb.area() * rc;
                if (cost < best_cost) {
                    best_cost = cost;
                    best_split = s;
                }
            }
            if (best_split > 0) {
                auto it = std::partition(order_.begin() + first, order_.begin() + first + count,
                                         [&](std::uint32_t tri) { return bin_of(tri) < best_split; });
                mid = static_cast<std::uint32_t>(it - order_.begin());
            }
        }
        if (mid == first || mid == first + count) {
            std::nth_element(order_.begin() + first, order_.begin() + first + count / 2,
                             order_.begin() + first + count, [&](std::uint32_t a, std::uint32_t b) {
                                 return centers[a][axis] < centers[b][axis];
                             });
            mid = first + count / 2;
        }
        const auto left = static_cast<std::uint32_t>(nodes_.size());
        nodes_.push_back({});
        nodes_.push_back({});
        nodes_[node_index].first = left;
        nodes_[node_index].count = 0;
        build(left, first, mid - first, boxes, centers);
        build(left + 1, mid, first + count - mid, boxes, centers);
    }

    std::vector<Node> nodes_;
    std::vector<Tri> tris_;
    std::vector<std::uint32_t> order_;
};

} // namespace citypano

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "citypano/error.hpp"
#include "citypano/geo/vec3.hpp"

namespace citypano {

/// Regular elevation grid. Node (r, c) sits at origin + (c, r) * cell_size;
/// heights are row-major with rows running north.
struct Terrain {
    Vec2 origin;
    double cell_size = 2.0;
    int rows = 0;
    int cols = 0;
    std::vector<double> heights;

    static Terrain flat(Vec2 min_corner, Vec2 max_corner, double elevation, double cell = 2.0) {
        Terrain t;
        t.origin = min_corner;
        t.cell_size = cell;
        t.cols = std::max(2, static_cast<int>(std::ceil((max_corner.x - min_corner.x) / cell)) + 1);
        t.rows = std::max(2, static_cast<int>(std::ceil((max_corner.y - min_corner.y) / cell)) + 1);
        t.heights.assign(static_cast<std::size_t>(t.rows) * t.cols, elevation);
        return t;
    }

    double at(int r, int c) const { return heights[static_cast<std::size_t>(r) * cols + c]; }
    double& at(int r, int c) { return heights[static_cast<std::size_t>(r) * cols + c]; }

    Vec2 node_xy(int r, int c) const { return {origin.x + c * cell_size, origin.y + r * cell_size}; }
    Vec2 max_corner() const { return node_xy(rows - 1, cols - 1); }

    bool contains(const Vec2& p) const {
        const Vec2 hi = max_corner();
        return p.x >= origin.x && p.y >= origin.y && p.x <= hi.x && p.y <= hi.y;
    }

    void validate() const {
        if (!(cell_size > 0.0)) throw Error(ErrorCode::InvalidFormat, "terrain cell size must be positive");
        if (rows < 2 || cols < 2) throw Error(ErrorCode::InvalidFormat, "terrain needs at least 2x2 nodes");
        if (heights.size() != static_cast<std::size_t>(rows) * cols) {
            throw Error(ErrorCode::InvalidFormat, "terrain height count does not match rows*cols");
        }
    }

    /// Bilinear interpolation; exact at grid nodes.
    double elevation(const Vec2& p) const {
        if (!contains(p)) throw Error(ErrorCode::OutOfBounds, "point outside terrain bounds");
        const double fx = (p.x - origin.x) / cell_size;
        const double fy = (p.y - origin.y) / cell_size;
        const int c = std::clamp(static_cast<int>(std::floor(fx)), 0, cols - 2);
        const int r = std::clamp(static_cast<int>(std::floor(fy)), 0, rows - 2);
        const double tx = fx - c;
        const double ty = fy - r;
        const double h00 = at(r, c), h01 = at(r, c + 1), h10 = at(r + 1, c), h11 = at(r + 1, c + 1);
        return (1 - ty) * ((1 - tx) * h00 + tx * h01) + ty * ((1 - tx) * h10 + tx * h11);
    }

    /// Coefficients (a, b, c) of z = a + b x + c y when every node lies on
    /// one plane within `tol`; false otherwise.
    bool planar_fit(double& a, double& b, double& c, double tol = 1e-9) const {
        const double h00 = at(0, 0);
        b = (at(0, cols - 1) - h00) / ((cols - 1) * cell_size);
        c = (at(rows - 1, 0) - h00) / ((rows - 1) * cell_size);
        a = h00 - b * origin.x - c * origin.y;
        for (int r = 0; r < rows; ++r) {
            for (int col = 0; col < cols; ++col) {
                const Vec2 p = node_xy(r, col);
                if (std::abs(a + b * p.x + c * p.y - at(r, col)) > tol) return false;
            }
        }
        return true;
    }

    double min_height() const { return *std::min_element(heights.begin(), heights.end()); }
    double max_height() const { return *std::max_element(heights.begin(), heights.end()); }
};

} // namespace citypano

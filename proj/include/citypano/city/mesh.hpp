#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "citypano/city/polygon.hpp"
#include "citypano/city/scene.hpp"
#include "citypano/error.hpp"

namespace citypano {

inline constexpr std::int32_t kGroundLabel = -1;

/// Triangle soup with per-triangle labels: a label >= 0 indexes
/// `building_ids`, kGroundLabel marks terrain.
struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> triangles;
    std::vector<std::int32_t> labels;
    std::vector<std::string> building_ids;

    std::size_t size() const { return triangles.size(); }
    bool is_building(std::size_t tri) const { return labels[tri] >= 0; }
};

namespace detail {

inline bool degenerate(const Vec3& a, const Vec3& b, const Vec3& c) {
    return (b - a).cross(c - a).squared_norm() < 1e-18;
}

inline void add_triangle(TriangleMesh& mesh, std::uint32_t a, std::uint32_t b, std::uint32_t c,
                         std::int32_t label) {
    if (degenerate(mesh.vertices[a], mesh.vertices[b], mesh.vertices[c])) return;
    mesh.triangles.push_back({a, b, c});
    mesh.labels.push_back(label);
}

} // namespace detail

/// Appends one closed prism (sides + top cap; no bottom) for `b`.
inline void extrude_building(const Building& b, std::int32_t label, TriangleMesh& mesh) {
    const std::size_t n = b.footprint.size();
    std::vector<std::array<int, 3>> cap;
    try {
        cap = ear_clip(b.footprint);
    } catch (const Error&) {
        throw Error(ErrorCode::TriangulationFailure, "footprint of building " + b.id);
    }
    const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
    const double z0 = b.base_elevation_m;
    const double z1 = b.top_elevation_m();
    for (const Vec2& p : b.footprint) mesh.vertices.push_back({p.x, p.y, z0});
    for (const Vec2& p : b.footprint) mesh.vertices.push_back({p.x, p.y, z1});
    const auto un = static_cast<std::uint32_t>(n);
    for (std::uint32_t i = 0; i < un; ++i) {
        const std::uint32_t j = (i + 1) % un;
        // Outward-facing for a CCW footprint.
        detail::add_triangle(mesh, base + i, base + j, base + un + j, label);
        detail::add_triangle(mesh, base + i, base + un + j, base + un + i, label);
    }
    for (const auto& t : cap) {
        detail::add_triangle(mesh, base + un + static_cast<std::uint32_t>(t[0]),
                             base + un + static_cast<std::uint32_t>(t[1]),
                             base + un + static_cast<std::uint32_t>(t[2]), label);
    }
}

inline void append_terrain(const Terrain& terrain, TriangleMesh& mesh) {
    const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
    for (int r = 0; r < terrain.rows; ++r) {
        for (int c = 0; c < terrain.cols; ++c) {
            const Vec2 p = terrain.node_xy(r, c);
            mesh.vertices.push_back({p.x, p.y, terrain.at(r, c)});
        }
    }
    const auto cols = static_cast<std::uint32_t>(terrain.cols);
    for (int r = 0; r + 1 < terrain.rows; ++r) {
        for (int c = 0; c + 1 < terrain.cols; ++c) {
            const std::uint32_t v00 = base + static_cast<std::uint32_t>(r) * cols + static_cast<std::uint32_t>(c);
            const std::uint32_t v01 = v00 + 1;
            const std::uint32_t v10 = v00 + cols;
            const std::uint32_t v11 = v10 + 1;
            detail::add_triangle(mesh, v00, v01, v11, kGroundLabel);
            detail::add_triangle(mesh, v00, v11, v10, kGroundLabel);
        }
    }
}

inline TriangleMesh scene_to_mesh(const CityScene& scene, bool include_terrain = true) {
    TriangleMesh mesh;
    for (std::size_t i = 0; i < scene.buildings.size(); ++i) {
        mesh.building_ids.push_back(scene.buildings[i].id);
        extrude_building(scene.buildings[i], static_cast<std::int32_t>(i), mesh);
    }
    if (include_terrain) append_terrain(scene.terrain, mesh);
    return mesh;
}

} // namespace citypano

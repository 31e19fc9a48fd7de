#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "citypano/error.hpp"
#include "citypano/geo/vec3.hpp"

namespace citypano {

enum Label : std::uint8_t {
    NON_BUILDING = 0,
    OCCLUDED = 128,
    BUILDING = 255,
};

inline void require_pano_shape(int w, int h) {
    if (w <= 0 || h <= 0 || w != 2 * h) {
        throw Error(ErrorCode::DimensionMismatch,
                    "pano mask must be 2:1, got " + std::to_string(w) + "x" + std::to_string(h));
    }
}

/// Equirectangular label grid, row-major, width = 2 * height.
struct PanoMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> labels;

    PanoMask() = default;
    PanoMask(int w, int h, std::uint8_t fill = NON_BUILDING) : width(w), height(h) {
        require_pano_shape(w, h);
        labels.assign(static_cast<std::size_t>(w) * h, fill);
    }

    std::size_t size() const { return labels.size(); }
    std::uint8_t at(int u, int v) const { return labels[static_cast<std::size_t>(v) * width + u]; }
    std::uint8_t& at(int u, int v) { return labels[static_cast<std::size_t>(v) * width + u]; }

    std::size_t count(std::uint8_t label) const {
        std::size_t n = 0;
        for (std::uint8_t l : labels) n += l == label;
        return n;
    }

    double fraction(std::uint8_t label) const {
        return static_cast<double>(count(label)) / static_cast<double>(size());
    }

    bool valid_labels() const {
        for (std::uint8_t l : labels) {
            if (l != NON_BUILDING && l != OCCLUDED && l != BUILDING) return false;
        }
        return true;
    }

    bool operator==(const PanoMask&) const = default;
};

/// Single-valued overlay layer (water, shadow). Pixels are 0 or `value`;
/// layers compose with a bitwise OR.
struct OverlayLayer {
    int width = 0;
    int height = 0;
    std::uint8_t value = 0;
    std::vector<std::uint8_t> pixels;

    OverlayLayer() = default;
    OverlayLayer(int w, int h, std::uint8_t v) : width(w), height(h), value(v) {
        pixels.assign(static_cast<std::size_t>(w) * h, 0);
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (std::uint8_t p : pixels) n += p != 0;
        return n;
    }
    double fraction() const { return static_cast<double>(count()) / static_cast<double>(pixels.size()); }
    bool set(int u, int v) const { return pixels[static_cast<std::size_t>(v) * width + u] != 0; }
    void mark(int u, int v) { pixels[static_cast<std::size_t>(v) * width + u] = value; }
};

inline constexpr std::uint8_t kWaterValue = 64;
inline constexpr std::uint8_t kShadowValue = 32;

inline double pixel_longitude(int u, int width) { return 2.0 * M_PI * (u + 0.5) / width - M_PI; }
inline double pixel_latitude(int v, int height) { return M_PI / 2.0 - M_PI * (v + 0.5) / height; }

/// Camera-frame unit direction through the center of pixel (u, v).
/// Longitude 0 is +X and grows toward +Y; row 0 is the zenith side.
inline Vec3 pixel_ray(int u, int v, int width, int height) {
    const double lon = pixel_longitude(u, width);
    const double lat = pixel_latitude(v, height);
    const double cl = std::cos(lat);
    return {cl * std::cos(lon), cl * std::sin(lon), std::sin(lat)};
}

/// Inverse of pixel_ray: the pixel whose footprint contains camera-frame
/// direction `dir`.
inline std::pair<int, int> direction_to_pixel(const Vec3& dir, int width, int height) {
    const double lon = std::atan2(dir.y, dir.x);
    const double lat = std::atan2(dir.z, std::hypot(dir.x, dir.y));
    int u = static_cast<int>(std::floor((lon + M_PI) / (2.0 * M_PI) * width));
    int v = static_cast<int>(std::floor((M_PI / 2.0 - lat) / M_PI * height));
    u = ((u % width) + width) % width;
    v = std::clamp(v, 0, height - 1);
    return {u, v};
}

} // namespace citypano

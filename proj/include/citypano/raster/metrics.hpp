#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "citypano/error.hpp"
#include "citypano/raster/pano_mask.hpp"

namespace citypano {

inline void require_same_shape(const PanoMask& a, const PanoMask& b) {
    if (a.width != b.width || a.height != b.height) {
        throw Error(ErrorCode::DimensionMismatch, std::to_string(a.width) + "x" + std::to_string(a.height) +
                                                      " vs " + std::to_string(b.width) + "x" +
                                                      std::to_string(b.height));
    }
}

/// Pixels where building/non-building disagree, skipping pixels the
/// reference marks OCCLUDED.
inline std::int64_t discrepancy_count(const PanoMask& model, const PanoMask& reference) {
    require_same_shape(model, reference);
    std::int64_t n = 0;
    const std::size_t size = model.labels.size();
    const std::uint8_t* m = model.labels.data();
    const std::uint8_t* r = reference.labels.data();
    for (std::size_t i = 0; i < size; ++i) {
        n += (r[i] != OCCLUDED) & ((m[i] == BUILDING) != (r[i] == BUILDING));
    }
    return n;
}

inline std::int64_t visible_pixel_count(const PanoMask& reference) {
    return static_cast<std::int64_t>(reference.size() - reference.count(OCCLUDED));
}

/// Sum of discrepancies over sum of non-occluded pixels, across frame pairs.
/// Returns 0 when every reference pixel is occluded.
inline double misalignment_rate(std::span<const PanoMask> model_masks, std::span<const PanoMask> ref_masks) {
    if (model_masks.empty()) throw Error(ErrorCode::EmptyInput, "no masks to compare");
    if (model_masks.size() != ref_masks.size()) {
        throw Error(ErrorCode::DimensionMismatch, "model and reference lists differ in length");
    }
    std::int64_t discrepant = 0;
    std::int64_t visible = 0;
    for (std::size_t i = 0; i < model_masks.size(); ++i) {
        discrepant += discrepancy_count(model_masks[i], ref_masks[i]);
        visible += visible_pixel_count(ref_masks[i]);
    }
    return visible == 0 ? 0.0 : static_cast<double>(discrepant) / static_cast<double>(visible);
}

/// Share of the sphere covered by `label` pixels, each weighted by its exact
/// solid angle (equirectangular rows shrink toward the poles).
inline double solid_angle_fraction(const PanoMask& mask, std::uint8_t label) {
    double covered = 0.0;
    for (int v = 0; v < mask.height; ++v) {
        const double top = M_PI / 2.0 - M_PI * v / mask.height;
        const double bottom = M_PI / 2.0 - M_PI * (v + 1) / mask.height;
        const double row_weight = std::sin(top) - std::sin(bottom);
        int n = 0;
        for (int u = 0; u < mask.width; ++u) n += mask.at(u, v) == label;
        covered += row_weight * n;
    }
    return covered / (2.0 * mask.width);
}

} // namespace citypano

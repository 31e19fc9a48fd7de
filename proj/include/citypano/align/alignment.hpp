#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "citypano/align/cmaes.hpp"
#include "citypano/align/trajectory.hpp"
#include "citypano/align/transform.hpp"
#include "citypano/city/mesh.hpp"
#include "citypano/raster/metrics.hpp"
#include "citypano/raster/render.hpp"

namespace citypano {

inline constexpr int kDefaultSampleCount = 30;
inline constexpr int kDefaultHeldOutStride = 5;
inline constexpr double kLambdaUnitRad = 2.0 * M_PI / 180.0;

/// Reference masks keyed by trajectory position (0..F-1).
using MaskMap = std::map<std::size_t, PanoMask>;

/// round(k (F-1) / (N-1)) for k = 0..N-1, deduplicated; all frames when F <= N.
inline std::vector<std::size_t> sample_frames(std::size_t frame_count, int n = kDefaultSampleCount) {
    std::vector<std::size_t> out;
    if (frame_count == 0) return out;
    if (n <= 1) return {0};
    if (frame_count <= static_cast<std::size_t>(n)) {
        for (std::size_t i = 0; i < frame_count; ++i) out.push_back(i);
        return out;
    }
    for (int k = 0; k < n; ++k) {
        const auto idx = static_cast<std::size_t>(
            std::llround(static_cast<double>(k) * static_cast<double>(frame_count - 1) / (n - 1)));
        if (out.empty() || out.back() != idx) out.push_back(idx);
    }
    return out;
}

/// Every `stride`-th frame among those not in `sampled`.
inline std::vector<std::size_t> held_out_frames(std::size_t frame_count, const std::vector<std::size_t>& sampled,
                                                int stride = kDefaultHeldOutStride) {
    const std::set<std::size_t> used(sampled.begin(), sampled.end());
    std::vector<std::size_t> out;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < frame_count; ++i) {
        if (used.count(i)) continue;
        if (seen++ % static_cast<std::size_t>(std::max(1, stride)) == 0) out.push_back(i);
    }
    return out;
}

/// Everything needed to score a parameter vector against reference masks.
struct AlignmentProblem {
    const TriangleMesh* mesh = nullptr;
    const RayIndex* index = nullptr;
    const LocalTrajectory* trajectory = nullptr;
    const MaskMap* ref_masks = nullptr;
    unsigned threads = 1;

    const PanoMask& ref(std::size_t frame) const {
        auto it = ref_masks->find(frame);
        if (it == ref_masks->end()) {
            throw Error(ErrorCode::InvalidArgument, "no reference mask for frame " + std::to_string(frame));
        }
        return it->second;
    }
};

/// Per-frame discrepancy counts and non-occluded counts at `params`. Frames
/// that cannot be rendered (transform fails or camera inside a building)
/// count as fully discrepant: W*H for the objective, all visible pixels for
/// the rate.
struct FrameScores {
    std::vector<std::int64_t> discrepant;
    std::vector<std::int64_t> visible;
    std::vector<bool> infeasible;
};

inline FrameScores score_frames(const AlignmentProblem& pb, const AlignParams& params,
                                const std::vector<std::size_t>& frames) {
    FrameScores s;
    s.discrepant.assign(frames.size(), 0);
    s.visible.assign(frames.size(), 0);
    s.infeasible.assign(frames.size(), false);
    std::optional<SimilarityTransform> t;
    try {
        t = build_transform(*pb.trajectory, params);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateStreet && e.code() != ErrorCode::GravityDegenerate) throw;
    }
    parallel_for(frames.size(), pb.threads, [&](std::size_t k) {
        const PanoMask& ref = pb.ref(frames[k]);
        s.visible[k] = visible_pixel_count(ref);
        if (t) {
            const CameraPose pose = transform_pose(*t, pb.trajectory->frames.at(frames[k]));
            try {
                const PanoMask model = render_building_mask(*pb.mesh, *pb.index, pose, ref.width, ref.height);
                s.discrepant[k] = discrepancy_count(model, ref);
                return;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::CameraInsideGeometry) throw;
            }
        }
        s.infeasible[k] = true;
    });
    return s;
}

/// Sum of discrepant pixels over the sampled frames; W*H per infeasible frame.
inline std::int64_t objective(const AlignmentProblem& pb, const AlignParams& params,
                              const std::vector<std::size_t>& sampled) {
    const FrameScores s = score_frames(pb, params, sampled);
    std::int64_t total = 0;
    for (std::size_t k = 0; k < sampled.size(); ++k) {
        const PanoMask& ref = pb.ref(sampled[k]);
        total += s.infeasible[k] ? static_cast<std::int64_t>(ref.width) * ref.height : s.discrepant[k];
    }
    return total;
}

/// Held-out misalignment rate: discrepant over non-occluded pixels.
inline double alignment_rate(const AlignmentProblem& pb, const AlignParams& params,
                             const std::vector<std::size_t>& frames) {
    if (frames.empty()) throw Error(ErrorCode::NoHeldOutFrames, pb.trajectory->street_id);
    const FrameScores s = score_frames(pb, params, frames);
    std::int64_t d = 0, v = 0;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        d += s.infeasible[k] ? s.visible[k] : s.discrepant[k];
        v += s.visible[k];
    }
    return v == 0 ? 0.0 : static_cast<double>(d) / static_cast<double>(v);
}

/// Optimizer coordinates: 1 unit = 1 m for the positions, 2 deg for lambda.
inline std::vector<double> normalize_params(const AlignParams& p) {
    auto a = p.to_array();
    a[6] /= kLambdaUnitRad;
    return {a.begin(), a.end()};
}

inline AlignParams denormalize_params(const std::vector<double>& x) {
    std::array<double, 7> a{};
    std::copy_n(x.begin(), 7, a.begin());
    a[6] *= kLambdaUnitRad;
    return AlignParams::from_array(a);
}

struct OptimizeResult {
    AlignParams params;
    CmaesResult cmaes;
};

inline OptimizeResult optimize_alignment(const AlignmentProblem& pb, const AlignParams& init,
                                         const std::vector<std::size_t>& sampled, const CmaesOptions& options) {
    AlignmentProblem inner = pb;
    inner.threads = 1;
    auto f = [&](const std::vector<double>& x) {
        return static_cast<double>(objective(inner, denormalize_params(x), sampled));
    };
    OptimizeResult r;
    r.cmaes = cmaes_minimize(f, normalize_params(init), options);
    r.params = denormalize_params(r.cmaes.best);
    return r;
}

struct AlignmentReport {
    std::string street_id;
    AlignParams params_init;
    AlignParams params_opt;
    double rate_pre = 0.0;
    double rate_post = 0.0;
    double objective_init = 0.0;
    double objective_opt = 0.0;
    std::vector<double> trace;
    std::vector<std::size_t> sampled;
    std::vector<std::size_t> held_out;
    int generations = 0;
    long evaluations = 0;
    std::string stop_reason;
};

inline AlignmentReport evaluate_alignment(const AlignmentProblem& pb, const AlignParams& params_init,
                                          const AlignParams& params_opt, const std::vector<std::size_t>& sampled,
                                          int held_out_stride = kDefaultHeldOutStride) {
    AlignmentReport r;
    r.street_id = pb.trajectory->street_id;
    r.params_init = params_init;
    r.params_opt = params_opt;
    r.sampled = sampled;
    r.held_out = held_out_frames(pb.trajectory->size(), sampled, held_out_stride);
    if (r.held_out.empty()) throw Error(ErrorCode::NoHeldOutFrames, r.street_id);
    r.rate_pre = alignment_rate(pb, params_init, r.held_out);
    r.rate_post = alignment_rate(pb, params_opt, r.held_out);
    return r;
}

struct AlignConfig {
    int samples = kDefaultSampleCount;
    int held_out_stride = kDefaultHeldOutStride;
    double camera_height_m = kDefaultCameraHeightM;
    CmaesOptions cmaes;
};

/// Full offline registration of one street starting from `init`; the
/// optimized parameters are returned in canonical form.
inline AlignmentReport align_street(const AlignmentProblem& pb, const AlignParams& init, const AlignConfig& cfg) {
    const auto sampled = sample_frames(pb.trajectory->size(), cfg.samples);
    const OptimizeResult opt = optimize_alignment(pb, init, sampled, cfg.cmaes);
    AlignParams best = opt.params;
    try {
        best = canonicalize(*pb.trajectory, best);
    } catch (const Error&) {
    }
    AlignmentReport r = evaluate_alignment(pb, init, best, sampled, cfg.held_out_stride);
    r.objective_init = opt.cmaes.initial_value;
    r.objective_opt = opt.cmaes.best_value;
    r.trace = opt.cmaes.trace;
    r.generations = opt.cmaes.generations;
    r.evaluations = opt.cmaes.evaluations;
    r.stop_reason = opt.cmaes.stop_reason;
    return r;
}

inline nlohmann::ordered_json report_to_json(const AlignmentReport& r) {
    nlohmann::ordered_json j;
    j["street_id"] = r.street_id;
    j["params_init"] = params_to_json(r.params_init);
    j["params_opt"] = params_to_json(r.params_opt);
    j["rate_pre"] = r.rate_pre;
    j["rate_post"] = r.rate_post;
    j["objective_init"] = r.objective_init;
    j["objective_opt"] = r.objective_opt;
    j["generations"] = r.generations;
    j["evaluations"] = r.evaluations;
    j["stop_reason"] = r.stop_reason;
    j["sampled"] = r.sampled;
    j["held_out"] = r.held_out;
    j["trace"] = r.trace;
    return j;
}

} // namespace citypano

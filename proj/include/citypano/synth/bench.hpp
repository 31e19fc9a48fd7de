#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "citypano/align/alignment.hpp"
#include "citypano/synth/synth.hpp"

namespace citypano {

/// Aggregate statistics of the real-data experiment the benchmark stands in
/// for; reported next to the synthetic numbers, never gated on.
struct ReferenceRow {
    double pre_mean = 0.0798;
    double pre_sd = 0.0496;
    double post_mean = 0.0490;
    double post_sd = 0.0292;
    double relative_reduction = 0.39;
    int streets = 229;
};

struct BenchConfig {
    int streets = 8;
    double sigma_m = 5.0;
    double sigma_deg = 5.0;
    int mask_width = 512;
    int mask_height = 256;
    unsigned threads = 1;
    AlignConfig align;
};

struct StreetOutcome {
    AlignmentReport report;
    AlignParams gt;           // canonical
    double err_start_m = 0.0; // canonical optimized vs canonical ground truth
    double err_end_m = 0.0;
    double err_lambda_deg = 0.0;
    double init_err_start_m = 0.0;
    double init_err_end_m = 0.0;
    bool recovered = false;   // both endpoints within 1 m and lambda within 1 deg
    double seconds = 0.0;
};

struct BenchResult {
    std::vector<StreetOutcome> streets;
    std::vector<std::string> failures;
    std::string error;
    double pre_mean = 0.0, pre_sd = 0.0, post_mean = 0.0, post_sd = 0.0;
    double relative_reduction = 0.0;
    int recovered = 0;
    ReferenceRow reference;
};

inline std::pair<double, double> mean_sd(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    if (v.size() < 2) return {m, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

inline double wrap_angle(double a) { return std::remainder(a, 2.0 * M_PI); }

/// Canonical-form errors of `p` against `gt`. Comparing canonical forms
/// measures the transform, not the redundant parameterization.
inline void parameter_errors(const LocalTrajectory& traj, const AlignParams& gt, const AlignParams& p,
                             double& start_m, double& end_m, double& lambda_deg) {
    const AlignParams cg = canonicalize(traj, gt);
    const AlignParams cp = canonicalize(traj, p);
    start_m = distance(cg.v_s, cp.v_s);
    end_m = distance(cg.v_e, cp.v_e);
    const SimilarityTransform tg = build_transform(traj, gt);
    const SimilarityTransform tp = build_transform(traj, p);
    lambda_deg = std::abs(wrap_angle((tp.rotation * tg.rotation.inverse()).yaw())) * kRadToDeg;
}

inline void aggregate(BenchResult& r) {
    std::vector<double> pre, post;
    r.recovered = 0;
    for (const StreetOutcome& s : r.streets) {
        pre.push_back(s.report.rate_pre);
        post.push_back(s.report.rate_post);
        r.recovered += s.recovered;
    }
    std::tie(r.pre_mean, r.pre_sd) = mean_sd(pre);
    std::tie(r.post_mean, r.post_sd) = mean_sd(post);
    r.relative_reduction = r.pre_mean > 0 ? (r.pre_mean - r.post_mean) / r.pre_mean : 0.0;
}

inline StreetOutcome run_street(const CityScene& scene, const TriangleMesh& mesh, const RayIndex& index,
                                const SynthSpec& spec, int k, const BenchConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const SynthStreet street = generate_street(scene, k, spec);
    const MaskMap refs = render_reference_masks(mesh, index, street.global, spec.occluder_fraction,
                                                mix_seed(spec.seed, 0x0CC1 + static_cast<std::uint64_t>(k)),
                                                cfg.mask_width, cfg.mask_height, cfg.threads, spec.label_noise);
    const AlignParams init = perturb_params(street.gt, scene, cfg.sigma_m, cfg.sigma_deg,
                                            mix_seed(spec.seed, 0x9E70 + static_cast<std::uint64_t>(k)),
                                            spec.camera_height_m);
    AlignmentProblem pb{&mesh, &index, &street.local, &refs, cfg.threads};
    AlignConfig acfg = cfg.align;
    acfg.cmaes.seed = mix_seed(cfg.align.cmaes.seed, static_cast<std::uint64_t>(k));
    acfg.cmaes.threads = cfg.threads;
    StreetOutcome out;
    out.report = align_street(pb, init, acfg);
    out.gt = canonicalize(street.local, street.gt);
    parameter_errors(street.local, street.gt, out.report.params_opt, out.err_start_m, out.err_end_m,
                     out.err_lambda_deg);
    double dummy = 0.0;
    parameter_errors(street.local, street.gt, init, out.init_err_start_m, out.init_err_end_m, dummy);
    out.recovered = out.err_start_m <= 1.0 && out.err_end_m <= 1.0 && out.err_lambda_deg <= 1.0;
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

/// Generate, perturb, optimize and evaluate `cfg.streets` streets of one
/// synthetic city. Per-street failures are recorded, not thrown.
inline BenchResult run_benchmark(const SynthSpec& spec, const BenchConfig& cfg,
                                 const std::function<void(const StreetOutcome&)>& progress = {}) {
    BenchResult r;
    if (cfg.streets <= 0) {
        r.error = "no streets requested";
        return r;
    }
    if (cfg.streets > spec.street_count()) {
        r.error = "requested " + std::to_string(cfg.streets) + " streets but the grid has " +
                  std::to_string(spec.street_count());
        return r;
    }
    const CityScene scene = generate_city(spec);
    const TriangleMesh mesh = scene_to_mesh(scene);
    const RayIndex index = RayIndex::build(mesh, scene);
    for (int k = 0; k < cfg.streets; ++k) {
        try {
            r.streets.push_back(run_street(scene, mesh, index, spec, k, cfg));
            if (progress) progress(r.streets.back());
        } catch (const std::exception& e) {
            r.failures.push_back(street_name(k) + ": " + e.what());
        }
    }
    aggregate(r);
    return r;
}

inline nlohmann::ordered_json bench_to_json(const BenchResult& r) {
    nlohmann::ordered_json j;
    j["format"] = "benchreport/1";
    j["error"] = r.error;
    j["streets"] = nlohmann::ordered_json::array();
    for (const StreetOutcome& s : r.streets) {
        nlohmann::ordered_json e = report_to_json(s.report);
        e["params_gt"] = params_to_json(s.gt);
        e["err_start_m"] = s.err_start_m;
        e["err_end_m"] = s.err_end_m;
        e["err_lambda_deg"] = s.err_lambda_deg;
        e["init_err_start_m"] = s.init_err_start_m;
        e["init_err_end_m"] = s.init_err_end_m;
        e["recovered"] = s.recovered;
        j["streets"].push_back(std::move(e));
    }
    j["failures"] = r.failures;
    j["aggregate"] = {{"pre_mean", r.pre_mean},   {"pre_sd", r.pre_sd},
                      {"post_mean", r.post_mean}, {"post_sd", r.post_sd},
                      {"relative_reduction", r.relative_reduction}, {"recovered", r.recovered},
                      {"streets", r.streets.size()}};
    j["reference"] = {{"pre_mean", r.reference.pre_mean},
                      {"pre_sd", r.reference.pre_sd},
                      {"post_mean", r.reference.post_mean},
                      {"post_sd", r.reference.post_sd},
                      {"relative_reduction", r.reference.relative_reduction},
                      {"streets", r.reference.streets}};
    return j;
}

/// Histogram of per-street rates with fixed-width bins starting at 0.
inline std::string bench_histogram_csv(const BenchResult& r, double bin_width = 0.005) {
    double hi = 0.0;
    for (const StreetOutcome& s : r.streets) hi = std::max({hi, s.report.rate_pre, s.report.rate_post});
    const int bins = std::max(1, static_cast<int>(std::floor(hi / bin_width)) + 1);
    std::vector<int> pre(bins, 0), post(bins, 0);
    auto bin_of = [&](double x) { return std::min(bins - 1, static_cast<int>(std::floor(x / bin_width))); };
    for (const StreetOutcome& s : r.streets) {
        ++pre[bin_of(s.report.rate_pre)];
        ++post[bin_of(s.report.rate_post)];
    }
    std::ostringstream out;
    out << "bin_lo,bin_hi,pre_count,post_count\n";
    char buf[96];
    for (int b = 0; b < bins; ++b) {
        std::snprintf(buf, sizeof buf, "%.3f,%.3f,%d,%d\n", b * bin_width, (b + 1) * bin_width, pre[b], post[b]);
        out << buf;
    }
    return out.str();
}

inline std::string bench_summary(const BenchResult& r) {
    std::ostringstream out;
    char buf[256];
    if (!r.error.empty()) out << "error: " << r.error << "\n";
    out << "street  rate_pre  rate_post  d_start_m  d_end_m  d_lambda_deg  gens  stop\n";
    for (const StreetOutcome& s : r.streets) {
        std::snprintf(buf, sizeof buf, "%-6s  %8.4f  %9.4f  %9.3f  %7.3f  %12.3f  %4d  %s\n",
                      s.report.street_id.c_str(), s.report.rate_pre, s.report.rate_post, s.err_start_m, s.err_end_m,
                      s.err_lambda_deg, s.report.generations, s.report.stop_reason.c_str());
        out << buf;
    }
    for (const std::string& f : r.failures) out << "failed: " << f << "\n";
    std::snprintf(buf, sizeof buf,
                  "synthetic  (%zu streets): pre %.4f (sd %.4f)  post %.4f (sd %.4f)  reduction %.1f%%  "
                  "recovered %d/%zu\n",
                  r.streets.size(), r.pre_mean, r.pre_sd, r.post_mean, r.post_sd, 100.0 * r.relative_reduction,
                  r.recovered, r.streets.size());
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "reference (%d streets, real footage): pre %.4f (sd %.4f)  post %.4f (sd %.4f)  reduction %.0f%%\n",
                  r.reference.streets, r.reference.pre_mean, r.reference.pre_sd, r.reference.post_mean,
                  r.reference.post_sd,
                  100.0 * r.reference.relative_reduction);
    out << buf;
    return out.str();
}

} // namespace citypano

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "citypano/error.hpp"
#include "citypano/parallel.hpp"

namespace citypano {

struct CmaesOptions {
    int iterations = 700;        // generations
    double sigma0 = 3.0;
    int population = 0;          // 0: 4 + floor(3 ln n)
    std::uint64_t seed = 1;
    unsigned threads = 1;        // parallel candidate evaluations per generation
    double tol_x = 1e-11;        // on sigma * sqrt(max diag C)
    double tol_fun = 1e-12;      // on the recent best-value range
    double max_condition = 1e14;
};

struct CmaesResult {
    std::vector<double> best;
    double best_value = std::numeric_limits<double>::infinity();
    double initial_value = std::numeric_limits<double>::infinity();
    std::vector<double> trace; // best-ever value after each generation
    int generations = 0;
    long evaluations = 0;
    std::string stop_reason;
};

/// (mu/mu_w, lambda)-CMA-ES minimizing `f` from mean `x0` with step `sigma0`,
/// rank-one and rank-mu covariance updates and cumulative step-size control.
/// Returns the best point ever evaluated (x0 included). Deterministic given
/// the seed regardless of thread count.
inline CmaesResult cmaes_minimize(const std::function<double(const std::vector<double>&)>& f,
                                  const std::vector<double>& x0, const CmaesOptions& opt = {}) {
    using Eigen::MatrixXd;
    using Eigen::VectorXd;
    const int n = static_cast<int>(x0.size());
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "cmaes: empty start vector");

    auto eval = [&](const std::vector<double>& x) {
        const double v = f(x);
        if (!std::isfinite(v)) {
            std::string where;
            for (double xi : x) where += (where.empty() ? "" : ", ") + std::to_string(xi);
            throw Error(ErrorCode::NonFiniteObjective, "objective returned " + std::to_string(v) + " at [" +
                                                           where + "]");
        }
        return v;
    };

    CmaesResult res;
    res.best = x0;
    res.best_value = res.initial_value = eval(x0);
    res.evaluations = 1;
    if (opt.iterations <= 0) {
        res.stop_reason = "iterations";
        return res;
    }

    const int lambda = opt.population > 0 ? opt.population : 4 + static_cast<int>(std::floor(3.0 * std::log(n)));
    const int mu = lambda / 2;
    VectorXd w(mu);
    for (int i = 0; i < mu; ++i) w[i] = std::log(mu + 0.5) - std::log(i + 1.0);
    w /= w.sum();
    const double mu_eff = 1.0 / w.squaredNorm();

    const double c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
    const double d_sigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma;
    const double c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
    const double c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + mu_eff);
    const double c_mu = std::min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) * (n + 2.0) + mu_eff));
    const double chi_n = std::sqrt(static_cast<double>(n)) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
    const int history_len = 10 + static_cast<int>(std::ceil(30.0 * n / lambda));

    VectorXd mean = Eigen::Map<const VectorXd>(x0.data(), n);
    double sigma = opt.sigma0;
    MatrixXd C = MatrixXd::Identity(n, n);
    MatrixXd B = MatrixXd::Identity(n, n);
    VectorXd D = VectorXd::Ones(n);
    VectorXd p_sigma = VectorXd::Zero(n);
    VectorXd p_c = VectorXd::Zero(n);

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> best_history;

    MatrixXd z(n, lambda), y(n, lambda);
    std::vector<std::vector<double>> xs(lambda, std::vector<double>(n));
    std::vector<double> values(lambda);
    std::vector<int> order(lambda);

    for (int gen = 0; gen < opt.iterations; ++gen) {
        for (int k = 0; k < lambda; ++k) {
            for (int i = 0; i < n; ++i) z(i, k) = normal(rng);
            y.col(k) = B * D.asDiagonal() * z.col(k);
            const VectorXd x = mean + sigma * y.col(k);
            for (int i = 0; i < n; ++i) xs[k][i] = x[i];
        }
        parallel_for(static_cast<std::size_t>(lambda), opt.threads,
                     [&](std::size_t k) { values[k] = eval(xs[k]); });
        res.evaluations += lambda;

        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return values[a] < values[b]; });
        if (values[order[0]] < res.best_value) {
            res.best_value = values[order[0]];
            res.best = xs[order[0]];
        }
        res.trace.push_back(res.best_value);
        res.generations = gen + 1;

        VectorXd y_w = VectorXd::Zero(n);
        for (int i = 0; i < mu; ++i) y_w += w[i] * y.col(order[i]);
        mean += sigma * y_w;

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        const VectorXd c_inv_sqrt_yw = B * D.cwiseInverse().asDiagonal() * B.transpose() * y_w;
        p_sigma = (1.0 - c_sigma) * p_sigma + std::sqrt(c_sigma * (2.0 - c_sigma) * mu_eff) * c_inv_sqrt_yw;
        const double ps_norm = p_sigma.norm();
        const double h_denom = std::sqrt(1.0 - std::pow(1.0 - c_sigma, 2.0 * (gen + 1)));
        const bool h_sigma = ps_norm / h_denom / chi_n < 1.4 + 2.0 / (n + 1.0);
        p_c = (1.0 - c_c) * p_c + (h_sigma ? std::sqrt(c_c * (2.0 - c_c) * mu_eff) : 0.0) * y_w;

        MatrixXd rank_mu = MatrixXd::Zero(n, n);
        for (int i = 0; i < mu; ++i) rank_mu += w[i] * y.col(order[i]) * y.col(order[i]).transpose();
        const double delta_h = h_sigma ? 0.0 : c_c * (2.0 - c_c);
        C = (1.0 - c_1 - c_mu) * C + c_1 * (p_c * p_c.transpose() + delta_h * C) + c_mu * rank_mu;
        C = 0.5 * (C + C.transpose());

        sigma *= std::exp((c_sigma / d_sigma) * (ps_norm / chi_n - 1.0));

        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(C);
        B = eig.eigenvectors();
        D = eig.eigenvalues().cwiseMax(1e-300).cwiseSqrt();

        best_history.push_back(values[order[0]]);
        if (static_cast<int>(best_history.size()) > history_len) best_history.erase(best_history.begin());

        if (sigma * std::sqrt(C.diagonal().maxCoeff()) < opt.tol_x) {
            res.stop_reason = "tol_x";
            break;
        }
        if (D.maxCoeff() * D.maxCoeff() > opt.max_condition * D.minCoeff() * D.minCoeff()) {
            res.stop_reason = "condition";
            break;
        }
        if (static_cast<int>(best_history.size()) == history_len) {
            const auto [lo, hi] = std::minmax_element(best_history.begin(), best_history.end());
            const double gen_range = values[order[lambda - 1]] - values[order[0]];
            if (*hi - *lo <= opt.tol_fun && gen_range <= opt.tol_fun) {
                res.stop_reason = "tol_fun";
                break;
            }
        }
    }
    if (res.stop_reason.empty()) res.stop_reason = "iterations";
    return res;
}

} // namespace citypano

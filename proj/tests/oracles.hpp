#pragma once

// Independent reference implementations used only by the test suite. These
// deliberately use different algorithms (and evaluation orders) than the
// library: exhaustive search instead of dynamic programming, long-double
// transcendentals, literal restatements of definitions.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "smerf/geometry.hpp"
#include "smerf/metrics.hpp"

namespace oracle {

// --- discrete Fréchet by exhaustive coupling enumeration (exponential) ------

inline double frechet_walk(const std::vector<smerf::Vec3>& a,
                           const std::vector<smerf::Vec3>& b, size_t i, size_t j) {
    const double d = smerf::distance(a[i], b[j]);
    const bool last_a = i + 1 == a.size();
    const bool last_b = j + 1 == b.size();
    if (last_a && last_b) return d;
    double best = std::numeric_limits<double>::infinity();
    if (!last_a) best = std::min(best, frechet_walk(a, b, i + 1, j));
    if (!last_b) best = std::min(best, frechet_walk(a, b, i, j + 1));
    if (!last_a && !last_b) best = std::min(best, frechet_walk(a, b, i + 1, j + 1));
    return std::max(d, best);
}

inline double frechet_bruteforce(const std::vector<smerf::Vec3>& a,
                                 const std::vector<smerf::Vec3>& b) {
    return frechet_walk(a, b, 0, 0);
}

// --- greedy matching, restated literally ------------------------------------

inline std::vector<smerf::ev::MatchEntry> greedy_match(
    int num_predictions, int num_ground_truths, const std::vector<double>& confidences,
    const std::function<double(int, int)>& distance, double threshold) {
    std::vector<int> order(static_cast<size_t>(num_predictions));
    for (int p = 0; p < num_predictions; ++p) order[static_cast<size_t>(p)] = p;
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        if (confidences[static_cast<size_t>(x)] != confidences[static_cast<size_t>(y)])
            return confidences[static_cast<size_t>(x)] > confidences[static_cast<size_t>(y)];
        return x < y;
    });
    std::vector<bool> taken(static_cast<size_t>(std::max(num_ground_truths, 0)), false);
    std::vector<smerf::ev::MatchEntry> out;
    for (int p : order) {
        smerf::ev::MatchEntry e;
        e.pred_id = p;
        e.confidence = confidences[static_cast<size_t>(p)];
        double best = std::numeric_limits<double>::infinity();
        for (int g = 0; g < num_ground_truths; ++g) {
            if (taken[static_cast<size_t>(g)]) continue;
            const double d = distance(p, g);
            if (d <= threshold && d < best) {  // strict <: first (lowest) gt id wins ties
                best = d;
                e.gt_id = g;
                e.distance = d;
            }
        }
        if (e.gt_id >= 0) taken[static_cast<size_t>(e.gt_id)] = true;
        out.push_back(e);
    }
    return out;
}

// --- all-point-interpolated AP from first principles --------------------------

inline double ap_from_definition(const std::vector<smerf::ev::MatchEntry>& matches,
                                 int num_gt) {
    if (num_gt <= 0) return matches.empty() ? 1.0 : 0.0;
    const size_t n = matches.size();
    std::vector<double> precision(n);
    int tp = 0;
    for (size_t k = 0; k < n; ++k) {
        if (matches[k].gt_id >= 0) ++tp;
        precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    }
    double sum = 0.0;
    for (size_t k = 0; k < n; ++k) {
        if (matches[k].gt_id < 0) continue;
        double interpolated = 0.0;  // best precision at any recall >= recall(k)
        for (size_t l = k; l < n; ++l) interpolated = std::max(interpolated, precision[l]);
        sum += interpolated;
    }
    return sum / static_cast<double>(num_gt);
}

// --- high-precision sinusoidal embedding -------------------------------------

inline std::vector<double> sinusoidal_reference(double p, int d, double temperature) {
    std::vector<double> out(static_cast<size_t>(d));
    for (int j = 0; 2 * j < d; ++j) {
        const long double exponent =
            static_cast<long double>(2 * j) / static_cast<long double>(d);
        const long double angle =
            static_cast<long double>(p) / std::pow(static_cast<long double>(temperature),
                                                   exponent);
        out[static_cast<size_t>(2 * j)] = static_cast<double>(std::sin(angle));
        out[static_cast<size_t>(2 * j + 1)] = static_cast<double>(std::cos(angle));
    }
    return out;
}

// --- central finite differences ----------------------------------------------

// eval() must recompute the scalar objective from scratch using `param`.
template <typename F>
inline Eigen::MatrixXd fd_gradient(Eigen::MatrixXd& param, F&& eval, double step = 1e-5) {
    Eigen::MatrixXd grad(param.rows(), param.cols());
    for (Eigen::Index i = 0; i < param.rows(); ++i) {
        for (Eigen::Index j = 0; j < param.cols(); ++j) {
            const double original = param(i, j);
            param(i, j) = original + step;
            const double up = eval();
            param(i, j) = original - step;
            const double down = eval();
            param(i, j) = original;
            grad(i, j) = (up - down) / (2.0 * step);
        }
    }
    return grad;
}

// Relative error with an absolute floor: entries where both gradients are
// below 1e-7 in magnitude are treated as matching (FD noise regime).
inline double max_rel_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.rows(); ++i) {
        for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
            const double a = analytic(i, j), n = numeric(i, j);
            const double denom = std::max(std::abs(a), std::abs(n));
            if (denom < 1e-7) continue;
            worst = std::max(worst, std::abs(a - n) / denom);
        }
    }
    return worst;
}

}  // namespace oracle

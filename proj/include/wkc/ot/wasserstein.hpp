#pragma once

#include <wkc/error.hpp>
#include <wkc/ot/distribution.hpp>
#include <wkc/ot/network_simplex.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace wkc::ot {

/// Coupling between two weight vectors; rows follow the first argument.
struct TransportPlan {
    static constexpr double kMarginalTolerance = 1e-7;

    Eigen::MatrixXd weights;
    Eigen::VectorXd row_marginal;
    Eigen::VectorXd col_marginal;

    /// Largest absolute deviation of the plan's row/column sums from its marginals.
    double marginal_residual() const {
        const double r = (weights.rowwise().sum() - row_marginal).cwiseAbs().maxCoeff();
        const double c = (weights.colwise().sum().transpose() - col_marginal).cwiseAbs().maxCoeff();
        return std::max(r, c);
    }

    bool feasible() const {
        return weights.minCoeff() >= 0.0 && marginal_residual() < kMarginalTolerance;
    }
};

struct WassersteinResult {
    double distance = 0.0;
    TransportPlan plan;
};

/// Exact 2-Wasserstein distance (squared Euclidean ground cost) and an optimal plan.
inline WassersteinResult exact_wasserstein(const DiscreteDistribution& mu_i, const DiscreteDistribution& mu_j) {
    if (mu_i.dim() != mu_j.dim()) {
        throw DataError("dimension mismatch: " + std::to_string(mu_i.dim()) + " vs " + std::to_string(mu_j.dim()));
    }
    const Eigen::MatrixXd cost = squared_euclidean_costs(mu_i.support(), mu_j.support());
    auto solution = solve_transport(mu_i.weights(), mu_j.weights(), cost);
    WassersteinResult out;
    out.distance = std::sqrt(std::max(0.0, solution.cost));
    out.plan = TransportPlan{std::move(solution.flow), mu_i.weights(), mu_j.weights()};
    if (!out.plan.feasible()) {
        throw NumericError("optimal transport plan violates its marginals (residual " +
                           std::to_string(out.plan.marginal_residual()) + ")");
    }
    return out;
}

/// Closed-form 2-Wasserstein distance between one-dimensional distributions:
/// the L2 distance between quantile functions, integrated exactly over the
/// merged cumulative-weight breakpoints.
inline double wasserstein_1d(const DiscreteDistribution& mu_i, const DiscreteDistribution& mu_j) {
    if (mu_i.dim() != 1 || mu_j.dim() != 1) {
        throw DataError("wasserstein_1d requires one-dimensional distributions");
    }
    auto sorted = [](const DiscreteDistribution& mu) {
        std::vector<std::pair<double, double>> v(static_cast<std::size_t>(mu.size()));
        for (Eigen::Index k = 0; k < mu.size(); ++k) {
            v[static_cast<std::size_t>(k)] = {mu.support()(k, 0), mu.weights()[k]};
        }
        std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        return v;
    };
    const auto a = sorted(mu_i);
    const auto b = sorted(mu_j);
    // Normalize cumulative sums so both end at exactly 1.
    const double total_a = std::accumulate(a.begin(), a.end(), 0.0, [](double s, const auto& p) { return s + p.second; });
    const double total_b = std::accumulate(b.begin(), b.end(), 0.0, [](double s, const auto& p) { return s + p.second; });

    std::size_t ia = 0;
    std::size_t ib = 0;
    double cum_a = a[0].second / total_a;
    double cum_b = b[0].second / total_b;
    double level = 0.0;
    double acc = 0.0;
    while (true) {
        const double diff = a[ia].first - b[ib].first;
        // Ties advance mu_i first; the integral does not depend on the order.
        if (cum_a <= cum_b) {
            acc += (cum_a - level) * diff * diff;
            level = cum_a;
            if (ia + 1 == a.size()) {
                acc += std::max(0.0, 1.0 - level) * diff * diff;
                break;
            }
            cum_a += a[++ia].second / total_a;
        } else {
            acc += (cum_b - level) * diff * diff;
            level = cum_b;
            if (ib + 1 == b.size()) {
                acc += std::max(0.0, 1.0 - level) * diff * diff;
                break;
            }
            cum_b += b[++ib].second / total_b;
        }
    }
    return std::sqrt(std::max(0.0, acc));
}

/// Barycentric images of each reference support point in a target distribution.
struct ForwardImageSet {
    Eigen::MatrixXd images;             ///< N_sigma x d, row k is a^k
    Eigen::VectorXd reference_weights;  ///< g_k
};

/// Row k is (1/g_k) sum_m plan(k, m) x^m. The plan must couple `reference`
/// (rows) with `target` (columns).
inline ForwardImageSet forward_images(const DiscreteDistribution& reference, const DiscreteDistribution& target,
                                      const TransportPlan& plan) {
    if (plan.weights.rows() != reference.size() || plan.weights.cols() != target.size()) {
        throw DataError("transport plan shape does not match reference/target supports");
    }
    const Eigen::VectorXd rows = plan.weights.rowwise().sum();
    if ((rows - reference.weights()).cwiseAbs().maxCoeff() > TransportPlan::kMarginalTolerance) {
        throw DataError("transport plan row marginals do not match reference weights");
    }
    ForwardImageSet out;
    out.reference_weights = reference.weights();
    out.images = (plan.weights * target.support()).array().colwise() / reference.weights().array();
    return out;
}

/// Solves the reference-to-target transport and returns the forward images.
inline ForwardImageSet forward_images(const DiscreteDistribution& reference, const DiscreteDistribution& target) {
    const auto w = exact_wasserstein(reference, target);
    return forward_images(reference, target, w.plan);
}

/// Linear optimal transport distance sqrt(sum_k g_k ||a^{k,i} - a^{k,j}||^2).
inline double lot_distance(const Eigen::VectorXd& reference_weights, const ForwardImageSet& images_i,
                           const ForwardImageSet& images_j) {
    const auto n = reference_weights.size();
    if (images_i.images.rows() != n || images_j.images.rows() != n) {
        throw DataError("forward image sets do not match the reference size");
    }
    if (images_i.images.cols() != images_j.images.cols()) {
        throw DataError("forward image dimension mismatch");
    }
    double acc = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        acc += reference_weights[k] * (images_i.images.row(k) - images_j.images.row(k)).squaredNorm();
    }
    return std::sqrt(acc);
}

}  // namespace wkc::ot

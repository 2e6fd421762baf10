#pragma once

// Test-only brute force over every medoid subset.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <vector>

namespace oracle {

inline void for_each_combination(std::size_t n, std::size_t k,
                                 const std::function<void(const std::vector<std::size_t>&)>& visit) {
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) {
        idx[i] = i;
    }
    while (true) {
        visit(idx);
        std::size_t i = k;
        while (i > 0 && idx[i - 1] == n - k + i - 1) {
            --i;
        }
        if (i == 0) {
            return;
        }
        ++idx[i - 1];
        for (std::size_t j = i; j < k; ++j) {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

struct ExhaustiveMedoids {
    double objective = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> medoids;
};

/// Minimum of sum_i min_{m in M} d(i, m) over all |M| = k.
inline ExhaustiveMedoids exhaustive_kmedoids(const Eigen::MatrixXd& d, std::size_t k) {
    ExhaustiveMedoids best;
    for_each_combination(static_cast<std::size_t>(d.rows()), k, [&](const std::vector<std::size_t>& m) {
        double cost = 0.0;
        for (Eigen::Index i = 0; i < d.rows(); ++i) {
            double nearest = std::numeric_limits<double>::infinity();
            for (auto j : m) {
                nearest = std::min(nearest, d(i, static_cast<Eigen::Index>(j)));
            }
            cost += nearest;
        }
        if (cost < best.objective) {
            best.objective = cost;
            best.medoids = m;
        }
    });
    return best;
}

/// Kernel k-medoids cost of a feasible assignment (item -> medoid item,
/// medoids assigned to themselves).
inline double kernel_cost(const Eigen::MatrixXd& k, const std::vector<std::size_t>& assigned_medoid) {
    double total = 0.0;
    for (std::size_t i = 0; i < assigned_medoid.size(); ++i) {
        const auto a = static_cast<Eigen::Index>(i);
        const auto b = static_cast<Eigen::Index>(assigned_medoid[i]);
        total += k(a, a) + k(b, b) - 2.0 * k(a, b);
    }
    return total;
}

struct KernelOptimum {
    double objective = std::numeric_limits<double>::infinity();
    std::set<std::vector<std::size_t>> assignments;  ///< every optimal item -> medoid map
};

/// Exhaustive minimization over all medoid sets of size `clusters` and all
/// assignments. For a fixed medoid set the items choose independently, so the
/// optimal assignments are the product of per-item argmin sets.
inline KernelOptimum kernel_optimum(const Eigen::MatrixXd& k, std::size_t clusters, double tolerance) {
    const auto n = static_cast<std::size_t>(k.rows());
    auto cost = [&](std::size_t i, std::size_t j) {
        const auto a = static_cast<Eigen::Index>(i);
        const auto b = static_cast<Eigen::Index>(j);
        return k(a, a) + k(b, b) - 2.0 * k(a, b);
    };
    struct Candidate {
        double objective;
        std::vector<std::vector<std::size_t>> choices;
    };
    std::vector<Candidate> candidates;
    double best = std::numeric_limits<double>::infinity();
    for_each_combination(n, clusters, [&](const std::vector<std::size_t>& medoids) {
        Candidate c{0.0, std::vector<std::vector<std::size_t>>(n)};
        for (std::size_t i = 0; i < n; ++i) {
            if (std::find(medoids.begin(), medoids.end(), i) != medoids.end()) {
                c.choices[i] = {i};
                continue;
            }
            double low = std::numeric_limits<double>::infinity();
            for (auto m : medoids) {
                low = std::min(low, cost(i, m));
            }
            for (auto m : medoids) {
                if (cost(i, m) <= low + tolerance) {
                    c.choices[i].push_back(m);
                }
            }
            c.objective += low;
        }
        best = std::min(best, c.objective);
        candidates.push_back(std::move(c));
    });
    KernelOptimum out;
    out.objective = best;
    for (const auto& c : candidates) {
        if (c.objective > best + tolerance) {
            continue;
        }
        std::vector<std::size_t> pick(n, 0);
        while (true) {
            std::vector<std::size_t> a(n);
            for (std::size_t i = 0; i < n; ++i) {
                a[i] = c.choices[i][pick[i]];
            }
            out.assignments.insert(std::move(a));
            std::size_t i = 0;
            while (i < n && ++pick[i] == c.choices[i].size()) {
                pick[i++] = 0;
            }
            if (i == n) {
                break;
            }
        }
    }
    return out;
}

}  // namespace oracle

#pragma once

#include <wkc/error.hpp>
#include <wkc/log.hpp>
#include <wkc/parallel.hpp>
#include <wkc/random.hpp>
#include <wkc/types.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace wkc::clustering {

enum class Method { pam, alternate };

inline const char* to_string(Method m) { return m == Method::pam ? "pam" : "alternate"; }

inline Method parse_method(const std::string& s) {
    if (s == "pam") {
        return Method::pam;
    }
    if (s == "alternate") {
        return Method::alternate;
    }
    throw ConfigError("unknown k-medoids method '" + s + "' (expected pam or alternate)");
}

/// Hard partition with medoid representatives. assignments[i] indexes
/// medoids; medoids are sorted ascending.
struct ClusteringResult {
    std::vector<std::size_t> assignments;
    std::vector<std::size_t> medoids;
    double objective = 0.0;
    std::vector<double> objective_history;  ///< objective after initialization and each iteration
    std::size_t iterations = 0;
};

/// Distances read from a precomputed square matrix.
struct MatrixDistance {
    const Eigen::MatrixXd* values;
    std::size_t size() const { return static_cast<std::size_t>(values->rows()); }
    double operator()(std::size_t i, std::size_t j) const {
        return (*values)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
};

/// Euclidean distance between columns of a U x S coordinate matrix.
struct ColumnEuclidean {
    const Eigen::MatrixXd* coords;
    std::size_t size() const { return static_cast<std::size_t>(coords->cols()); }
    double operator()(std::size_t i, std::size_t j) const {
        return (coords->col(static_cast<Eigen::Index>(i)) - coords->col(static_cast<Eigen::Index>(j))).norm();
    }
};

/// Pairwise Euclidean distances between the columns of `coords`.
inline Eigen::MatrixXd column_distances(const Eigen::MatrixXd& coords) {
    const Eigen::Index n = coords.cols();
    const Eigen::VectorXd sq = coords.colwise().squaredNorm().transpose();
    Eigen::MatrixXd d = coords.transpose() * coords;
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t jj) {
        const auto j = static_cast<Eigen::Index>(jj);
        for (Eigen::Index i = 0; i < n; ++i) {
            d(i, j) = i == j ? 0.0 : std::sqrt(std::max(0.0, sq[i] + sq[j] - 2.0 * d(i, j)));
        }
    });
    // Restore exact symmetry lost to the Gram shortcut.
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < j; ++i) {
            d(i, j) = d(j, i);
        }
    }
    return d;
}

template <typename Distance>
double assignment_cost(const Distance& dist, const std::vector<std::size_t>& assignments,
                       const std::vector<std::size_t>& medoids) {
    double total = 0.0;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        total += dist(i, medoids[assignments[i]]);
    }
    return total;
}

/// k-medoids++ seeding: first medoid uniform, then proportional to the
/// squared distance to the nearest chosen medoid.
template <typename Distance>
std::vector<std::size_t> kmedoids_plus_plus(const Distance& dist, std::size_t n, std::size_t clusters, Rng& rng) {
    std::vector<std::size_t> medoids;
    medoids.reserve(clusters);
    std::vector<char> chosen(n, 0);
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::size_t next = static_cast<std::size_t>(uniform_index(rng, n));
    while (true) {
        medoids.push_back(next);
        chosen[next] = 1;
        if (medoids.size() == clusters) {
            break;
        }
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = dist(i, next);
            nearest[i] = std::min(nearest[i], d * d);
            if (!chosen[i]) {
                total += nearest[i];
            }
        }
        if (total > 0.0) {
            double target = uniform01(rng) * total;
            next = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (chosen[i]) {
                    continue;
                }
                target -= nearest[i];
                next = i;
                if (target < 0.0 && nearest[i] > 0.0) {
                    break;
                }
            }
        } else {
            // Every remaining item coincides with a medoid; pick uniformly.
            std::vector<std::size_t> free;
            for (std::size_t i = 0; i < n; ++i) {
                if (!chosen[i]) {
                    free.push_back(i);
                }
            }
            next = free[static_cast<std::size_t>(uniform_index(rng, free.size()))];
        }
    }
    return medoids;
}

namespace detail {

template <typename Distance>
void nearest_two(const Distance& dist, std::size_t n, const std::vector<std::size_t>& medoids,
                 std::vector<std::size_t>& slot, std::vector<double>& d1, std::vector<double>& d2) {
    slot.assign(n, 0);
    d1.assign(n, std::numeric_limits<double>::infinity());
    d2.assign(n, std::numeric_limits<double>::infinity());
    for (std::size_t o = 0; o < n; ++o) {
        for (std::size_t s = 0; s < medoids.size(); ++s) {
            const bool own = medoids[s] == o;
            const double d = own ? 0.0 : dist(o, medoids[s]);
            // A medoid always belongs to its own slot, even when another
            // medoid coincides with it.
            if (own || d < d1[o]) {
                d2[o] = d1[o];
                d1[o] = d;
                slot[o] = s;
            } else if (d < d2[o]) {
                d2[o] = d;
            }
        }
    }
}

inline void canonicalize(ClusteringResult& r) {
    std::vector<std::size_t> order(r.medoids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return r.medoids[a] < r.medoids[b]; });
    std::vector<std::size_t> relabel(order.size());
    std::vector<std::size_t> sorted(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        relabel[order[k]] = k;
        sorted[k] = r.medoids[order[k]];
    }
    for (auto& a : r.assignments) {
        a = relabel[a];
    }
    r.medoids = std::move(sorted);
}

template <typename Distance>
std::vector<std::size_t> assign_nearest(const Distance& dist, std::size_t n, const std::vector<std::size_t>& medoids) {
    std::vector<std::size_t> labels(n, 0);
    for (std::size_t o = 0; o < n; ++o) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < medoids.size(); ++s) {
            if (medoids[s] == o) {
                labels[o] = s;
                break;
            }
            const double d = dist(o, medoids[s]);
            if (d < best) {
                best = d;
                labels[o] = s;
            }
        }
    }
    return labels;
}

// Best-improvement swap search. For every candidate the change of every
// medoid slot is evaluated in one pass over the items (shared gain plus a
// per-slot correction), so one pass costs O(S^2) distance lookups.
template <typename Distance>
ClusteringResult pam(const Distance& dist, std::size_t n, std::vector<std::size_t> medoids, std::size_t max_passes) {
    const std::size_t k = medoids.size();
    std::vector<std::size_t> slot;
    std::vector<double> d1;
    std::vector<double> d2;
    std::vector<char> is_medoid(n, 0);
    for (auto m : medoids) {
        is_medoid[m] = 1;
    }
    nearest_two(dist, n, medoids, slot, d1, d2);
    ClusteringResult result;
    double current = std::accumulate(d1.begin(), d1.end(), 0.0);
    result.objective_history.push_back(current);
    std::vector<double> correction(k);
    std::size_t pass = 0;
    for (; pass < max_passes; ++pass) {
        double best_delta = 0.0;
        std::size_t best_slot = k;
        std::size_t best_candidate = n;
        const double tolerance = 1e-12 * std::max(1.0, current);
        for (std::size_t c = 0; c < n; ++c) {
            if (is_medoid[c]) {
                continue;
            }
            double shared = 0.0;
            std::fill(correction.begin(), correction.end(), 0.0);
            for (std::size_t o = 0; o < n; ++o) {
                const double doc = o == c ? 0.0 : dist(o, c);
                const double gain = std::min(doc - d1[o], 0.0);
                shared += gain;
                correction[slot[o]] += std::min(doc, d2[o]) - d1[o] - gain;
            }
            for (std::size_t s = 0; s < k; ++s) {
                const double delta = shared + correction[s];
                const bool better = delta < best_delta - tolerance ||
                                    (best_slot < k && std::abs(delta - best_delta) <= tolerance &&
                                     (s < best_slot || (s == best_slot && c < best_candidate)));
                if (better && delta < -tolerance) {
                    best_delta = delta;
                    best_slot = s;
                    best_candidate = c;
                }
            }
        }
        if (best_slot == k) {
            break;
        }
        is_medoid[medoids[best_slot]] = 0;
        is_medoid[best_candidate] = 1;
        medoids[best_slot] = best_candidate;
        nearest_two(dist, n, medoids, slot, d1, d2);
        current = std::accumulate(d1.begin(), d1.end(), 0.0);
        result.objective_history.push_back(current);
    }
    result.iterations = pass;
    result.medoids = std::move(medoids);
    result.assignments = slot;
    return result;
}

template <typename Distance>
ClusteringResult alternate(const Distance& dist, std::size_t n, std::vector<std::size_t> medoids,
                           std::size_t max_iterations) {
    const std::size_t k = medoids.size();
    ClusteringResult result;
    auto labels = assign_nearest(dist, n, medoids);
    result.objective_history.push_back(assignment_cost(dist, labels, medoids));
    std::size_t iter = 0;
    for (; iter < max_iterations; ++iter) {
        std::vector<std::vector<std::size_t>> members(k);
        for (std::size_t o = 0; o < n; ++o) {
            members[labels[o]].push_back(o);
        }
        bool medoids_changed = false;
        for (std::size_t s = 0; s < k; ++s) {
            if (members[s].empty()) {
                // Re-seed at the item farthest from its current medoid.
                std::size_t far = medoids[s];
                double far_d = -1.0;
                for (std::size_t o = 0; o < n; ++o) {
                    const double d = dist(o, medoids[labels[o]]);
                    if (d > far_d && std::find(medoids.begin(), medoids.end(), o) == medoids.end()) {
                        far_d = d;
                        far = o;
                    }
                }
                warn("k-medoids alternate: empty cluster re-seeded at item " + std::to_string(far));
                medoids_changed = medoids_changed || far != medoids[s];
                medoids[s] = far;
                continue;
            }
            std::size_t best = medoids[s];
            double best_cost = 0.0;
            for (auto o : members[s]) {
                best_cost += dist(o, best);
            }
            for (auto c : members[s]) {
                if (c == medoids[s]) {
                    continue;
                }
                double cost = 0.0;
                for (auto o : members[s]) {
                    cost += o == c ? 0.0 : dist(o, c);
                    if (cost >= best_cost) {
                        break;
                    }
                }
                if (cost < best_cost - 1e-12 * std::max(1.0, best_cost)) {
                    best_cost = cost;
                    best = c;
                }
            }
            if (best != medoids[s]) {
                medoids[s] = best;
                medoids_changed = true;
            }
        }
        auto next = assign_nearest(dist, n, medoids);
        const bool stable = next == labels && !medoids_changed;
        labels = std::move(next);
        result.objective_history.push_back(assignment_cost(dist, labels, medoids));
        if (stable) {
            break;
        }
    }
    result.iterations = iter;
    result.medoids = std::move(medoids);
    result.assignments = std::move(labels);
    return result;
}

}  // namespace detail

struct KMedoidsOptions {
    Method method = Method::pam;
    std::size_t max_pam_passes = 100;
    std::size_t max_alternate_iterations = 300;
};

/// k-medoids from k-medoids++ seeds. `dist(i, j)` must be symmetric with a
/// zero diagonal.
template <typename Distance>
ClusteringResult kmedoids(const Distance& dist, std::size_t clusters, std::uint64_t seed,
                          const KMedoidsOptions& options = {}) {
    const std::size_t n = dist.size();
    if (clusters == 0 || clusters > n) {
        throw DataError("k-medoids needs 1 <= T <= S (T = " + std::to_string(clusters) + ", S = " + std::to_string(n) +
                        ")");
    }
    Rng rng = make_stream(seed, "kmedoids");
    auto init = kmedoids_plus_plus(dist, n, clusters, rng);
    ClusteringResult r = options.method == Method::pam ? detail::pam(dist, n, std::move(init), options.max_pam_passes)
                                                       : detail::alternate(dist, n, std::move(init),
                                                                           options.max_alternate_iterations);
    r.objective = assignment_cost(dist, r.assignments, r.medoids);
    detail::canonicalize(r);
    return r;
}

inline ClusteringResult kmedoids(const DistanceMatrix& d, std::size_t clusters, std::uint64_t seed,
                                 const KMedoidsOptions& options = {}) {
    return kmedoids(MatrixDistance{&d.values}, clusters, seed, options);
}

/// Columns of `coords` are items; distances are Euclidean. Small problems
/// use a precomputed distance matrix.
inline ClusteringResult kmedoids_features(const Eigen::MatrixXd& coords, std::size_t clusters, std::uint64_t seed,
                                          const KMedoidsOptions& options = {}) {
    if (coords.cols() <= 4000) {
        const Eigen::MatrixXd d = column_distances(coords);
        return kmedoids(MatrixDistance{&d}, clusters, seed, options);
    }
    return kmedoids(ColumnEuclidean{&coords}, clusters, seed, options);
}

/// Independent restarts with seeds derived from `seed`; run in parallel.
template <typename Distance>
std::vector<ClusteringResult> kmedoids_restarts(const Distance& dist, std::size_t clusters, std::size_t restarts,
                                                std::uint64_t seed, const KMedoidsOptions& options = {}) {
    std::vector<ClusteringResult> out(restarts);
    parallel_for(restarts, [&](std::size_t r) {
        Rng sub = make_stream(seed, "kmedoids-restart", r);
        out[r] = kmedoids(dist, clusters, sub(), options);
    });
    return out;
}

inline std::vector<ClusteringResult> kmedoids_features_restarts(const Eigen::MatrixXd& coords, std::size_t clusters,
                                                                std::size_t restarts, std::uint64_t seed,
                                                                const KMedoidsOptions& options = {}) {
    if (coords.cols() <= 4000) {
        const Eigen::MatrixXd d = column_distances(coords);
        return kmedoids_restarts(MatrixDistance{&d}, clusters, restarts, seed, options);
    }
    return kmedoids_restarts(ColumnEuclidean{&coords}, clusters, restarts, seed, options);
}

/// Index of the lowest-objective result; ties go to the lower index.
inline std::size_t best_result(const std::vector<ClusteringResult>& results) {
    if (results.empty()) {
        throw DataError("no clustering results to choose from");
    }
    std::size_t best = 0;
    for (std::size_t r = 1; r < results.size(); ++r) {
        if (results[r].objective < results[best].objective) {
            best = r;
        }
    }
    return best;
}

/// Kernel k-medoids cost sum_i (K_ii + K_mm - 2 K_im), m the medoid of i.
inline double kernel_kmedoids_objective(const Eigen::MatrixXd& kernel, const ClusteringResult& result) {
    if (kernel.rows() != kernel.cols() ||
        static_cast<std::size_t>(kernel.rows()) != result.assignments.size()) {
        throw DataError("kernel and clustering result sizes disagree");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < result.assignments.size(); ++i) {
        const auto m = static_cast<Eigen::Index>(result.medoids.at(result.assignments[i]));
        const auto ii = static_cast<Eigen::Index>(i);
        total += kernel(ii, ii) + kernel(m, m) - 2.0 * kernel(ii, m);
    }
    return total;
}

/// Checks the result invariants: labels in range, medoids distinct and
/// assigned to their own cluster.
inline bool is_consistent(const ClusteringResult& r) {
    std::vector<std::size_t> sorted = r.medoids;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        return false;
    }
    for (auto a : r.assignments) {
        if (a >= r.medoids.size()) {
            return false;
        }
    }
    for (std::size_t s = 0; s < r.medoids.size(); ++s) {
        if (r.medoids[s] >= r.assignments.size() || r.assignments[r.medoids[s]] != s) {
            return false;
        }
    }
    return true;
}

}  // namespace wkc::clustering

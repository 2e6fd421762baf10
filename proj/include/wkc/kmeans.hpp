#pragma once

#include <wkc/error.hpp>
#include <wkc/log.hpp>
#include <wkc/random.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace wkc::kmeans {

struct KMeansOptions {
    std::size_t restarts = 10;
    std::size_t max_iterations = 300;
    double shift_tolerance = 1e-6;  ///< stop when no centroid moves farther than this
};

struct KMeansResult {
    Eigen::MatrixXd centroids;  ///< k x d
    std::vector<std::size_t> labels;
    double inertia = 0.0;  ///< sum_i w_i ||x_i - c(i)||^2
    std::size_t iterations = 0;
};

/// Number of distinct rows of `points`.
inline std::size_t distinct_rows(const Eigen::MatrixXd& points) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(points.rows()));
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        order[static_cast<std::size_t>(i)] = i;
    }
    auto less = [&](Eigen::Index a, Eigen::Index b) {
        for (Eigen::Index c = 0; c < points.cols(); ++c) {
            if (points(a, c) != points(b, c)) {
                return points(a, c) < points(b, c);
            }
        }
        return false;
    };
    std::sort(order.begin(), order.end(), less);
    std::size_t count = order.empty() ? 0 : 1;
    for (std::size_t i = 1; i < order.size(); ++i) {
        count += less(order[i - 1], order[i]) ? 1 : 0;
    }
    return count;
}

/// Weighted k-means++ seeding: probability proportional to w_i * D(x_i)^2.
inline Eigen::MatrixXd plus_plus_seeds(const Eigen::MatrixXd& points, const Eigen::VectorXd& weights, std::size_t k,
                                       Rng& rng) {
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd centroids(static_cast<Eigen::Index>(k), points.cols());
    auto sample = [&](const Eigen::VectorXd& mass) {
        double target = uniform01(rng) * mass.sum();
        Eigen::Index pick = n - 1;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (mass[i] <= 0.0) {
                continue;
            }
            target -= mass[i];
            pick = i;
            if (target < 0.0) {
                break;
            }
        }
        return pick;
    };
    centroids.row(0) = points.row(sample(weights));
    Eigen::VectorXd nearest(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        nearest[i] = (points.row(i) - centroids.row(0)).squaredNorm();
    }
    for (std::size_t c = 1; c < k; ++c) {
        const Eigen::VectorXd mass = weights.cwiseProduct(nearest);
        const Eigen::Index pick = sample(mass.sum() > 0.0 ? mass : weights);
        centroids.row(static_cast<Eigen::Index>(c)) = points.row(pick);
        for (Eigen::Index i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], (points.row(i) - points.row(pick)).squaredNorm());
        }
    }
    return centroids;
}

/// Weighted Lloyd iterations from the given centroids. A centroid that loses
/// all its points stays where it is.
inline KMeansResult lloyd(const Eigen::MatrixXd& points, const Eigen::VectorXd& weights, Eigen::MatrixXd centroids,
                          const KMeansOptions& options = {}) {
    const Eigen::Index n = points.rows();
    const Eigen::Index k = centroids.rows();
    KMeansResult r;
    r.labels.assign(static_cast<std::size_t>(n), 0);
    auto assign = [&] {
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t label = 0;
            for (Eigen::Index c = 0; c < k; ++c) {
                const double d = (points.row(i) - centroids.row(c)).squaredNorm();
                if (d < best) {
                    best = d;
                    label = static_cast<std::size_t>(c);
                }
            }
            r.labels[static_cast<std::size_t>(i)] = label;
            inertia += weights[i] * best;
        }
        return inertia;
    };
    r.inertia = assign();
    for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
        Eigen::VectorXd mass = Eigen::VectorXd::Zero(k);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto c = static_cast<Eigen::Index>(r.labels[static_cast<std::size_t>(i)]);
            sums.row(c) += weights[i] * points.row(i);
            mass[c] += weights[i];
        }
        double shift = 0.0;
        for (Eigen::Index c = 0; c < k; ++c) {
            if (mass[c] > 0.0) {
                const Eigen::RowVectorXd next = sums.row(c) / mass[c];
                shift = std::max(shift, (next - centroids.row(c)).norm());
                centroids.row(c) = next;
            }
        }
        r.inertia = assign();
        r.iterations = iter + 1;
        if (shift < options.shift_tolerance) {
            break;
        }
    }
    r.centroids = std::move(centroids);
    return r;
}

/// Best of `options.restarts` seeded runs by inertia (ties: earliest run).
inline KMeansResult weighted_kmeans(const Eigen::MatrixXd& points, const Eigen::VectorXd& weights, std::size_t k,
                                    std::uint64_t seed, const KMeansOptions& options = {}) {
    if (points.rows() == 0 || weights.size() != points.rows()) {
        throw DataError("k-means needs a non-empty point set with one weight per point");
    }
    if (k == 0) {
        throw DataError("k-means needs at least one centroid");
    }
    const std::size_t distinct = distinct_rows(points);
    if (k > distinct) {
        warn("k-means: reducing centroid count from " + std::to_string(k) + " to " + std::to_string(distinct) +
             " distinct points");
        k = distinct;
    }
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (std::size_t run = 0; run < std::max<std::size_t>(1, options.restarts); ++run) {
        Rng rng = make_stream(seed, "kmeans", run);
        auto r = lloyd(points, weights, plus_plus_seeds(points, weights, k, rng), options);
        if (r.inertia < best.inertia) {
            best = std::move(r);
        }
    }
    return best;
}

}  // namespace wkc::kmeans

#pragma once

#include <wkc/clustering.hpp>
#include <wkc/error.hpp>
#include <wkc/kmeans.hpp>
#include <wkc/log.hpp>
#include <wkc/ot/wasserstein.hpp>
#include <wkc/parallel.hpp>
#include <wkc/random.hpp>
#include <wkc/types.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace wkc::multiref {

using ot::DiscreteDistribution;
using Dataset = std::vector<DiscreteDistribution>;

/// sigma_1 is synthetic; sigma_2..sigma_R are dataset members.
struct ReferenceSet {
    DiscreteDistribution initial;
    std::vector<std::size_t> additional;

    std::size_t count() const { return 1 + additional.size(); }
    bool is_reference(std::size_t item) const {
        return std::find(additional.begin(), additional.end(), item) != additional.end();
    }
};

inline Eigen::Index common_dimension(const Dataset& dataset) {
    if (dataset.empty()) {
        throw DataError("dataset must contain at least one distribution");
    }
    const auto d = dataset.front().dim();
    for (const auto& mu : dataset) {
        if (mu.dim() != d) {
            throw DataError("all distributions must share one support dimension");
        }
    }
    return d;
}

/// Weighted k-means over every stacked support vector, with
/// floor(mean support size) centroids; returns the centroids with uniform
/// weights.
inline DiscreteDistribution build_initial_reference(const Dataset& dataset, std::uint64_t seed,
                                                    const kmeans::KMeansOptions& options = {}) {
    const auto d = common_dimension(dataset);
    Eigen::Index total = 0;
    for (const auto& mu : dataset) {
        total += mu.size();
    }
    Eigen::MatrixXd points(total, d);
    Eigen::VectorXd weights(total);
    Eigen::Index row = 0;
    for (const auto& mu : dataset) {
        points.middleRows(row, mu.size()) = mu.support();
        weights.segment(row, mu.size()) = mu.weights();
        row += mu.size();
    }
    auto k = static_cast<std::size_t>(total / static_cast<Eigen::Index>(dataset.size()));
    if (k == 0) {
        warn("initial reference: centroid count floored to 0, using 1");
        k = 1;
    }
    auto result = kmeans::weighted_kmeans(points, weights, k, seed, options);
    return DiscreteDistribution::uniform(std::move(result.centroids));
}

/// Medoids of a (R-1)-medoid clustering of the sigma_1 distance matrix.
inline ReferenceSet select_additional_references(DiscreteDistribution initial, const DistanceMatrix& d1,
                                                 std::size_t references, std::uint64_t seed) {
    if (references < 2) {
        throw DataError("additional references need R >= 2");
    }
    const auto s = static_cast<std::size_t>(d1.size());
    if (references - 1 > s) {
        throw DataError("R - 1 = " + std::to_string(references - 1) + " exceeds the dataset size " +
                        std::to_string(s));
    }
    clustering::KMedoidsOptions options;
    options.method = s <= 5000 ? clustering::Method::pam : clustering::Method::alternate;
    const auto result = clustering::kmedoids(d1, references - 1, seed, options);
    return ReferenceSet{std::move(initial), result.medoids};
}

/// Exact distance and forward images of every item against one reference.
struct ReferenceProjection {
    std::vector<ot::ForwardImageSet> images;
    std::vector<double> exact;  ///< W(sigma, mu_l)
};

inline ReferenceProjection project_onto_reference(const Dataset& dataset, const DiscreteDistribution& sigma) {
    ReferenceProjection p;
    p.images.resize(dataset.size());
    p.exact.resize(dataset.size());
    parallel_for(dataset.size(), [&](std::size_t l) {
        const auto w = ot::exact_wasserstein(sigma, dataset[l]);
        p.exact[l] = w.distance;
        p.images[l] = ot::forward_images(sigma, dataset[l], w.plan);
    });
    return p;
}

/// Pairwise matrix for one reference: LOT distances between all items, with
/// the row and column of `member` (when the reference is a dataset item)
/// holding exact distances to the reference.
inline DistanceMatrix pairwise_matrix_for_reference(const Dataset& dataset, const DiscreteDistribution& sigma,
                                                    std::optional<std::size_t> member = std::nullopt) {
    const auto d = common_dimension(dataset);
    if (sigma.dim() != d) {
        throw DataError("reference dimension does not match the dataset");
    }
    if (member && *member >= dataset.size()) {
        throw DataError("reference member index out of range");
    }
    const auto projection = project_onto_reference(dataset, sigma);
    const auto s = static_cast<Eigen::Index>(dataset.size());
    // Flatten sqrt(g_k)-scaled images so LOT becomes a plain Euclidean norm.
    const Eigen::ArrayXd scale = sigma.weights().array().sqrt();
    Eigen::MatrixXd flat(sigma.size() * d, s);
    for (Eigen::Index l = 0; l < s; ++l) {
        const Eigen::MatrixXd scaled = projection.images[static_cast<std::size_t>(l)].images.array().colwise() * scale;
        flat.col(l) = Eigen::Map<const Eigen::VectorXd>(scaled.data(), scaled.size());
    }
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(s, s);
    parallel_for(static_cast<std::size_t>(s), [&](std::size_t jj) {
        const auto j = static_cast<Eigen::Index>(jj);
        for (Eigen::Index i = j + 1; i < s; ++i) {
            values(i, j) = (flat.col(i) - flat.col(j)).norm();
        }
    });
    for (Eigen::Index j = 0; j < s; ++j) {
        for (Eigen::Index i = j + 1; i < s; ++i) {
            values(j, i) = values(i, j);
        }
    }
    if (member) {
        const auto r = static_cast<Eigen::Index>(*member);
        for (Eigen::Index j = 0; j < s; ++j) {
            const double w = j == r ? 0.0 : projection.exact[static_cast<std::size_t>(j)];
            values(r, j) = w;
            values(j, r) = w;
        }
    }
    return DistanceMatrix(std::move(values));
}

struct FusionResult {
    DistanceMatrix distances;
    std::size_t clamped = 0;  ///< entries with eta + beta * eps < 0 set to 0
};

/// Fuses per-reference matrices (index 0 = sigma_1, index r = additional
/// reference r - 1). Entries touching a dataset reference copy that
/// reference's exact value; the rest are mean + beta * (population) standard
/// deviation across all matrices.
inline FusionResult fuse_distance_matrices(const std::vector<DistanceMatrix>& matrices, const ReferenceSet& refs,
                                           double beta) {
    if (matrices.empty()) {
        throw DataError("fusion needs at least one distance matrix");
    }
    if (matrices.size() != refs.count()) {
        throw DataError("fusion needs one matrix per reference");
    }
    const auto s = matrices.front().size();
    for (const auto& m : matrices) {
        if (m.size() != s || m.values.cols() != s) {
            throw DataError("distance matrix shape mismatch in fusion");
        }
    }
    for (auto r : refs.additional) {
        if (static_cast<Eigen::Index>(r) >= s) {
            throw DataError("reference index out of range in fusion");
        }
    }
    FusionResult out;
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(s, s);
    const double count = static_cast<double>(matrices.size());
    for (Eigen::Index j = 0; j < s; ++j) {
        for (Eigen::Index i = j + 1; i < s; ++i) {
            double sum = 0.0;
            for (const auto& m : matrices) {
                sum += m.values(i, j);
            }
            const double mean = sum / count;
            double var = 0.0;
            for (const auto& m : matrices) {
                const double dv = m.values(i, j) - mean;
                var += dv * dv;
            }
            double v = mean + beta * std::sqrt(var / count);
            if (v < 0.0) {
                v = 0.0;
                ++out.clamped;
            }
            values(i, j) = v;
            values(j, i) = v;
        }
    }
    // Exact entries; where two references meet, the earlier one wins and both
    // hold the same exact distance.
    for (std::size_t k = refs.additional.size(); k-- > 0;) {
        const auto r = static_cast<Eigen::Index>(refs.additional[k]);
        const auto& m = matrices[k + 1].values;
        for (Eigen::Index j = 0; j < s; ++j) {
            values(r, j) = m(r, j);
            values(j, r) = m(r, j);
        }
    }
    out.distances = DistanceMatrix(std::move(values), matrices.front().item_ids);
    return out;
}

/// |approx - exact| / exact.
inline double relative_error(double approx, double exact) { return std::abs(approx - exact) / exact; }

struct SampledPair {
    std::size_t i = 0;
    std::size_t j = 0;
    double exact = 0.0;
};

/// Up to `n_samples` distinct unordered pairs (i < j) drawn uniformly from
/// the non-reference items, with their exact distances. Pairs with a zero
/// exact distance are dropped with a warning.
inline std::vector<SampledPair> sample_exact_pairs(const Dataset& dataset, const ReferenceSet& refs,
                                                   std::size_t n_samples, std::uint64_t seed) {
    std::vector<std::size_t> pool;
    for (std::size_t l = 0; l < dataset.size(); ++l) {
        if (!refs.is_reference(l)) {
            pool.push_back(l);
        }
    }
    const std::uint64_t m = pool.size();
    const std::uint64_t total = m < 2 ? 0 : m * (m - 1) / 2;
    std::vector<std::uint64_t> picked;
    if (total <= n_samples) {
        picked.resize(total);
        std::iota(picked.begin(), picked.end(), std::uint64_t{0});
    } else {
        // Floyd's algorithm: n_samples distinct indices from [0, total).
        Rng rng = make_stream(seed, "beta-pairs");
        std::unordered_set<std::uint64_t> chosen;
        chosen.reserve(n_samples * 2);
        for (std::uint64_t j = total - n_samples; j < total; ++j) {
            const std::uint64_t t = uniform_index(rng, j + 1);
            if (!chosen.insert(t).second) {
                chosen.insert(j);
            }
        }
        picked.assign(chosen.begin(), chosen.end());
        std::sort(picked.begin(), picked.end());
    }
    std::vector<SampledPair> pairs(picked.size());
    for (std::size_t k = 0; k < picked.size(); ++k) {
        // Row-major upper-triangle unranking: index -> (a, b), a < b.
        std::uint64_t idx = picked[k];
        std::uint64_t a = 0;
        std::uint64_t row = m - 1;
        while (idx >= row) {
            idx -= row;
            ++a;
            --row;
        }
        pairs[k].i = pool[a];
        pairs[k].j = pool[a + 1 + idx];
    }
    parallel_for(pairs.size(), [&](std::size_t k) {
        pairs[k].exact = ot::exact_wasserstein(dataset[pairs[k].i], dataset[pairs[k].j]).distance;
    });
    const auto before = pairs.size();
    std::erase_if(pairs, [](const SampledPair& p) { return p.exact == 0.0; });
    if (pairs.size() != before) {
        warn("beta calibration: excluded " + std::to_string(before - pairs.size()) +
             " sampled pairs with zero exact distance");
    }
    return pairs;
}

inline double mean_relative_error(const DistanceMatrix& approx, const std::vector<SampledPair>& pairs) {
    if (pairs.empty()) {
        return 0.0;
    }
    double acc = 0.0;
    for (const auto& p : pairs) {
        acc += relative_error(approx(static_cast<Eigen::Index>(p.i), static_cast<Eigen::Index>(p.j)), p.exact);
    }
    return acc / static_cast<double>(pairs.size());
}

inline std::vector<double> default_beta_grid() { return {-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5}; }

struct BetaCalibration {
    double beta = 0.0;
    std::vector<double> grid;
    std::vector<double> mean_errors;  ///< one per grid value
    std::vector<SampledPair> pairs;
};

/// Grid value minimizing the mean relative error on the sampled pairs; ties
/// go to the value closest to 0, then to the earlier grid entry.
inline BetaCalibration calibrate_beta_on_pairs(const std::vector<DistanceMatrix>& matrices, const ReferenceSet& refs,
                                               std::vector<SampledPair> pairs, const std::vector<double>& grid) {
    if (grid.empty()) {
        throw DataError("beta grid must not be empty");
    }
    BetaCalibration out;
    out.grid = grid;
    out.pairs = std::move(pairs);
    std::size_t best = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const auto fused = fuse_distance_matrices(matrices, refs, grid[g]);
        out.mean_errors.push_back(mean_relative_error(fused.distances, out.pairs));
        if (g == 0) {
            continue;
        }
        const double e = out.mean_errors[g];
        const double b = out.mean_errors[best];
        const double tol = 1e-12 * std::max(1.0, std::abs(b));
        if (e < b - tol || (std::abs(e - b) <= tol && std::abs(grid[g]) < std::abs(grid[best]))) {
            best = g;
        }
    }
    out.beta = grid[best];
    return out;
}

inline BetaCalibration calibrate_beta(const Dataset& dataset, const std::vector<DistanceMatrix>& matrices,
                                      const ReferenceSet& refs, std::size_t n_samples,
                                      const std::vector<double>& grid, std::uint64_t seed) {
    if (n_samples == 0) {
        throw DataError("beta calibration needs at least one sampled pair");
    }
    return calibrate_beta_on_pairs(matrices, refs, sample_exact_pairs(dataset, refs, n_samples, seed), grid);
}

struct MultirefOptions {
    std::size_t references = 5;
    std::vector<double> beta_grid = default_beta_grid();
    std::size_t calibration_pairs = 30000;
    std::optional<double> fixed_beta;  ///< skips calibration when set
    kmeans::KMeansOptions kmeans;
};

struct MultirefResult {
    DistanceMatrix fused;
    DistanceMatrix single;  ///< sigma_1-only LOT matrix
    ReferenceSet references;
    std::vector<DistanceMatrix> matrices;
    std::optional<BetaCalibration> calibration;
    double beta = 0.0;
    std::size_t clamped = 0;
};

/// Multi-reference approximation of all pairwise Wasserstein distances.
inline MultirefResult approximate_distances(const Dataset& dataset, const MultirefOptions& options,
                                            std::uint64_t seed) {
    common_dimension(dataset);
    if (options.references == 0) {
        throw DataError("at least one reference is required");
    }
    auto sigma1 = build_initial_reference(dataset, make_stream(seed, "sigma1")(), options.kmeans);
    MultirefResult out{DistanceMatrix{}, pairwise_matrix_for_reference(dataset, sigma1), ReferenceSet{sigma1, {}}};
    out.matrices.push_back(out.single);
    if (options.references >= 2) {
        out.references = select_additional_references(sigma1, out.single, options.references,
                                                      make_stream(seed, "references")());
        for (auto r : out.references.additional) {
            out.matrices.push_back(pairwise_matrix_for_reference(dataset, dataset[r], r));
        }
    }
    if (options.fixed_beta) {
        out.beta = *options.fixed_beta;
    } else {
        out.calibration = calibrate_beta(dataset, out.matrices, out.references, options.calibration_pairs,
                                         options.beta_grid, make_stream(seed, "distances")());
        out.beta = out.calibration->beta;
    }
    auto fused = fuse_distance_matrices(out.matrices, out.references, out.beta);
    out.fused = std::move(fused.distances);
    out.clamped = fused.clamped;
    if (out.clamped > 0) {
        warn("fusion clamped " + std::to_string(out.clamped) + " negative distances to 0");
    }
    return out;
}

}  // namespace wkc::multiref

#pragma once

#include <wkc/error.hpp>
#include <wkc/log.hpp>
#include <wkc/random.hpp>
#include <wkc/types.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace wkc::kpca {

/// Which components to keep.
struct Selection {
    enum class Kind { kaiser, top_k, variance_fraction };
    Kind kind = Kind::kaiser;
    std::size_t count = 0;
    double fraction = 0.0;

    static Selection kaiser() { return {}; }
    static Selection top_k(std::size_t u) { return {Kind::top_k, u, 0.0}; }
    static Selection variance_fraction(double f) { return {Kind::variance_fraction, 0, f}; }
};

enum class MapMethod { exact, nystrom };

struct FeatureMap {
    Eigen::MatrixXd coords;       ///< U x S, column j is item j
    Eigen::VectorXd eigenvalues;  ///< retained, non-increasing
    Eigen::VectorXd spectrum;     ///< every usable eigenvalue, retained or not
    MapMethod method = MapMethod::exact;
    std::size_t nystrom_columns = 0;

    Eigen::Index components() const noexcept { return coords.rows(); }
    Eigen::Index items() const noexcept { return coords.cols(); }
};

struct NystromFactors {
    std::vector<std::size_t> sampled_columns;
    Eigen::VectorXd lambda_hat;  ///< (S/M) Lambda^nys, kept directions only
    Eigen::MatrixXd v_hat;       ///< S x kept
};

inline constexpr double kRelativeEigenFloor = 1e-10;

namespace detail {

struct Spectrum {
    Eigen::VectorXd values;   ///< descending
    Eigen::MatrixXd vectors;  ///< matching columns
};

/// Sign of each column fixed so its largest-magnitude entry (first on ties)
/// is positive.
inline void fix_signs(Eigen::MatrixXd& columns) {
    for (Eigen::Index c = 0; c < columns.cols(); ++c) {
        Eigen::Index arg = 0;
        double best = -1.0;
        for (Eigen::Index r = 0; r < columns.rows(); ++r) {
            if (std::abs(columns(r, c)) > best * (1.0 + 1e-12)) {
                best = std::abs(columns(r, c));
                arg = r;
            }
        }
        if (columns(arg, c) < 0.0) {
            columns.col(c) = -columns.col(c);
        }
    }
}

inline Spectrum descending_eigen(const Eigen::MatrixXd& symmetric) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetric);
    if (solver.info() != Eigen::Success) {
        throw NumericError("symmetric eigendecomposition failed");
    }
    Spectrum s;
    s.values = solver.eigenvalues().reverse();
    s.vectors = solver.eigenvectors().rowwise().reverse();
    fix_signs(s.vectors);
    return s;
}

/// Number of leading eigenvalues above the relative floor.
inline Eigen::Index usable_count(const Eigen::VectorXd& values) {
    if (values.size() == 0 || !(values[0] > 0.0)) {
        return 0;
    }
    const double floor = kRelativeEigenFloor * values[0];
    Eigen::Index n = 0;
    while (n < values.size() && values[n] >= floor && values[n] > 0.0) {
        ++n;
    }
    return n;
}

inline Eigen::Index select_count(const Eigen::VectorXd& values, Eigen::Index usable, const Selection& selection) {
    Eigen::Index keep = 0;
    switch (selection.kind) {
        case Selection::Kind::kaiser:
            while (keep < usable && values[keep] > 1.0) {
                ++keep;
            }
            break;
        case Selection::Kind::top_k:
            keep = std::min<Eigen::Index>(usable, static_cast<Eigen::Index>(selection.count));
            break;
        case Selection::Kind::variance_fraction: {
            if (!(selection.fraction > 0.0 && selection.fraction <= 1.0)) {
                throw ConfigError("variance fraction must lie in (0, 1]");
            }
            const double total = values.head(usable).sum();
            double acc = 0.0;
            while (keep < usable && acc < selection.fraction * total * (1.0 - 1e-12)) {
                acc += values[keep++];
            }
            break;
        }
    }
    if (keep == 0) {
        warn("kernel PCA: no component passes the selection rule, keeping the leading component");
        keep = 1;
    }
    return keep;
}

}  // namespace detail

/// Exact kernel PCA map Phi = Lambda^{-1/2} V^T K~ = Lambda^{1/2} V^T.
inline FeatureMap exact_feature_map(const KernelMatrix& centered, const Selection& selection = Selection::kaiser()) {
    if (centered.values.rows() != centered.values.cols()) {
        throw DataError("kernel matrix must be square");
    }
    if (!centered.centered) {
        throw DataError("exact_feature_map expects a centered kernel");
    }
    const auto spectrum = detail::descending_eigen(centered.values);
    const auto usable = detail::usable_count(spectrum.values);
    if (usable == 0) {
        throw NumericError("centered kernel has no positive eigenvalue");
    }
    const auto keep = detail::select_count(spectrum.values, usable, selection);
    FeatureMap map;
    map.eigenvalues = spectrum.values.head(keep);
    map.spectrum = spectrum.values.head(usable);
    map.coords = map.eigenvalues.cwiseSqrt().asDiagonal() * spectrum.vectors.leftCols(keep).transpose();
    return map;
}

/// M distinct column indices drawn uniformly without replacement, sorted.
inline std::vector<std::size_t> nystrom_sample(std::size_t s, std::size_t m, std::uint64_t seed) {
    if (m < 2 || m > s) {
        throw ConfigError("Nystrom sample size must satisfy 2 <= M <= S");
    }
    std::vector<std::size_t> idx(s);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = make_stream(seed, "nystrom");
    for (std::size_t i = 0; i < m; ++i) {
        std::swap(idx[i], idx[i + uniform_index(rng, s - i)]);
    }
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
    return idx;
}

/// Approximate eigenpairs from the S x M slice of centered kernel columns.
inline NystromFactors nystrom_factors(const Eigen::MatrixXd& columns, const std::vector<std::size_t>& sample) {
    const auto s = columns.rows();
    const auto m = static_cast<Eigen::Index>(sample.size());
    if (m < 2 || columns.cols() != m || m > s) {
        throw DataError("Nystrom slice must be S x M with 2 <= M <= S");
    }
    std::vector<std::size_t> sorted = sample;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end() || sorted.back() >= static_cast<std::size_t>(s)) {
        throw DataError("Nystrom sample indices must be distinct and in range");
    }
    Eigen::MatrixXd kmm(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
        kmm.row(a) = columns.row(static_cast<Eigen::Index>(sample[static_cast<std::size_t>(a)]));
    }
    kmm = (0.5 * (kmm + kmm.transpose())).eval();
    const auto spectrum = detail::descending_eigen(kmm);
    const auto kept = detail::usable_count(spectrum.values);
    if (kept == 0) {
        throw NumericError("sampled kernel block has no positive eigenvalue");
    }
    if (kept < m) {
        warn("Nystrom: dropped " + std::to_string(m - kept) + " near-zero directions of the sampled block");
    }
    const Eigen::VectorXd lambda = spectrum.values.head(kept);
    const double ratio = static_cast<double>(s) / static_cast<double>(m);
    NystromFactors f;
    f.sampled_columns = sample;
    f.lambda_hat = ratio * lambda;
    f.v_hat = std::sqrt(1.0 / ratio) * columns * spectrum.vectors.leftCols(kept) * lambda.cwiseInverse().asDiagonal();
    return f;
}

/// Share of the usable spectrum carried by the leading `n` directions.
inline double explained_variance(const FeatureMap& map, Eigen::Index n = 5) {
    if (map.spectrum.size() == 0) {
        return 0.0;
    }
    return map.spectrum.head(std::min(n, map.spectrum.size())).sum() / map.spectrum.sum();
}

/// ||K~ - V^ Lambda^ V^T||_F
inline double nystrom_reconstruction_error(const KernelMatrix& centered, const NystromFactors& f) {
    return (centered.values - f.v_hat * f.lambda_hat.asDiagonal() * f.v_hat.transpose()).norm();
}

/// Nystrom map Lambda^^{1/2} V^^T, rotated by PCA so rows are orthogonal,
/// then truncated by `selection`.
inline FeatureMap nystrom_feature_map(const Eigen::MatrixXd& columns, const std::vector<std::size_t>& sample,
                                      const Selection& selection = Selection::kaiser()) {
    const auto f = nystrom_factors(columns, sample);
    const Eigen::MatrixXd approx = f.lambda_hat.cwiseSqrt().asDiagonal() * f.v_hat.transpose();
    const auto pca = detail::descending_eigen(approx * approx.transpose());
    const auto usable = detail::usable_count(pca.values);
    if (usable == 0) {
        throw NumericError("Nystrom feature map is identically zero");
    }
    const auto keep = detail::select_count(pca.values, usable, selection);
    FeatureMap map;
    map.method = MapMethod::nystrom;
    map.nystrom_columns = sample.size();
    map.eigenvalues = pca.values.head(keep);
    map.spectrum = pca.values.head(usable);
    map.coords = pca.vectors.leftCols(keep).transpose() * approx;
    Eigen::MatrixXd rows = map.coords.transpose();
    detail::fix_signs(rows);
    map.coords = rows.transpose();
    return map;
}

/// Centered kernel columns at `sample`, taken from a full centered kernel.
inline Eigen::MatrixXd kernel_columns(const KernelMatrix& centered, const std::vector<std::size_t>& sample) {
    Eigen::MatrixXd out(centered.values.rows(), static_cast<Eigen::Index>(sample.size()));
    for (std::size_t c = 0; c < sample.size(); ++c) {
        out.col(static_cast<Eigen::Index>(c)) = centered.values.col(static_cast<Eigen::Index>(sample[c]));
    }
    return out;
}

/// max |row_u . row_v| / (|row_u||row_v|) over u != v.
inline double row_orthogonality_defect(const FeatureMap& map) {
    const Eigen::MatrixXd g = map.coords * map.coords.transpose();
    double worst = 0.0;
    for (Eigen::Index u = 0; u < g.rows(); ++u) {
        for (Eigen::Index v = 0; v < u; ++v) {
            const double denom = std::sqrt(g(u, u) * g(v, v));
            if (denom > 0.0) {
                worst = std::max(worst, std::abs(g(u, v)) / denom);
            }
        }
    }
    return worst;
}

}  // namespace wkc::kpca

#pragma once

#include <wkc/error.hpp>
#include <wkc/kernels.hpp>
#include <wkc/log.hpp>
#include <wkc/multiref.hpp>
#include <wkc/ot/wasserstein.hpp>
#include <wkc/parallel.hpp>
#include <wkc/types.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace wkc::pipelines {

using ot::DiscreteDistribution;

struct TimeSeriesItem {
    Eigen::VectorXd values;
    std::optional<std::size_t> label;
};

using TimeSeriesDataset = std::vector<TimeSeriesItem>;

struct GraphItem {
    Eigen::MatrixXd node_table;  ///< one row per node: voltage, demand
    double total_demand = 0.0;   ///< theta^P
    double node_count = 0.0;     ///< theta^V
};

enum class Window { none, hann };

inline Window parse_window(const std::string& s) {
    if (s == "none") {
        return Window::none;
    }
    if (s == "hann") {
        return Window::hann;
    }
    throw ConfigError("unknown periodogram window '" + s + "' (expected none or hann)");
}

/// Rescales every value of every series with one dataset-wide min and max.
inline void minmax_normalize(TimeSeriesDataset& data) {
    if (data.empty()) {
        throw DataError("time-series dataset is empty");
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& s : data) {
        if (s.values.size() < 2) {
            throw DataError("every time series needs at least two samples");
        }
        if (!s.values.allFinite()) {
            throw DataError("time series contain non-finite values");
        }
        lo = std::min(lo, s.values.minCoeff());
        hi = std::max(hi, s.values.maxCoeff());
    }
    if (!(hi > lo)) {
        throw DataError("time-series dataset is constant; min-max normalization undefined");
    }
    for (auto& s : data) {
        s.values = (s.values.array() - lo) / (hi - lo);
    }
}

/// Normalized periodogram over the positive Fourier frequencies k / L
/// (k = 1..floor(L/2)), reported in cycles per `samples_per_unit` samples.
/// Bins with power below 1e-12 of the largest are dropped so all weights are
/// positive; they carry no transportable mass.
inline DiscreteDistribution npsd(const Eigen::VectorXd& series, double samples_per_unit = 1.0,
                                 Window window = Window::none) {
    const auto l = series.size();
    if (l < 2) {
        throw DataError("npsd needs a series of length >= 2");
    }
    if (!series.allFinite()) {
        throw DataError("npsd input contains non-finite values");
    }
    Eigen::VectorXd x = series;
    if (window == Window::hann) {
        for (Eigen::Index n = 0; n < l; ++n) {
            x[n] *= 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(l - 1));
        }
    }
    const Eigen::Index bins = l / 2;
    Eigen::VectorXd power(bins);
    for (Eigen::Index k = 1; k <= bins; ++k) {
        double re = 0.0;
        double im = 0.0;
        for (Eigen::Index n = 0; n < l; ++n) {
            const double angle = 2.0 * std::numbers::pi * static_cast<double>(k * n % l) / static_cast<double>(l);
            re += x[n] * std::cos(angle);
            im -= x[n] * std::sin(angle);
        }
        power[k - 1] = re * re + im * im;
    }
    const double scale = std::max(1.0, x.squaredNorm() * static_cast<double>(l));
    if (!(power.sum() > 1e-24 * scale)) {
        throw DataError("npsd undefined: the series has no power outside the zero frequency");
    }
    const double floor = 1e-12 * power.maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index k = 0; k < bins; ++k) {
        if (power[k] > floor) {
            keep.push_back(k);
        }
    }
    Eigen::MatrixXd support(static_cast<Eigen::Index>(keep.size()), 1);
    Eigen::VectorXd weights(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) {
        const auto k = keep[i];
        support(static_cast<Eigen::Index>(i), 0) =
            static_cast<double>(k + 1) / static_cast<double>(l) * samples_per_unit;
        weights[static_cast<Eigen::Index>(i)] = power[k];
    }
    weights /= weights.sum();
    return {support, weights};
}

struct SmoothResult {
    TimeSeriesDataset data;
    std::size_t components = 0;
};

/// Projects the (equal-length) series onto the leading principal directions
/// that explain at least `fraction` of the variance and reconstructs them.
inline SmoothResult pca_smooth(const TimeSeriesDataset& data, double fraction = 0.85) {
    if (data.size() < 2) {
        throw DataError("pca_smooth needs at least two series");
    }
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw ConfigError("PCA variance fraction must lie in (0, 1]");
    }
    const auto l = data.front().values.size();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(data.size()), l);
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].values.size() != l) {
            throw DataError("pca_smooth needs series of equal length");
        }
        x.row(static_cast<Eigen::Index>(i)) = data[i].values.transpose();
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mean;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(centered.transpose() * centered);
    const Eigen::VectorXd values = solver.eigenvalues().reverse().cwiseMax(0.0);
    const Eigen::MatrixXd vectors = solver.eigenvectors().rowwise().reverse();
    const double total = values.sum();
    Eigen::Index k = 0;
    if (total > 0.0) {
        double acc = 0.0;
        while (k < values.size() && acc < fraction * total * (1.0 - 1e-12)) {
            acc += values[k++];
        }
    }
    SmoothResult out;
    out.components = static_cast<std::size_t>(k);
    const Eigen::MatrixXd basis = vectors.leftCols(k);
    const Eigen::MatrixXd rebuilt = (centered * basis * basis.transpose()).rowwise() + mean;
    out.data = data;
    for (std::size_t i = 0; i < data.size(); ++i) {
        out.data[i].values = rebuilt.row(static_cast<Eigen::Index>(i)).transpose();
    }
    return out;
}

/// All-pairs closed-form 1-D Wasserstein distances.
inline DistanceMatrix pairwise_wasserstein_1d(const std::vector<DiscreteDistribution>& items) {
    const auto s = static_cast<Eigen::Index>(items.size());
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(s, s);
    parallel_for(items.size(), [&](std::size_t i) {
        for (std::size_t j = i + 1; j < items.size(); ++j) {
            d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ot::wasserstein_1d(items[i], items[j]);
        }
    });
    for (Eigen::Index i = 0; i < s; ++i) {
        for (Eigen::Index j = i + 1; j < s; ++j) {
            d(j, i) = d(i, j);
        }
    }
    return DistanceMatrix(std::move(d));
}

inline std::vector<DiscreteDistribution> npsd_all(const TimeSeriesDataset& data, double samples_per_unit = 1.0,
                                                  Window window = Window::none) {
    std::vector<DiscreteDistribution> out(data.size(), DiscreteDistribution::dirac(Eigen::RowVectorXd::Zero(1)));
    parallel_for(data.size(), [&](std::size_t i) { out[i] = npsd(data[i].values, samples_per_unit, window); });
    return out;
}

/// Pairwise distances of per-item scalars or vectors.
inline DistanceMatrix euclidean_distances(const Eigen::MatrixXd& rows) {
    const auto s = rows.rows();
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(s, s);
    for (Eigen::Index i = 0; i < s; ++i) {
        for (Eigen::Index j = i + 1; j < s; ++j) {
            d(i, j) = d(j, i) = (rows.row(i) - rows.row(j)).norm();
        }
    }
    return DistanceMatrix(std::move(d));
}

inline Eigen::MatrixXd series_matrix(const TimeSeriesDataset& data) {
    if (data.empty()) {
        throw DataError("time-series dataset is empty");
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(data.size()), data.front().values.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].values.size() != x.cols()) {
            throw DataError("time series must share one length");
        }
        x.row(static_cast<Eigen::Index>(i)) = data[i].values.transpose();
    }
    return x;
}

/// Shifted exponential kernel on NPSD distances.
inline KernelMatrix italy_kernel(const DistanceMatrix& npsd_distances, double gamma_j,
                                 double jitter = kernels::kDefaultJitter) {
    return kernels::shift_kernel(kernels::exponential_kernel(npsd_distances, gamma_j), jitter);
}

/// k_J * (k_T + k_A): k_T on the series, k_A on the series totals; every
/// factor shifted by the jitter before composition.
inline KernelMatrix melbourne_kernel(const DistanceMatrix& npsd_distances, const DistanceMatrix& series_distances,
                                     const DistanceMatrix& total_distances, double gamma_j, double gamma_t,
                                     double gamma_a, double jitter = kernels::kDefaultJitter) {
    const auto kj = italy_kernel(npsd_distances, gamma_j, jitter);
    const auto kt = kernels::shift_kernel(kernels::exponential_kernel(series_distances, gamma_t), jitter);
    const auto ka = kernels::shift_kernel(kernels::exponential_kernel(total_distances, gamma_a), jitter);
    return kernels::compose_product(kj, kernels::compose_sum(kt, ka, 1.0, 1.0));
}

/// Distances used by melbourne_kernel that depend only on the data.
struct MelbourneInputs {
    DistanceMatrix npsd;
    DistanceMatrix series;
    DistanceMatrix totals;
};

inline MelbourneInputs melbourne_inputs(const TimeSeriesDataset& data, double samples_per_unit = 1.0,
                                        Window window = Window::none) {
    const Eigen::MatrixXd x = series_matrix(data);
    return {pairwise_wasserstein_1d(npsd_all(data, samples_per_unit, window)), euclidean_distances(x),
            euclidean_distances(x.rowwise().sum())};
}

/// Per-feature min-max normalization of all node tables to [0, 1]. A
/// constant feature maps to 0.
inline void normalize_node_tables(std::vector<GraphItem>& graphs) {
    if (graphs.empty()) {
        throw DataError("graph dataset is empty");
    }
    const auto cols = graphs.front().node_table.cols();
    Eigen::RowVectorXd lo = Eigen::RowVectorXd::Constant(cols, std::numeric_limits<double>::infinity());
    Eigen::RowVectorXd hi = Eigen::RowVectorXd::Constant(cols, -std::numeric_limits<double>::infinity());
    for (const auto& g : graphs) {
        if (g.node_table.rows() == 0 || g.node_table.cols() != cols) {
            throw DataError("every graph needs a non-empty node table with a common column count");
        }
        lo = lo.cwiseMin(g.node_table.colwise().minCoeff());
        hi = hi.cwiseMax(g.node_table.colwise().maxCoeff());
    }
    for (auto& g : graphs) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            const double span = hi[c] - lo[c];
            if (span > 0.0) {
                g.node_table.col(c) = ((g.node_table.col(c).array() - lo[c]) / span).matrix();
            } else {
                g.node_table.col(c).setZero();
            }
        }
    }
}

/// Nodal distribution of a graph: one support point per node, uniform mass.
inline std::vector<DiscreteDistribution> nodal_distributions(const std::vector<GraphItem>& graphs) {
    std::vector<DiscreteDistribution> out;
    out.reserve(graphs.size());
    for (const auto& g : graphs) {
        out.push_back(DiscreteDistribution::uniform(g.node_table));
    }
    return out;
}

/// k_W * (k_P + k_V) with every factor shifted by the jitter.
inline KernelMatrix graph_kernel(const std::vector<GraphItem>& graphs, const DistanceMatrix& fused, double gamma_w,
                                 double gamma_p, double gamma_v, double jitter = kernels::kDefaultJitter) {
    if (static_cast<Eigen::Index>(graphs.size()) != fused.size()) {
        throw DataError("graph count does not match the distance matrix");
    }
    Eigen::MatrixXd p(static_cast<Eigen::Index>(graphs.size()), 1);
    Eigen::MatrixXd v(static_cast<Eigen::Index>(graphs.size()), 1);
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        p(static_cast<Eigen::Index>(i), 0) = graphs[i].total_demand;
        v(static_cast<Eigen::Index>(i), 0) = graphs[i].node_count;
    }
    const auto kw = kernels::shift_kernel(kernels::exponential_kernel(fused, gamma_w), jitter);
    const auto kp = kernels::shift_kernel(kernels::exponential_kernel(euclidean_distances(p), gamma_p), jitter);
    const auto kv = kernels::shift_kernel(kernels::exponential_kernel(euclidean_distances(v), gamma_v), jitter);
    return kernels::compose_product(kw, kernels::compose_sum(kp, kv, 1.0, 1.0));
}

struct ErrorSummary {
    std::vector<double> errors;  ///< per pair, input order, zero-W pairs removed
    double mean = 0.0;
    double p70 = 0.0;
    double p90 = 0.0;
};

/// Percentile with linear interpolation between order statistics.
inline double percentile(std::vector<double> values, double q) {
    if (values.empty()) {
        throw DataError("percentile of an empty sample");
    }
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Relative errors |D^ - W| / W over sampled pairs.
inline ErrorSummary approximation_error(const DistanceMatrix& approx, const std::vector<multiref::SampledPair>& pairs) {
    ErrorSummary out;
    std::size_t zero = 0;
    for (const auto& p : pairs) {
        if (p.exact == 0.0) {
            ++zero;
            continue;
        }
        out.errors.push_back(multiref::relative_error(
            approx(static_cast<Eigen::Index>(p.i), static_cast<Eigen::Index>(p.j)), p.exact));
    }
    if (zero > 0) {
        warn("approximation error: excluded " + std::to_string(zero) + " pairs with zero exact distance");
    }
    if (out.errors.empty()) {
        throw DataError("approximation error needs at least one pair with a positive exact distance");
    }
    double sum = 0.0;
    for (double e : out.errors) {
        sum += e;
    }
    out.mean = sum / static_cast<double>(out.errors.size());
    out.p70 = percentile(out.errors, 70.0);
    out.p90 = percentile(out.errors, 90.0);
    return out;
}

}  // namespace wkc::pipelines

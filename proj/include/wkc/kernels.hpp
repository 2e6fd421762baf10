#pragma once

#include <wkc/error.hpp>
#include <wkc/log.hpp>
#include <wkc/parallel.hpp>
#include <wkc/random.hpp>
#include <wkc/types.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace wkc::kernels {

inline constexpr double kDefaultJitter = 1e-3;

/// Kernel parameters gamma^1..gamma^F with box bounds.
struct KernelParams {
    std::vector<double> gammas;
    std::vector<double> lower;
    std::vector<double> upper;

    void validate() const {
        if (gammas.size() != lower.size() || gammas.size() != upper.size()) {
            throw ConfigError("kernel parameter and bound vectors differ in length");
        }
        for (std::size_t f = 0; f < gammas.size(); ++f) {
            if (!(lower[f] > 0.0 && lower[f] <= gammas[f] && gammas[f] <= upper[f])) {
                throw ConfigError("kernel parameter " + std::to_string(f) + " violates 0 < lower <= gamma <= upper");
            }
        }
    }
};

inline void check_square(const Eigen::MatrixXd& m, const char* what) {
    if (m.rows() != m.cols()) {
        throw DataError(std::string(what) + " must be square");
    }
}

/// exp(-gamma * D^2) elementwise, diagonal exactly 1.
inline KernelMatrix exponential_kernel(const DistanceMatrix& d, double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw ConfigError("kernel parameter gamma must be positive and finite");
    }
    check_square(d.values, "distance matrix");
    const auto s = d.size();
    KernelMatrix k;
    k.values.resize(s, s);
    parallel_for(static_cast<std::size_t>(s), [&](std::size_t jj) {
        const auto j = static_cast<Eigen::Index>(jj);
        for (Eigen::Index i = 0; i < s; ++i) {
            const double v = d.values(i, j);
            k.values(i, j) = i == j ? 1.0 : std::exp(-gamma * v * v);
        }
    });
    return k;
}

/// K + phi I.
inline KernelMatrix shift_kernel(KernelMatrix k, double jitter = kDefaultJitter) {
    if (!(jitter > 0.0) || !std::isfinite(jitter)) {
        throw ConfigError("jitter must be positive and finite");
    }
    if (k.centered) {
        throw DataError("shift_kernel expects an uncentered kernel");
    }
    k.values.diagonal().array() += jitter;
    k.jitter += jitter;
    return k;
}

inline void check_composable(const KernelMatrix& a, const KernelMatrix& b) {
    if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols()) {
        throw DataError("kernel shapes differ");
    }
    if (a.centered || b.centered) {
        throw DataError("kernels must be composed before centering");
    }
}

/// Elementwise (Schur) product. The result carries no jitter record.
inline KernelMatrix compose_product(const KernelMatrix& a, const KernelMatrix& b) {
    check_composable(a, b);
    KernelMatrix k;
    k.values = a.values.cwiseProduct(b.values);
    return k;
}

inline KernelMatrix compose_sum(const KernelMatrix& a, const KernelMatrix& b, double alpha1, double alpha2) {
    check_composable(a, b);
    if (alpha1 < 0.0 || alpha2 < 0.0) {
        throw ConfigError("kernel sum weights must be nonnegative");
    }
    KernelMatrix k;
    k.values = alpha1 * a.values + alpha2 * b.values;
    k.jitter = alpha1 * a.jitter + alpha2 * b.jitter;
    return k;
}

/// Double centering K - 1K/S - K1/S + 1K1/S^2.
inline KernelMatrix center_kernel(KernelMatrix k) {
    check_square(k.values, "kernel matrix");
    const auto s = k.values.rows();
    if (s == 0) {
        k.centered = true;
        return k;
    }
    const Eigen::VectorXd col_means = k.values.colwise().mean().transpose();
    const Eigen::VectorXd row_means = k.values.rowwise().mean();
    const double total = row_means.mean();
    parallel_for(static_cast<std::size_t>(s), [&](std::size_t jj) {
        const auto j = static_cast<Eigen::Index>(jj);
        for (Eigen::Index i = 0; i < s; ++i) {
            k.values(i, j) += total - col_means[j] - row_means[i];
        }
    });
    k.values = (0.5 * (k.values + k.values.transpose())).eval();
    k.centered = true;
    return k;
}

namespace detail {

/// Off-diagonal squared distances (upper triangle). Above `cap` entries a
/// seeded uniform subsample is taken instead.
inline std::vector<double> offdiagonal_squares(const DistanceMatrix& d, std::size_t cap = 4'000'000) {
    const auto s = static_cast<std::size_t>(d.size());
    const std::size_t total = s < 2 ? 0 : s * (s - 1) / 2;
    std::vector<double> out;
    if (total <= cap) {
        out.reserve(total);
        for (std::size_t j = 0; j < s; ++j) {
            for (std::size_t i = j + 1; i < s; ++i) {
                const double v = d.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                out.push_back(v * v);
            }
        }
        return out;
    }
    Rng rng = make_stream(0, "gamma-subsample");
    out.reserve(cap);
    while (out.size() < cap) {
        const auto i = static_cast<Eigen::Index>(uniform_index(rng, s));
        const auto j = static_cast<Eigen::Index>(uniform_index(rng, s));
        if (i != j) {
            out.push_back(d.values(i, j) * d.values(i, j));
        }
    }
    return out;
}

inline double offdiagonal_variance(const std::vector<double>& squares, double gamma) {
    double mean = 0.0;
    for (double v : squares) {
        mean += std::exp(-gamma * v);
    }
    mean /= static_cast<double>(squares.size());
    double var = 0.0;
    for (double v : squares) {
        const double e = std::exp(-gamma * v) - mean;
        var += e * e;
    }
    return var / static_cast<double>(squares.size());
}

}  // namespace detail

/// gamma maximizing the variance of the off-diagonal entries of
/// exp(-gamma D^2). A log-spaced scan over [1e-6/m, 1e6/m] brackets the
/// maximum, golden-section refines it to 1e-3 relative.
inline double gamma_max_search(const DistanceMatrix& d) {
    check_square(d.values, "distance matrix");
    const auto squares = detail::offdiagonal_squares(d);
    double m = 0.0;
    for (double v : squares) {
        m += v;
    }
    if (squares.empty() || !(m > 0.0)) {
        throw DataError("gamma_max_search needs at least one nonzero off-diagonal distance");
    }
    m /= static_cast<double>(squares.size());
    const double lo = std::log(1e-6 / m);
    const double hi = std::log(1e6 / m);
    auto f = [&](double t) { return detail::offdiagonal_variance(squares, std::exp(t)); };

    constexpr int steps = 240;
    int best = 0;
    double best_value = -1.0;
    for (int k = 0; k <= steps; ++k) {
        const double v = f(lo + (hi - lo) * k / steps);
        if (v > best_value) {
            best_value = v;
            best = k;
        }
    }
    const auto [mn, mx] = std::minmax_element(squares.begin(), squares.end());
    if (*mn == *mx) {
        warn("gamma_max_search: off-diagonal variance is zero for every gamma, using 1/mean(D^2)");
        return 1.0 / m;
    }
    double a = lo + (hi - lo) * std::max(0, best - 1) / steps;
    double b = lo + (hi - lo) * std::min(steps, best + 1) / steps;
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a);
    double e = a + invphi * (b - a);
    double fc = f(c);
    double fe = f(e);
    while (b - a > 1e-3) {
        if (fc >= fe) {
            b = e;
            e = c;
            fe = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + invphi * (b - a);
            fe = f(e);
        }
    }
    return std::exp(0.5 * (a + b));
}

}  // namespace wkc::kernels

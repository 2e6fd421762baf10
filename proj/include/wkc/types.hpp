#pragma once

#include <wkc/error.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

namespace wkc {

/// Symmetric, nonnegative, zero-diagonal matrix of pairwise distances.
struct DistanceMatrix {
    static constexpr double kSymmetryTolerance = 1e-9;

    Eigen::MatrixXd values;
    std::vector<std::size_t> item_ids;

    DistanceMatrix() = default;
    explicit DistanceMatrix(Eigen::MatrixXd v) : values(std::move(v)), item_ids(static_cast<std::size_t>(values.rows())) {
        std::iota(item_ids.begin(), item_ids.end(), std::size_t{0});
    }
    DistanceMatrix(Eigen::MatrixXd v, std::vector<std::size_t> ids) : values(std::move(v)), item_ids(std::move(ids)) {}

    Eigen::Index size() const noexcept { return values.rows(); }
    double operator()(Eigen::Index i, Eigen::Index j) const { return values(i, j); }

    /// Throws DataError when an invariant does not hold.
    void validate() const {
        detail::require(values.rows() == values.cols(), "distance matrix must be square");
        detail::require(static_cast<Eigen::Index>(item_ids.size()) == values.rows(),
                        "distance matrix item_ids length mismatch");
        for (Eigen::Index i = 0; i < values.rows(); ++i) {
            detail::require(values(i, i) == 0.0, "distance matrix diagonal must be zero");
            for (Eigen::Index j = 0; j < i; ++j) {
                const double a = values(i, j);
                const double b = values(j, i);
                detail::require(std::isfinite(a) && a >= 0.0 && b >= 0.0,
                                "distance matrix entries must be finite and nonnegative");
                detail::require(std::abs(a - b) <= kSymmetryTolerance, "distance matrix must be symmetric");
            }
        }
    }
};

/// Symmetric similarity matrix with provenance flags.
struct KernelMatrix {
    Eigen::MatrixXd values;
    bool centered = false;
    double jitter = 0.0;  ///< diagonal shift phi already applied

    Eigen::Index size() const noexcept { return values.rows(); }
};

}  // namespace wkc

#pragma once

#include <wkc/error.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

namespace wkc::ot {

/// Finitely supported probability measure sum_m p_m delta_{x^m} in R^d.
/// Support points are the rows of an N x d matrix.
class DiscreteDistribution {
public:
    static constexpr double kWeightSumTolerance = 1e-9;

    DiscreteDistribution(Eigen::MatrixXd support, Eigen::VectorXd weights)
        : support_(std::move(support)), weights_(std::move(weights)) {
        validate();
    }

    /// Uniform weights 1/N over the rows of `support`.
    static DiscreteDistribution uniform(Eigen::MatrixXd support) {
        const auto n = support.rows();
        detail::require(n > 0, "distribution support must be non-empty");
        Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
        return {std::move(support), std::move(w)};
    }

    static DiscreteDistribution dirac(const Eigen::VectorXd& point) {
        Eigen::MatrixXd s(1, point.size());
        s.row(0) = point.transpose();
        return {std::move(s), Eigen::VectorXd::Ones(1)};
    }

    const Eigen::MatrixXd& support() const noexcept { return support_; }
    const Eigen::VectorXd& weights() const noexcept { return weights_; }
    Eigen::Index size() const noexcept { return support_.rows(); }
    Eigen::Index dim() const noexcept { return support_.cols(); }

    /// Weighted mean of the support.
    Eigen::VectorXd mean() const { return support_.transpose() * weights_; }

private:
    void validate() const {
        detail::require(support_.rows() > 0, "distribution support must be non-empty");
        detail::require(support_.cols() >= 1, "support dimension must be at least 1");
        detail::require(weights_.size() == support_.rows(),
                        "weights length " + std::to_string(weights_.size()) + " does not match support size " +
                            std::to_string(support_.rows()));
        detail::require(support_.allFinite(), "support contains non-finite values");
        for (Eigen::Index i = 0; i < weights_.size(); ++i) {
            detail::require(std::isfinite(weights_[i]) && weights_[i] > 0.0,
                            "weights must be strictly positive (index " + std::to_string(i) + ")");
        }
        detail::require(std::abs(weights_.sum() - 1.0) <= kWeightSumTolerance,
                        "weights must sum to 1 (got " + std::to_string(weights_.sum()) + ")");
    }

    Eigen::MatrixXd support_;
    Eigen::VectorXd weights_;
};

inline Eigen::MatrixXd squared_euclidean_costs(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    Eigen::MatrixXd c(x.rows(), y.rows());
    for (Eigen::Index j = 0; j < y.rows(); ++j) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            c(i, j) = (x.row(i) - y.row(j)).squaredNorm();
        }
    }
    return c;
}

}  // namespace wkc::ot

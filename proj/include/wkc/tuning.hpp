#pragma once

#include <wkc/clustering.hpp>
#include <wkc/error.hpp>
#include <wkc/kernels.hpp>
#include <wkc/kpca.hpp>
#include <wkc/log.hpp>
#include <wkc/random.hpp>
#include <wkc/validity.hpp>

#include <json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <set>
#include <string>
#include <vector>

namespace wkc::tuning {

inline const double kDefaultLowMultiplier = std::pow(10.0, -0.5);
inline const double kDefaultHighMultiplier = std::pow(10.0, 0.5);

/// lower = low * gamma_max, upper = high * gamma_max; the start point is
/// gamma_max itself.
inline kernels::KernelParams make_bounds(const std::vector<double>& gamma_max, double low = kDefaultLowMultiplier,
                                         double high = kDefaultHighMultiplier) {
    if (!(low > 0.0) || !(low < high)) {
        throw ConfigError("bound multipliers must satisfy 0 < low < high");
    }
    if (gamma_max.empty()) {
        throw ConfigError("at least one kernel parameter is required");
    }
    kernels::KernelParams p;
    for (double g : gamma_max) {
        if (!(g > 0.0) || !std::isfinite(g)) {
            throw ConfigError("gamma_max entries must be positive and finite");
        }
        p.gammas.push_back(g);
        p.lower.push_back(low * g);
        p.upper.push_back(high * g);
    }
    return p;
}

struct Scores {
    double ci = 0.0;
    double fgk = -1.0;
    double penalty = 1.0;  ///< multiplicative factor in [0, 1]
    double explained_variance = 0.0;  ///< leading five kPCA directions, reporting only
};

/// min(CI, (FGK + 1) / 2), scaled by the penalty factor.
inline double combined_score(const Scores& s) { return std::min(s.ci, (s.fgk + 1.0) / 2.0) * s.penalty; }

struct Evaluation {
    std::vector<double> gammas;
    double ci = 0.0;
    double fgk = -1.0;
    double penalty = 1.0;
    double objective = 0.0;
    double explained_variance = 0.0;
    std::string phase;  ///< "random" or "bayes"
    std::string error;  ///< non-empty when the objective threw
};

struct TuningTrace {
    std::vector<Evaluation> evaluations;
    std::size_t best = 0;
    std::size_t n_random = 0;
    std::size_t n_bayes = 0;

    const Evaluation& incumbent() const { return evaluations.at(best); }

    /// Incumbent: first evaluation reaching the maximal objective.
    void update_best() {
        best = 0;
        for (std::size_t i = 1; i < evaluations.size(); ++i) {
            if (evaluations[i].objective > evaluations[best].objective) {
                best = i;
            }
        }
    }

    std::vector<double> running_maximum() const {
        std::vector<double> out;
        double m = -std::numeric_limits<double>::infinity();
        for (const auto& e : evaluations) {
            m = std::max(m, e.objective);
            out.push_back(m);
        }
        return out;
    }
};

inline nlohmann::json to_json(const Evaluation& e) {
    nlohmann::json j{{"gammas", e.gammas}, {"ci", e.ci},         {"fgk", e.fgk},
                     {"penalty", e.penalty}, {"objective", e.objective}, {"phase", e.phase},
                     {"explained_variance", e.explained_variance}};
    if (!e.error.empty()) {
        j["error"] = e.error;
    }
    return j;
}

inline Evaluation evaluation_from_json(const nlohmann::json& j) {
    Evaluation e;
    e.gammas = j.at("gammas").get<std::vector<double>>();
    e.ci = j.at("ci").get<double>();
    e.fgk = j.at("fgk").get<double>();
    e.penalty = j.value("penalty", 1.0);
    e.objective = j.at("objective").get<double>();
    e.explained_variance = j.value("explained_variance", 0.0);
    e.phase = j.at("phase").get<std::string>();
    e.error = j.value("error", std::string{});
    return e;
}

/// One JSON object per line; doubles are written with round-trip precision.
inline void save_trace(const TuningTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write tuning trace " + path);
    }
    for (const auto& e : trace.evaluations) {
        out << to_json(e).dump() << '\n';
    }
}

inline TuningTrace load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read tuning trace " + path);
    }
    TuningTrace trace;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) {
            continue;
        }
        try {
            trace.evaluations.push_back(evaluation_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& ex) {
            throw DataError("tuning trace " + path + " line " + std::to_string(number) + ": " + ex.what());
        }
    }
    for (const auto& e : trace.evaluations) {
        (e.phase == "bayes" ? trace.n_bayes : trace.n_random) += 1;
    }
    trace.update_best();
    return trace;
}

namespace detail {

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Zero-mean GP with squared-exponential covariance (unit signal variance)
/// on standardized targets.
class GaussianProcess {
public:
    static constexpr double kNoise = 1e-4;

    GaussianProcess(Eigen::MatrixXd x, const Eigen::VectorXd& y) : x_(std::move(x)) {
        mean_ = y.mean();
        const double var = (y.array() - mean_).square().mean();
        scale_ = var > 0.0 ? std::sqrt(var) : 1.0;
        y_ = (y.array() - mean_) / scale_;
        fit_length_scale();
    }

    double length_scale() const { return length_; }

    /// Posterior mean and standard deviation in original units.
    std::pair<double, double> predict(const Eigen::VectorXd& u) const {
        const auto n = x_.rows();
        Eigen::VectorXd k(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            k[i] = cov(x_.row(i).transpose(), u, length_);
        }
        const double mu = k.dot(alpha_);
        const Eigen::VectorXd v = chol_.matrixL().solve(k);
        const double var = std::max(0.0, 1.0 - v.squaredNorm());
        return {mean_ + scale_ * mu, scale_ * std::sqrt(var)};
    }

    /// Expected improvement over `incumbent` (original units).
    double expected_improvement(const Eigen::VectorXd& u, double incumbent) const {
        const auto [mu, sd] = predict(u);
        if (sd <= 1e-12) {
            return std::max(0.0, mu - incumbent);
        }
        const double z = (mu - incumbent) / sd;
        return (mu - incumbent) * normal_cdf(z) + sd * normal_pdf(z);
    }

private:
    static double cov(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double length) {
        return std::exp(-0.5 * (a - b).squaredNorm() / (length * length));
    }

    /// Negative log marginal likelihood (up to a constant); +inf if the
    /// Cholesky factorization fails.
    double factorize(double length) {
        const auto n = x_.rows();
        Eigen::MatrixXd k(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                k(i, j) = cov(x_.row(i).transpose(), x_.row(j).transpose(), length);
            }
            k(i, i) += kNoise;
        }
        chol_.compute(k);
        if (chol_.info() != Eigen::Success) {
            return std::numeric_limits<double>::infinity();
        }
        alpha_ = chol_.solve(y_);
        return 0.5 * y_.dot(alpha_) + chol_.matrixL().toDenseMatrix().diagonal().array().log().sum();
    }

    /// Maximum likelihood over a log grid of length scales in [0.01, 10]
    /// (the inputs live in the unit cube).
    void fit_length_scale() {
        double best = std::numeric_limits<double>::infinity();
        double best_length = 0.2;
        for (int k = 0; k <= 60; ++k) {
            const double length = std::exp(std::log(0.01) + (std::log(10.0) - std::log(0.01)) * k / 60.0);
            const double nll = factorize(length);
            if (nll < best) {
                best = nll;
                best_length = length;
            }
        }
        length_ = best_length;
        if (!std::isfinite(factorize(length_))) {
            throw NumericError("Gaussian-process covariance is not positive definite");
        }
    }

    Eigen::MatrixXd x_;
    Eigen::VectorXd y_;
    double mean_ = 0.0;
    double scale_ = 1.0;
    double length_ = 0.2;
    Eigen::LLT<Eigen::MatrixXd> chol_;
    Eigen::VectorXd alpha_;
};

inline Eigen::VectorXd random_unit(Rng& rng, std::size_t dim) {
    Eigen::VectorXd u(static_cast<Eigen::Index>(dim));
    for (auto& v : u) {
        v = uniform01(rng);
    }
    return u;
}

/// Compass search on the unit cube from `start`, maximizing `f`.
template <class F>
std::pair<Eigen::VectorXd, double> compass_maximize(const F& f, Eigen::VectorXd start) {
    double value = f(start);
    double step = 0.1;
    while (step > 1e-4) {
        bool moved = false;
        for (Eigen::Index c = 0; c < start.size(); ++c) {
            for (double sign : {1.0, -1.0}) {
                Eigen::VectorXd trial = start;
                trial[c] = std::clamp(trial[c] + sign * step, 0.0, 1.0);
                const double v = f(trial);
                if (v > value) {
                    value = v;
                    start = trial;
                    moved = true;
                }
            }
        }
        if (!moved) {
            step *= 0.5;
        }
    }
    return {start, value};
}

}  // namespace detail

struct TuneOptions {
    std::size_t n_random = 20;
    std::size_t n_bayes = 20;
    std::size_t acquisition_starts = 64;
    /// Called after every evaluation, for example to append to a trace file.
    std::function<void(const TuningTrace&)> on_evaluation;
};

using Objective = std::function<Scores(const std::vector<double>&)>;

/// Random search in log-parameter space followed by GP expected-improvement
/// proposals. `resume` holds evaluations already done; they are kept and the
/// run continues at the next index.
inline TuningTrace tune(const Objective& objective, const kernels::KernelParams& bounds, const TuneOptions& options,
                        std::uint64_t seed, TuningTrace resume = {}) {
    bounds.validate();
    if (options.n_random == 0 && options.n_bayes == 0) {
        throw ConfigError("tuning budget must be at least one evaluation");
    }
    if (options.n_bayes > 0 && options.n_random == 0) {
        throw ConfigError("Bayesian proposals need at least one random evaluation");
    }
    const std::size_t dim = bounds.gammas.size();
    std::vector<double> log_lo(dim);
    std::vector<double> log_span(dim);
    for (std::size_t f = 0; f < dim; ++f) {
        log_lo[f] = std::log(bounds.lower[f]);
        log_span[f] = std::log(bounds.upper[f]) - log_lo[f];
    }
    auto to_gamma = [&](const Eigen::VectorXd& u) {
        std::vector<double> g(dim);
        for (std::size_t f = 0; f < dim; ++f) {
            const double v = std::exp(log_lo[f] + log_span[f] * u[static_cast<Eigen::Index>(f)]);
            g[f] = std::clamp(v, bounds.lower[f], bounds.upper[f]);
        }
        return g;
    };
    auto to_unit = [&](const std::vector<double>& g) {
        Eigen::VectorXd u(static_cast<Eigen::Index>(dim));
        for (std::size_t f = 0; f < dim; ++f) {
            u[static_cast<Eigen::Index>(f)] = log_span[f] > 0.0 ? (std::log(g[f]) - log_lo[f]) / log_span[f] : 0.0;
        }
        return u;
    };

    TuningTrace trace = std::move(resume);
    for (const auto& e : trace.evaluations) {
        if (e.gammas.size() != dim) {
            throw DataError("resumed tuning trace has a different parameter count");
        }
    }
    trace.n_random = options.n_random;
    trace.n_bayes = options.n_bayes;
    const std::size_t total = options.n_random + options.n_bayes;
    for (std::size_t index = trace.evaluations.size(); index < total; ++index) {
        Evaluation e;
        Eigen::VectorXd u;
        if (index < options.n_random) {
            e.phase = "random";
            Rng rng = make_stream(seed, "tuning-random", index);
            u = detail::random_unit(rng, dim);
        } else {
            e.phase = "bayes";
            Eigen::MatrixXd x(static_cast<Eigen::Index>(index), static_cast<Eigen::Index>(dim));
            Eigen::VectorXd y(static_cast<Eigen::Index>(index));
            double incumbent = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < index; ++i) {
                x.row(static_cast<Eigen::Index>(i)) = to_unit(trace.evaluations[i].gammas).transpose();
                y[static_cast<Eigen::Index>(i)] = trace.evaluations[i].objective;
                incumbent = std::max(incumbent, trace.evaluations[i].objective);
            }
            const detail::GaussianProcess gp(x, y);
            auto ei = [&](const Eigen::VectorXd& v) { return gp.expected_improvement(v, incumbent); };
            Rng rng = make_stream(seed, "tuning-ei", index);
            double best_ei = -1.0;
            for (std::size_t s = 0; s < options.acquisition_starts; ++s) {
                auto [cand, value] = detail::compass_maximize(ei, detail::random_unit(rng, dim));
                if (value > best_ei) {
                    best_ei = value;
                    u = cand;
                }
            }
            if (!(best_ei > 1e-12)) {
                u = detail::random_unit(rng, dim);
            }
        }
        e.gammas = to_gamma(u);
        try {
            const Scores s = objective(e.gammas);
            e.ci = s.ci;
            e.fgk = s.fgk;
            e.penalty = s.penalty;
            e.explained_variance = s.explained_variance;
            e.objective = std::clamp(combined_score(s), 0.0, 1.0);
        } catch (const std::exception& ex) {
            e.error = ex.what();
            e.objective = 0.0;
            warn("tuning: evaluation " + std::to_string(index) + " failed (" + e.error + "), scored 0");
        }
        trace.evaluations.push_back(std::move(e));
        trace.update_best();
        if (options.on_evaluation) {
            options.on_evaluation(trace);
        }
    }
    trace.update_best();
    return trace;
}

/// Settings for the clustering-based objective of one kernel parameter
/// vector.
struct ClusteringObjectiveOptions {
    std::size_t clusters = 2;
    std::size_t restarts = 3;
    clustering::KMedoidsOptions kmedoids;
    kpca::Selection selection = kpca::Selection::kaiser();
    std::size_t nystrom_threshold = 5000;
    std::size_t nystrom_columns = 5000;
    std::size_t fgk_pairs = 100;
    std::size_t fgk_repetitions = 35;
    bool cluster_count_penalty = false;
};

/// Everything one objective evaluation produced.
struct EvaluationArtifacts {
    kpca::FeatureMap features;
    std::vector<clustering::ClusteringResult> restarts;
    std::size_t best = 0;
    Scores scores;
};

using KernelBuilder = std::function<KernelMatrix(const std::vector<double>&)>;

/// Distinct clusters with two or more members, divided by T.
inline double cluster_count_factor(const clustering::ClusteringResult& r, std::size_t clusters) {
    std::vector<std::size_t> sizes(clusters, 0);
    for (auto a : r.assignments) {
        ++sizes[a];
    }
    const auto big = std::count_if(sizes.begin(), sizes.end(), [](std::size_t n) { return n >= 2; });
    return static_cast<double>(big) / static_cast<double>(clusters);
}

/// Exact kPCA map, or Nystrom above the size threshold.
inline kpca::FeatureMap feature_map(const KernelMatrix& kernel, const ClusteringObjectiveOptions& options,
                                    std::uint64_t seed) {
    const auto centered = kernel.centered ? kernel : kernels::center_kernel(kernel);
    const auto s = static_cast<std::size_t>(centered.size());
    if (s > options.nystrom_threshold) {
        const auto m = std::min(options.nystrom_columns, s);
        const auto sample = kpca::nystrom_sample(s, m, make_stream(seed, "nystrom")());
        return kpca::nystrom_feature_map(kpca::kernel_columns(centered, sample), sample, options.selection);
    }
    return kpca::exact_feature_map(centered, options.selection);
}

inline std::vector<clustering::ClusteringResult> cluster_restarts(const kpca::FeatureMap& features,
                                                                  const ClusteringObjectiveOptions& options,
                                                                  std::uint64_t seed) {
    return clustering::kmedoids_features_restarts(features.coords, options.clusters, options.restarts,
                                                  make_stream(seed, "kmedoids")(), options.kmedoids);
}

/// CI over all restarts, FGK of the best one.
inline Scores score_restarts(const kpca::FeatureMap& features, const std::vector<clustering::ClusteringResult>& restarts,
                             std::size_t best, const ClusteringObjectiveOptions& options, std::uint64_t seed) {
    if (restarts.size() < 2) {
        throw ConfigError("the consensus index needs at least two restarts");
    }
    Scores scores;
    std::vector<validity::Labels> partitions;
    for (const auto& r : restarts) {
        partitions.push_back(r.assignments);
    }
    scores.ci = validity::consensus_index(partitions);
    scores.fgk = validity::fgk(features.coords, restarts[best].assignments, options.fgk_pairs,
                               options.fgk_repetitions, make_stream(seed, "fgk")());
    scores.explained_variance = kpca::explained_variance(features);
    if (options.cluster_count_penalty) {
        scores.penalty = cluster_count_factor(restarts[best], options.clusters);
    }
    return scores;
}

inline EvaluationArtifacts evaluate_kernel(const KernelMatrix& kernel, const ClusteringObjectiveOptions& options,
                                          std::uint64_t seed) {
    if (options.restarts < 2) {
        throw ConfigError("the consensus index needs at least two restarts");
    }
    EvaluationArtifacts out;
    out.features = feature_map(kernel, options, seed);
    out.restarts = cluster_restarts(out.features, options, seed);
    out.best = clustering::best_result(out.restarts);
    out.scores = score_restarts(out.features, out.restarts, out.best, options, seed);
    return out;
}

inline Objective clustering_objective(KernelBuilder builder, ClusteringObjectiveOptions options, std::uint64_t seed) {
    return [builder = std::move(builder), options, seed](const std::vector<double>& gammas) {
        return evaluate_kernel(builder(gammas), options, seed).scores;
    };
}

}  // namespace wkc::tuning

#pragma once

#include <wkc/clustering.hpp>
#include <wkc/error.hpp>
#include <wkc/log.hpp>
#include <wkc/parallel.hpp>
#include <wkc/random.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace wkc::validity {

using Labels = std::vector<std::size_t>;

struct SamplingInfo {
    std::size_t pairs = 100;        ///< C
    std::size_t repetitions = 35;   ///< E
    std::uint64_t seed = 0;
};

struct ValidityReport {
    double fgk = 0.0;
    double ci = 0.0;
    std::optional<double> purity;
    std::map<std::string, double> db_scores;
    SamplingInfo sampling;
};

namespace detail {

/// Concordant and discordant counts of within-distances against
/// between-distances; ties count in neither.
inline std::pair<double, double> concordance(const std::vector<double>& within, std::vector<double> between) {
    std::sort(between.begin(), between.end());
    double concordant = 0.0;
    double discordant = 0.0;
    const double nb = static_cast<double>(between.size());
    for (double w : within) {
        const auto lo = std::lower_bound(between.begin(), between.end(), w);
        const auto hi = std::upper_bound(lo, between.end(), w);
        discordant += static_cast<double>(lo - between.begin());
        concordant += nb - static_cast<double>(hi - between.begin());
    }
    return {concordant, discordant};
}

inline std::map<std::size_t, std::vector<std::size_t>> members_by_label(const Labels& labels) {
    std::map<std::size_t, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out[labels[i]].push_back(i);
    }
    return out;
}

inline std::uint64_t pair_key(std::size_t a, std::size_t b) {
    if (a > b) {
        std::swap(a, b);
    }
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

/// Index drawn with probability proportional to `weights`.
inline std::size_t weighted_pick(Rng& rng, const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) {
        total += w;
    }
    double target = uniform01(rng) * total;
    std::size_t last = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        if (weights[k] <= 0.0) {
            continue;
        }
        last = k;
        target -= weights[k];
        if (target < 0.0) {
            return k;
        }
    }
    return last;
}

}  // namespace detail

/// Goodman-Kruskal gamma over every (within-pair, between-pair) comparison.
template <class Dist>
double exact_gk(const Dist& dist, const Labels& labels) {
    const std::size_t s = labels.size();
    if (static_cast<std::size_t>(dist.size()) != s) {
        throw DataError("exact_gk: distance and label sizes differ");
    }
    std::vector<double> within;
    std::vector<double> between;
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = i + 1; j < s; ++j) {
            const double d = dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            (labels[i] == labels[j] ? within : between).push_back(d);
        }
    }
    if (within.empty() || between.empty()) {
        throw DataError("exact_gk needs at least one within-cluster and one between-cluster pair");
    }
    const auto [c, d] = detail::concordance(within, std::move(between));
    if (c + d == 0.0) {
        throw NumericError("exact_gk undefined: every comparison is tied");
    }
    return (c - d) / (c + d);
}

inline double exact_gk(const Eigen::MatrixXd& coords, const Labels& labels) {
    return exact_gk(clustering::ColumnEuclidean{&coords}, labels);
}

/// Unique point pairs sampled for one FGK repetition.
struct FgkSample {
    std::vector<std::pair<std::size_t, std::size_t>> within;
    std::vector<std::pair<std::size_t, std::size_t>> between;
};

/// Within pairs: cluster from those with >= 2 members, weight proportional
/// to size, then two distinct members. Between pairs: two distinct labels
/// drawn without replacement with size weights, one member from each.
/// Sampling continues until `pairs` unique pairs of each kind exist.
inline FgkSample fgk_sample(const Labels& labels, std::size_t pairs, Rng& rng) {
    const auto groups = detail::members_by_label(labels);
    std::vector<const std::vector<std::size_t>*> theta;
    std::vector<double> theta_w;
    std::vector<const std::vector<std::size_t>*> xi;
    std::vector<double> xi_w;
    double within_available = 0.0;
    double between_available = 0.0;
    double seen = 0.0;
    for (const auto& [label, members] : groups) {
        const double n = static_cast<double>(members.size());
        theta.push_back(&members);
        theta_w.push_back(n);
        if (members.size() >= 2) {
            xi.push_back(&members);
            xi_w.push_back(n);
            within_available += n * (n - 1.0) / 2.0;
        }
        between_available += seen * n;
        seen += n;
    }
    FgkSample out;
    if (xi.empty()) {
        throw DataError("fgk: no cluster has two or more members");
    }
    if (theta.size() < 2) {
        throw DataError("fgk needs at least two clusters");
    }
    std::unordered_set<std::uint64_t> used;
    auto want_within = static_cast<std::size_t>(std::min<double>(static_cast<double>(pairs), within_available));
    while (out.within.size() < want_within) {
        const auto& m = *xi[detail::weighted_pick(rng, xi_w)];
        const std::size_t a = uniform_index(rng, m.size());
        std::size_t b = uniform_index(rng, m.size() - 1);
        b += b >= a ? 1 : 0;
        if (used.insert(detail::pair_key(m[a], m[b])).second) {
            out.within.emplace_back(m[a], m[b]);
        }
    }
    used.clear();
    auto want_between = static_cast<std::size_t>(std::min<double>(static_cast<double>(pairs), between_available));
    while (out.between.size() < want_between) {
        auto w = theta_w;
        const std::size_t first = detail::weighted_pick(rng, w);
        w[first] = 0.0;
        const std::size_t second = detail::weighted_pick(rng, w);
        const auto& ma = *theta[first];
        const auto& mb = *theta[second];
        const std::size_t a = ma[uniform_index(rng, ma.size())];
        const std::size_t b = mb[uniform_index(rng, mb.size())];
        if (used.insert(detail::pair_key(a, b)).second) {
            out.between.emplace_back(a, b);
        }
    }
    return out;
}

struct FgkResult {
    double value = 0.0;
    std::vector<double> repetitions;  ///< per-repetition GK samples
    std::size_t pairs_used = 0;       ///< C after clamping
};

template <class Dist>
FgkResult fgk_detailed(const Dist& dist, const Labels& labels, std::size_t pairs, std::size_t repetitions,
                       std::uint64_t seed) {
    if (static_cast<std::size_t>(dist.size()) != labels.size()) {
        throw DataError("fgk: distance and label sizes differ");
    }
    if (pairs == 0 || repetitions == 0) {
        throw ConfigError("fgk needs C >= 1 and E >= 1");
    }
    // Availability check and clamp warning happen once, up front.
    {
        const auto groups = detail::members_by_label(labels);
        double within = 0.0;
        double between = 0.0;
        double seen = 0.0;
        for (const auto& [label, members] : groups) {
            const double n = static_cast<double>(members.size());
            within += n * (n - 1.0) / 2.0;
            between += seen * n;
            seen += n;
        }
        if (within == 0.0) {
            throw DataError("fgk: no cluster has two or more members");
        }
        if (between == 0.0) {
            throw DataError("fgk needs at least two clusters");
        }
        const double limit = std::min(within, between);
        if (static_cast<double>(pairs) > limit) {
            warn("fgk: C = " + std::to_string(pairs) + " exceeds the available unique pairs, using " +
                 std::to_string(static_cast<std::size_t>(limit)));
            pairs = static_cast<std::size_t>(limit);
        }
    }
    FgkResult out;
    out.pairs_used = pairs;
    std::vector<double> values(repetitions, std::numeric_limits<double>::quiet_NaN());
    parallel_for(repetitions, [&](std::size_t rep) {
        Rng rng = make_stream(seed, "fgk", rep);
        const auto sample = fgk_sample(labels, pairs, rng);
        std::vector<double> within;
        std::vector<double> between;
        for (const auto& [a, b] : sample.within) {
            within.push_back(dist(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
        }
        for (const auto& [a, b] : sample.between) {
            between.push_back(dist(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
        }
        const auto [c, d] = detail::concordance(within, std::move(between));
        if (c + d > 0.0) {
            values[rep] = (c - d) / (c + d);
        }
    });
    double sum = 0.0;
    for (double v : values) {
        if (!std::isnan(v)) {
            out.repetitions.push_back(v);
            sum += v;
        }
    }
    if (out.repetitions.empty()) {
        throw NumericError("fgk undefined: every sampled comparison is tied");
    }
    if (out.repetitions.size() < repetitions) {
        warn("fgk: skipped " + std::to_string(repetitions - out.repetitions.size()) +
             " repetitions whose comparisons were all tied");
    }
    out.value = sum / static_cast<double>(out.repetitions.size());
    return out;
}

template <class Dist>
double fgk(const Dist& dist, const Labels& labels, std::size_t pairs = 100, std::size_t repetitions = 35,
           std::uint64_t seed = 0) {
    return fgk_detailed(dist, labels, pairs, repetitions, seed).value;
}

inline double fgk(const Eigen::MatrixXd& coords, const Labels& labels, std::size_t pairs = 100,
                  std::size_t repetitions = 35, std::uint64_t seed = 0) {
    return fgk(clustering::ColumnEuclidean{&coords}, labels, pairs, repetitions, seed);
}

namespace detail {

struct Contingency {
    std::vector<double> a;  ///< row sums
    std::vector<double> b;  ///< column sums
    std::vector<std::vector<double>> n;
    double total = 0.0;
};

inline Contingency contingency(const Labels& u, const Labels& v) {
    std::map<std::size_t, std::size_t> ru;
    std::map<std::size_t, std::size_t> rv;
    for (auto x : u) {
        ru.emplace(x, 0);
    }
    for (auto x : v) {
        rv.emplace(x, 0);
    }
    std::size_t k = 0;
    for (auto& [label, idx] : ru) {
        idx = k++;
    }
    k = 0;
    for (auto& [label, idx] : rv) {
        idx = k++;
    }
    Contingency c;
    c.a.assign(ru.size(), 0.0);
    c.b.assign(rv.size(), 0.0);
    c.n.assign(ru.size(), std::vector<double>(rv.size(), 0.0));
    for (std::size_t i = 0; i < u.size(); ++i) {
        const auto r = ru[u[i]];
        const auto q = rv[v[i]];
        c.n[r][q] += 1.0;
        c.a[r] += 1.0;
        c.b[q] += 1.0;
    }
    c.total = static_cast<double>(u.size());
    return c;
}

inline double entropy(const std::vector<double>& counts, double total) {
    double h = 0.0;
    for (double x : counts) {
        if (x > 0.0) {
            h -= x / total * std::log(x / total);
        }
    }
    return h;
}

inline double mutual_information(const Contingency& c) {
    double mi = 0.0;
    for (std::size_t i = 0; i < c.a.size(); ++i) {
        for (std::size_t j = 0; j < c.b.size(); ++j) {
            const double nij = c.n[i][j];
            if (nij > 0.0) {
                mi += nij / c.total * std::log(c.total * nij / (c.a[i] * c.b[j]));
            }
        }
    }
    return mi;
}

/// Expected mutual information under the hypergeometric permutation model.
inline double expected_mutual_information(const Contingency& c) {
    const double n = c.total;
    double emi = 0.0;
    for (double ai : c.a) {
        for (double bj : c.b) {
            const double lo = std::max(1.0, ai + bj - n);
            const double hi = std::min(ai, bj);
            for (double nij = lo; nij <= hi; nij += 1.0) {
                const double log_p = std::lgamma(ai + 1) + std::lgamma(bj + 1) + std::lgamma(n - ai + 1) +
                                     std::lgamma(n - bj + 1) - std::lgamma(n + 1) - std::lgamma(nij + 1) -
                                     std::lgamma(ai - nij + 1) - std::lgamma(bj - nij + 1) -
                                     std::lgamma(n - ai - bj + nij + 1);
                emi += nij / n * std::log(n * nij / (ai * bj)) * std::exp(log_p);
            }
        }
    }
    return emi;
}

}  // namespace detail

/// Adjusted mutual information with max(H_u, H_v) normalization.
inline double adjusted_mutual_information(const Labels& u, const Labels& v) {
    if (u.size() != v.size()) {
        throw DataError("partitions have different lengths");
    }
    if (u.empty()) {
        return 1.0;
    }
    const auto c = detail::contingency(u, v);
    if (c.a.size() == 1 && c.b.size() == 1) {
        return 1.0;
    }
    const double mi = detail::mutual_information(c);
    const double emi = detail::expected_mutual_information(c);
    const double normalizer = std::max(detail::entropy(c.a, c.total), detail::entropy(c.b, c.total));
    double denominator = normalizer - emi;
    const double eps = std::numeric_limits<double>::epsilon();
    denominator = denominator < 0.0 ? std::min(denominator, -eps) : std::max(denominator, eps);
    return (mi - emi) / denominator;
}

/// Mean pairwise AMI across partitions, clamped to [0, 1].
inline double consensus_index(const std::vector<Labels>& partitions) {
    if (partitions.size() < 2) {
        throw DataError("consensus index needs at least two partitions");
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < partitions.size(); ++i) {
        for (std::size_t j = i + 1; j < partitions.size(); ++j) {
            sum += adjusted_mutual_information(partitions[i], partitions[j]);
            ++count;
        }
    }
    return std::clamp(sum / static_cast<double>(count), 0.0, 1.0);
}

/// (1/S) sum over clusters of the largest class overlap.
inline double purity(const Labels& assignments, const Labels& truth) {
    if (assignments.size() != truth.size()) {
        throw DataError("purity: assignment and label lengths differ");
    }
    if (assignments.empty()) {
        throw DataError("purity needs at least one item");
    }
    std::map<std::size_t, std::map<std::size_t, std::size_t>> table;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        ++table[assignments[i]][truth[i]];
    }
    std::size_t hits = 0;
    for (const auto& [cluster, classes] : table) {
        std::size_t best = 0;
        for (const auto& [cls, n] : classes) {
            best = std::max(best, n);
        }
        hits += best;
    }
    return static_cast<double>(hits) / static_cast<double>(assignments.size());
}

/// Member minimizing the summed distance to the other members (lowest
/// index on ties).
template <class Dist>
std::size_t cluster_medoid(const Dist& dist, const std::vector<std::size_t>& members) {
    std::size_t best = members.front();
    double best_cost = std::numeric_limits<double>::infinity();
    for (auto m : members) {
        double cost = 0.0;
        for (auto o : members) {
            cost += dist(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(o));
        }
        if (cost < best_cost) {
            best_cost = cost;
            best = m;
        }
    }
    return best;
}

/// Davies-Bouldin with medoid-centred dispersion and medoid separation, both
/// under `dist`. A zero separation makes the index +inf (with a warning).
template <class Dist>
double davies_bouldin(const Dist& dist, const Labels& labels) {
    if (static_cast<std::size_t>(dist.size()) != labels.size()) {
        throw DataError("davies_bouldin: distance and label sizes differ");
    }
    const auto groups = detail::members_by_label(labels);
    if (groups.size() < 2) {
        throw DataError("davies_bouldin needs at least two clusters");
    }
    std::vector<std::size_t> medoids;
    std::vector<double> spread;
    for (const auto& [label, members] : groups) {
        const auto m = cluster_medoid(dist, members);
        double total = 0.0;
        for (auto o : members) {
            total += dist(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(m));
        }
        medoids.push_back(m);
        spread.push_back(total / static_cast<double>(members.size()));
    }
    double sum = 0.0;
    bool infinite = false;
    for (std::size_t i = 0; i < medoids.size(); ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < medoids.size(); ++j) {
            if (i == j) {
                continue;
            }
            const double sep = dist(static_cast<Eigen::Index>(medoids[i]), static_cast<Eigen::Index>(medoids[j]));
            if (sep == 0.0) {
                infinite = true;
                continue;
            }
            worst = std::max(worst, (spread[i] + spread[j]) / sep);
        }
        sum += worst;
    }
    if (infinite) {
        warn("davies_bouldin: two cluster medoids coincide under the separation measure");
        return std::numeric_limits<double>::infinity();
    }
    return sum / static_cast<double>(medoids.size());
}

/// (x - min) / (max - min) across compared methods. All-equal scores map to
/// 0; with a +inf present the finite scores map to 0 and +inf to 1.
inline std::map<std::string, double> normalize_db(const std::map<std::string, double>& scores) {
    std::map<std::string, double> out;
    if (scores.empty()) {
        return out;
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& [name, v] : scores) {
        if (std::isnan(v)) {
            throw DataError("normalize_db: score for " + name + " is NaN");
        }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (const auto& [name, v] : scores) {
        if (std::isinf(hi)) {
            out[name] = std::isinf(v) ? 1.0 : 0.0;
        } else {
            out[name] = hi > lo ? (v - lo) / (hi - lo) : 0.0;
        }
    }
    return out;
}

}  // namespace wkc::validity

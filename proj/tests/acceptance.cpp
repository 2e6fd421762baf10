// Acceptance checks. One line per criterion: PASS, FAIL or SKIP.

#include "oracles/dense_simplex.hpp"
#include "oracles/exhaustive_kmedoids.hpp"
#include "oracles/jacobi.hpp"
#include "test_support.hpp"

#include <wkc/cli.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    enum Status { pass, fail, skip } status = fail;
    std::string detail;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream out;
    out.precision(digits);
    out << v;
    return out.str();
}

Eigen::MatrixXd plain_costs(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd c(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            double s = 0.0;
            for (Eigen::Index k = 0; k < a.cols(); ++k) {
                s += (a(i, k) - b(j, k)) * (a(i, k) - b(j, k));
            }
            c(i, j) = s;
        }
    }
    return c;
}

Outcome ot_correctness() {
    const auto start = Clock::now();
    auto rng = wkc::make_stream(1, "acceptance-ot");
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const auto d = 1 + static_cast<Eigen::Index>(wkc::uniform_index(rng, 3));
        const auto n = 1 + static_cast<Eigen::Index>(wkc::uniform_index(rng, 12));
        const auto m = 1 + static_cast<Eigen::Index>(wkc::uniform_index(rng, 12));
        const auto a = testing_support::random_distribution(rng, n, d);
        const auto b = testing_support::random_distribution(rng, m, d, 1.5, 0.5);
        const double exact = wkc::ot::exact_wasserstein(a, b).distance;
        const double lp = std::sqrt(std::max(0.0, oracle::transport_lp(a.weights(), b.weights(),
                                                                       plain_costs(a.support(), b.support()))
                                                      .objective));
        worst = std::max(worst, std::abs(exact - lp) / std::max(lp, 1e-300));
    }
    double worst_1d = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const auto a = testing_support::random_distribution(rng, 1 + static_cast<Eigen::Index>(wkc::uniform_index(rng, 12)), 1);
        const auto b = testing_support::random_distribution(rng, 1 + static_cast<Eigen::Index>(wkc::uniform_index(rng, 12)), 1, 2.0, 0.3);
        const double exact = wkc::ot::exact_wasserstein(a, b).distance;
        worst_1d = std::max(worst_1d, std::abs(wkc::ot::wasserstein_1d(a, b) - exact) / std::max(exact, 1e-300));
    }
    const double elapsed = seconds_since(start);
    const bool ok = worst <= 1e-8 && worst_1d <= 1e-8 && elapsed < 30.0;
    return {ok ? Outcome::pass : Outcome::fail, "max rel err vs LP " + fmt(worst) + ", 1-D vs exact " + fmt(worst_1d) +
                                                    ", " + fmt(elapsed, 3) + " s"};
}

Outcome lot_fidelity() {
    auto rng = wkc::make_stream(2, "acceptance-lot");
    wkc::multiref::Dataset data;
    for (int i = 0; i < 100; ++i) {
        data.push_back(testing_support::mixture_bag(rng, i % 4, 30));
    }
    wkc::multiref::MultirefOptions options;
    options.references = 5;
    options.calibration_pairs = 1000;
    const auto r = wkc::multiref::approximate_distances(data, options, 2);
    // Held-out evaluation: every pair of non-reference items.
    std::vector<wkc::multiref::SampledPair> pairs =
        wkc::multiref::sample_exact_pairs(data, r.references, 1'000'000, 3);
    const double single = wkc::multiref::mean_relative_error(r.single, pairs);
    const double fused = wkc::multiref::mean_relative_error(r.fused, pairs);
    const bool ok = single < 0.05 && fused <= single;
    return {ok ? Outcome::pass : Outcome::fail, "single-reference mean error " + fmt(100 * single) + "%, fused (R = 5, beta = " +
                                                    fmt(r.beta) + ") " + fmt(100 * fused) + "% over " +
                                                    std::to_string(pairs.size()) + " pairs"};
}

Outcome shift_invariance() {
    auto rng = wkc::make_stream(3, "acceptance-shift");
    int mismatched = 0;
    double worst_offset = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto s = 4 + static_cast<Eigen::Index>(wkc::uniform_index(rng, 9));
        const std::size_t t = 2 + wkc::uniform_index(rng, 2);
        const auto k = testing_support::random_symmetric(rng, s);
        const auto base = oracle::kernel_optimum(k, t, 1e-12);
        for (double phi : {1e-3, 1.0}) {
            const Eigen::MatrixXd shifted = k + phi * Eigen::MatrixXd::Identity(s, s);
            const auto moved = oracle::kernel_optimum(shifted, t, 1e-12);
            mismatched += moved.assignments != base.assignments;
            const double expected = 2.0 * phi * static_cast<double>(s - static_cast<Eigen::Index>(t));
            worst_offset = std::max(worst_offset, std::abs(moved.objective - base.objective - expected));
        }
    }
    const bool ok = mismatched == 0 && worst_offset <= 1e-12;
    return {ok ? Outcome::pass : Outcome::fail, std::to_string(mismatched) + " of 400 optimal-assignment sets changed, max offset error " +
                                                    fmt(worst_offset)};
}

Outcome kernel_pca() {
    auto rng = wkc::make_stream(4, "acceptance-kpca");
    double worst_gram = 0.0;
    double worst_nystrom = 0.0;
    int increases = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = 10 + static_cast<Eigen::Index>(wkc::uniform_index(rng, 91));
        auto sub = wkc::make_stream(4, "acceptance-kpca-kernel", static_cast<std::uint64_t>(trial));
        wkc::KernelMatrix k;
        k.values = testing_support::random_pd_kernel(sub, s, 3, 0.2 + wkc::uniform01(rng));
        const auto centered = wkc::kernels::center_kernel(k);
        const auto eig = oracle::jacobi_eigen(centered.values);
        const auto r = 1 + static_cast<Eigen::Index>(wkc::uniform_index(rng, 8));
        const auto selection = wkc::kpca::Selection::top_k(static_cast<std::size_t>(r));
        const auto map = wkc::kpca::exact_feature_map(centered, selection);
        const auto used = map.components();
        Eigen::MatrixXd reduced = Eigen::MatrixXd::Zero(s, s);
        for (Eigen::Index u = 0; u < used; ++u) {
            reduced += eig.values[u] * eig.vectors.col(u) * eig.vectors.col(u).transpose();
        }
        const Eigen::MatrixXd gram = map.coords.transpose() * map.coords;
        worst_gram = std::max(worst_gram, (gram - reduced).norm());

        std::vector<std::size_t> all(static_cast<std::size_t>(s));
        std::iota(all.begin(), all.end(), std::size_t{0});
        wkc::ScopedWarningCapture quiet;
        const auto nys = wkc::kpca::nystrom_feature_map(wkc::kpca::kernel_columns(centered, all), all, selection);
        worst_nystrom = std::max(worst_nystrom, (nys.coords.transpose() * nys.coords - gram).norm());

        if (trial < 10) {
            auto order = wkc::kpca::nystrom_sample(static_cast<std::size_t>(s), static_cast<std::size_t>(s),
                                                   static_cast<std::uint64_t>(trial));
            auto perm = wkc::make_stream(4, "acceptance-kpca-perm", static_cast<std::uint64_t>(trial));
            for (std::size_t i = order.size(); i-- > 1;) {
                std::swap(order[i], order[wkc::uniform_index(perm, i + 1)]);
            }
            double previous = std::numeric_limits<double>::infinity();
            for (std::size_t m = 2; m <= order.size(); m += std::max<std::size_t>(1, order.size() / 10)) {
                std::vector<std::size_t> sample(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
                std::sort(sample.begin(), sample.end());
                const double e = wkc::kpca::nystrom_reconstruction_error(
                    centered, wkc::kpca::nystrom_factors(wkc::kpca::kernel_columns(centered, sample), sample));
                increases += e > previous * (1.0 + 1e-9) + 1e-12;
                previous = e;
            }
        }
    }
    const bool ok = worst_gram < 1e-6 && worst_nystrom < 1e-6 && increases == 0;
    return {ok ? Outcome::pass : Outcome::fail, "Gram reproduction " + fmt(worst_gram) + ", Nystrom M = S vs exact " +
                                                    fmt(worst_nystrom) + ", " + std::to_string(increases) +
                                                    " error increases on nested samples"};
}

Outcome fgk_equivalence() {
    auto rng = wkc::make_stream(5, "acceptance-fgk");
    double worst = 0.0;
    bool deterministic = true;
    bool budget = true;
    for (int trial = 0; trial < 30; ++trial) {
        const auto s = 12 + static_cast<Eigen::Index>(wkc::uniform_index(rng, 19));
        const std::size_t t = 2 + wkc::uniform_index(rng, 2);
        Eigen::MatrixXd x(2, s);
        wkc::validity::Labels labels(static_cast<std::size_t>(s));
        for (Eigen::Index i = 0; i < s; ++i) {
            const auto c = static_cast<std::size_t>(i) % t;
            labels[static_cast<std::size_t>(i)] = c;
            x(0, i) = 1.5 * static_cast<double>(c) + wkc::standard_normal(rng);
            x(1, i) = wkc::standard_normal(rng);
        }
        std::vector<std::size_t> sizes(t, 0);
        for (auto l : labels) {
            ++sizes[l];
        }
        double within = 0.0;
        for (auto n : sizes) {
            within += static_cast<double>(n * (n - 1) / 2);
        }
        const double total_pairs = static_cast<double>(s * (s - 1) / 2);
        const double comparisons = within * (total_pairs - within);
        const auto pairs = static_cast<std::size_t>(within);
        const auto reps = static_cast<std::size_t>(std::ceil(comparisons / (within * within))) + 35;
        const wkc::clustering::ColumnEuclidean dist{&x};
        const auto seed = static_cast<std::uint64_t>(100 + trial);
        wkc::ScopedWarningCapture quiet;
        const auto a = wkc::validity::fgk_detailed(dist, labels, pairs, reps, seed);
        const auto b = wkc::validity::fgk_detailed(dist, labels, pairs, reps, seed);
        deterministic = deterministic && a.value == b.value;
        budget = budget && static_cast<double>(reps) * static_cast<double>(a.pairs_used * a.pairs_used) >= comparisons;
        worst = std::max(worst, std::abs(a.value - wkc::validity::exact_gk(x, labels)));
    }
    const bool ok = worst <= 0.05 && deterministic && budget;
    return {ok ? Outcome::pass : Outcome::fail, "max |FGK - GK| " + fmt(worst) + (deterministic ? ", deterministic" : ", NOT deterministic") +
                                                    (budget ? "" : ", sampling budget below total comparisons")};
}

Outcome kmedoids_optimality() {
    auto rng = wkc::make_stream(6, "acceptance-pam");
    int optimal = 0;
    std::string gaps;
    for (int trial = 0; trial < 100; ++trial) {
        const auto s = 5 + static_cast<Eigen::Index>(wkc::uniform_index(rng, 8));
        const std::size_t t = 1 + wkc::uniform_index(rng, 3);
        Eigen::MatrixXd x(s, 2);
        for (Eigen::Index i = 0; i < s; ++i) {
            x(i, 0) = wkc::standard_normal(rng);
            x(i, 1) = wkc::standard_normal(rng);
        }
        Eigen::MatrixXd d(s, s);
        for (Eigen::Index i = 0; i < s; ++i) {
            for (Eigen::Index j = 0; j < s; ++j) {
                d(i, j) = (x.row(i) - x.row(j)).norm();
            }
        }
        const auto r = wkc::clustering::kmedoids(wkc::DistanceMatrix(d), t, static_cast<std::uint64_t>(trial));
        const auto best = oracle::exhaustive_kmedoids(d, t);
        if (r.objective <= best.objective + 1e-9) {
            ++optimal;
        } else {
            gaps += " trial " + std::to_string(trial) + " gap " + fmt(r.objective - best.objective) + ";";
        }
    }
    return {optimal >= 95 ? Outcome::pass : Outcome::fail,
            std::to_string(optimal) + "/100 instances optimal" + (gaps.empty() ? "" : " (local optima:" + gaps + ")")};
}

Outcome tuning_sanity() {
    auto rng = wkc::make_stream(7, "acceptance-tuning");
    Eigen::MatrixXd x(60, 2);
    for (Eigen::Index i = 0; i < 60; ++i) {
        x(i, 0) = (i < 30 ? 0.0 : 4.0) + 0.5 * wkc::standard_normal(rng);
        x(i, 1) = 0.5 * wkc::standard_normal(rng);
    }
    Eigen::MatrixXd dm(60, 60);
    for (Eigen::Index i = 0; i < 60; ++i) {
        for (Eigen::Index j = 0; j < 60; ++j) {
            dm(i, j) = (x.row(i) - x.row(j)).norm();
        }
    }
    const wkc::DistanceMatrix d(dm);
    wkc::tuning::ClusteringObjectiveOptions options;
    options.clusters = 2;
    const auto objective = wkc::tuning::clustering_objective(
        [&](const std::vector<double>& g) {
            return wkc::kernels::shift_kernel(wkc::kernels::exponential_kernel(d, g[0]));
        },
        options, 7);
    const auto trace = wkc::tuning::tune(objective, wkc::tuning::make_bounds({wkc::kernels::gamma_max_search(d)}), {}, 7);
    const auto running = trace.running_maximum();
    const bool monotone = std::is_sorted(running.begin(), running.end());
    const double best = trace.incumbent().objective;
    const bool ok = best >= 0.9 && monotone && trace.evaluations.size() == 40;
    return {ok ? Outcome::pass : Outcome::fail, "tuned objective " + fmt(best) + " after " +
                                                    std::to_string(trace.evaluations.size()) + " evaluations, running maximum " +
                                                    (monotone ? "non-decreasing" : "DECREASES")};
}

/// Mean purity of the tuned clustering over five seeded 70% subsets.
double ucr_purity(const fs::path& train, const fs::path& test, const std::string& recipe, std::size_t clusters,
                  std::size_t budget, const fs::path& scratch) {
    const auto combined = scratch / (recipe + ".tsv");
    {
        std::ofstream out(combined);
        out << std::ifstream(train).rdbuf();
        out << std::ifstream(test).rdbuf();
    }
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto dir = scratch / (recipe + "-" + std::to_string(seed));
        fs::create_directories(dir);
        const auto config = wkc::cli::parse_config(
            nlohmann::json{{"seed", seed},
                           {"output_dir", dir.string()},
                           {"dataset",
                            {{"format", "ucr_tsv"}, {"path", combined.string()}, {"subset_fraction", 0.7}, {"drop_incomplete", true}}},
                           {"timeseries", {{"samples_per_unit", 24.0}}},
                           {"kernel", {{"recipe", recipe}}},
                           {"clustering", {{"clusters", clusters}, {"method", "alternate"}, {"restarts", 3}}},
                           {"tuning", {{"n_random", budget}, {"n_bayes", budget}, {"cluster_count_penalty", clusters == 2}}}});
        wkc::cli::RunDir run(dir);
        wkc::cli::cmd_tune(config, run);
        wkc::cli::cmd_validate(config, run);
        total += wkc::cli::read_json_file(run.file("validity.json")).at("purity").get<double>();
    }
    return total / 5.0;
}

Outcome external_reproduction() {
    const char* root = std::getenv("WKC_UCR_DIR");
    if (!root) {
        return {Outcome::skip, "set WKC_UCR_DIR to the UCR archive root to run the Italy/Melbourne reproduction"};
    }
    const fs::path base(root);
    const auto italy = base / "ItalyPowerDemand";
    const auto melbourne = base / "MelbournePedestrian";
    for (const auto& p : {italy / "ItalyPowerDemand_TRAIN.tsv", melbourne / "MelbournePedestrian_TRAIN.tsv"}) {
        if (!fs::exists(p)) {
            return {Outcome::skip, p.string() + " not found"};
        }
    }
    const auto scratch = fs::temp_directory_path() / "wkc-acceptance-ucr";
    fs::remove_all(scratch);
    fs::create_directories(scratch);
    wkc::ScopedWarningCapture quiet;
    const double p_italy = ucr_purity(italy / "ItalyPowerDemand_TRAIN.tsv", italy / "ItalyPowerDemand_TEST.tsv", "italy", 2,
                                      20, scratch);
    const double p_melbourne = ucr_purity(melbourne / "MelbournePedestrian_TRAIN.tsv",
                                          melbourne / "MelbournePedestrian_TEST.tsv", "melbourne", 10, 50, scratch);
    fs::remove_all(scratch);
    const bool ok = p_italy >= 0.72 && p_melbourne >= 0.60;
    return {ok ? Outcome::pass : Outcome::fail, "Italy mean purity " + fmt(p_italy) + " (need 0.72), Melbourne " +
                                                    fmt(p_melbourne) + " (need 0.60)"};
}

Outcome performance() {
    const auto scratch = fs::temp_directory_path() / "wkc-acceptance-perf";
    fs::remove_all(scratch);
    fs::create_directories(scratch / "run");
    {
        auto rng = wkc::make_stream(9, "acceptance-perf");
        std::ofstream out(scratch / "bags.csv");
        out.precision(17);
        out << "item_id,weight,x1,x2\n";
        for (int i = 0; i < 1000; ++i) {
            const auto d = testing_support::mixture_bag(rng, i % 4, 30);
            for (Eigen::Index r = 0; r < d.size(); ++r) {
                out << i << ',' << d.weights()[r] << ',' << d.support()(r, 0) << ',' << d.support()(r, 1) << '\n';
            }
        }
    }
    const auto config = wkc::cli::parse_config(nlohmann::json{{"seed", 9},
                                                              {"output_dir", (scratch / "run").string()},
                                                              {"dataset", {{"path", (scratch / "bags.csv").string()}}},
                                                              {"clustering", {{"clusters", 4}}}});
    wkc::cli::RunDir run(config.output_dir);
    wkc::ScopedWarningCapture quiet;
    const auto start = Clock::now();
    wkc::cli::cmd_distances(config, run);
    const double t_distances = seconds_since(start);
    wkc::cli::cmd_tune(config, run);
    wkc::cli::cmd_report(run);
    const double t_pipeline = seconds_since(start);
    fs::remove_all(scratch);

    // 3,633 feature maps in 20 dimensions, ten planted groups.
    auto rng = wkc::make_stream(10, "acceptance-perf-features");
    wkc::kpca::FeatureMap features;
    features.coords.resize(20, 3633);
    for (Eigen::Index j = 0; j < 3633; ++j) {
        for (Eigen::Index u = 0; u < 20; ++u) {
            features.coords(u, j) = (u == j % 10 ? 3.0 : 0.0) + wkc::standard_normal(rng);
        }
    }
    wkc::tuning::ClusteringObjectiveOptions options;
    options.clusters = 10;
    options.kmedoids.method = wkc::clustering::Method::alternate;
    const auto iteration = Clock::now();
    const auto restarts = wkc::tuning::cluster_restarts(features, options, 10);
    const auto best = wkc::clustering::best_result(restarts);
    wkc::tuning::score_restarts(features, restarts, best, options, 10);
    const double t_iteration = seconds_since(iteration);

    const bool ok = t_pipeline < 600.0 && t_iteration < 10.0;
    return {ok ? Outcome::pass : Outcome::fail,
            "1,000-item pipeline " + fmt(t_pipeline, 4) + " s (distances " + fmt(t_distances, 4) +
                " s), S = 3,633 cluster+validate " + fmt(t_iteration, 3) + " s, on " +
                std::to_string(wkc::thread_count()) + " thread(s)"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, ot_correctness},   {2, lot_fidelity},     {3, shift_invariance},
        {4, kernel_pca},       {5, fgk_equivalence},  {6, kmedoids_optimality},
        {7, tuning_sanity},    {8, external_reproduction}, {9, performance}};
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        only.insert(std::atoi(argv[i]));
    }
    int failures = 0;
    for (const auto& [number, check] : criteria) {
        if (!only.empty() && !only.count(number)) {
            continue;
        }
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {Outcome::fail, std::string("threw: ") + e.what()};
        }
        const char* label = o.status == Outcome::pass ? "PASS" : o.status == Outcome::skip ? "SKIP" : "FAIL";
        failures += o.status == Outcome::fail;
        std::cout << "criterion " << number << ": " << label << " - " << o.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}

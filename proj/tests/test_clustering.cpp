#include "oracles/exhaustive_kmedoids.hpp"
#include "test_support.hpp"

#include <wkc/clustering.hpp>

#include <gtest/gtest.h>

using wkc::clustering::ClusteringResult;
using wkc::clustering::KMedoidsOptions;
using wkc::clustering::Method;

namespace {

Eigen::MatrixXd random_points(wkc::Rng& rng, Eigen::Index dims, Eigen::Index n) {
    Eigen::MatrixXd x(dims, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index d = 0; d < dims; ++d) {
            x(d, j) = wkc::standard_normal(rng);
        }
    }
    return x;
}

KMedoidsOptions with(Method m) {
    KMedoidsOptions o;
    o.method = m;
    return o;
}

}  // namespace

TEST(KMedoids, EveryItemItsOwnMedoidWhenTEqualsS) {
    wkc::Rng rng(1);
    const auto x = random_points(rng, 2, 7);
    for (auto m : {Method::pam, Method::alternate}) {
        const auto r = wkc::clustering::kmedoids_features(x, 7, 3, with(m));
        EXPECT_EQ(r.objective, 0.0);
        EXPECT_EQ(r.medoids.size(), 7u);
        EXPECT_TRUE(wkc::clustering::is_consistent(r));
    }
}

TEST(KMedoids, SeparatedPairs) {
    Eigen::MatrixXd x(2, 4);
    x << 0.0, 0.1, 10.0, 10.1,
         0.0, 0.0, 10.0, 10.0;
    for (auto m : {Method::pam, Method::alternate}) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto r = wkc::clustering::kmedoids_features(x, 2, seed, with(m));
            EXPECT_EQ(r.assignments[0], r.assignments[1]);
            EXPECT_EQ(r.assignments[2], r.assignments[3]);
            EXPECT_NE(r.assignments[0], r.assignments[2]);
            EXPECT_NEAR(r.objective, 0.2, 1e-12);
        }
    }
}

TEST(KMedoids, RejectsInvalidClusterCount) {
    wkc::Rng rng(2);
    const auto x = random_points(rng, 2, 5);
    EXPECT_THROW(wkc::clustering::kmedoids_features(x, 6, 0), wkc::DataError);
    EXPECT_THROW(wkc::clustering::kmedoids_features(x, 0, 0), wkc::DataError);
}

TEST(KMedoids, PamMatchesExhaustiveSearchOnTwelvePoints) {
    wkc::Rng rng(2718);
    const auto x = random_points(rng, 2, 12);
    const Eigen::MatrixXd d = wkc::clustering::column_distances(x);
    const auto brute = oracle::exhaustive_kmedoids(d, 3);
    const auto r = wkc::clustering::kmedoids(wkc::DistanceMatrix(d), 3, 42);
    // Medoid sets may differ on ties (a two-member cluster), the optimum may not.
    EXPECT_NEAR(r.objective, brute.objective, 1e-12);
}

TEST(KMedoids, ObjectiveMatchesRecomputedCostAndHistoryIsMonotone) {
    wkc::Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = random_points(rng, 3, 40);
        const Eigen::MatrixXd d = wkc::clustering::column_distances(x);
        for (auto m : {Method::pam, Method::alternate}) {
            const auto r = wkc::clustering::kmedoids(wkc::DistanceMatrix(d), 4, static_cast<std::uint64_t>(trial), with(m));
            EXPECT_TRUE(wkc::clustering::is_consistent(r));
            double recomputed = 0.0;
            for (std::size_t i = 0; i < r.assignments.size(); ++i) {
                recomputed += d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r.medoids[r.assignments[i]]));
            }
            EXPECT_NEAR(r.objective, recomputed, 1e-9);
            for (std::size_t k = 1; k < r.objective_history.size(); ++k) {
                EXPECT_LE(r.objective_history[k], r.objective_history[k - 1] + 1e-12);
            }
        }
    }
}

TEST(KMedoids, DeterministicPerSeed) {
    wkc::Rng rng(4);
    const auto x = random_points(rng, 2, 60);
    for (auto m : {Method::pam, Method::alternate}) {
        const auto a = wkc::clustering::kmedoids_features(x, 5, 99, with(m));
        const auto b = wkc::clustering::kmedoids_features(x, 5, 99, with(m));
        EXPECT_EQ(a.assignments, b.assignments);
        EXPECT_EQ(a.medoids, b.medoids);
        EXPECT_EQ(a.objective, b.objective);
    }
}

TEST(KMedoids, RestartsAreIndependentOfThreadCount) {
    wkc::Rng rng(5);
    const auto x = random_points(rng, 2, 80);
    wkc::set_thread_count(1);
    const auto serial = wkc::clustering::kmedoids_features_restarts(x, 4, 6, 7);
    wkc::set_thread_count(4);
    const auto parallel = wkc::clustering::kmedoids_features_restarts(x, 4, 6, 7);
    wkc::set_thread_count(0);
    ASSERT_EQ(serial.size(), parallel.size());
    for (std::size_t r = 0; r < serial.size(); ++r) {
        EXPECT_EQ(serial[r].assignments, parallel[r].assignments);
        EXPECT_EQ(serial[r].objective, parallel[r].objective);
    }
    EXPECT_EQ(wkc::clustering::best_result(serial), wkc::clustering::best_result(parallel));
}

TEST(KMedoids, PamUsuallyBeatsAlternate) {
    wkc::Rng rng(6);
    int pam_wins = 0;
    const int suites = 50;
    for (int trial = 0; trial < suites; ++trial) {
        const auto x = random_points(rng, 2, 50);
        const auto seed = static_cast<std::uint64_t>(trial);
        const auto p = wkc::clustering::kmedoids_features(x, 5, seed, with(Method::pam));
        const auto a = wkc::clustering::kmedoids_features(x, 5, seed, with(Method::alternate));
        pam_wins += p.objective <= a.objective + 1e-12 ? 1 : 0;
    }
    EXPECT_GE(pam_wins, 45);
}

TEST(KMedoids, DuplicateItemsKeepMedoidsInOwnClusters) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 6);
    x(0, 4) = 1.0;
    x(0, 5) = 1.0;
    for (auto m : {Method::pam, Method::alternate}) {
        const auto r = wkc::clustering::kmedoids_features(x, 4, 1, with(m));
        EXPECT_TRUE(wkc::clustering::is_consistent(r));
        EXPECT_EQ(r.objective, 0.0);
    }
}

TEST(KernelObjective, ConstantKernelGivesZero) {
    const Eigen::MatrixXd k = Eigen::MatrixXd::Constant(5, 5, 0.7);
    ClusteringResult r{{0, 0, 1, 1, 1}, {0, 2}, 0.0, {}, 0};
    EXPECT_EQ(wkc::clustering::kernel_kmedoids_objective(k, r), 0.0);
}

TEST(KernelObjective, UnitDiagonalForm) {
    wkc::Rng rng(7);
    const auto k = testing_support::random_pd_kernel(rng, 8);
    ClusteringResult r{{0, 0, 0, 1, 1, 2, 2, 2}, {1, 4, 6}, 0.0, {}, 0};
    double expected = 0.0;
    for (Eigen::Index i = 0; i < 8; ++i) {
        expected += 2.0 * (1.0 - k(i, static_cast<Eigen::Index>(r.medoids[r.assignments[static_cast<std::size_t>(i)]])));
    }
    EXPECT_NEAR(wkc::clustering::kernel_kmedoids_objective(k, r), expected, 1e-14);
}

TEST(KernelObjective, DiagonalShiftAddsConstantOffset) {
    wkc::Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Index s = 4 + static_cast<Eigen::Index>(wkc::uniform_index(rng, 9));
        const auto k = testing_support::random_symmetric(rng, s);
        const auto x = random_points(rng, 2, s);
        const auto r = wkc::clustering::kmedoids_features(x, 3, static_cast<std::uint64_t>(trial));
        for (double phi : {1e-3, 1.0, 7.5}) {
            const Eigen::MatrixXd shifted = k + phi * Eigen::MatrixXd::Identity(s, s);
            const double offset = wkc::clustering::kernel_kmedoids_objective(shifted, r) -
                                  wkc::clustering::kernel_kmedoids_objective(k, r);
            EXPECT_NEAR(offset, 2.0 * phi * static_cast<double>(s - 3), 1e-12 * std::max(1.0, phi * s));
        }
    }
}

TEST(KernelObjective, OptimalAssignmentsInvariantUnderShift) {
    wkc::Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index s = 5 + static_cast<Eigen::Index>(wkc::uniform_index(rng, 4));
        const auto k = testing_support::random_symmetric(rng, s);
        for (std::size_t t : {2u, 3u}) {
            const auto base = oracle::kernel_optimum(k, t, 1e-12);
            for (double phi : {1e-3, 1.0}) {
                const Eigen::MatrixXd shifted = k + phi * Eigen::MatrixXd::Identity(s, s);
                const auto moved = oracle::kernel_optimum(shifted, t, 1e-12);
                EXPECT_EQ(base.assignments, moved.assignments);
                EXPECT_NEAR(moved.objective - base.objective, 2.0 * phi * static_cast<double>(s - static_cast<Eigen::Index>(t)),
                            1e-12);
            }
        }
    }
}

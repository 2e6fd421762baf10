#include "oracles/jacobi.hpp"
#include "test_support.hpp"

#include <wkc/log.hpp>
#include <wkc/multiref.hpp>
#include <wkc/ot/wasserstein.hpp>
#include <wkc/pipelines.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

namespace pl = wkc::pipelines;
using wkc::DistanceMatrix;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kPhi = 1e-3;

Eigen::VectorXd sinusoid(Eigen::Index l, double cycles, double amplitude = 1.0, double phase = 0.0) {
    Eigen::VectorXd x(l);
    for (Eigen::Index n = 0; n < l; ++n) {
        x[n] = 0.5 + amplitude * std::sin(2.0 * kPi * cycles * static_cast<double>(n) / static_cast<double>(l) + phase);
    }
    return x;
}

Eigen::VectorXd daily_shape() {
    Eigen::VectorXd x(24);
    for (int n = 0; n < 24; ++n) {
        x[n] = 0.5 + 0.3 * std::sin(2 * kPi * n / 24) + 0.1 * std::cos(4 * kPi * n / 24 + 0.3) + 0.05 * (n % 5);
    }
    return x;
}

pl::TimeSeriesDataset random_series(std::uint64_t seed, std::size_t count, Eigen::Index l) {
    auto rng = wkc::make_stream(seed, "series");
    pl::TimeSeriesDataset out(count);
    for (auto& item : out) {
        item.values.resize(l);
        const double f = 1.0 + static_cast<double>(wkc::uniform_index(rng, 4));
        for (Eigen::Index n = 0; n < l; ++n) {
            item.values[n] = std::sin(2 * kPi * f * static_cast<double>(n) / static_cast<double>(l)) +
                             0.3 * wkc::standard_normal(rng);
        }
    }
    return out;
}

std::vector<pl::GraphItem> random_graphs(std::uint64_t seed, std::size_t count) {
    auto rng = wkc::make_stream(seed, "graphs");
    std::vector<pl::GraphItem> out(count);
    for (auto& g : out) {
        const auto nodes = 3 + static_cast<Eigen::Index>(wkc::uniform_index(rng, 8));
        g.node_table.resize(nodes, 2);
        for (Eigen::Index r = 0; r < nodes; ++r) {
            g.node_table(r, 0) = 1.0 + 0.05 * wkc::standard_normal(rng);
            g.node_table(r, 1) = 10.0 * wkc::uniform01(rng);
        }
        g.total_demand = g.node_table.col(1).sum();
        g.node_count = static_cast<double>(nodes);
    }
    return out;
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues()[0];
}

}  // namespace

TEST(Npsd, PureSinusoidConcentratesAtItsFrequency) {
    const auto d = pl::npsd(sinusoid(96, 5.0), 1.0);
    Eigen::Index best = 0;
    d.weights().maxCoeff(&best);
    EXPECT_NEAR(d.support()(best, 0), 5.0 / 96.0, 1e-15);
    EXPECT_NEAR(d.weights()[best], 1.0, 1e-9);
}

TEST(Npsd, TwoEqualSinusoidsSplitTheMass) {
    Eigen::VectorXd x = sinusoid(128, 3.0) + sinusoid(128, 11.0, 1.0, 0.7);
    const auto d = pl::npsd(x);
    std::vector<double> big;
    for (Eigen::Index k = 0; k < d.size(); ++k) {
        if (d.weights()[k] > 0.1) {
            big.push_back(d.weights()[k]);
        }
    }
    ASSERT_EQ(big.size(), 2u);
    EXPECT_NEAR(big[0], 0.5, 1e-9);
    EXPECT_NEAR(big[1], 0.5, 1e-9);
}

TEST(Npsd, DailyShapeMatchesFrozenPeriodogram) {
    const std::vector<double> expected{
        0.8383983010883829,    0.07526621029002085,   0.001437567326981396,  0.004935477803880554,
        0.054174654814478675,  0.0012736716913240096, 0.0006373092959048933, 0.0011144627299084883,
        0.006841298666624687,  0.014101013431134646,  0.0011831970156968626, 0.0006368358456620055};
    const auto d = pl::npsd(daily_shape(), 24.0);
    ASSERT_EQ(d.size(), 12);
    for (Eigen::Index k = 0; k < 12; ++k) {
        EXPECT_NEAR(d.weights()[k], expected[static_cast<std::size_t>(k)], 1e-13);
        EXPECT_DOUBLE_EQ(d.support()(k, 0), static_cast<double>(k + 1));
    }
}

TEST(Npsd, MatchesDirectDftOracle) {
    auto rng = wkc::make_stream(3, "dft");
    for (Eigen::Index l : {7, 24, 31}) {
        Eigen::VectorXd x(l);
        for (Eigen::Index n = 0; n < l; ++n) {
            x[n] = wkc::uniform01(rng);
        }
        std::vector<double> power;
        for (Eigen::Index k = 1; k <= l / 2; ++k) {
            std::complex<double> acc = 0.0;
            for (Eigen::Index n = 0; n < l; ++n) {
                acc += x[n] * std::polar(1.0, -2.0 * kPi * static_cast<double>(k * n) / static_cast<double>(l));
            }
            power.push_back(std::norm(acc));
        }
        double total = 0.0;
        for (double p : power) {
            total += p;
        }
        const auto d = pl::npsd(x);
        ASSERT_EQ(static_cast<std::size_t>(d.size()), power.size());
        for (Eigen::Index k = 0; k < d.size(); ++k) {
            EXPECT_NEAR(d.weights()[k], power[static_cast<std::size_t>(k)] / total, 1e-12);
        }
    }
}

TEST(Npsd, WeightsSumToOneAndIgnoreAmplitude) {
    const auto series = random_series(11, 6, 40);
    for (std::size_t i = 0; i + 1 < series.size(); ++i) {
        const auto a = pl::npsd(series[i].values);
        EXPECT_NEAR(a.weights().sum(), 1.0, 1e-12);
        const auto b = pl::npsd(series[i + 1].values);
        const auto scaled = pl::npsd((3.7 * series[i].values.array() + 2.0).matrix());
        EXPECT_NEAR(wkc::ot::wasserstein_1d(a, b), wkc::ot::wasserstein_1d(scaled, b), 1e-10);
    }
}

TEST(Npsd, ConstantSeriesIsRejected) {
    EXPECT_THROW(pl::npsd(Eigen::VectorXd::Constant(24, 0.4)), wkc::DataError);
    EXPECT_THROW(pl::npsd(Eigen::VectorXd::Constant(1, 0.4)), wkc::DataError);
}

TEST(Npsd, HannWindowKeepsValidDistribution) {
    const auto d = pl::npsd(daily_shape(), 24.0, pl::Window::hann);
    EXPECT_NEAR(d.weights().sum(), 1.0, 1e-12);
    EXPECT_THROW(pl::parse_window("blackman"), wkc::ConfigError);
}

TEST(MinMax, MapsDatasetToUnitRange) {
    auto data = random_series(5, 4, 16);
    pl::minmax_normalize(data);
    double lo = 1.0;
    double hi = 0.0;
    for (const auto& s : data) {
        lo = std::min(lo, s.values.minCoeff());
        hi = std::max(hi, s.values.maxCoeff());
    }
    EXPECT_DOUBLE_EQ(lo, 0.0);
    EXPECT_DOUBLE_EQ(hi, 1.0);
}

TEST(PcaSmooth, FullFractionIsIdentity) {
    const auto data = random_series(8, 10, 12);
    const auto out = pl::pca_smooth(data, 1.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_LT((out.data[i].values - data[i].values).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(PcaSmooth, RankOneDatasetIsExact) {
    const Eigen::VectorXd shape = daily_shape();
    pl::TimeSeriesDataset data;
    for (double a : {0.2, -1.0, 0.7, 2.5}) {
        data.push_back({(0.3 + a * shape.array()).matrix(), std::nullopt});
    }
    const auto out = pl::pca_smooth(data, 0.85);
    EXPECT_EQ(out.components, 1u);
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_LT((out.data[i].values - data[i].values).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(PcaSmooth, ComponentCountMatchesEigenOracle) {
    const auto data = random_series(21, 50, 24);
    Eigen::MatrixXd x(50, 24);
    for (int i = 0; i < 50; ++i) {
        x.row(i) = data[static_cast<std::size_t>(i)].values.transpose();
    }
    const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
    const auto eig = oracle::jacobi_eigen(c.transpose() * c);
    const double total = eig.values.sum();
    std::size_t expected = 0;
    double acc = 0.0;
    while (acc / total < 0.85) {
        acc += eig.values[static_cast<Eigen::Index>(expected++)];
    }
    EXPECT_EQ(pl::pca_smooth(data, 0.85).components, expected);
}

TEST(PcaSmooth, Preconditions) {
    EXPECT_THROW(pl::pca_smooth(random_series(1, 1, 8)), wkc::DataError);
    EXPECT_THROW(pl::pca_smooth(random_series(1, 3, 8), 0.0), wkc::ConfigError);
}

TEST(ItalyKernel, TrivialEntries) {
    Eigen::MatrixXd d(3, 3);
    d << 0, 0, 0.4, 0, 0, 0.4, 0.4, 0.4, 0;
    const auto k = pl::italy_kernel(DistanceMatrix(d), 2.0);
    for (int i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(k.values(i, i), 1.0 + kPhi);
    }
    EXPECT_DOUBLE_EQ(k.values(0, 1), 1.0);
    EXPECT_NEAR(k.values(0, 2), std::exp(-2.0 * 0.16), 1e-15);
}

TEST(ItalyKernel, MatchesManualComposition) {
    const auto data = random_series(4, 6, 32);
    std::vector<wkc::ot::DiscreteDistribution> spectra;
    for (const auto& s : data) {
        spectra.push_back(pl::npsd(s.values));
    }
    const auto k = pl::italy_kernel(pl::pairwise_wasserstein_1d(pl::npsd_all(data)), 30.0);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
            const double w = wkc::ot::exact_wasserstein(spectra[i], spectra[j]).distance;
            const double expected = std::exp(-30.0 * w * w) + (i == j ? kPhi : 0.0);
            EXPECT_NEAR(k.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), expected, 1e-9);
        }
    }
}

TEST(MelbourneKernel, IdenticalSeriesPair) {
    pl::TimeSeriesDataset data{{daily_shape(), {}}, {daily_shape(), {}}};
    const auto in = pl::melbourne_inputs(data);
    const auto k = pl::melbourne_kernel(in.npsd, in.series, in.totals, 1.0, 1.0, 1.0);
    EXPECT_DOUBLE_EQ(k.values(0, 1), 2.0);
    EXPECT_DOUBLE_EQ(k.values(0, 0), (1.0 + kPhi) * (2.0 + 2.0 * kPhi));
}

TEST(MelbourneKernel, LargeTimeGammaLeavesSpectralTimesTotals) {
    const auto data = random_series(9, 5, 24);
    const auto in = pl::melbourne_inputs(data);
    const auto k = pl::melbourne_kernel(in.npsd, in.series, in.totals, 2.0, 1e6, 0.01);
    for (Eigen::Index i = 0; i < 5; ++i) {
        for (Eigen::Index j = 0; j < 5; ++j) {
            if (i != j) {
                const double kj = std::exp(-2.0 * std::pow(in.npsd(i, j), 2));
                const double ka = std::exp(-0.01 * std::pow(in.totals(i, j), 2));
                EXPECT_NEAR(k.values(i, j), kj * ka, 1e-12);
            }
        }
    }
}

TEST(MelbourneKernel, MatchesElementwiseOracle) {
    const auto data = random_series(17, 5, 24);
    const auto in = pl::melbourne_inputs(data);
    const double gj = 12.0;
    const double gt = 0.05;
    const double ga = 0.02;
    const auto k = pl::melbourne_kernel(in.npsd, in.series, in.totals, gj, gt, ga);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            const double w = wkc::ot::wasserstein_1d(pl::npsd(data[i].values), pl::npsd(data[j].values));
            const Eigen::VectorXd diff = data[i].values - data[j].values;
            const double delta = i == j ? kPhi : 0.0;
            const double expected = (std::exp(-gj * w * w) + delta) *
                                    ((std::exp(-gt * diff.squaredNorm()) + delta) +
                                     (std::exp(-ga * diff.sum() * diff.sum()) + delta));
            EXPECT_NEAR(k.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), expected, 1e-12);
        }
    }
}

TEST(MelbourneKernel, SymmetricAndPositiveSemidefinite) {
    auto data = random_series(30, 60, 24);
    pl::minmax_normalize(data);
    const auto in = pl::melbourne_inputs(data);
    const auto k = pl::melbourne_kernel(in.npsd, in.series, in.totals, 40.0, 0.3, 0.01);
    EXPECT_EQ(k.values, k.values.transpose());
    EXPECT_GE(min_eigenvalue(k.values), -1e-8);
}

TEST(GraphKernel, IdenticalGraphs) {
    auto graphs = random_graphs(1, 1);
    graphs.push_back(graphs.front());
    const auto k = pl::graph_kernel(graphs, DistanceMatrix(Eigen::MatrixXd::Zero(2, 2)), 1.0, 1.0, 1.0);
    EXPECT_DOUBLE_EQ(k.values(0, 1), 2.0);
    EXPECT_DOUBLE_EQ(k.values(1, 1), (1.0 + kPhi) * (2.0 + 2.0 * kPhi));
}

TEST(GraphKernel, RejectsZeroGamma) {
    const auto graphs = random_graphs(2, 3);
    const DistanceMatrix d(Eigen::MatrixXd::Zero(3, 3));
    EXPECT_THROW(pl::graph_kernel(graphs, d, 1.0, 0.0, 0.0), wkc::ConfigError);
    EXPECT_THROW(pl::graph_kernel(graphs, d, 1.0, 1.0, 0.0), wkc::ConfigError);
    EXPECT_THROW(pl::graph_kernel(graphs, DistanceMatrix(Eigen::MatrixXd::Zero(2, 2)), 1.0, 1.0, 1.0),
                 wkc::DataError);
}

TEST(GraphKernel, MatchesManualCompositionAndIsPsd) {
    auto graphs = random_graphs(10, 10);
    pl::normalize_node_tables(graphs);
    wkc::multiref::MultirefOptions opts;
    opts.references = 3;
    opts.calibration_pairs = 45;
    const auto fused = wkc::multiref::approximate_distances(pl::nodal_distributions(graphs), opts, 10).fused;
    const double gw = 3.0;
    const double gp = 0.002;
    const double gv = 0.05;
    const auto k = pl::graph_kernel(graphs, fused, gw, gp, gv);
    for (std::size_t i = 0; i < 10; ++i) {
        for (std::size_t j = 0; j < 10; ++j) {
            const auto a = static_cast<Eigen::Index>(i);
            const auto b = static_cast<Eigen::Index>(j);
            const double delta = i == j ? kPhi : 0.0;
            const double dp = graphs[i].total_demand - graphs[j].total_demand;
            const double dv = graphs[i].node_count - graphs[j].node_count;
            const double expected = (std::exp(-gw * fused(a, b) * fused(a, b)) + delta) *
                                    ((std::exp(-gp * dp * dp) + delta) + (std::exp(-gv * dv * dv) + delta));
            EXPECT_NEAR(k.values(a, b), expected, 1e-12);
        }
    }
    EXPECT_GE(min_eigenvalue(k.values), -1e-8);
}

TEST(NodeTables, PerFeatureMinMax) {
    std::vector<pl::GraphItem> graphs(2);
    graphs[0].node_table.resize(2, 2);
    graphs[0].node_table << 1.0, 5.0, 1.0, 7.0;
    graphs[1].node_table.resize(1, 2);
    graphs[1].node_table << 1.0, 9.0;
    pl::normalize_node_tables(graphs);
    EXPECT_DOUBLE_EQ(graphs[0].node_table(1, 1), 0.5);
    EXPECT_DOUBLE_EQ(graphs[1].node_table(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(graphs[0].node_table(0, 0), 0.0);
}

TEST(ApproximationError, ExactMatrixGivesZero) {
    Eigen::MatrixXd d(3, 3);
    d << 0, 1, 2, 1, 0, 3, 2, 3, 0;
    const auto e = pl::approximation_error(DistanceMatrix(d), {{0, 1, 1.0}, {0, 2, 2.0}, {1, 2, 3.0}});
    EXPECT_EQ(e.mean, 0.0);
    EXPECT_EQ(e.p90, 0.0);
}

TEST(ApproximationError, SinglePair) {
    Eigen::MatrixXd d(2, 2);
    d << 0, 1.1, 1.1, 0;
    const auto e = pl::approximation_error(DistanceMatrix(d), {{0, 1, 1.0}});
    EXPECT_NEAR(e.mean, 0.1, 1e-15);
    ASSERT_EQ(e.errors.size(), 1u);
}

TEST(ApproximationError, ZeroExactPairsAreExcluded) {
    Eigen::MatrixXd d(3, 3);
    d << 0, 0.5, 2, 0.5, 0, 3, 2, 3, 0;
    wkc::ScopedWarningCapture capture;
    const auto e = pl::approximation_error(DistanceMatrix(d), {{0, 1, 0.0}, {0, 2, 1.0}});
    EXPECT_EQ(e.errors.size(), 1u);
    EXPECT_DOUBLE_EQ(e.mean, 1.0);
    EXPECT_EQ(capture.messages().size(), 1u);
}

TEST(ApproximationError, SyntheticSuiteMatchesRecomputation) {
    auto rng = wkc::make_stream(40, "suite");
    wkc::multiref::Dataset data;
    for (int i = 0; i < 24; ++i) {
        data.push_back(testing_support::mixture_bag(rng, i % 3, 15));
    }
    wkc::multiref::MultirefOptions opts;
    opts.references = 3;
    opts.calibration_pairs = 60;
    const auto r = wkc::multiref::approximate_distances(data, opts, 40);
    ASSERT_TRUE(r.calibration.has_value());
    const auto e = pl::approximation_error(r.fused, r.calibration->pairs);
    double sum = 0.0;
    for (const auto& p : r.calibration->pairs) {
        const double exact = wkc::ot::exact_wasserstein(data[p.i], data[p.j]).distance;
        EXPECT_NEAR(exact, p.exact, 1e-12);
        sum += std::abs(r.fused(static_cast<Eigen::Index>(p.i), static_cast<Eigen::Index>(p.j)) - exact) / exact;
    }
    EXPECT_NEAR(e.mean, sum / static_cast<double>(r.calibration->pairs.size()), 1e-12);
}

TEST(Percentile, LinearInterpolation) {
    EXPECT_DOUBLE_EQ(pl::percentile({4.0, 1.0, 3.0, 2.0}, 50.0), 2.5);
    EXPECT_DOUBLE_EQ(pl::percentile({0.0, 10.0}, 70.0), 7.0);
    EXPECT_DOUBLE_EQ(pl::percentile({5.0}, 90.0), 5.0);
}

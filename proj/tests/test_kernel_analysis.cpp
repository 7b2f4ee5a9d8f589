#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "rffnet/kernel_analysis.hpp"
#include "support.hpp"

using namespace rffnet;
using rffnet::testing::random_matrix;

namespace {

std::vector<PointPair> gaussian_pairs(std::size_t count, std::size_t dim, double sd, Rng& rng) {
    std::vector<PointPair> pairs(count);
    for (auto& [u, v] : pairs) {
        u.resize(dim);
        v.resize(dim);
        for (double& a : u) a = rng.normal(0.0, sd);
        for (double& b : v) b = rng.normal(0.0, sd);
    }
    return pairs;
}

// Least-squares slope of log(err) on log(D).
double loglog_slope(const std::vector<double>& ds, const std::vector<double>& errs) {
    const std::size_t n = ds.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += std::log(ds[i]);
        my += std::log(errs[i]);
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (std::log(ds[i]) - mx) * (std::log(errs[i]) - my);
        sxx += (std::log(ds[i]) - mx) * (std::log(ds[i]) - mx);
    }
    return sxy / sxx;
}

}  // namespace

TEST(EmpiricalKernel, IdenticalRowsGiveOne) {
    Rng rng(1);
    const RffLayer layer = init_layer(3, 16, 1.0, rng);
    DenseMatrix x(2, 3, 0.7);
    const KernelMatrix k = empirical_kernel(rff_features(layer.omega, x));
    EXPECT_NEAR(k.values(0, 1), 1.0, 1e-12);
}

TEST(EmpiricalKernel, MatchesDoubleLoopAndInvariants) {
    Rng rng(2);
    const RffLayer layer = init_layer(5, 32, 1.0, rng);
    const DenseMatrix s = rff_features(layer.omega, random_matrix(4, 5, rng));
    const KernelMatrix k = empirical_kernel(s, 3);
    EXPECT_EQ(k.layer_index, 3u);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < s.cols(); ++c) dot += s(i, c) * s(j, c);
            EXPECT_NEAR(k.values(i, j), dot, 1e-12);
        }
        EXPECT_NEAR(k.values(i, i), 1.0, 1e-12);
    }
    EXPECT_TRUE(check_kernel(k.values).ok());
}

TEST(EmpiricalKernel, InvariantsOnRandomFeatureMaps) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto d = 1 + rng.uniform_index(8);
        const RffLayer layer = init_layer(d, 1 + rng.uniform_index(64), rng.uniform(0.1, 3.0), rng);
        const KernelMatrix k = empirical_kernel(rff_features(layer.omega, random_matrix(30, d, rng, 3.0)));
        const KernelCheck c = check_kernel(k.values);
        EXPECT_TRUE(c.symmetric());
        EXPECT_TRUE(c.psd()) << c.min_eigenvalue;
        EXPECT_TRUE(c.unit_diagonal()) << c.max_diagonal_error;
    }
}

TEST(EmpiricalKernel, EmptyInputRejected) {
    EXPECT_THROW(empirical_kernel(DenseMatrix(0, 4)), DataError);
}

TEST(SpectralSampling, RbfVarianceMatchesBandwidth) {
    Rng rng(4);
    for (double bw : {1.0, 0.5}) {
        const DenseMatrix w = sample_frequencies({DensityKind::rbf, bw}, 10000, 10, rng);
        double sq = 0.0;
        for (double v : w.values()) sq += v * v;
        EXPECT_NEAR(sq / 1e5, 1.0 / (bw * bw), 0.05 / (bw * bw));
    }
}

TEST(SpectralSampling, LaplacianKindMedianMatchesCauchyQuartile) {
    Rng rng(5);
    const double bw = 2.0;
    const DenseMatrix w = sample_frequencies({DensityKind::laplacian, bw}, 10000, 10, rng);
    std::vector<double> mags;
    for (double v : w.values()) mags.push_back(std::abs(v));
    std::ranges::nth_element(mags, mags.begin() + mags.size() / 2);
    // The upper quartile of Cauchy(0, c) is c, so median |omega| = 1/bw.
    EXPECT_NEAR(mags[mags.size() / 2], 1.0 / bw, 0.05 / bw);
}

TEST(SpectralSampling, DeterministicAndValidated) {
    Rng a(6), b(6);
    EXPECT_EQ(sample_frequencies({DensityKind::cauchy, 1.0}, 5, 3, a),
              sample_frequencies({DensityKind::cauchy, 1.0}, 5, 3, b));
    EXPECT_THROW(parse_density_kind("polynomial"), ParameterError);
    EXPECT_THROW(sample_frequencies({DensityKind::rbf, 0.0}, 5, 3, a), ParameterError);
}

TEST(ApproxError, EqualPointsGiveZeroError) {
    Rng rng(7);
    const std::vector<PointPair> pairs{{{0.3, -1.0}, {0.3, -1.0}}};
    for (DensityKind kind : {DensityKind::rbf, DensityKind::laplacian, DensityKind::cauchy}) {
        const ApproxError e = rff_approx_error({kind, 1.0}, 64, pairs, rng);
        EXPECT_NEAR(e.max_error, 0.0, 1e-15);
    }
}

TEST(ApproxError, ConcentrationAtTenThousandFeatures) {
    const SpectralDensity rbf{DensityKind::rbf, 1.0};
    const std::vector<PointPair> pairs{{{0.0, 0.0}, {1.0, 1.0}}};
    EXPECT_NEAR(exact_kernel(rbf, pairs[0].first, pairs[0].second), 0.367879, 1e-6);
    int within = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        within += rff_approx_error(rbf, 10000, pairs, rng).max_error < 0.05;
    }
    EXPECT_GE(within, 99);
}

TEST(ApproxError, LargerDBeatsSmallerD) {
    const SpectralDensity rbf{DensityKind::rbf, 1.0};
    Rng pair_rng(8);
    const auto pairs = gaussian_pairs(20, 3, 0.6, pair_rng);
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng a(derive_seed(seed, 256)), b(derive_seed(seed, 4096));
        wins += rff_approx_error(rbf, 4096, pairs, b).mean_error < rff_approx_error(rbf, 256, pairs, a).mean_error;
    }
    EXPECT_GE(wins, 95);
}

TEST(ApproxError, InverseSquareRootDecay) {
    const SpectralDensity rbf{DensityKind::rbf, 1.0};
    Rng pair_rng(9);
    const auto pairs = gaussian_pairs(100, 4, 0.5, pair_rng);
    std::vector<double> ds, errs;
    for (int p = 6; p <= 13; ++p) {
        const std::size_t d = std::size_t{1} << p;
        Rng rng(derive_seed(9, d));
        ds.push_back(static_cast<double>(d));
        errs.push_back(rff_approx_error(rbf, d, pairs, rng).mean_error);
    }
    EXPECT_NEAR(loglog_slope(ds, errs), -0.5, 0.15);
}

TEST(ComposedOracle, ClosedFormValues) {
    EXPECT_EQ(composed_rbf_oracle(1.0, 0.5), 1.0);
    for (double lambda : {1e-3, 0.2, 1.0, 7.5}) EXPECT_EQ(composed_rbf_oracle(1.0, lambda), 1.0);
    EXPECT_NEAR(composed_rbf_oracle(0.0, 0.5), 0.367879, 1e-6);
    EXPECT_THROW(composed_rbf_oracle(1.5, 0.5), ParameterError);
    EXPECT_THROW(composed_rbf_oracle(-0.1, 0.5), ParameterError);
    EXPECT_THROW(composed_rbf_oracle(0.5, 0.0), ParameterError);
}

// The oracle is evaluated at the measured inner kernel value, so only the
// outer layer's feature count controls the Monte Carlo error.
TEST(ComposedOracle, StackedRandomLayersMatch) {
    Rng rng(10);
    const std::size_t d = 3, inner_features = 512, outer_features = 8192;
    const SpectralDensity inner{DensityKind::rbf, 1.0}, outer{DensityKind::rbf, 1.0};
    const DenseMatrix w1 = sample_frequencies(inner, inner_features, d, rng);
    const DenseMatrix w2 = sample_frequencies(outer, outer_features, 2 * inner_features, rng);
    const double lambda = 1.0 / (2.0 * outer.bandwidth * outer.bandwidth);
    const DenseMatrix points = random_matrix(200, d, rng, 0.5);
    const DenseMatrix s1 = rff_features(w1, points);
    const DenseMatrix s2 = rff_features(w2, s1);
    double worst = 0.0;
    for (std::size_t p = 0; p < 100; ++p) {
        double k1 = 0.0, k2 = 0.0;
        for (std::size_t j = 0; j < s1.cols(); ++j) k1 += s1(2 * p, j) * s1(2 * p + 1, j);
        for (std::size_t j = 0; j < s2.cols(); ++j) k2 += s2(2 * p, j) * s2(2 * p + 1, j);
        ASSERT_GE(k1, 0.0);
        worst = std::max(worst, std::abs(k2 - composed_rbf_oracle(std::min(k1, 1.0), lambda)));
    }
    EXPECT_LT(worst, 0.05);
}

TEST(Kpca, IdenticalSamplesAreDegenerate) {
    const KernelMatrix k{DenseMatrix(4, 4, 1.0), 0};
    const KpcaResult r = kpca_project(k, 2);
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(max_abs(r.coordinates), 0.0);
}

TEST(Kpca, MatchesIndependentEigensolverUpToSign) {
    Rng rng(11);
    const RffLayer layer = init_layer(3, 32, 1.0, rng);
    const KernelMatrix k = empirical_kernel(rff_features(layer.omega, random_matrix(5, 3, rng, 2.0)));
    const KpcaResult r = kpca_project(k, 3);

    // Brute-force centering with explicit H = I - 11^T/n, then a full Eigen solve.
    Eigen::MatrixXd km(5, 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) km(i, j) = k.values(i, j);
    const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(5, 5) - Eigen::MatrixXd::Constant(5, 5, 1.0 / 5.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h * km * h);
    for (int c = 0; c < 3; ++c) {
        const int idx = 4 - c;
        const double lambda = solver.eigenvalues()(idx);
        EXPECT_NEAR(r.eigenvalues[c], lambda, 1e-10);
        const Eigen::VectorXd ref = solver.eigenvectors().col(idx) * std::sqrt(std::max(lambda, 0.0));
        double same = 0.0, flipped = 0.0;
        for (int i = 0; i < 5; ++i) {
            same = std::max(same, std::abs(r.coordinates(i, c) - ref(i)));
            flipped = std::max(flipped, std::abs(r.coordinates(i, c) + ref(i)));
        }
        EXPECT_LT(std::min(same, flipped), 1e-8) << "component " << c;
    }
}

TEST(Kpca, VariancesNonIncreasingAndSignConvention) {
    Rng rng(12);
    const RffLayer layer = init_layer(4, 64, 1.0, rng);
    const KernelMatrix k = empirical_kernel(rff_features(layer.omega, random_matrix(25, 4, rng, 2.0)));
    const KpcaResult r = kpca_project(k, 3);
    std::vector<double> var(3, 0.0);
    for (std::size_t c = 0; c < 3; ++c) {
        std::size_t pivot = 0;
        for (std::size_t i = 0; i < 25; ++i) {
            var[c] += r.coordinates(i, c) * r.coordinates(i, c);
            if (std::abs(r.coordinates(i, c)) > std::abs(r.coordinates(pivot, c))) pivot = i;
        }
        EXPECT_GT(r.coordinates(pivot, c), 0.0);
    }
    EXPECT_GE(var[0], var[1]);
    EXPECT_GE(var[1], var[2]);
}

TEST(Kpca, PermutationInvariantUpToSign) {
    Rng rng(13);
    const RffLayer layer = init_layer(3, 64, 1.0, rng);
    const DenseMatrix x = random_matrix(12, 3, rng, 2.0);
    const KpcaResult base = kpca_project(empirical_kernel(rff_features(layer.omega, x)), 2);
    const auto perm = random_permutation(12, rng);
    const KpcaResult moved = kpca_project(empirical_kernel(rff_features(layer.omega, gather_rows(x, perm))), 2);
    for (std::size_t c = 0; c < 2; ++c) {
        double same = 0.0, flipped = 0.0;
        for (std::size_t i = 0; i < 12; ++i) {
            same = std::max(same, std::abs(moved.coordinates(i, c) - base.coordinates(perm[i], c)));
            flipped = std::max(flipped, std::abs(moved.coordinates(i, c) + base.coordinates(perm[i], c)));
        }
        EXPECT_LT(std::min(same, flipped), 1e-8);
    }
}

TEST(Kpca, ComponentRangeChecked) {
    const KernelMatrix k{DenseMatrix::identity(3), 0};
    EXPECT_THROW(kpca_project(k, 0), ParameterError);
    EXPECT_THROW(kpca_project(k, 4), ParameterError);
}

TEST(Histogram, ConstantColumnSingleBin) {
    RffLayer layer{DenseMatrix(10, 2, 0.25), std::nullopt};
    const Histogram h = omega_histogram(layer, 1, 5);
    EXPECT_EQ(h.counts[0], 10u);
    EXPECT_EQ(std::count_if(h.counts.begin(), h.counts.end(), [](auto c) { return c > 0; }), 1);
}

TEST(Histogram, CountsSumToFeatureCountAndMoments) {
    Rng rng(14);
    const RffLayer layer = init_layer(3, 10000, 0.1, rng);
    const Histogram h = omega_histogram(layer, 0, 40);
    EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0}), 10000u);
    EXPECT_EQ(h.edges.size(), 41u);
    double sum = 0.0, sq = 0.0;
    for (std::size_t m = 0; m < 10000; ++m) {
        sum += layer.omega(m, 0);
        sq += layer.omega(m, 0) * layer.omega(m, 0);
    }
    const double mean = sum / 1e4;
    EXPECT_NEAR(std::sqrt(sq / 1e4 - mean * mean), 0.1, 0.005);
}

TEST(Histogram, ArgumentErrors) {
    Rng rng(15);
    const RffLayer layer = init_layer(3, 10, 0.1, rng);
    EXPECT_THROW(omega_histogram(layer, 0, 0), ParameterError);
    EXPECT_THROW(omega_histogram(layer, 3, 10), ParameterError);
}

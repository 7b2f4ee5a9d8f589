#include <gtest/gtest.h>

#include <cmath>

#include "rffnet/network.hpp"
#include "support.hpp"

using namespace rffnet;
using rffnet::testing::max_fd_error;
using rffnet::testing::random_matrix;

namespace {

std::vector<int> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng.uniform_index(classes));
    return y;
}

double objective(const Network& net, const DenseMatrix& x, const std::vector<int>& y, double lambda) {
    return compute_loss(net, forward_full(net, x, Mode::training).logits, y, lambda).report.total;
}

// Largest finite-difference mismatch over every parameter block and the input.
double network_fd_error(Network& net, DenseMatrix& x, const std::vector<int>& y, double lambda) {
    const ForwardTrace trace = forward_full(net, x, Mode::training);
    const LossResult loss = compute_loss(net, trace.logits, y, lambda);
    Gradients grads = backward_full(net, trace, loss.grad_logits, lambda);
    auto params = parameter_spans(net);
    auto gs = gradient_spans(grads);
    auto f = [&] { return objective(net, x, y, lambda); };
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) worst = std::max(worst, max_fd_error(params[k], gs[k], f));
    return worst;
}

}  // namespace

TEST(Network, DefaultLayerCount) {
    EXPECT_EQ(default_layer_count(124), 2u);
    EXPECT_EQ(default_layer_count(500), 2u);
    EXPECT_EQ(default_layer_count(1000), 2u);
    EXPECT_EQ(default_layer_count(1001), 3u);
    EXPECT_EQ(default_layer_count(14980), 16u);
}

TEST(Network, BuildShapes) {
    Rng rng(1);
    const Network net = build_network(6, 2, 2, {64, 64}, LossKind::squared_hinge, rng);
    EXPECT_EQ(net.readout_w.rows(), 2u);
    EXPECT_EQ(net.readout_w.cols(), 128u);
    EXPECT_EQ(net.layers[1].input_dim(), 128u);
    for (double b : net.readout_b) EXPECT_EQ(b, 0.0);
    EXPECT_NO_THROW(validate(net));
}

TEST(Network, ReadoutInitStddev) {
    Rng rng(2);
    const Network net = build_network(3, 50, 1, {500}, LossKind::cross_entropy, rng);
    double sq = 0.0;
    for (double v : net.readout_w.values()) sq += v * v;
    EXPECT_NEAR(std::sqrt(sq / static_cast<double>(net.readout_w.size())), 0.1, 0.002);
}

TEST(Network, SingleLayerAndBadFeatureList) {
    Rng rng(3);
    EXPECT_EQ(build_network(4, 3, 1, {8}, LossKind::squared, rng).layers.size(), 1u);
    EXPECT_THROW(build_network(4, 3, 2, {8}, LossKind::squared, rng), ParameterError);
    EXPECT_THROW(build_network(4, 3, 0, {}, LossKind::squared, rng), ParameterError);
}

TEST(Network, ZeroInputLogits) {
    Rng rng(4);
    Network net = build_network(3, 2, 1, {5}, LossKind::squared, rng);
    net.readout_b = {0.25, -0.5};
    const ForwardTrace trace = forward_full(net, DenseMatrix(1, 3), Mode::inference);
    const double s = std::sqrt(1.0 / 5.0);
    for (std::size_t c = 0; c < 2; ++c) {
        double expected = net.readout_b[c];
        for (std::size_t m = 0; m < 5; ++m) expected += net.readout_w(c, m) * s;
        EXPECT_NEAR(trace.logits(0, c), expected, 1e-15);
    }
    EXPECT_EQ(trace.layers.size(), 1u);
}

TEST(Network, LogitsFiniteOverManyRandomNets) {
    Rng rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto d = 1 + rng.uniform_index(6);
        const auto layers = 1 + rng.uniform_index(3);
        std::vector<std::size_t> features(layers);
        for (auto& f : features) f = 1 + rng.uniform_index(8);
        const Network net = build_network(d, 2 + rng.uniform_index(3), layers, features,
                                          LossKind::cross_entropy, rng, trial % 2 == 0);
        const ForwardTrace trace = forward_full(net, random_matrix(4, d, rng, 100.0), Mode::training);
        ASSERT_TRUE(all_finite(trace.logits));
        ASSERT_EQ(trace.layers.size(), layers);
    }
}

TEST(Network, ForwardShapeError) {
    Rng rng(6);
    const Network net = build_network(3, 2, 1, {4}, LossKind::squared, rng);
    EXPECT_THROW(forward_full(net, DenseMatrix(2, 4), Mode::inference), ShapeError);
}

TEST(Loss, SquaredAtOneHotIsZero) {
    Rng rng(7);
    const Network net = build_network(2, 3, 1, {2}, LossKind::squared, rng);
    const DenseMatrix logits{{1, 0, 0}, {0, 0, 1}};
    const LossResult r = compute_loss(net, logits, std::vector<int>{0, 2}, 0.0);
    EXPECT_EQ(r.report.data_loss, 0.0);
    EXPECT_EQ(max_abs(r.grad_logits), 0.0);
}

TEST(Loss, SquaredHingeMarginCases) {
    Rng rng(8);
    const Network net = build_network(2, 2, 1, {2}, LossKind::squared_hinge, rng);
    // True class 1 scores 2 and class 0 scores -2: both margins met.
    EXPECT_EQ(compute_loss(net, DenseMatrix{{-2.0, 2.0}}, std::vector<int>{1}, 0.0).report.data_loss, 0.0);
    // True class scores 0 -> (1 - 0)^2 = 1; the other class is already past its margin.
    EXPECT_DOUBLE_EQ(compute_loss(net, DenseMatrix{{-1.0, 0.0}}, std::vector<int>{1}, 0.0).report.data_loss, 1.0);
}

TEST(Loss, CrossEntropyUniformIsLogTwo) {
    Rng rng(9);
    const Network net = build_network(2, 2, 1, {2}, LossKind::cross_entropy, rng);
    const LossResult r = compute_loss(net, DenseMatrix{{0.3, 0.3}, {-1.0, -1.0}}, std::vector<int>{0, 1}, 0.0);
    EXPECT_NEAR(r.report.data_loss, 0.693147, 1e-6);
    EXPECT_DOUBLE_EQ(r.report.data_loss, std::log(2.0));
}

TEST(Loss, LabelOutOfRangeIsDataError) {
    Rng rng(10);
    const Network net = build_network(2, 2, 1, {2}, LossKind::cross_entropy, rng);
    EXPECT_THROW(compute_loss(net, DenseMatrix{{0.0, 0.0}}, std::vector<int>{2}, 0.0), DataError);
    EXPECT_THROW(compute_loss(net, DenseMatrix{{0.0, 0.0}}, std::vector<int>{-1}, 0.0), DataError);
}

TEST(Loss, RegularizerIsHalfLambdaSquaredNorm) {
    Rng rng(11);
    const Network net = build_network(3, 3, 2, {4, 5}, LossKind::squared, rng, true);
    double brute = 0.0;
    for (const RffLayer& l : net.layers) {
        for (double v : l.omega.values()) brute += v * v;
        for (double v : l.batchnorm->gamma) brute += v * v;
        for (double v : l.batchnorm->beta) brute += v * v;
    }
    for (double v : net.readout_w.values()) brute += v * v;
    for (double v : net.readout_b) brute += v * v;
    const LossResult r = compute_loss(net, DenseMatrix(1, 3), std::vector<int>{0}, 0.3);
    EXPECT_NEAR(r.report.reg_loss, 0.15 * brute, 1e-14);
    EXPECT_DOUBLE_EQ(r.report.total, r.report.data_loss + r.report.reg_loss);
}

TEST(Backward, ZeroUpstreamWithoutRegularizationIsZero) {
    Rng rng(12);
    const Network net = build_network(3, 2, 2, {4, 4}, LossKind::squared, rng);
    const ForwardTrace trace = forward_full(net, random_matrix(5, 3, rng), Mode::training);
    Gradients g = backward_full(net, trace, DenseMatrix(5, 2), 0.0);
    for (auto span : gradient_spans(g))
        for (double v : span) EXPECT_EQ(v, 0.0);
}

TEST(Backward, PureRegularizerGradientIsLambdaTheta) {
    Rng rng(13);
    const Network net = build_network(3, 2, 2, {4, 4}, LossKind::squared, rng, true);
    const ForwardTrace trace = forward_full(net, random_matrix(5, 3, rng), Mode::training);
    Gradients g = backward_full(net, trace, DenseMatrix(5, 2), 0.25);
    const auto params = parameter_spans(net);
    const auto gs = gradient_spans(g);
    ASSERT_EQ(params.size(), gs.size());
    for (std::size_t k = 0; k < params.size(); ++k)
        for (std::size_t j = 0; j < params[k].size(); ++j) EXPECT_DOUBLE_EQ(gs[k][j], 0.25 * params[k][j]);
}

TEST(Backward, StaleTraceRejected) {
    Rng rng(14);
    const Network a = build_network(3, 2, 2, {4, 4}, LossKind::squared, rng);
    const Network b = build_network(3, 2, 1, {4}, LossKind::squared, rng);
    const ForwardTrace trace = forward_full(a, random_matrix(5, 3, rng), Mode::training);
    EXPECT_THROW(backward_full(b, trace, DenseMatrix(5, 2), 0.0), ShapeError);
}

TEST(Backward, ReferenceFiniteDifferenceCase) {
    Rng rng(15);
    for (LossKind loss : {LossKind::squared, LossKind::squared_hinge, LossKind::cross_entropy}) {
        Network net = build_network(3, 2, 2, {4, 4}, loss, rng);
        for (auto& l : net.layers) l.omega = gaussian_matrix(l.omega.rows(), l.omega.cols(), 0.0, 1.0, rng);
        DenseMatrix x = random_matrix(5, 3, rng);
        const auto y = random_labels(5, 2, rng);
        EXPECT_LT(network_fd_error(net, x, y, 1e-4), 1e-5) << to_string(loss);
    }
}

// All parameters, every loss kind, batch norm on and off.
TEST(Backward, FiniteDifferencePropertySweep) {
    Rng rng(16);
    int configurations = 0;
    const LossKind kinds[] = {LossKind::squared, LossKind::squared_hinge, LossKind::cross_entropy};
    for (int trial = 0; trial < 30; ++trial) {
        const bool bn = (trial / 3) % 2 == 1;
        const LossKind loss = kinds[trial % 3];
        const auto d = 1 + rng.uniform_index(4);
        const auto layers = 1 + rng.uniform_index(3);
        const auto classes = 2 + rng.uniform_index(3);
        std::vector<std::size_t> features(layers);
        for (auto& f : features) f = 1 + rng.uniform_index(5);
        Network net = build_network(d, classes, layers, features, loss, rng, bn);
        for (auto& l : net.layers) {
            l.omega = gaussian_matrix(l.omega.rows(), l.omega.cols(), 0.0, rng.uniform(0.5, 1.5), rng);
            if (l.batchnorm)
                for (double& g : l.batchnorm->gamma) g = rng.uniform(0.5, 1.5);
        }
        net.readout_w = gaussian_matrix(net.readout_w.rows(), net.readout_w.cols(), 0.0, 1.0, rng);
        const auto batch = 3 + rng.uniform_index(5);
        DenseMatrix x = random_matrix(batch, d, rng, 1.5);
        const auto y = random_labels(batch, classes, rng);
        EXPECT_LT(network_fd_error(net, x, y, 1e-3), 1e-5)
            << "trial " << trial << " loss " << to_string(loss) << " bn " << bn;
        ++configurations;
    }
    EXPECT_GE(configurations, 20);
}

TEST(Predict, ArgmaxAndTies) {
    EXPECT_EQ(argmax_rows(DenseMatrix{{0.9, 0.1}}), std::vector<int>{0});
    EXPECT_EQ(argmax_rows(DenseMatrix{{0.5, 0.5}}), std::vector<int>{0});
    EXPECT_EQ(argmax_rows(DenseMatrix{{0.1, 0.7, 0.7}}), std::vector<int>{1});
}

TEST(Predict, ShiftInvariance) {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        DenseMatrix logits = random_matrix(1, 4, rng);
        const auto before = argmax_rows(logits);
        const double shift = rng.uniform(-100.0, 100.0);
        for (double& v : logits.values()) v += shift;
        EXPECT_EQ(argmax_rows(logits), before);
    }
}

TEST(Predict, UntrainedNetIsAtChance) {
    Rng rng(18);
    const Network net = build_network(5, 2, 2, {32, 32}, LossKind::squared_hinge, rng);
    const std::size_t n = 20000;
    const DenseMatrix x = random_matrix(n, 5, rng, 2.0);
    const auto y = random_labels(n, 2, rng);
    const auto p = predict(net, x);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += p[i] == y[i];
    EXPECT_NEAR(static_cast<double>(correct) / static_cast<double>(n), 0.5, 0.05);
}

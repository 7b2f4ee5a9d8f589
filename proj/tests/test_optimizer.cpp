#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "rffnet/optimizer.hpp"
#include "support.hpp"

using namespace rffnet;

namespace {

struct Blobs {
    DenseMatrix x;
    std::vector<int> y;
};

// Two Gaussian blobs at (-2, -2) and (2, 2); the line x1 + x2 = 0 separates them.
Blobs make_blobs(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Blobs b{DenseMatrix(n, 2), std::vector<int>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        const double c = label == 1 ? 2.0 : -2.0;
        b.x(i, 0) = rng.normal(c, 0.5);
        b.x(i, 1) = rng.normal(c, 0.5);
        b.y[i] = label;
    }
    return b;
}

double linear_oracle_accuracy(const Blobs& b) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < b.y.size(); ++i) correct += ((b.x(i, 0) + b.x(i, 1) > 0.0) ? 1 : 0) == b.y[i];
    return static_cast<double>(correct) / static_cast<double>(b.y.size());
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    std::vector<double> theta{0.5, -1.0};
    std::vector<double> grad{0.0, 0.0};
    std::vector<std::span<double>> p{theta}, g{grad};
    AdamState s = make_adam_state(p);
    adam_step(p, g, s);
    EXPECT_EQ(theta, (std::vector<double>{0.5, -1.0}));
    EXPECT_EQ(s.step, 1u);
}

TEST(Adam, FirstStepHandEvaluation) {
    std::vector<double> theta{0.0};
    std::vector<double> grad{1.0};
    std::vector<std::span<double>> p{theta}, g{grad};
    AdamState s = make_adam_state(p, 0.001, 0.9, 0.999, 1e-8);
    adam_step(p, g, s);
    // m_hat = 1, v_hat = 1
    EXPECT_DOUBLE_EQ(theta[0], -0.001 / (1.0 + 1e-8));
}

TEST(Adam, ConvergesOnScalarQuadratic) {
    std::vector<double> theta{1.0};
    std::vector<double> grad{0.0};
    std::vector<std::span<double>> p{theta}, g{grad};
    AdamState s = make_adam_state(p);
    for (int i = 0; i < 5000; ++i) {
        grad[0] = 2.0 * theta[0];
        adam_step(p, g, s);
        ASSERT_GE(s.v[0][0], 0.0);
        ASSERT_EQ(s.step, static_cast<std::size_t>(i + 1));
    }
    EXPECT_LT(std::abs(theta[0]), 1e-3);
}

TEST(Adam, ShapeMismatchRejected) {
    std::vector<double> a{1.0, 2.0}, b{1.0};
    std::vector<std::span<double>> p{a}, g{b};
    AdamState s = make_adam_state(p);
    EXPECT_THROW(adam_step(p, g, s), ShapeError);
}

TEST(Sgd, PlainStep) {
    std::vector<double> theta{1.0, 2.0}, grad{0.5, -1.0};
    std::vector<std::span<double>> p{theta}, g{grad};
    sgd_step(p, g, 0.1);
    EXPECT_DOUBLE_EQ(theta[0], 0.95);
    EXPECT_DOUBLE_EQ(theta[1], 2.1);
}

TEST(Minibatch, TrailingBatchKeptOrMerged) {
    using R = std::vector<std::pair<std::size_t, std::size_t>>;
    EXPECT_EQ(minibatch_ranges(10, 4, 1), (R{{0, 4}, {4, 8}, {8, 10}}));
    EXPECT_EQ(minibatch_ranges(9, 4, 2), (R{{0, 4}, {4, 9}}));
    EXPECT_EQ(minibatch_ranges(9, 4, 1), (R{{0, 4}, {4, 8}, {8, 9}}));
    EXPECT_EQ(minibatch_ranges(5, 0, 2), (R{{0, 5}}));
}

TEST(Fit, ZeroEpochsLeavesNetworkUnchanged) {
    Rng rng(1);
    Network net = build_network(2, 2, 1, {8}, LossKind::squared_hinge, rng);
    const Network before = net;
    const Blobs b = make_blobs(20, 1);
    TrainConfig cfg;
    cfg.epochs = 0;
    const TrainingLog log = fit(net, {b.x, b.y}, cfg);
    EXPECT_TRUE(log.epochs.empty());
    EXPECT_EQ(net, before);
}

TEST(Fit, SeparableBlobsReachFullTrainAccuracy) {
    const Blobs b = make_blobs(200, 2);
    ASSERT_EQ(linear_oracle_accuracy(b), 1.0);
    Rng rng(2);
    Network net = build_network(2, 2, 1, {64}, LossKind::squared_hinge, rng);
    TrainConfig cfg;
    cfg.epochs = 100;
    cfg.seed = 2;
    const TrainingLog log = fit(net, {b.x, b.y}, cfg);
    EXPECT_GE(log.epochs.back().train_acc, 0.99);
}

TEST(Fit, SameSeedBitIdenticalLog) {
    const Blobs b = make_blobs(64, 3);
    auto run = [&] {
        Rng rng(3);
        Network net = build_network(2, 2, 2, {8, 8}, LossKind::cross_entropy, rng, true);
        TrainConfig cfg;
        cfg.epochs = 15;
        cfg.batch_size = 10;
        cfg.seed = 99;
        const TrainingLog log = fit(net, {b.x, b.y}, cfg, TrainingData{b.x, b.y});
        std::ostringstream ss;
        write_training_log(ss, log);
        return ss.str();
    };
    EXPECT_EQ(run(), run());
}

TEST(Fit, ShuffleDependsOnlyOnSeed) {
    const Blobs b = make_blobs(64, 4);
    auto final_loss = [&](std::uint64_t seed) {
        Rng rng(4);
        Network net = build_network(2, 2, 1, {8}, LossKind::squared, rng);
        TrainConfig cfg;
        cfg.epochs = 3;
        cfg.batch_size = 8;
        cfg.seed = seed;
        return fit(net, {b.x, b.y}, cfg).epochs.back().loss;
    };
    EXPECT_EQ(final_loss(5), final_loss(5));
    EXPECT_NE(final_loss(5), final_loss(6));
}

TEST(Fit, ZeroLearningRateIsAFixedPoint) {
    const Blobs b = make_blobs(30, 5);
    Rng rng(5);
    Network net = build_network(2, 2, 2, {6, 6}, LossKind::squared_hinge, rng);
    const Network before = net;
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 7;
    cfg.lr_schedule = {{0, 0.0}};
    fit(net, {b.x, b.y}, cfg);
    EXPECT_EQ(net, before);
}

TEST(Fit, LearningRateSchedule) {
    TrainConfig cfg;
    cfg.lr_schedule = {{0, 0.01}, {10, 0.001}};
    EXPECT_EQ(learning_rate_at(cfg, 0), 0.01);
    EXPECT_EQ(learning_rate_at(cfg, 9), 0.01);
    EXPECT_EQ(learning_rate_at(cfg, 10), 0.001);
}

TEST(Fit, EarlyLossDecreasesAcrossSeeds) {
    const Blobs b = make_blobs(200, 6);
    int monotone_five = 0, decreasing_ten = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        Network net = build_network(2, 2, 1, {16}, LossKind::squared_hinge, rng);
        const double initial = evaluate(net, b.x, b.y, 1e-4).report.total;
        TrainConfig cfg;
        cfg.epochs = 10;
        cfg.seed = seed;
        const TrainingLog log = fit(net, {b.x, b.y}, cfg);
        bool ok = log.epochs[0].loss <= initial;
        for (std::size_t e = 1; e < 5; ++e) ok = ok && log.epochs[e].loss <= log.epochs[e - 1].loss;
        monotone_five += ok;
        decreasing_ten += log.epochs[9].loss < initial;
    }
    EXPECT_GE(monotone_five, 18);
    EXPECT_GE(decreasing_ten, 19);
}

TEST(Fit, Errors) {
    Rng rng(7);
    Network net = build_network(2, 2, 1, {4}, LossKind::squared, rng, true);
    const DenseMatrix empty(0, 2);
    const std::vector<int> none;
    TrainConfig cfg;
    cfg.epochs = 1;
    EXPECT_THROW(fit(net, {empty, none}, cfg), DataError);

    const Blobs b = make_blobs(10, 7);
    cfg.batch_size = 1;
    EXPECT_THROW(fit(net, {b.x, b.y}, cfg), ParameterError);

    std::vector<int> bad = b.y;
    bad[0] = 5;
    cfg.batch_size = 0;
    EXPECT_THROW(fit(net, {b.x, bad}, cfg), DataError);
}

TEST(Fit, NonFiniteObjectiveIsNumericError) {
    Rng rng(8);
    Network net = build_network(2, 2, 1, {4}, LossKind::squared, rng);
    net.readout_w(0, 0) = std::numeric_limits<double>::quiet_NaN();
    const Blobs b = make_blobs(10, 8);
    TrainConfig cfg;
    cfg.epochs = 1;
    EXPECT_THROW(fit(net, {b.x, b.y}, cfg), NumericError);
}

TEST(Fit, LogFormat) {
    TrainingLog log;
    log.epochs.push_back({0, 0.001, 0.5, 0.25, 0.75, std::nullopt});
    log.epochs.push_back({1, 0.001, 0.5, 0.25, 0.75, 0.5});
    std::ostringstream ss;
    write_training_log(ss, log);
    EXPECT_EQ(ss.str(), "epoch,lr,loss,reg_loss,train_acc,val_acc\n0,0.001,0.5,0.25,0.75,\n1,0.001,0.5,0.25,0.75,0.5\n");
}

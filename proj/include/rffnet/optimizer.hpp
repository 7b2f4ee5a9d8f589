#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rffnet/errors.hpp"
#include "rffnet/matrix.hpp"
#include "rffnet/network.hpp"
#include "rffnet/random.hpp"

namespace rffnet {

/// Adam moment buffers for a fixed list of parameter blocks.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::size_t step = 0;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename Spans>
AdamState make_adam_state(const Spans& params, double lr = 0.001, double beta1 = 0.9,
                          double beta2 = 0.999, double epsilon = 1e-8) {
    AdamState s;
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
    for (const auto& p : params) {
        s.m.emplace_back(p.size(), 0.0);
        s.v.emplace_back(p.size(), 0.0);
    }
    return s;
}

/// One bias-corrected Adam update of every block in `params`.
inline void adam_step(std::span<const std::span<double>> params,
                      std::span<const std::span<double>> grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size() ||
        params.size() != state.v.size()) {
        throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameter blocks, " +
                         std::to_string(grads.size()) + " gradient blocks, " +
                         std::to_string(state.m.size()) + " moment blocks");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].size() != grads[k].size() || params[k].size() != state.m[k].size() ||
            params[k].size() != state.v[k].size()) {
            throw ShapeError("adam_step: block " + std::to_string(k) + " size mismatch");
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k];
        auto g = grads[k];
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            p[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

inline void sgd_step(std::span<const std::span<double>> params,
                     std::span<const std::span<double>> grads, double lr) {
    if (params.size() != grads.size()) throw ShapeError("sgd_step: block count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].size() != grads[k].size()) {
            throw ShapeError("sgd_step: block " + std::to_string(k) + " size mismatch");
        }
        for (std::size_t j = 0; j < params[k].size(); ++j) params[k][j] -= lr * grads[k][j];
    }
}

enum class OptimizerKind { adam, sgd };

struct TrainConfig {
    std::size_t epochs = 300;
    std::size_t batch_size = 0;  // 0 means full batch
    double lambda = 1e-4;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::size_t, double>> lr_schedule{{0, 0.001}};
    bool shuffle = true;
    OptimizerKind optimizer = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
};

/// Learning rate in force at `epoch`: the last schedule entry starting at or before it.
inline double learning_rate_at(const TrainConfig& config, std::size_t epoch) {
    if (config.lr_schedule.empty()) throw ParameterError("lr_schedule is empty");
    double lr = config.lr_schedule.front().second;
    for (const auto& [start, value] : config.lr_schedule)
        if (start <= epoch) lr = value;
    return lr;
}

/// Labelled examples fed to fit().
struct TrainingData {
    const DenseMatrix& x;
    std::span<const int> y;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;      // total objective on the full training set, inference mode
    double reg_loss = 0.0;
    double train_acc = 0.0;
    std::optional<double> val_acc;

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingLog {
    std::vector<EpochRecord> epochs;

    friend bool operator==(const TrainingLog&, const TrainingLog&) = default;
};

/// Header plus one comma-separated line per epoch; val_acc is empty when absent.
inline void write_training_log(std::ostream& os, const TrainingLog& log) {
    auto old_precision = os.precision(17);
    os << "epoch,lr,loss,reg_loss,train_acc,val_acc\n";
    for (const EpochRecord& r : log.epochs) {
        os << r.epoch << ',' << r.lr << ',' << r.loss << ',' << r.reg_loss << ',' << r.train_acc
           << ',';
        if (r.val_acc) os << *r.val_acc;
        os << '\n';
    }
    os.precision(old_precision);
}

/**
 * Contiguous minibatch boundaries over n shuffled samples.
 *
 * The trailing partial batch is kept, except that a trailing batch smaller
 * than `min_batch` is merged into its predecessor.
 */
inline std::vector<std::pair<std::size_t, std::size_t>> minibatch_ranges(std::size_t n,
                                                                          std::size_t batch_size,
                                                                          std::size_t min_batch) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (n == 0) return out;
    const std::size_t b = batch_size == 0 ? n : batch_size;
    for (std::size_t start = 0; start < n; start += b) out.emplace_back(start, std::min(n, start + b));
    if (out.size() > 1 && out.back().second - out.back().first < min_batch) {
        out[out.size() - 2].second = out.back().second;
        out.pop_back();
    }
    return out;
}

struct Evaluation {
    LossReport report;
    double accuracy = 0.0;
};

inline Evaluation evaluate(const Network& net, const DenseMatrix& x, std::span<const int> y,
                           double lambda) {
    ForwardTrace trace = forward_full(net, x, Mode::inference);
    LossResult loss = compute_loss(net, trace.logits, y, lambda);
    return {loss.report,
            static_cast<double>(loss.report.correct_count) / static_cast<double>(y.size())};
}

inline bool has_batchnorm(const Network& net) {
    for (const RffLayer& l : net.layers)
        if (l.batchnorm) return true;
    return false;
}

/// Called after every epoch with the record just appended.
using EpochCallback = std::function<void(const EpochRecord&)>;

/**
 * Minibatch training of every parameter of `net`.
 *
 * The shuffle for epoch e is drawn from an Rng seeded with
 * derive_seed(config.seed, e), so the whole trajectory is a function of the
 * seed, the data and the initial network. Throws NumericError as soon as the
 * objective or a parameter stops being finite.
 */
inline TrainingLog fit(Network& net, TrainingData train, const TrainConfig& config,
                       std::optional<TrainingData> validation = std::nullopt,
                       const EpochCallback& on_epoch = {}) {
    validate(net);
    if (train.x.rows() == 0 || train.y.empty()) throw DataError("fit: empty training set");
    if (train.x.rows() != train.y.size()) {
        throw DataError("fit: " + std::to_string(train.x.rows()) + " rows but " +
                        std::to_string(train.y.size()) + " labels");
    }
    for (int label : train.y) {
        if (label < 0 || static_cast<std::size_t>(label) >= net.class_count()) {
            throw DataError("fit: label " + std::to_string(label) + " outside [0, " +
                            std::to_string(net.class_count()) + ")");
        }
    }
    const bool bn = has_batchnorm(net);
    const std::size_t n = train.x.rows();
    if (bn && n < 2) throw DataError("fit: batch normalization needs at least two samples");
    if (bn && config.batch_size == 1) {
        throw ParameterError("fit: batch_size must be at least 2 with batch normalization");
    }

    AdamState adam = make_adam_state(parameter_spans(net), learning_rate_at(config, 0),
                                     config.beta1, config.beta2, config.adam_epsilon);
    TrainingLog log;
    std::vector<int> batch_labels;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = learning_rate_at(config, epoch);
        adam.lr = lr;

        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        if (config.shuffle) {
            Rng shuffle_rng(derive_seed(config.seed, epoch));
            shuffle_rng.shuffle(std::span<std::size_t>(order));
        }

        for (auto [begin, end] : minibatch_ranges(n, config.batch_size, bn ? 2 : 1)) {
            std::span<const std::size_t> idx(order.data() + begin, end - begin);
            DenseMatrix xb = gather_rows(train.x, idx);
            batch_labels.resize(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) batch_labels[i] = train.y[idx[i]];

            ForwardTrace trace = forward_full(net, xb, Mode::training);
            LossResult loss = compute_loss(net, trace.logits, batch_labels, config.lambda);
            if (!std::isfinite(loss.report.total)) {
                throw NumericError("fit: non-finite objective at epoch " + std::to_string(epoch));
            }
            Gradients grads = backward_full(net, trace, loss.grad_logits, config.lambda);
            update_running_stats(net, trace);

            auto params = parameter_spans(net);
            auto gs = gradient_spans(grads);
            if (config.optimizer == OptimizerKind::adam) {
                adam_step(params, gs, adam);
            } else {
                sgd_step(params, gs, lr);
            }
        }
        for (auto span : parameter_spans(std::as_const(net))) {
            if (!all_finite(span)) {
                throw NumericError("fit: non-finite parameter after epoch " + std::to_string(epoch));
            }
        }

        EpochRecord record;
        record.epoch = epoch;
        record.lr = lr;
        Evaluation ev = evaluate(net, train.x, train.y, config.lambda);
        record.loss = ev.report.total;
        record.reg_loss = ev.report.reg_loss;
        record.train_acc = ev.accuracy;
        if (validation) record.val_acc = evaluate(net, validation->x, validation->y, 0.0).accuracy;
        if (!std::isfinite(record.loss)) {
            throw NumericError("fit: non-finite training loss after epoch " + std::to_string(epoch));
        }
        log.epochs.push_back(record);
        if (on_epoch) on_epoch(log.epochs.back());
    }
    return log;
}

}  // namespace rffnet

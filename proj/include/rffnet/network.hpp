#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rffnet/errors.hpp"
#include "rffnet/matrix.hpp"
#include "rffnet/random.hpp"
#include "rffnet/rff_layer.hpp"

namespace rffnet {

enum class LossKind { squared, squared_hinge, cross_entropy };

inline std::string_view to_string(LossKind kind) {
    switch (kind) {
        case LossKind::squared: return "squared";
        case LossKind::squared_hinge: return "squared_hinge";
        case LossKind::cross_entropy: return "cross_entropy";
    }
    throw ParameterError("unknown loss kind");
}

inline LossKind parse_loss_kind(std::string_view name) {
    if (name == "squared") return LossKind::squared;
    if (name == "squared_hinge" || name == "hinge") return LossKind::squared_hinge;
    if (name == "cross_entropy" || name == "ce") return LossKind::cross_entropy;
    throw ParameterError("unknown loss kind '" + std::string(name) + "'");
}

/// Stacked RFF layers followed by a fully connected readout (one row per class).
struct Network {
    std::vector<RffLayer> layers;
    DenseMatrix readout_w;           // classes x 2D_last
    std::vector<double> readout_b;   // classes
    LossKind loss = LossKind::squared_hinge;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().input_dim(); }
    std::size_t class_count() const noexcept { return readout_w.rows(); }

    friend bool operator==(const Network&, const Network&) = default;
};

/// Checks the chaining and readout invariants; throws ShapeError on violation.
inline void validate(const Network& net) {
    if (net.layers.empty()) throw ShapeError("network has no RFF layers");
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const RffLayer& layer = net.layers[i];
        if (layer.omega.rows() == 0 || layer.omega.cols() == 0) {
            throw ShapeError("layer " + std::to_string(i) + " has an empty frequency matrix");
        }
        if (i > 0 && layer.input_dim() != net.layers[i - 1].output_dim()) {
            throw ShapeError("layer " + std::to_string(i) + " expects " +
                             std::to_string(layer.input_dim()) + " inputs but layer " +
                             std::to_string(i - 1) + " produces " +
                             std::to_string(net.layers[i - 1].output_dim()));
        }
        if (layer.batchnorm && layer.batchnorm->size() != layer.output_dim()) {
            throw ShapeError("layer " + std::to_string(i) + " batch-norm size mismatch");
        }
    }
    if (net.readout_w.cols() != net.layers.back().output_dim()) {
        throw ShapeError("readout has " + std::to_string(net.readout_w.cols()) +
                         " columns, last layer produces " +
                         std::to_string(net.layers.back().output_dim()));
    }
    if (net.readout_b.size() != net.readout_w.rows()) {
        throw ShapeError("readout bias length differs from class count");
    }
}

/// Suggested depth for n training samples: ceil(n / 1000) + 1.
inline std::size_t default_layer_count(std::size_t n_samples) {
    if (n_samples < 1) throw ParameterError("default_layer_count: n must be at least 1");
    return (n_samples + 999) / 1000 + 1;
}

struct NetworkSpec {
    std::size_t input_dim = 0;
    std::size_t class_count = 2;
    std::vector<std::size_t> features_per_layer;  // one D per layer
    LossKind loss = LossKind::squared_hinge;
    bool batchnorm = false;
    double omega_stddev = 0.1;
    double readout_stddev = 0.1;
};

inline Network build_network(const NetworkSpec& spec, Rng& rng) {
    if (spec.features_per_layer.empty()) {
        throw ParameterError("build_network: need at least one layer");
    }
    if (spec.class_count < 2) {
        throw ParameterError("build_network: need at least two classes");
    }
    Network net;
    net.loss = spec.loss;
    std::size_t in = spec.input_dim;
    for (std::size_t d : spec.features_per_layer) {
        net.layers.push_back(init_layer(in, d, spec.omega_stddev, rng, spec.batchnorm));
        in = 2 * d;
    }
    net.readout_w = gaussian_matrix(spec.class_count, in, 0.0, spec.readout_stddev, rng);
    net.readout_b.assign(spec.class_count, 0.0);
    return net;
}

/// Positional form mirroring the layer-count/D-list description of a model.
inline Network build_network(std::size_t input_dim, std::size_t class_count,
                             std::size_t layer_count, const std::vector<std::size_t>& features,
                             LossKind loss, Rng& rng, bool batchnorm = false) {
    if (layer_count < 1) throw ParameterError("build_network: layer_count must be at least 1");
    if (features.size() != layer_count) {
        throw ParameterError("build_network: " + std::to_string(features.size()) +
                             " feature counts given for " + std::to_string(layer_count) +
                             " layers");
    }
    NetworkSpec spec;
    spec.input_dim = input_dim;
    spec.class_count = class_count;
    spec.features_per_layer = features;
    spec.loss = loss;
    spec.batchnorm = batchnorm;
    return build_network(spec, rng);
}

struct ForwardTrace {
    std::vector<LayerCache> layers;
    DenseMatrix logits;  // batch x classes
};

inline DenseMatrix readout(const Network& net, const DenseMatrix& features) {
    DenseMatrix logits = matmul_transposed(features, net.readout_w);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto r = logits.row(i);
        for (std::size_t c = 0; c < r.size(); ++c) r[c] += net.readout_b[c];
    }
    return logits;
}

inline ForwardTrace forward_full(const Network& net, const DenseMatrix& x, Mode mode) {
    if (net.layers.empty()) throw ShapeError("forward_full: network has no layers");
    if (x.cols() != net.input_dim()) {
        throw ShapeError("forward_full: input has " + std::to_string(x.cols()) +
                         " features, network expects " + std::to_string(net.input_dim()));
    }
    ForwardTrace trace;
    trace.layers.reserve(net.layers.size());
    DenseMatrix current = x;
    for (const RffLayer& layer : net.layers) {
        LayerForward step = forward(layer, current, mode);
        current = std::move(step.output);
        trace.layers.push_back(std::move(step.cache));
    }
    trace.logits = readout(net, current);
    return trace;
}

/// Folds the batch statistics of a training-mode trace into the running averages.
inline void update_running_stats(Network& net, const ForwardTrace& trace) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        auto& bn = net.layers[i].batchnorm;
        const LayerCache& cache = trace.layers[i];
        if (bn && cache.mode == Mode::training) {
            update_running_stats(*bn, cache.batch_mean, cache.batch_var, cache.input.rows());
        }
    }
}

/**
 * Lowest index of the largest logit in each row.
 *
 * For two-class margin models this coincides with the sign of the score
 * difference, ties going to class 0.
 */
inline std::vector<int> argmax_rows(const DenseMatrix& logits) {
    std::vector<int> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto r = logits.row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < r.size(); ++c)
            if (r[c] > r[best]) best = c;
        out[i] = static_cast<int>(best);
    }
    return out;
}

inline std::vector<int> predict(const Network& net, const DenseMatrix& x) {
    return argmax_rows(forward_full(net, x, Mode::inference).logits);
}

// ---------------------------------------------------------------------------
// Parameters and gradients share one flattening order:
//   for each layer: omega, [gamma, beta]; then readout_w, readout_b.

struct Gradients {
    std::vector<LayerGradients> layers;
    DenseMatrix readout_w;
    std::vector<double> readout_b;
};

inline std::vector<std::span<double>> parameter_spans(Network& net) {
    std::vector<std::span<double>> out;
    for (RffLayer& layer : net.layers) {
        out.push_back(layer.omega.values());
        if (layer.batchnorm) {
            out.emplace_back(layer.batchnorm->gamma);
            out.emplace_back(layer.batchnorm->beta);
        }
    }
    out.push_back(net.readout_w.values());
    out.emplace_back(net.readout_b);
    return out;
}

inline std::vector<std::span<const double>> parameter_spans(const Network& net) {
    std::vector<std::span<const double>> out;
    for (const RffLayer& layer : net.layers) {
        out.push_back(layer.omega.values());
        if (layer.batchnorm) {
            out.emplace_back(layer.batchnorm->gamma);
            out.emplace_back(layer.batchnorm->beta);
        }
    }
    out.push_back(net.readout_w.values());
    out.emplace_back(net.readout_b);
    return out;
}

inline std::vector<std::span<double>> gradient_spans(Gradients& grads) {
    std::vector<std::span<double>> out;
    for (LayerGradients& layer : grads.layers) {
        out.push_back(layer.omega.values());
        if (!layer.gamma.empty()) {
            out.emplace_back(layer.gamma);
            out.emplace_back(layer.beta);
        }
    }
    out.push_back(grads.readout_w.values());
    out.emplace_back(grads.readout_b);
    return out;
}

inline std::size_t parameter_count(const Network& net) {
    std::size_t n = 0;
    for (auto s : parameter_spans(net)) n += s.size();
    return n;
}

inline double squared_parameter_norm(const Network& net) {
    double s = 0.0;
    for (auto span : parameter_spans(net))
        for (double v : span) s += v * v;
    return s;
}

struct LossReport {
    double data_loss = 0.0;
    double reg_loss = 0.0;
    double total = 0.0;
    std::size_t correct_count = 0;
};

struct LossResult {
    LossReport report;
    DenseMatrix grad_logits;  // d(data_loss)/d(logits)
};

/**
 * Batch-mean data loss plus (lambda/2)||theta||^2 over all trainable parameters.
 *
 * squared:        sum_c (z_c - onehot_c)^2
 * squared_hinge:  sum_c max(0, 1 - t_c z_c)^2, t_c = +1 for the true class, -1 otherwise
 * cross_entropy:  -log softmax(z)_y
 */
inline LossResult compute_loss(const Network& net, const DenseMatrix& logits,
                               std::span<const int> labels, double lambda) {
    if (logits.rows() != labels.size()) {
        throw ShapeError("compute_loss: " + std::to_string(logits.rows()) + " logit rows for " +
                         std::to_string(labels.size()) + " labels");
    }
    if (logits.cols() != net.class_count()) {
        throw ShapeError("compute_loss: logits have " + std::to_string(logits.cols()) +
                         " columns, network has " + std::to_string(net.class_count()) + " classes");
    }
    if (labels.empty()) throw DataError("compute_loss: empty batch");
    const std::size_t n = labels.size();
    const std::size_t classes = logits.cols();
    const double inv_n = 1.0 / static_cast<double>(n);

    LossResult out;
    out.grad_logits = DenseMatrix(n, classes);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw DataError("compute_loss: label " + std::to_string(y) + " outside [0, " +
                            std::to_string(classes) + ")");
        }
        auto z = logits.row(i);
        auto g = out.grad_logits.row(i);
        switch (net.loss) {
            case LossKind::squared:
                for (std::size_t c = 0; c < classes; ++c) {
                    const double r = z[c] - (static_cast<int>(c) == y ? 1.0 : 0.0);
                    total += r * r;
                    g[c] = 2.0 * r * inv_n;
                }
                break;
            case LossKind::squared_hinge:
                for (std::size_t c = 0; c < classes; ++c) {
                    const double t = static_cast<int>(c) == y ? 1.0 : -1.0;
                    const double slack = std::max(0.0, 1.0 - t * z[c]);
                    total += slack * slack;
                    g[c] = -2.0 * slack * t * inv_n;
                }
                break;
            case LossKind::cross_entropy: {
                const double zmax = *std::max_element(z.begin(), z.end());
                double denom = 0.0;
                for (double v : z) denom += std::exp(v - zmax);
                const double log_denom = std::log(denom);
                total += -(z[static_cast<std::size_t>(y)] - zmax - log_denom);
                for (std::size_t c = 0; c < classes; ++c) {
                    const double p = std::exp(z[c] - zmax - log_denom);
                    g[c] = (p - (static_cast<int>(c) == y ? 1.0 : 0.0)) * inv_n;
                }
                break;
            }
        }
    }
    out.report.data_loss = total * inv_n;
    out.report.reg_loss = 0.5 * lambda * squared_parameter_norm(net);
    out.report.total = out.report.data_loss + out.report.reg_loss;

    const std::vector<int> predicted = argmax_rows(logits);
    for (std::size_t i = 0; i < n; ++i)
        if (predicted[i] == labels[i]) ++out.report.correct_count;
    return out;
}

/// Backpropagates grad_logits through the readout and every layer, then adds lambda * theta.
inline Gradients backward_full(const Network& net, const ForwardTrace& trace,
                               const DenseMatrix& grad_logits, double lambda) {
    if (trace.layers.size() != net.layers.size()) {
        throw ShapeError("backward_full: trace has " + std::to_string(trace.layers.size()) +
                         " layers, network has " + std::to_string(net.layers.size()));
    }
    if (grad_logits.rows() != trace.logits.rows() || grad_logits.cols() != net.class_count()) {
        throw ShapeError("backward_full: logit gradient " + grad_logits.shape() +
                         " does not match trace logits " + trace.logits.shape());
    }
    const DenseMatrix& last_output = trace.layers.back().output;
    if (last_output.cols() != net.readout_w.cols()) {
        throw ShapeError("backward_full: stale trace, last layer output " + last_output.shape());
    }

    Gradients grads;
    grads.readout_w = transposed_matmul(grad_logits, last_output);
    grads.readout_b.assign(net.class_count(), 0.0);
    for (std::size_t i = 0; i < grad_logits.rows(); ++i) {
        auto g = grad_logits.row(i);
        for (std::size_t c = 0; c < g.size(); ++c) grads.readout_b[c] += g[c];
    }

    grads.layers.resize(net.layers.size());
    DenseMatrix upstream = matmul(grad_logits, net.readout_w);
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        LayerBackward step = backward(net.layers[l], trace.layers[l], upstream);
        grads.layers[l] = std::move(step.params);
        upstream = std::move(step.grad_input);
    }

    if (lambda != 0.0) {
        auto params = parameter_spans(net);
        auto gs = gradient_spans(grads);
        for (std::size_t k = 0; k < params.size(); ++k)
            for (std::size_t j = 0; j < params[k].size(); ++j) gs[k][j] += lambda * params[k][j];
    }
    return grads;
}

}  // namespace rffnet

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "rffnet/errors.hpp"
#include "rffnet/matrix.hpp"
#include "rffnet/random.hpp"

namespace rffnet {

/// Per-feature batch normalization parameters and running statistics.
struct BatchNormState {
    std::vector<double> gamma;
    std::vector<double> beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double epsilon = 1e-5;

    static BatchNormState identity(std::size_t features, double momentum = 0.1,
                                   double epsilon = 1e-5) {
        return {std::vector<double>(features, 1.0), std::vector<double>(features, 0.0),
                std::vector<double>(features, 0.0), std::vector<double>(features, 1.0), momentum,
                epsilon};
    }

    std::size_t size() const noexcept { return gamma.size(); }

    friend bool operator==(const BatchNormState&, const BatchNormState&) = default;
};

/**
 * One random-Fourier-feature layer.
 *
 * Maps a d_in-dimensional row x to sqrt(1/D) [cos(omega x) || sin(omega x)],
 * optionally followed by batch normalization of the 2D features.
 */
struct RffLayer {
    DenseMatrix omega;  // D x d_in, no bias
    std::optional<BatchNormState> batchnorm;

    std::size_t input_dim() const noexcept { return omega.cols(); }
    std::size_t feature_count() const noexcept { return omega.rows(); }
    std::size_t output_dim() const noexcept { return 2 * omega.rows(); }

    friend bool operator==(const RffLayer&, const RffLayer&) = default;
};

enum class Mode { inference, training };

/// Everything backward needs from a forward call.
struct LayerCache {
    DenseMatrix input;           // batch x d_in
    DenseMatrix pre_activation;  // batch x D, f = X omega^T
    DenseMatrix features;        // batch x 2D, scaled cos/sin before batch norm
    DenseMatrix output;          // batch x 2D
    Mode mode = Mode::inference;
    // Batch-norm intermediates, empty when the layer has no batch norm.
    DenseMatrix normalized;
    std::vector<double> batch_mean;
    std::vector<double> batch_var;
    std::vector<double> inv_std;
};

struct LayerGradients {
    DenseMatrix omega;
    std::vector<double> gamma;  // empty without batch norm
    std::vector<double> beta;
};

struct LayerBackward {
    LayerGradients params;
    DenseMatrix grad_input;
};

/// Fresh layer with omega ~ N(0, stddev^2) entrywise.
inline RffLayer init_layer(std::size_t input_dim, std::size_t feature_count, double stddev, Rng& rng,
                           bool with_batchnorm = false) {
    if (input_dim < 1 || feature_count < 1) {
        throw ParameterError("init_layer: dimensions must be positive, got d_in=" +
                             std::to_string(input_dim) + " D=" + std::to_string(feature_count));
    }
    if (!(stddev > 0.0) || !std::isfinite(stddev)) {
        throw ParameterError("init_layer: stddev must be positive, got " + std::to_string(stddev));
    }
    RffLayer layer{gaussian_matrix(feature_count, input_dim, 0.0, stddev, rng), std::nullopt};
    if (with_batchnorm) layer.batchnorm = BatchNormState::identity(2 * feature_count);
    return layer;
}

inline double feature_scale(std::size_t feature_count) {
    return std::sqrt(1.0 / static_cast<double>(feature_count));
}

/// sqrt(1/D) [cos f || sin f] for pre-activations f (batch x D).
inline DenseMatrix trig_features(const DenseMatrix& pre_activation) {
    const std::size_t d = pre_activation.cols();
    const double scale = feature_scale(d);
    DenseMatrix out(pre_activation.rows(), 2 * d);
    for (std::size_t i = 0; i < pre_activation.rows(); ++i) {
        auto f = pre_activation.row(i);
        auto o = out.row(i);
        for (std::size_t m = 0; m < d; ++m) {
            o[m] = scale * std::cos(f[m]);
            o[m + d] = scale * std::sin(f[m]);
        }
    }
    return out;
}

/// Raw RFF map of rows of `x` under frequencies `omega`, no normalization.
inline DenseMatrix rff_features(const DenseMatrix& omega, const DenseMatrix& x) {
    if (x.cols() != omega.cols()) {
        throw ShapeError("rff_features: input has " + std::to_string(x.cols()) +
                         " columns, frequencies expect " + std::to_string(omega.cols()));
    }
    return trig_features(matmul_transposed(x, omega));
}

struct BatchNormForward {
    DenseMatrix output;
    DenseMatrix normalized;
    std::vector<double> mean;
    std::vector<double> var;
    std::vector<double> inv_std;
};

/**
 * Batch normalization of each column of `x`.
 *
 * Training mode normalizes with the biased batch variance and requires at
 * least two rows. Inference mode uses the running statistics. The running
 * statistics are not touched here; see update_running_stats.
 */
inline BatchNormForward batchnorm_forward(const BatchNormState& bn, const DenseMatrix& x, Mode mode) {
    const std::size_t n = x.rows();
    const std::size_t f = x.cols();
    if (bn.size() != f) {
        throw ShapeError("batchnorm_forward: state has " + std::to_string(bn.size()) +
                         " features, input has " + std::to_string(f));
    }
    BatchNormForward out;
    out.mean.assign(f, 0.0);
    out.var.assign(f, 0.0);
    if (mode == Mode::training) {
        if (n < 2) {
            throw ParameterError("batchnorm_forward: training mode needs a batch of at least 2");
        }
        for (std::size_t i = 0; i < n; ++i) {
            auto r = x.row(i);
            for (std::size_t j = 0; j < f; ++j) out.mean[j] += r[j];
        }
        for (double& m : out.mean) m /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto r = x.row(i);
            for (std::size_t j = 0; j < f; ++j) {
                const double c = r[j] - out.mean[j];
                out.var[j] += c * c;
            }
        }
        for (double& v : out.var) v /= static_cast<double>(n);
    } else {
        out.mean = bn.running_mean;
        out.var = bn.running_var;
    }
    out.inv_std.resize(f);
    for (std::size_t j = 0; j < f; ++j) out.inv_std[j] = 1.0 / std::sqrt(out.var[j] + bn.epsilon);

    out.normalized = DenseMatrix(n, f);
    out.output = DenseMatrix(n, f);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = x.row(i);
        auto z = out.normalized.row(i);
        auto o = out.output.row(i);
        for (std::size_t j = 0; j < f; ++j) {
            z[j] = (r[j] - out.mean[j]) * out.inv_std[j];
            o[j] = bn.gamma[j] * z[j] + bn.beta[j];
        }
    }
    return out;
}

struct BatchNormBackward {
    DenseMatrix grad_input;
    std::vector<double> grad_gamma;
    std::vector<double> grad_beta;
};

/// Gradient of a training-mode (batch statistics) or inference-mode normalization.
inline BatchNormBackward batchnorm_backward(const BatchNormState& bn, const DenseMatrix& normalized,
                                            std::span<const double> inv_std, Mode mode,
                                            const DenseMatrix& grad_output) {
    const std::size_t n = grad_output.rows();
    const std::size_t f = grad_output.cols();
    if (normalized.rows() != n || normalized.cols() != f || bn.size() != f || inv_std.size() != f) {
        throw ShapeError("batchnorm_backward: gradient " + grad_output.shape() +
                         " does not match cached activations " + normalized.shape());
    }
    BatchNormBackward out;
    out.grad_gamma.assign(f, 0.0);
    out.grad_beta.assign(f, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto g = grad_output.row(i);
        auto z = normalized.row(i);
        for (std::size_t j = 0; j < f; ++j) {
            out.grad_gamma[j] += g[j] * z[j];
            out.grad_beta[j] += g[j];
        }
    }
    out.grad_input = DenseMatrix(n, f);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto g = grad_output.row(i);
        auto z = normalized.row(i);
        auto gi = out.grad_input.row(i);
        for (std::size_t j = 0; j < f; ++j) {
            const double dz = g[j] * bn.gamma[j];
            if (mode == Mode::training) {
                // sum(dz) = gamma * grad_beta, sum(dz * z) = gamma * grad_gamma
                gi[j] = inv_std[j] * (dz - inv_n * bn.gamma[j] * out.grad_beta[j] -
                                      z[j] * inv_n * bn.gamma[j] * out.grad_gamma[j]);
            } else {
                gi[j] = inv_std[j] * dz;
            }
        }
    }
    return out;
}

/// Exponential moving average of batch statistics; running_var tracks the unbiased variance.
inline void update_running_stats(BatchNormState& bn, std::span<const double> batch_mean,
                                  std::span<const double> batch_var, std::size_t batch_size) {
    const double correction =
        batch_size > 1 ? static_cast<double>(batch_size) / static_cast<double>(batch_size - 1) : 1.0;
    for (std::size_t j = 0; j < bn.size(); ++j) {
        bn.running_mean[j] = (1.0 - bn.momentum) * bn.running_mean[j] + bn.momentum * batch_mean[j];
        bn.running_var[j] =
            (1.0 - bn.momentum) * bn.running_var[j] + bn.momentum * batch_var[j] * correction;
    }
}

struct LayerForward {
    DenseMatrix output;
    LayerCache cache;
};

inline LayerForward forward(const RffLayer& layer, const DenseMatrix& x, Mode mode) {
    if (x.cols() != layer.input_dim()) {
        throw ShapeError("rff forward: input has " + std::to_string(x.cols()) +
                         " columns, layer expects " + std::to_string(layer.input_dim()));
    }
    LayerCache cache;
    cache.mode = mode;
    cache.input = x;
    cache.pre_activation = matmul_transposed(x, layer.omega);
    cache.features = trig_features(cache.pre_activation);
    if (layer.batchnorm) {
        BatchNormForward bn = batchnorm_forward(*layer.batchnorm, cache.features, mode);
        cache.output = std::move(bn.output);
        cache.normalized = std::move(bn.normalized);
        cache.batch_mean = std::move(bn.mean);
        cache.batch_var = std::move(bn.var);
        cache.inv_std = std::move(bn.inv_std);
    } else {
        cache.output = cache.features;
    }
    DenseMatrix out = cache.output;
    return {std::move(out), std::move(cache)};
}

/**
 * Backward pass through one layer.
 *
 * For feature m the cosine output at index m and sine output at index m + D
 * share the row omega_m, so
 *   dL/dF[i,m] = sqrt(1/D) (-sin F[i,m] G[i,m] + cos F[i,m] G[i,m+D]),
 *   dL/domega  = dL/dF^T X,   dL/dX = dL/dF omega,
 * with G the gradient w.r.t. the pre-normalization features.
 */
inline LayerBackward backward(const RffLayer& layer, const LayerCache& cache,
                              const DenseMatrix& grad_output) {
    const std::size_t n = cache.input.rows();
    const std::size_t d = layer.feature_count();
    if (grad_output.rows() != n || grad_output.cols() != 2 * d) {
        throw ShapeError("rff backward: gradient is " + grad_output.shape() + ", expected " +
                         DenseMatrix::shape_string(n, 2 * d));
    }
    if (cache.pre_activation.rows() != n || cache.pre_activation.cols() != d ||
        cache.input.cols() != layer.input_dim()) {
        throw ShapeError("rff backward: cache does not belong to this layer");
    }

    LayerBackward out;
    const DenseMatrix* grad_features = &grad_output;
    BatchNormBackward bn_grad;
    if (layer.batchnorm) {
        bn_grad = batchnorm_backward(*layer.batchnorm, cache.normalized, cache.inv_std, cache.mode,
                                     grad_output);
        grad_features = &bn_grad.grad_input;
        out.params.gamma = std::move(bn_grad.grad_gamma);
        out.params.beta = std::move(bn_grad.grad_beta);
    }

    const double scale = feature_scale(d);
    DenseMatrix grad_pre(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        auto f = cache.pre_activation.row(i);
        auto g = grad_features->row(i);
        auto o = grad_pre.row(i);
        for (std::size_t m = 0; m < d; ++m) {
            o[m] = scale * (-std::sin(f[m]) * g[m] + std::cos(f[m]) * g[m + d]);
        }
    }
    out.params.omega = transposed_matmul(grad_pre, cache.input);
    out.grad_input = matmul(grad_pre, layer.omega);
    return out;
}

}  // namespace rffnet

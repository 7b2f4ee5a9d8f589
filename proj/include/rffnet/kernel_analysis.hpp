#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rffnet/eigen.hpp"
#include "rffnet/errors.hpp"
#include "rffnet/matrix.hpp"
#include "rffnet/random.hpp"
#include "rffnet/rff_layer.hpp"

namespace rffnet {

/// Gram matrix of one layer's raw RFF features.
struct KernelMatrix {
    DenseMatrix values;
    std::size_t layer_index = 0;
};

/// K = S S^T. Rows of `features` should be raw (pre-batch-norm) RFF outputs.
inline KernelMatrix empirical_kernel(const DenseMatrix& features, std::size_t layer_index = 0) {
    if (features.rows() == 0 || features.cols() == 0) {
        throw DataError("empirical_kernel: empty feature matrix");
    }
    KernelMatrix k{matmul_transposed(features, features), layer_index};
    // The product is symmetric up to rounding in the accumulation order; mirror it exactly.
    for (std::size_t i = 0; i < k.values.rows(); ++i)
        for (std::size_t j = i + 1; j < k.values.cols(); ++j) k.values(j, i) = k.values(i, j);
    return k;
}

struct KernelCheck {
    double max_asymmetry = 0.0;
    double min_eigenvalue = 0.0;
    double max_diagonal_error = 0.0;  // max |K_ii - 1|

    bool symmetric(double tol = 1e-10) const { return max_asymmetry <= tol; }
    bool psd(double tol = 1e-8) const { return min_eigenvalue >= -tol; }
    bool unit_diagonal(double tol = 1e-10) const { return max_diagonal_error <= tol; }
    bool ok() const { return symmetric() && psd() && unit_diagonal(); }
};

inline KernelCheck check_kernel(const DenseMatrix& k) {
    if (k.rows() != k.cols()) throw ShapeError("check_kernel: matrix is " + k.shape());
    KernelCheck out;
    for (std::size_t i = 0; i < k.rows(); ++i) {
        out.max_diagonal_error = std::max(out.max_diagonal_error, std::abs(k(i, i) - 1.0));
        for (std::size_t j = i + 1; j < k.cols(); ++j)
            out.max_asymmetry = std::max(out.max_asymmetry, std::abs(k(i, j) - k(j, i)));
    }
    SymmetricEigen eig = jacobi_eigen(k);
    out.min_eigenvalue = eig.values.empty() ? 0.0 : eig.values.back();
    return out;
}

// ---------------------------------------------------------------------------
// Shift-invariant kernels and their spectral densities.

enum class DensityKind { rbf, laplacian, cauchy };

inline std::string_view to_string(DensityKind kind) {
    switch (kind) {
        case DensityKind::rbf: return "rbf";
        case DensityKind::laplacian: return "laplacian";
        case DensityKind::cauchy: return "cauchy";
    }
    throw ParameterError("unknown density kind");
}

inline DensityKind parse_density_kind(std::string_view name) {
    if (name == "rbf" || name == "gaussian") return DensityKind::rbf;
    if (name == "laplacian") return DensityKind::laplacian;
    if (name == "cauchy") return DensityKind::cauchy;
    throw ParameterError("unknown spectral density '" + std::string(name) + "'");
}

/**
 * Spectral density of a shift-invariant kernel with bandwidth s.
 *
 *   rbf:       k(z) = exp(-|z|^2 / (2 s^2)),        omega_j ~ N(0, 1/s^2)
 *   laplacian: k(z) = exp(-|z|_1 / s),              omega_j ~ Cauchy(0, 1/s)
 *   cauchy:    k(z) = prod_j 1 / (1 + z_j^2 / s^2), omega_j ~ Laplace(0, 1/s)
 */
struct SpectralDensity {
    DensityKind kind = DensityKind::rbf;
    double bandwidth = 1.0;
};

inline void validate(const SpectralDensity& density) {
    if (!(density.bandwidth > 0.0) || !std::isfinite(density.bandwidth)) {
        throw ParameterError("spectral density bandwidth must be positive");
    }
}

inline DenseMatrix sample_frequencies(const SpectralDensity& density, std::size_t feature_count,
                                      std::size_t dim, Rng& rng) {
    validate(density);
    if (feature_count < 1 || dim < 1) {
        throw ParameterError("sample_frequencies: D and d must be positive");
    }
    const double scale = 1.0 / density.bandwidth;
    DenseMatrix omega(feature_count, dim);
    for (double& w : omega.values()) {
        switch (density.kind) {
            case DensityKind::rbf: w = scale * rng.normal(); break;
            case DensityKind::laplacian: w = rng.cauchy(scale); break;
            case DensityKind::cauchy: w = rng.laplace(scale); break;
        }
    }
    return omega;
}

/// Closed-form k(u - v) for the kernel whose spectral density is `density`.
inline double exact_kernel(const SpectralDensity& density, std::span<const double> u,
                           std::span<const double> v) {
    validate(density);
    if (u.size() != v.size()) throw ShapeError("exact_kernel: point dimensions differ");
    const double s = density.bandwidth;
    switch (density.kind) {
        case DensityKind::rbf: {
            double sq = 0.0;
            for (std::size_t j = 0; j < u.size(); ++j) sq += (u[j] - v[j]) * (u[j] - v[j]);
            return std::exp(-sq / (2.0 * s * s));
        }
        case DensityKind::laplacian: {
            double l1 = 0.0;
            for (std::size_t j = 0; j < u.size(); ++j) l1 += std::abs(u[j] - v[j]);
            return std::exp(-l1 / s);
        }
        case DensityKind::cauchy: {
            double k = 1.0;
            for (std::size_t j = 0; j < u.size(); ++j) {
                const double z = (u[j] - v[j]) / s;
                k /= 1.0 + z * z;
            }
            return k;
        }
    }
    throw ParameterError("unknown density kind");
}

using PointPair = std::pair<std::vector<double>, std::vector<double>>;

struct ApproxError {
    double mean_error = 0.0;
    double max_error = 0.0;
};

/// |<psi(u), psi(v)> - k(u - v)| over `pairs`, for a fixed frequency matrix.
inline ApproxError rff_approx_error(const SpectralDensity& density, const DenseMatrix& omega,
                                    std::span<const PointPair> pairs) {
    if (pairs.empty()) throw ParameterError("rff_approx_error: no point pairs");
    ApproxError out;
    const std::size_t d = omega.cols();
    for (const auto& [u, v] : pairs) {
        if (u.size() != d || v.size() != d) {
            throw ShapeError("rff_approx_error: point dimension " + std::to_string(u.size()) +
                             " does not match frequencies " + omega.shape());
        }
        DenseMatrix uv(2, d);
        std::ranges::copy(u, uv.row(0).begin());
        std::ranges::copy(v, uv.row(1).begin());
        const DenseMatrix psi = rff_features(omega, uv);
        double estimate = 0.0;
        for (std::size_t j = 0; j < psi.cols(); ++j) estimate += psi(0, j) * psi(1, j);
        const double err = std::abs(estimate - exact_kernel(density, u, v));
        out.mean_error += err;
        out.max_error = std::max(out.max_error, err);
    }
    out.mean_error /= static_cast<double>(pairs.size());
    return out;
}

/// Draws D frequencies from `density` and measures the approximation error.
inline ApproxError rff_approx_error(const SpectralDensity& density, std::size_t feature_count,
                                    std::span<const PointPair> pairs, Rng& rng) {
    if (pairs.empty()) throw ParameterError("rff_approx_error: no point pairs");
    const DenseMatrix omega =
        sample_frequencies(density, feature_count, pairs.front().first.size(), rng);
    return rff_approx_error(density, omega, pairs);
}

/**
 * Closed-form kernel of an RBF map stacked on unit-norm features.
 *
 * With |phi(u) - phi(v)|^2 = 2 - 2 k_inner and an outer RBF kernel
 * exp(-lambda |.|^2), the composition is exp(-2 lambda) exp(2 lambda k_inner).
 * An outer RBF of bandwidth s corresponds to lambda = 1 / (2 s^2).
 */
inline double composed_rbf_oracle(double k_inner, double lambda) {
    if (!(k_inner >= 0.0 && k_inner <= 1.0)) {
        throw ParameterError("composed_rbf_oracle: inner kernel value " + std::to_string(k_inner) +
                             " outside [0, 1]");
    }
    if (!(lambda > 0.0)) throw ParameterError("composed_rbf_oracle: lambda must be positive");
    return std::exp(-2.0 * lambda) * std::exp(2.0 * lambda * k_inner);
}

// ---------------------------------------------------------------------------
// Kernel PCA

struct KpcaResult {
    DenseMatrix coordinates;          // n x k
    std::vector<double> eigenvalues;  // of the centered kernel, descending
    bool degenerate = false;          // centered kernel numerically zero
};

inline DenseMatrix double_center(const DenseMatrix& k) {
    const std::size_t n = k.rows();
    std::vector<double> row_mean(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) row_mean[i] += k(i, j);
        total += row_mean[i];
        row_mean[i] /= static_cast<double>(n);
    }
    total /= static_cast<double>(n * n);
    DenseMatrix c(n, n);
    // K is symmetric, so column means equal row means.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) c(i, j) = k(i, j) - row_mean[i] - row_mean[j] + total;
    return c;
}

/**
 * Projects the samples of `k` onto its top-`components` kernel principal axes.
 *
 * Coordinates are eigenvectors of the double-centered kernel scaled by
 * sqrt(eigenvalue). Each component is signed so that its largest-magnitude
 * coordinate is positive (first index wins on ties).
 */
inline KpcaResult kpca_project(const KernelMatrix& k, std::size_t components) {
    const std::size_t n = k.values.rows();
    if (k.values.cols() != n || n == 0) {
        throw ShapeError("kpca_project: kernel matrix is " + k.values.shape());
    }
    if (components < 1 || components > n) {
        throw ParameterError("kpca_project: components=" + std::to_string(components) +
                             " outside [1, " + std::to_string(n) + "]");
    }
    const DenseMatrix centered = double_center(k.values);
    KpcaResult out;
    out.coordinates = DenseMatrix(n, components);
    const double scale = std::max(max_abs(k.values), std::numeric_limits<double>::min());
    if (max_abs(centered) <= 1e-12 * scale) {
        out.eigenvalues.assign(components, 0.0);
        out.degenerate = true;
        return out;
    }
    SymmetricEigen eig = sym_eig_topk(centered, components);
    out.eigenvalues = eig.values;
    for (std::size_t c = 0; c < components; ++c) {
        const double lambda = std::max(eig.values[c], 0.0);
        const double root = std::sqrt(lambda);
        std::size_t pivot = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (std::abs(eig.vectors(i, c)) > std::abs(eig.vectors(pivot, c))) pivot = i;
        const double sign = eig.vectors(pivot, c) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) out.coordinates(i, c) = sign * root * eig.vectors(i, c);
    }
    return out;
}

// ---------------------------------------------------------------------------

struct Histogram {
    std::vector<double> edges;  // bins + 1, equal width over [min, max]
    std::vector<std::size_t> counts;
};

inline Histogram histogram(std::span<const double> values, std::size_t bins) {
    if (bins < 1) throw ParameterError("histogram: bins must be at least 1");
    if (values.empty()) throw DataError("histogram: no values");
    const auto [lo_it, hi_it] = std::ranges::minmax_element(values);
    const double lo = *lo_it;
    const double hi = *hi_it;
    Histogram h;
    h.edges.resize(bins + 1);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + width * static_cast<double>(b);
    h.edges.back() = hi;
    h.counts.assign(bins, 0);
    for (double v : values) {
        std::size_t b = 0;
        if (width > 0.0) {
            b = static_cast<std::size_t>((v - lo) / width);
            b = std::min(b, bins - 1);
        }
        ++h.counts[b];
    }
    return h;
}

/// Histogram of column `dim_index` of the layer's frequency matrix.
inline Histogram omega_histogram(const RffLayer& layer, std::size_t dim_index, std::size_t bins) {
    if (dim_index >= layer.input_dim()) {
        throw ParameterError("omega_histogram: dimension " + std::to_string(dim_index) +
                             " out of range for d_in=" + std::to_string(layer.input_dim()));
    }
    std::vector<double> column(layer.feature_count());
    for (std::size_t m = 0; m < column.size(); ++m) column[m] = layer.omega(m, dim_index);
    return histogram(column, bins);
}

}  // namespace rffnet

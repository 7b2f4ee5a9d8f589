#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "rffnet/errors.hpp"
#include "rffnet/matrix.hpp"

namespace rffnet {

/// Eigenpairs of a symmetric matrix. Column j of `vectors` pairs with `values[j]`.
struct SymmetricEigen {
    std::vector<double> values;  // descending
    DenseMatrix vectors;         // n x k, unit-norm columns
};

inline bool is_symmetric(const DenseMatrix& a, double tol) {
    if (a.rows() != a.cols()) return false;
    const double scale = std::max(1.0, max_abs(a));
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j)
            if (std::abs(a(i, j) - a(j, i)) > tol * scale) return false;
    return true;
}

/**
 * Full eigendecomposition by cyclic Jacobi rotations.
 *
 * Sweeps over every off-diagonal pair until the off-diagonal Frobenius mass
 * drops below `rel_tol` times the matrix norm. Cubic per sweep; meant for
 * diagnostic-sized matrices (a few hundred to a few thousand rows).
 */
inline SymmetricEigen jacobi_eigen(const DenseMatrix& input, double rel_tol = 1e-15,
                                   int max_sweeps = 100) {
    if (input.rows() != input.cols()) {
        throw ShapeError("jacobi_eigen: matrix must be square, got " + input.shape());
    }
    const std::size_t n = input.rows();
    DenseMatrix a = input;
    // Average the two triangles so rotations see an exactly symmetric matrix.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (a(i, j) + a(j, i));

    DenseMatrix v = DenseMatrix::identity(n);
    const double norm = frobenius_norm(a);
    const double threshold = rel_tol * std::max(norm, 1e-300);

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(2.0 * off) <= threshold) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double app = a(p, p);
                const double aqq = a(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::ranges::stable_sort(order, [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    SymmetricEigen out;
    out.values.resize(n);
    out.vectors = DenseMatrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = a(order[j], order[j]);
        for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = v(k, order[j]);
    }
    return out;
}

/// Top-k eigenpairs (descending) of a symmetric matrix.
inline SymmetricEigen sym_eig_topk(const DenseMatrix& a, std::size_t k) {
    if (a.rows() != a.cols()) {
        throw ShapeError("sym_eig_topk: matrix must be square, got " + a.shape());
    }
    if (k < 1 || k > a.rows()) {
        throw ParameterError("sym_eig_topk: k=" + std::to_string(k) + " outside [1, " +
                             std::to_string(a.rows()) + "]");
    }
    if (!is_symmetric(a, 1e-9)) throw SymmetryError("sym_eig_topk: matrix is not symmetric");

    SymmetricEigen full = jacobi_eigen(a);
    SymmetricEigen out;
    out.values.assign(full.values.begin(), full.values.begin() + static_cast<std::ptrdiff_t>(k));
    out.vectors = DenseMatrix(a.rows(), k);
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t j = 0; j < k; ++j) out.vectors(r, j) = full.vectors(r, j);
    return out;
}

}  // namespace rffnet

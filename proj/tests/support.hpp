#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>

#include "rffnet/matrix.hpp"
#include "rffnet/random.hpp"

namespace rffnet::testing {

inline DenseMatrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    DenseMatrix m(rows, cols);
    for (double& v : m.values()) v = rng.uniform(-scale, scale);
    return m;
}

/// |a - b| / max(|a|, |b|), or 0 when |a - b| is within the absolute floor.
inline double relative_error(double a, double b, double floor = 1e-8) {
    const double diff = std::abs(a - b);
    if (diff <= floor) return 0.0;
    return diff / std::max(std::abs(a), std::abs(b));
}

/**
 * Largest relative error between `analytic` and central differences of
 * `objective` with respect to every entry of `params`. The objective must read
 * `params` by reference.
 */
inline double max_fd_error(std::span<double> params, std::span<const double> analytic,
                           const std::function<double()>& objective, double h = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        const double plus = objective();
        params[i] = saved - h;
        const double minus = objective();
        params[i] = saved;
        worst = std::max(worst, relative_error(analytic[i], (plus - minus) / (2.0 * h)));
    }
    return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("rffnet_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace rffnet::testing

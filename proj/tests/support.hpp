// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the test binaries: seeded randomness and finite differences.
#pragma once

#include "splatswap/gaussians.hpp"
#include "splatswap/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace splatswap::test {

inline std::mt19937_64 &rng() {
    static std::mt19937_64 gen(12345);
    return gen;
}

inline double uniform(double lo = -1, double hi = 1) { return std::uniform_real_distribution<double>(lo, hi)(rng()); }

inline Vec3<double> random_vec3(double lo = -1, double hi = 1) { return {uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)}; }

inline Quat<double> random_quat() {
    Quat<double> q(uniform(), uniform(), uniform(), uniform());
    return q.normalized();
}

inline Image<double> random_image(Index h, Index w, double lo = 0, double hi = 1) {
    Image<double> img(h, w);
    for (int c = 0; c < 3; ++c)
        for (Index i = 0; i < img[c].size(); ++i) img[c].data()[i] = uniform(lo, hi);
    return img;
}

/// Errors normalized by max(|a|, |f|, floor) where floor = 1e-3 · max|f| over the whole set.
struct GradCheck {
    std::vector<double> analytic, numeric;

    void add(double a, double f) {
        analytic.push_back(a);
        numeric.push_back(f);
    }
    double max_rel() const {
        double scale = 0;
        for (double f : numeric) scale = std::max(scale, std::abs(f));
        const double floor = std::max(1e-3 * scale, 1e-12);
        double worst = 0;
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            const double a = analytic[i], f = numeric[i];
            worst = std::max(worst, std::abs(a - f) / std::max({std::abs(a), std::abs(f), floor}));
        }
        return worst;
    }
};

/// Central difference of f around x[i] (restores x).
template <class F> double central(double &x, double eps, F &&f) {
    const double x0 = x;
    x = x0 + eps;
    const double fp = f();
    x = x0 - eps;
    const double fm = f();
    x = x0;
    return (fp - fm) / (2 * eps);
}

/// Fresh empty directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string &name) {
    const auto dir = std::filesystem::temp_directory_path() / ("splatswap_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace splatswap::test

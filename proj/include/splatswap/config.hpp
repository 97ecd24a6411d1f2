// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
// Training configuration and its TOML-style text form:
//
//   # comment
//   stage_a_iters = 3000
//   background = [0, 0, 0]
//   [weights]
//   lambda_k = [0.9, 0.001, 0.1]
#pragma once

#include "splatswap/losses.hpp"
#include "splatswap/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace splatswap {

struct LearningRates {
    double mu = 1.6e-4;
    double rot = 1e-3;
    double scale = 5e-3;
    double opacity = 5e-2;
    double sh = 2.5e-3;
};

struct TrainConfig {
    int stage_a_iters = 3000;
    int stage_b_iters = 1000;
    LearningRates lr;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-15;

    int densify_interval = 100;
    int densify_from = 300;
    int densify_until = 2500;
    int densify_from_b = 100;
    int densify_until_b = 800;
    bool densify_in_stage_b = true;
    /// Mean screen-space positional gradient (NDC units) above which a splat densifies.
    double densify_grad_threshold = 2e-4;
    /// Largest local scale component above which a splat is split instead of cloned.
    double split_scale_threshold = 0.3;
    double opacity_prune_threshold = 0.005;
    int max_splats = 20000;

    std::uint64_t seed = 0;
    Vec3<double> background = Vec3<double>::Zero();
    LossWeights weights;

    /// Throws ConfigError on non-positive iterations or rates and invalid weights.
    void validate() const;
};

/// Missing keys keep their defaults. Unknown keys and malformed values throw ConfigError.
TrainConfig parse_config(const std::string &text);
TrainConfig load_config(const std::filesystem::path &path);

/// Every key, with round-trip precision.
std::string serialize_config(const TrainConfig &config);

/// FNV-1a of the serialized form.
std::uint64_t config_hash(const TrainConfig &config);

} // namespace splatswap

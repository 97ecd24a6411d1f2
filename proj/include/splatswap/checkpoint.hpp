// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint = cloud binary + JSON sidecar (<ckpt>.json) + optimizer state (<ckpt>.optim).
#pragma once

#include "splatswap/config.hpp"
#include "splatswap/training.hpp"

#include <filesystem>
#include <string>

namespace splatswap {

struct CheckpointInfo {
    std::string stage = "A";
    int iteration = 0;
    std::uint64_t config_hash = 0;
    std::string config; ///< serialized TrainConfig
    std::string rng_state;
    std::string mesh_id;
    VecX<double> shape;
    std::string scene; ///< absolute scene directory
};

std::filesystem::path sidecar_path(const std::filesystem::path &ckpt);
std::filesystem::path optimizer_path(const std::filesystem::path &ckpt);

/// Writes all three files atomically. `info.iteration` and `info.rng_state` are taken from `state`.
void save_checkpoint(const std::filesystem::path &ckpt, const TrainState &state, CheckpointInfo info);

struct Checkpoint {
    GaussianCloud<double> cloud;
    CheckpointInfo info;

    TrainConfig config() const { return parse_config(info.config); }
};

/// Cloud and sidecar. Throws IoError on missing or corrupt files.
Checkpoint load_checkpoint(const std::filesystem::path &ckpt);

/// Full-precision training state for --resume.
TrainState load_train_state(const std::filesystem::path &ckpt, const CheckpointInfo &info);

} // namespace splatswap

// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
// Two-stage optimization: avatar construction (A) and identity finetuning (B).
#pragma once

#include "splatswap/config.hpp"
#include "splatswap/gaussians.hpp"
#include "splatswap/identity.hpp"
#include "splatswap/renderer.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace splatswap {

struct TrainingView {
    FrameParams<double> params;
    Camera<double> camera;
    Image<double> target; ///< matte applied, composited on the training background
};

struct Scene {
    std::string mesh_id;
    RiggedMesh<double> mesh;
    std::vector<TrainingView> views;
};

/// Reads DIR/tracking.json with its frames and mattes.
Scene load_scene(const std::filesystem::path &dir, const Vec3<double> &background = Vec3<double>::Zero());

/// Adam moments per parameter group and the shared step count.
struct AdamState {
    SplatParams<double> m, v;
    std::int64_t step = 0;

    static AdamState zeros(Index n) { return {SplatParams<double>::zeros(n), SplatParams<double>::zeros(n), 0}; }
    Index size() const { return m.size(); }
};

/// One Adam update per group rate, then quaternion renormalization.
/// A non-finite gradient throws NumericError naming `iteration` and the splat.
void adam_step(SplatParams<double> &params, const SplatParams<double> &grads, AdamState &state,
               const TrainConfig &config, long long iteration = 0);

struct DensifyAccumulator {
    VecX<double> grad_sum;
    VecX<double> count;

    static DensifyAccumulator zeros(Index n) { return {VecX<double>::Zero(n), VecX<double>::Zero(n)}; }
    void add(const VecX<double> &screen_grad, const std::vector<ProjectedSplat<double>> &projected);
};

struct DensifyReport {
    Index cloned = 0;
    Index split = 0;
    Index pruned = 0;
    /// Row of the pre-call cloud each output row descends from.
    std::vector<Index> ancestor;
};

/// Clones or splits splats whose mean screen gradient exceeds the threshold, then prunes
/// low-opacity splats while keeping one per face. The optimizer state follows the rows
/// (fresh rows start with zero moments) and the accumulator is reset.
DensifyReport densify_and_prune(GaussianCloud<double> &cloud, AdamState &adam, DensifyAccumulator &accum,
                                const TrainConfig &config, std::mt19937_64 &rng);

struct LogRow {
    int iter = 0;
    double l_rec = 0, l_scale = 0, l_pos = 0, l_id = 0, total = 0;
    Index n_splats = 0;
};

struct TrainState {
    GaussianCloud<double> cloud;
    AdamState adam;
    DensifyAccumulator accum;
    std::mt19937_64 rng;
    int iteration = 0;
    std::vector<LogRow> log;

    static TrainState start(GaussianCloud<double> cloud, std::uint64_t seed);
};

/// Precomputed source embeddings and the differentiable encoders that score renders.
struct IdentityTarget {
    std::vector<IdentityEmbedding> sources;
    std::vector<std::shared_ptr<IdentityEncoder>> encoders;

    static IdentityTarget from_source(const Image<double> &source,
                                      std::vector<std::shared_ptr<IdentityEncoder>> encoders);
};

/// Called after each iteration; the default CLI uses it for progress.
using IterationHook = std::function<void(const TrainState &)>;

/// Runs until state.iteration reaches config.stage_a_iters.
void train_stage_a(TrainState &state, const Scene &scene, const TrainConfig &config, const IterationHook &hook = {});

/// Runs until state.iteration reaches config.stage_b_iters.
void train_stage_b(TrainState &state, const Scene &scene, const IdentityTarget &identity, const TrainConfig &config,
                   const IterationHook &hook = {});

/// Per-view renders of the current cloud on the training background.
std::vector<RenderedImage<double>> render_views(const GaussianCloud<double> &cloud, const Scene &scene,
                                                const Vec3<double> &background);

double psnr(const Image<double> &a, const Image<double> &b);

/// Mean PSNR over the scene's views.
double mean_psnr(const GaussianCloud<double> &cloud, const Scene &scene, const Vec3<double> &background);

/// Mean identity loss over the scene's views.
double mean_identity_loss(const GaussianCloud<double> &cloud, const Scene &scene, const IdentityTarget &identity,
                          const TrainConfig &config);

/// CSV with header iter,l_rec,l_scale,l_pos,l_id,total,n_splats.
std::string log_csv(const std::vector<LogRow> &rows, bool header = true);

} // namespace splatswap

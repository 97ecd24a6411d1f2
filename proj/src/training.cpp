// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/training.hpp"

#include "splatswap/errors.hpp"
#include "splatswap/io.hpp"
#include "splatswap/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace splatswap {

namespace fs = std::filesystem;

Scene load_scene(const fs::path &dir, const Vec3<double> &background) {
    const Tracking tracking = load_tracking(dir / "tracking.json");
    Scene scene;
    scene.mesh_id = tracking.mesh_id;
    scene.mesh = mesh_from_id(tracking.mesh_id);
    for (std::size_t i = 0; i < tracking.frames.size(); ++i) {
        const TrackedFrame &f = tracking.frames[i];
        TrainingView view{f.params, f.camera, {}};
        const Image<double> frame = read_png_rgb(dir / f.target_frame_path);
        const Plane<double> matte = read_png_gray(dir / f.matte_path);
        if (frame.width() != f.camera.width || frame.height() != f.camera.height || !same_size(frame, matte))
            throw ParameterError("frame " + std::to_string(i) + ": image, matte and camera sizes differ");
        view.target = Image<double>(frame.height(), frame.width());
        for (int c = 0; c < 3; ++c) view.target[c] = frame[c] * matte + background[c] * (1.0 - matte);
        scene.views.push_back(std::move(view));
    }
    // Surfaces dimension mismatches before training starts.
    for (const auto &v : scene.views) deform_mesh(scene.mesh, v.params);
    return scene;
}

namespace {

template <class P, class G, class M>
void adam_update(P &param, const G &grad, M &m, M &v, double lr, const TrainConfig &cfg, double bc1, double bc2) {
    m = cfg.beta1 * m.array() + (1 - cfg.beta1) * grad.array();
    v = cfg.beta2 * v.array() + (1 - cfg.beta2) * grad.array().square();
    param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.epsilon);
}

template <class G> void check_finite(const G &grad, const char *group, long long iteration) {
    for (Index i = 0; i < grad.rows(); ++i)
        if (!grad.row(i).allFinite())
            throw NumericError(std::string("non-finite ") + group + " gradient at iteration " +
                                   std::to_string(iteration) + ", splat " + std::to_string(i),
                               i);
}

void zero_rows_from(SplatParams<double> &p, Index from) {
    const Index n = p.size() - from;
    p.mu_local.bottomRows(n).setZero();
    p.rot_local.bottomRows(n).setZero();
    p.scale_raw.bottomRows(n).setZero();
    p.opacity_raw.tail(n).setZero();
    p.sh.bottomRows(n).setZero();
}

} // namespace

void adam_step(SplatParams<double> &params, const SplatParams<double> &grads, AdamState &state,
               const TrainConfig &config, long long iteration) {
    if (grads.size() != params.size() || state.size() != params.size())
        throw ContractError("adam_step: parameter, gradient and state sizes differ");
    check_finite(grads.mu_local, "position", iteration);
    check_finite(grads.rot_local, "rotation", iteration);
    check_finite(grads.scale_raw, "scale", iteration);
    check_finite(grads.opacity_raw, "opacity", iteration);
    check_finite(grads.sh, "colour", iteration);
    ++state.step;
    const double bc1 = 1 - std::pow(config.beta1, static_cast<double>(state.step));
    const double bc2 = 1 - std::pow(config.beta2, static_cast<double>(state.step));
    adam_update(params.mu_local, grads.mu_local, state.m.mu_local, state.v.mu_local, config.lr.mu, config, bc1, bc2);
    adam_update(params.rot_local, grads.rot_local, state.m.rot_local, state.v.rot_local, config.lr.rot, config, bc1, bc2);
    adam_update(params.scale_raw, grads.scale_raw, state.m.scale_raw, state.v.scale_raw, config.lr.scale, config, bc1,
                bc2);
    adam_update(params.opacity_raw, grads.opacity_raw, state.m.opacity_raw, state.v.opacity_raw, config.lr.opacity,
                config, bc1, bc2);
    adam_update(params.sh, grads.sh, state.m.sh, state.v.sh, config.lr.sh, config, bc1, bc2);
    normalize_rotations(params);
}

void DensifyAccumulator::add(const VecX<double> &screen_grad, const std::vector<ProjectedSplat<double>> &projected) {
    if (screen_grad.size() != grad_sum.size() || projected.size() != static_cast<std::size_t>(grad_sum.size()))
        throw ContractError("densify accumulator does not match the cloud");
    for (Index i = 0; i < grad_sum.size(); ++i) {
        if (!projected[static_cast<std::size_t>(i)].visible) continue;
        grad_sum[i] += screen_grad[i];
        count[i] += 1;
    }
}

DensifyReport densify_and_prune(GaussianCloud<double> &cloud, AdamState &adam, DensifyAccumulator &accum,
                                const TrainConfig &config, std::mt19937_64 &rng) {
    const Index n = cloud.size();
    if (accum.grad_sum.size() != n || adam.size() != n) throw ContractError("densify: state does not match the cloud");

    std::vector<Index> candidates;
    VecX<double> mean = VecX<double>::Zero(n);
    for (Index i = 0; i < n; ++i) {
        if (accum.count[i] > 0) mean[i] = accum.grad_sum[i] / accum.count[i];
        if (mean[i] > config.densify_grad_threshold) candidates.push_back(i);
    }
    std::stable_sort(candidates.begin(), candidates.end(), [&](Index a, Index b) { return mean[a] > mean[b]; });
    const Index room = std::max<Index>(0, static_cast<Index>(config.max_splats) - n);
    if (static_cast<Index>(candidates.size()) > room) candidates.resize(static_cast<std::size_t>(room));
    std::sort(candidates.begin(), candidates.end());

    DensifyReport report;
    std::vector<char> is_split(static_cast<std::size_t>(n), 0);
    std::vector<Index> clones, splits;
    for (Index i : candidates) {
        if (cloud.params.scale_raw.row(i).maxCoeff() > std::log(config.split_scale_threshold)) {
            is_split[static_cast<std::size_t>(i)] = 1;
            splits.push_back(i);
        } else {
            clones.push_back(i);
        }
    }
    std::vector<Index> rows;
    for (Index i = 0; i < n; ++i)
        if (!is_split[static_cast<std::size_t>(i)]) rows.push_back(i);
    const Index kept = static_cast<Index>(rows.size());
    rows.insert(rows.end(), clones.begin(), clones.end());
    for (Index i : splits) rows.insert(rows.end(), {i, i});

    SplatParams<double> params = cloud.params.gather(rows);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Index first_child = kept + static_cast<Index>(clones.size());
    for (Index r = first_child; r < static_cast<Index>(rows.size()); ++r) {
        const Vec3<double> s = params.scale_raw.row(r).array().exp().transpose();
        Vec3<double> z;
        for (int k = 0; k < 3; ++k) z[k] = normal(rng);
        const Vec4<double> q = params.rot_local.row(r).transpose();
        const Mat3<double> R = Quat<double>(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
        params.mu_local.row(r) += (R * s.cwiseProduct(z)).transpose();
        params.scale_raw.row(r).array() -= std::log(1.6);
    }
    AdamState next{adam.m.gather(rows), adam.v.gather(rows), adam.step};
    zero_rows_from(next.m, kept);
    zero_rows_from(next.v, kept);
    std::vector<std::uint32_t> parents(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) parents[k] = cloud.parent_face[static_cast<std::size_t>(rows[k])];
    report.cloned = static_cast<Index>(clones.size());
    report.split = static_cast<Index>(splits.size());

    // Prune, retaining the most opaque splat of any face that would otherwise go empty.
    const Index m = static_cast<Index>(rows.size());
    std::vector<char> keep(static_cast<std::size_t>(m), 1);
    std::unordered_map<std::uint32_t, Index> best;
    std::unordered_map<std::uint32_t, bool> survives;
    for (Index i = 0; i < m; ++i) {
        const auto face = parents[static_cast<std::size_t>(i)];
        const double op = 1.0 / (1.0 + std::exp(-params.opacity_raw[i]));
        if (op < config.opacity_prune_threshold) keep[static_cast<std::size_t>(i)] = 0;
        else survives[face] = true;
        auto it = best.find(face);
        if (it == best.end() || params.opacity_raw[i] > params.opacity_raw[it->second]) best[face] = i;
    }
    for (const auto &[face, i] : best)
        if (!survives.count(face)) keep[static_cast<std::size_t>(i)] = 1;

    std::vector<Index> final_rows;
    for (Index i = 0; i < m; ++i)
        if (keep[static_cast<std::size_t>(i)]) final_rows.push_back(i);
    report.pruned = m - static_cast<Index>(final_rows.size());

    cloud.params = params.gather(final_rows);
    adam = AdamState{next.m.gather(final_rows), next.v.gather(final_rows), next.step};
    std::vector<std::uint32_t> final_parents;
    for (Index i : final_rows) {
        final_parents.push_back(parents[static_cast<std::size_t>(i)]);
        report.ancestor.push_back(rows[static_cast<std::size_t>(i)]);
    }
    cloud.parent_face = std::move(final_parents);
    accum = DensifyAccumulator::zeros(cloud.size());
    return report;
}

TrainState TrainState::start(GaussianCloud<double> cloud, std::uint64_t seed) {
    TrainState st;
    const Index n = cloud.size();
    st.cloud = std::move(cloud);
    st.adam = AdamState::zeros(n);
    st.accum = DensifyAccumulator::zeros(n);
    st.rng.seed(seed);
    return st;
}

IdentityTarget IdentityTarget::from_source(const Image<double> &source,
                                           std::vector<std::shared_ptr<IdentityEncoder>> encoders) {
    IdentityTarget t;
    for (const auto &e : encoders) t.sources.push_back(e->encode(source));
    t.encoders = std::move(encoders);
    return t;
}

namespace {

std::vector<TriangleFrame<double>> view_frames(const Scene &scene, const TrainingView &view) {
    return triangle_frames(deform_mesh(scene.mesh, view.params), scene.mesh.faces);
}

void run(TrainState &st, const Scene &scene, const TrainConfig &cfg, Stage stage, const IdentityTarget *identity,
         int iterations, bool densify, int densify_from, int densify_until, const IterationHook &hook) {
    if (scene.views.empty()) throw ParameterError("scene has no views");
    const Index faces = scene.mesh.face_count();
    check_binding(st.cloud, faces);
    std::uniform_int_distribution<std::size_t> pick(0, scene.views.size() - 1);
    while (st.iteration < iterations) {
        const long long it = st.iteration;
        const TrainingView &view = scene.views[pick(st.rng)];
        const auto frames = view_frames(scene, view);
        RenderOutput<double> out;
        try {
            out = render_with_state<double>(st.cloud, frames, view.camera, cfg.background);
        } catch (const NumericError &e) {
            throw NumericError(std::string(e.what()) + " at iteration " + std::to_string(it), e.index());
        }
        LossParts<double> parts;
        parts.rec = reconstruction_loss(out.image.rgb, view.target, cfg.weights.lambda_ssim);
        parts.scale = scale_reg(st.cloud, cfg.weights.phi_scale);
        parts.pos = position_reg(st.cloud, cfg.weights.phi_pos);
        if (stage == Stage::B)
            parts.id = identity_loss(out.image.rgb, identity->sources, identity->encoders, cfg.weights.lambda_k);
        const TotalLoss<double> total = total_loss(stage, parts, cfg.weights);
        if (!std::isfinite(total.value)) throw NumericError("non-finite loss at iteration " + std::to_string(it));

        RenderedImage<double> upstream;
        upstream.rgb = total.d_image;
        upstream.alpha = Plane<double>::Zero(out.image.height(), out.image.width());
        SplatGradients<double> g = render_backward<double>(st.cloud, frames, view.camera, out.state, upstream);
        g.params.scale_raw += total.d_scale_local.cwiseProduct(st.cloud.params.scale_raw.array().exp().matrix());
        g.params.mu_local += total.d_mu_local;
        adam_step(st.cloud.params, g.params, st.adam, cfg, it);
        st.accum.add(g.screen, out.state.projected);
        ++st.iteration;

        if (densify && st.iteration % cfg.densify_interval == 0 && st.iteration >= densify_from &&
            st.iteration <= densify_until) {
            densify_and_prune(st.cloud, st.adam, st.accum, cfg, st.rng);
            check_binding(st.cloud, faces);
        }
        LogRow row;
        row.iter = static_cast<int>(it);
        row.l_rec = parts.rec.value;
        row.l_scale = parts.scale.value;
        row.l_pos = parts.pos.value;
        row.l_id = parts.id ? parts.id->value : 0.0;
        row.total = total.value;
        row.n_splats = st.cloud.size();
        st.log.push_back(row);
        if (hook) hook(st);
    }
}

} // namespace

void train_stage_a(TrainState &state, const Scene &scene, const TrainConfig &config, const IterationHook &hook) {
    config.validate();
    run(state, scene, config, Stage::A, nullptr, config.stage_a_iters, true, config.densify_from, config.densify_until,
        hook);
}

void train_stage_b(TrainState &state, const Scene &scene, const IdentityTarget &identity, const TrainConfig &config,
                   const IterationHook &hook) {
    config.validate();
    if (identity.encoders.size() != config.weights.lambda_k.size() || identity.sources.size() != identity.encoders.size())
        throw ConfigError("identity encoders, source embeddings and lambda_k differ in count");
    for (const auto &e : identity.encoders)
        if (!e->differentiable()) throw ConfigError("encoder '" + e->name() + "' cannot drive finetuning gradients");
    run(state, scene, config, Stage::B, &identity, config.stage_b_iters, config.densify_in_stage_b,
        config.densify_from_b, config.densify_until_b, hook);
}

std::vector<RenderedImage<double>> render_views(const GaussianCloud<double> &cloud, const Scene &scene,
                                                const Vec3<double> &background) {
    std::vector<RenderedImage<double>> out;
    for (const auto &view : scene.views)
        out.push_back(render<double>(cloud, view_frames(scene, view), view.camera, background));
    return out;
}

double psnr(const Image<double> &a, const Image<double> &b) {
    if (!same_size(a, b)) throw ParameterError("psnr: dimension mismatch");
    double se = 0;
    for (int c = 0; c < 3; ++c) se += (a[c] - b[c]).square().sum();
    const double mse = se / static_cast<double>(3 * a.height() * a.width());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double mean_psnr(const GaussianCloud<double> &cloud, const Scene &scene, const Vec3<double> &background) {
    const auto renders = render_views(cloud, scene, background);
    double sum = 0;
    for (std::size_t i = 0; i < renders.size(); ++i) sum += psnr(renders[i].rgb, scene.views[i].target);
    return sum / static_cast<double>(renders.size());
}

double mean_identity_loss(const GaussianCloud<double> &cloud, const Scene &scene, const IdentityTarget &identity,
                          const TrainConfig &config) {
    const auto renders = render_views(cloud, scene, config.background);
    double sum = 0;
    for (const auto &r : renders)
        sum += identity_loss(r.rgb, identity.sources, identity.encoders, config.weights.lambda_k).value;
    return sum / static_cast<double>(renders.size());
}

std::string log_csv(const std::vector<LogRow> &rows, bool header) {
    std::string out = header ? "iter,l_rec,l_scale,l_pos,l_id,total,n_splats\n" : "";
    char buf[256];
    for (const auto &r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%lld\n", r.iter, r.l_rec, r.l_scale, r.l_pos,
                      r.l_id, r.total, static_cast<long long>(r.n_splats));
        out += buf;
    }
    return out;
}

} // namespace splatswap

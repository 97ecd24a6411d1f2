// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/errors.hpp"
#include "splatswap/io.hpp"
#include "splatswap/rotation.hpp"
#include "splatswap/training.hpp"

#include "../support.hpp"

#include <doctest.h>

using namespace splatswap;
using namespace splatswap::test;

namespace {

const Scene &scene() {
    static const Scene s = [] {
        const auto dir = scratch_dir("training_scene");
        write_synthetic_scene(dir, 0, true);
        return load_scene(dir);
    }();
    return s;
}

GaussianCloud<double> random_params_cloud(Index n) {
    GaussianCloud<double> c;
    c.params = SplatParams<double>::zeros(n);
    for (Index i = 0; i < n; ++i) {
        c.params.mu_local.row(i) = random_vec3().transpose();
        c.params.rot_local.row(i) = quat_coeffs(random_quat()).transpose();
        c.params.scale_raw.row(i) = random_vec3(-3, 0).transpose();
        c.params.opacity_raw[i] = uniform(0, 3);
        for (int k = 0; k < kShValues; ++k) c.params.sh(i, k) = uniform();
    }
    c.parent_face.assign(static_cast<std::size_t>(n), 0);
    for (Index i = 0; i < n; ++i) c.parent_face[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(i % 3);
    return c;
}

SplatParams<double> constant_grads(Index n, double g) {
    SplatParams<double> p = SplatParams<double>::zeros(n);
    SplatParams<double>::zip(p, p, [g](auto &a, const auto &) { a.setConstant(g); });
    return p;
}

bool same_params(const SplatParams<double> &a, const SplatParams<double> &b) {
    return a.mu_local == b.mu_local && a.rot_local == b.rot_local && a.scale_raw == b.scale_raw &&
           a.opacity_raw == b.opacity_raw && a.sh == b.sh;
}

TrainConfig short_config(int iters) {
    TrainConfig cfg;
    cfg.stage_a_iters = iters;
    cfg.stage_b_iters = iters;
    return cfg;
}

} // namespace

TEST_CASE("zero gradient leaves parameters and fresh moments untouched") {
    auto cloud = random_params_cloud(4);
    normalize_rotations(cloud.params);
    const auto before = cloud.params;
    auto state = AdamState::zeros(4);
    adam_step(cloud.params, SplatParams<double>::zeros(4), state, TrainConfig{});
    CHECK((cloud.params.mu_local - before.mu_local).cwiseAbs().maxCoeff() == 0.0);
    CHECK((cloud.params.rot_local - before.rot_local).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(cloud.params.sh == before.sh);
    CHECK(state.m.mu_local.cwiseAbs().maxCoeff() == 0.0);
    CHECK(state.step == 1);

    SUBCASE("existing moments decay") {
        auto st = AdamState::zeros(4);
        st.m = constant_grads(4, 0.5);
        st.v = constant_grads(4, 0.25);
        adam_step(cloud.params, SplatParams<double>::zeros(4), st, TrainConfig{});
        CHECK(st.m.sh(2, 3) == doctest::Approx(0.45).epsilon(1e-15));
        CHECK(st.v.opacity_raw[1] == doctest::Approx(0.24975).epsilon(1e-15));
    }
}

TEST_CASE("first Adam step moves each group by its learning rate") {
    TrainConfig cfg;
    auto cloud = random_params_cloud(3);
    const auto before = cloud.params;
    for (double g : {0.3, -2.0}) {
        auto p = before;
        auto state = AdamState::zeros(3);
        adam_step(p, constant_grads(3, g), state, cfg);
        const double step = g / (std::abs(g) + cfg.epsilon);
        CHECK((p.mu_local - before.mu_local).array().cwiseEqual(0).count() == 0);
        CHECK((p.mu_local - before.mu_local).cwiseAbs().maxCoeff() == doctest::Approx(cfg.lr.mu));
        CHECK(p.mu_local(1, 2) == doctest::Approx(before.mu_local(1, 2) - cfg.lr.mu * step).epsilon(1e-12));
        CHECK(p.scale_raw(0, 1) == doctest::Approx(before.scale_raw(0, 1) - cfg.lr.scale * step).epsilon(1e-12));
        CHECK(p.opacity_raw[2] == doctest::Approx(before.opacity_raw[2] - cfg.lr.opacity * step).epsilon(1e-12));
        CHECK(p.sh(2, 5) == doctest::Approx(before.sh(2, 5) - cfg.lr.sh * step).epsilon(1e-12));
        // Rotations take the step and are then renormalized.
        Vec4<double> q = before.rot_local.row(0).transpose() - Vec4<double>::Constant(cfg.lr.rot * step);
        q.normalize();
        CHECK((p.rot_local.row(0).transpose() - q).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(p.rot_local.rowwise().norm().maxCoeff() == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("non-finite gradient names the iteration and splat") {
    auto cloud = random_params_cloud(5);
    auto grads = SplatParams<double>::zeros(5);
    grads.scale_raw(3, 1) = std::numeric_limits<double>::quiet_NaN();
    auto state = AdamState::zeros(5);
    try {
        adam_step(cloud.params, grads, state, TrainConfig{}, 77);
        FAIL("expected a numeric error");
    } catch (const NumericError &e) {
        CHECK(e.index() == 3);
        CHECK(std::string(e.what()).find("iteration 77") != std::string::npos);
    }
    CHECK(state.step == 0);
}

TEST_CASE("density control") {
    TrainConfig cfg;
    auto cloud = random_params_cloud(6);
    cloud.params.scale_raw.setConstant(std::log(0.1));
    auto adam = AdamState::zeros(6);
    adam.m = constant_grads(6, 0.1);
    adam.v = constant_grads(6, 0.01);
    adam.step = 40;
    auto accum = DensifyAccumulator::zeros(6);
    std::mt19937_64 gen(3);

    SUBCASE("nothing qualifies: unchanged") {
        const auto before = cloud;
        accum.grad_sum.setConstant(1e-5);
        accum.count.setConstant(1);
        const auto r = densify_and_prune(cloud, adam, accum, cfg, gen);
        CHECK(r.cloned + r.split + r.pruned == 0);
        CHECK(same_params(cloud.params, before.params));
        CHECK(cloud.parent_face == before.parent_face);
        CHECK(adam.m.sh == constant_grads(6, 0.1).sh);
        CHECK(adam.step == 40);
    }
    SUBCASE("one split keeps the binding") {
        cloud.params.scale_raw.row(2) << std::log(0.5), std::log(0.2), std::log(0.1);
        accum.grad_sum[2] = 3e-3;
        accum.count[2] = 2;
        accum.grad_sum[4] = 1e-3; // mean below threshold
        accum.count[4] = 10;
        const auto parent = cloud;
        const auto r = densify_and_prune(cloud, adam, accum, cfg, gen);
        CHECK(r.split == 1);
        CHECK(r.cloned == 0);
        REQUIRE(cloud.size() == 7);
        CHECK(r.ancestor == std::vector<Index>{0, 1, 3, 4, 5, 2, 2});
        for (Index k : {5, 6}) {
            CHECK(cloud.parent_face[static_cast<std::size_t>(k)] == parent.parent_face[2]);
            CHECK((cloud.params.scale_raw.row(k) - parent.params.scale_raw.row(2)).cwiseAbs().maxCoeff() ==
                  doctest::Approx(std::log(1.6)));
            CHECK(adam.m.mu_local.row(k).cwiseAbs().maxCoeff() == 0.0);
            CHECK(adam.v.sh.row(k).cwiseAbs().maxCoeff() == 0.0);
            CHECK(cloud.params.sh.row(k) == parent.params.sh.row(2));
        }
        CHECK(cloud.params.mu_local.row(5) != cloud.params.mu_local.row(6));
        CHECK(adam.m.sh.row(0).cwiseAbs().minCoeff() == 0.1);
        CHECK(adam.size() == 7);
        CHECK(accum.grad_sum.size() == 7);
        CHECK(accum.grad_sum.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("small splats are cloned in place") {
        accum.grad_sum[1] = 5e-4;
        accum.count[1] = 1;
        const auto parent = cloud;
        const auto r = densify_and_prune(cloud, adam, accum, cfg, gen);
        CHECK(r.cloned == 1);
        REQUIRE(cloud.size() == 7);
        CHECK(cloud.params.mu_local.row(6) == parent.params.mu_local.row(1));
        CHECK(cloud.params.mu_local.row(1) == parent.params.mu_local.row(1));
        CHECK(cloud.parent_face[6] == parent.parent_face[1]);
        CHECK(adam.m.mu_local.row(6).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("pruning everything keeps the most opaque splat per face") {
        cloud.params.opacity_raw << -20, -21, -19, -25, -18, -30;
        const auto r = densify_and_prune(cloud, adam, accum, cfg, gen);
        CHECK(r.pruned == 3);
        CHECK(r.ancestor == std::vector<Index>{0, 2, 4});
        CHECK(cloud.parent_face == std::vector<std::uint32_t>{0, 2, 1});
        CHECK(adam.size() == 3);
    }
    SUBCASE("low-opacity splats are pruned where the face keeps another") {
        cloud.params.opacity_raw[0] = -20;
        const auto r = densify_and_prune(cloud, adam, accum, cfg, gen);
        CHECK(r.pruned == 1);
        CHECK(cloud.size() == 5);
        CHECK(r.ancestor.front() == 1);
    }
    SUBCASE("growth stops at max_splats, strongest first") {
        cfg.max_splats = 8;
        for (Index i = 0; i < 6; ++i) {
            accum.grad_sum[i] = 1e-3 * static_cast<double>(i + 1);
            accum.count[i] = 1;
        }
        const auto r = densify_and_prune(cloud, adam, accum, cfg, gen);
        CHECK(r.cloned == 2);
        CHECK(cloud.size() == 8);
        CHECK(r.ancestor[6] == 4);
        CHECK(r.ancestor[7] == 5);
    }
    SUBCASE("mismatched state is a contract error") {
        auto small = DensifyAccumulator::zeros(5);
        CHECK_THROWS_AS(densify_and_prune(cloud, adam, small, cfg, gen), ContractError);
    }
}

TEST_CASE("accumulator counts only visible splats") {
    auto accum = DensifyAccumulator::zeros(3);
    std::vector<ProjectedSplat<double>> proj(3);
    proj[0].visible = true;
    proj[2].visible = true;
    accum.add(VecX<double>::Constant(3, 2.0), proj);
    CHECK(accum.count == Eigen::Vector3d(1, 0, 1));
    CHECK(accum.grad_sum == Eigen::Vector3d(2, 0, 2));
    CHECK_THROWS_AS(accum.add(VecX<double>::Zero(2), proj), ContractError);
}

TEST_CASE("short stage A is deterministic and lowers the reconstruction loss") {
    auto cfg = short_config(150);
    cfg.densify_from = 50;
    cfg.densify_interval = 50;
    auto a = TrainState::start(init_cloud(scene().mesh), 0);
    auto b = TrainState::start(init_cloud(scene().mesh), 0);
    int calls = 0;
    train_stage_a(a, scene(), cfg, [&](const TrainState &) { ++calls; });
    train_stage_a(b, scene(), cfg);
    CHECK(calls == 150);
    CHECK(a.iteration == 150);
    CHECK(same_params(a.cloud.params, b.cloud.params));
    CHECK(a.cloud.parent_face == b.cloud.parent_face);
    CHECK(log_csv(a.log) == log_csv(b.log));
    REQUIRE(a.log.size() == 150);
    CHECK(a.log.front().l_rec > a.log.back().l_rec);
    CHECK(a.log.back().n_splats == a.cloud.size());
    CHECK(a.adam.size() == a.cloud.size());
    CHECK(a.accum.grad_sum.size() == a.cloud.size());
    CHECK_NOTHROW(check_binding(a.cloud, scene().mesh.face_count()));

    SUBCASE("a different seed gives a different run") {
        auto c = TrainState::start(init_cloud(scene().mesh), 1);
        train_stage_a(c, scene(), cfg);
        CHECK_FALSE(same_params(a.cloud.params, c.cloud.params));
    }
    SUBCASE("stage B on a self source starts near zero identity loss") {
        const auto target = IdentityTarget::from_source(scene().views[0].target, toy_encoder_set());
        const double before = mean_identity_loss(a.cloud, scene(), target, cfg);
        auto c = a;
        c.iteration = 0;
        c.log.clear();
        auto cfg_b = short_config(20);
        train_stage_b(c, scene(), target, cfg_b);
        CHECK(c.log.size() == 20);
        CHECK(c.log.front().l_id < 0.2);
        CHECK(c.log.back().l_id <= 2 * 1.001);
        CHECK(before < 0.2);
    }
}

TEST_CASE("stage B validates its encoders") {
    auto st = TrainState::start(init_cloud(scene().mesh), 0);
    const auto cfg = short_config(1);
    auto target = IdentityTarget::from_source(scene().views[0].target, toy_encoder_set());
    target.encoders.pop_back();
    target.sources.pop_back();
    CHECK_THROWS_AS(train_stage_b(st, scene(), target, cfg), ConfigError);

    class Opaque final : public IdentityEncoder {
      public:
        const std::string &name() const override { return mName; }
        IdentityEmbedding encode(const Image<double> &) const override { return {mName, VecX<double>::Ones(1)}; }

      private:
        std::string mName = "opaque";
    };
    auto opaque = IdentityTarget::from_source(scene().views[0].target,
                                              {std::make_shared<Opaque>(), std::make_shared<Opaque>(),
                                               std::make_shared<Opaque>()});
    CHECK_THROWS_AS(train_stage_b(st, scene(), opaque, cfg), ConfigError);
}

TEST_CASE("psnr") {
    const auto a = random_image(8, 8);
    CHECK(std::isinf(psnr(a, a)));
    auto b = a;
    for (int c = 0; c < 3; ++c) b[c] += 0.1;
    CHECK(psnr(a, b) == doctest::Approx(20.0));
}

TEST_CASE("log csv layout") {
    std::vector<LogRow> rows(2);
    rows[1].iter = 1;
    rows[1].n_splats = 9;
    const auto text = log_csv(rows);
    CHECK(text.rfind("iter,l_rec,l_scale,l_pos,l_id,total,n_splats\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
    CHECK(log_csv(rows, false).find("iter") == std::string::npos);
}

TEST_CASE("scene loading applies the matte") {
    const auto dir = scratch_dir("matte_scene");
    write_synthetic_scene(dir, 4, true);
    const Vec3<double> bg(0.2, 0.4, 0.6);
    const Scene s = load_scene(dir, bg);
    const Tracking tr = load_tracking(dir / "tracking.json");
    const auto frame = read_png_rgb(dir / tr.frames[1].target_frame_path);
    const auto matte = read_png_gray(dir / tr.frames[1].matte_path);
    for (int c = 0; c < 3; ++c)
        CHECK((s.views[1].target[c] - (frame[c] * matte + bg[c] * (1 - matte))).abs().maxCoeff() <= 1e-15);
    std::filesystem::remove(dir / tr.frames[0].target_frame_path);
    CHECK_THROWS_AS(load_scene(dir), IoError);
}

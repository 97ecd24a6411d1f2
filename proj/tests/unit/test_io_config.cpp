// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/checkpoint.hpp"
#include "splatswap/config.hpp"
#include "splatswap/errors.hpp"
#include "splatswap/io.hpp"

#include "../support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <fstream>
#include <sstream>

using namespace splatswap;
using namespace splatswap::test;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path &p, const std::string &text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

Image<double> quantized_image(Index h, Index w) {
    Image<double> img(h, w);
    for (int c = 0; c < 3; ++c)
        for (Index i = 0; i < img[c].size(); ++i) img[c].data()[i] = std::floor(uniform(0, 256)) / 255.0;
    return img;
}

} // namespace

TEST_CASE("PNG round trips at 8 bits") {
    const auto dir = scratch_dir("png");
    const auto img = quantized_image(7, 11);
    write_png_rgb(dir / "b.png", img);
    const auto back = read_png_rgb(dir / "b.png");
    REQUIRE(back.height() == 7);
    REQUIRE(back.width() == 11);
    for (int c = 0; c < 3; ++c) CHECK((back[c] - img[c]).abs().maxCoeff() <= 1e-15);

    Plane<double> gray(3, 2);
    gray << -1.0, 0.0, 0.5, 1.0, 2.0, 100.0 / 255;
    write_png_gray(dir / "a.png", gray);
    const auto g = read_png_gray(dir / "a.png");
    CHECK(g(0, 0) == 0.0);
    CHECK(g(1, 0) == 128.0 / 255);
    CHECK(g(2, 0) == 1.0);
    CHECK(g(2, 1) == 100.0 / 255);
    const auto as_rgb = read_png_rgb(dir / "a.png");
    CHECK((as_rgb[2] - g).abs().maxCoeff() == 0.0);

    spit(dir / "notes.txt", "x");
    const auto listed = list_pngs(dir);
    REQUIRE(listed.size() == 2);
    CHECK(listed[0].filename() == "a.png");
    CHECK_THROWS_AS(read_png_rgb(dir / "missing.png"), IoError);
    CHECK_THROWS_AS(read_png_rgb(dir / "notes.txt"), IoError);
}

TEST_CASE("synthetic scene files") {
    const auto a = scratch_dir("scene_a"), b = scratch_dir("scene_b");
    const Tracking ta = write_synthetic_scene(a, 5);
    write_synthetic_scene(b, 5);
    CHECK(ta.mesh_id == "synthetic:5");
    CHECK(list_pngs(a / "frames").size() == ta.frames.size());
    CHECK(list_pngs(a / "mattes").size() == ta.frames.size());
    for (const auto &name : {"tracking.json", "frames/frame_000.png", "mattes/matte_002.png"})
        CHECK(slurp(a / name) == slurp(b / name));
    CHECK_THROWS_AS(write_synthetic_scene(a, 6), IoError);
    CHECK_NOTHROW(write_synthetic_scene(a, 6, true));
    CHECK(load_tracking(a / "tracking.json").mesh_id == "synthetic:6");
}

TEST_CASE("tracking round trip and schema checks") {
    const auto dir = scratch_dir("tracking");
    const Tracking t = write_synthetic_scene(dir, 2);
    save_tracking(dir / "copy.json", t);
    const Tracking u = load_tracking(dir / "copy.json");
    CHECK(u.shape == t.shape);
    REQUIRE(u.frames.size() == t.frames.size());
    for (std::size_t i = 0; i < t.frames.size(); ++i) {
        CHECK(u.frames[i].params.expression == t.frames[i].params.expression);
        CHECK(u.frames[i].params.jaw_angle == t.frames[i].params.jaw_angle);
        CHECK(u.frames[i].params.global_rotation.coeffs() == t.frames[i].params.global_rotation.coeffs());
        CHECK(u.frames[i].camera.fx == t.frames[i].camera.fx);
        CHECK(u.frames[i].camera.translation == t.frames[i].camera.translation);
        CHECK(u.frames[i].target_frame_path == t.frames[i].target_frame_path);
    }
    CHECK(mesh_from_id(t.mesh_id).face_count() > 0);

    auto doc = nlohmann::json::parse(slurp(dir / "tracking.json"));
    SUBCASE("non-unit rotation") {
        doc["frames"][0]["global_rotation"] = {2.0, 0.0, 0.0, 0.0};
        spit(dir / "bad.json", doc.dump());
        CHECK_THROWS_AS(load_tracking(dir / "bad.json"), ParameterError);
    }
    SUBCASE("inconsistent expression length") {
        doc["frames"][1]["expression"].push_back(0.0);
        spit(dir / "bad.json", doc.dump());
        CHECK_THROWS_AS(load_tracking(dir / "bad.json"), ParameterError);
    }
    SUBCASE("missing field") {
        doc["frames"][0].erase("camera");
        spit(dir / "bad.json", doc.dump());
        CHECK_THROWS_AS(load_tracking(dir / "bad.json"), ParameterError);
    }
    SUBCASE("unreadable") {
        spit(dir / "bad.json", "{");
        CHECK_THROWS(load_tracking(dir / "bad.json"));
        CHECK_THROWS_AS(load_tracking(dir / "none.json"), IoError);
    }
}

TEST_CASE("config text round trip") {
    const TrainConfig def;
    const std::string text = serialize_config(def);
    CHECK(serialize_config(parse_config(text)) == text);
    CHECK(config_hash(parse_config(text)) == config_hash(def));

    TrainConfig c;
    c.lr.mu = 0.1 + 0.2;
    c.weights.lambda_k = {0.5, 0.25};
    c.background = Vec3<double>(1.0 / 3, 0, 1);
    c.densify_in_stage_b = false;
    c.seed = 42;
    const TrainConfig d = parse_config(serialize_config(c));
    CHECK(d.lr.mu == c.lr.mu);
    CHECK(d.weights.lambda_k == c.weights.lambda_k);
    CHECK(d.background == c.background);
    CHECK_FALSE(d.densify_in_stage_b);
    CHECK(d.seed == 42);
    CHECK(config_hash(d) == config_hash(c));
    CHECK(config_hash(d) != config_hash(def));
}

TEST_CASE("config parsing") {
    const TrainConfig c = parse_config("# comment\nstage_a_iters = 12  # trailing\n\n[weights]\nlambda_id = 0.5\n");
    CHECK(c.stage_a_iters == 12);
    CHECK(c.weights.lambda_id == 0.5);
    CHECK(c.stage_b_iters == TrainConfig{}.stage_b_iters);
    CHECK_THROWS_AS(parse_config("stage_c_iters = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[optim]\nlr_mu = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("lambda_id = 0.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("lr_mu = fast\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("lr_mu = -1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("lr_mu\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[weights]\nlambda_k = []\n"), ConfigError);
    CHECK_THROWS_AS(load_config(scratch_dir("cfg") / "none.toml"), IoError);
}

TEST_CASE("checkpoint round trip is exact") {
    const auto dir = scratch_dir("ckpt");
    const auto mesh = mesh_from_id("synthetic:0");
    auto st = TrainState::start(init_cloud(mesh), 9);
    for (Index i = 0; i < st.cloud.params.sh.size(); ++i) st.cloud.params.sh.data()[i] = uniform();
    for (Index i = 0; i < st.adam.m.mu_local.size(); ++i) st.adam.m.mu_local.data()[i] = uniform();
    st.adam.v.opacity_raw.setConstant(1.0 / 3);
    st.adam.step = 17;
    st.accum.grad_sum.setConstant(0.1);
    st.accum.count.setConstant(3);
    st.iteration = 17;
    st.rng.discard(1000);
    TrainConfig cfg;
    cfg.stage_a_iters = 33;
    CheckpointInfo info;
    info.config = serialize_config(cfg);
    info.config_hash = config_hash(cfg);
    info.mesh_id = "synthetic:0";
    info.shape = VecX<double>::Constant(3, 0.25);
    info.scene = "/somewhere";
    const auto path = dir / "avatar.gswp";
    save_checkpoint(path, st, info);
    CHECK(fs::exists(sidecar_path(path)));
    CHECK(fs::exists(optimizer_path(path)));

    const Checkpoint ck = load_checkpoint(path);
    CHECK(ck.info.iteration == 17);
    CHECK(ck.info.mesh_id == "synthetic:0");
    CHECK(ck.info.shape == info.shape);
    CHECK(ck.config().stage_a_iters == 33);
    CHECK(ck.cloud.size() == st.cloud.size());
    CHECK((ck.cloud.params.sh - st.cloud.params.sh).cwiseAbs().maxCoeff() <= 1e-6);

    auto back = load_train_state(path, ck.info);
    CHECK(back.cloud.params.sh == st.cloud.params.sh);
    CHECK(back.cloud.params.mu_local == st.cloud.params.mu_local);
    CHECK(back.cloud.parent_face == st.cloud.parent_face);
    CHECK(back.adam.m.mu_local == st.adam.m.mu_local);
    CHECK(back.adam.v.opacity_raw == st.adam.v.opacity_raw);
    CHECK(back.adam.step == 17);
    CHECK(back.accum.grad_sum == st.accum.grad_sum);
    CHECK(back.accum.count == st.accum.count);
    CHECK(back.iteration == 17);
    CHECK(back.rng() == st.rng());

    SUBCASE("tampered config is rejected") {
        auto side = nlohmann::json::parse(slurp(sidecar_path(path)));
        side["config_hash"] = info.config_hash + 1;
        spit(sidecar_path(path), side.dump());
        CHECK_THROWS_AS(load_checkpoint(path), IoError);
    }
    SUBCASE("missing optimizer file") {
        fs::remove(optimizer_path(path));
        CHECK_THROWS_AS(load_train_state(path, ck.info), IoError);
    }
    SUBCASE("missing checkpoint") { CHECK_THROWS_AS(load_checkpoint(dir / "none.gswp"), IoError); }
}

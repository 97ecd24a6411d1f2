// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
// gswap: scene synthesis, avatar construction, identity swap, rendering, reenactment, metrics.
#include "splatswap/checkpoint.hpp"
#include "splatswap/compositing.hpp"
#include "splatswap/embedding_client.hpp"
#include "splatswap/errors.hpp"
#include "splatswap/io.hpp"
#include "splatswap/log.hpp"
#include "splatswap/metrics.hpp"
#include "splatswap/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace splatswap;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kNumeric = 3, kService = 4 };

struct Options {
    std::uint64_t seed = 0;
    std::string out, scene, config, ckpt, source, encoders = "toy", bg = "frames", driving, frames, model = "arcface";
    std::vector<double> color = {0, 0, 0};
    bool force = false, resume = false;
    int erode = 3;
    double blur = 2.0;
};

Vec3<double> color_of(const Options &o) {
    if (o.color.size() != 3) throw ParameterError("--color needs three values");
    return Vec3<double>(o.color[0], o.color[1], o.color[2]);
}

void print_json(const json &doc) { std::cout << doc.dump() << std::endl; }

std::string frame_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%03zu.png", i);
    return buf;
}

IterationHook progress(const char *stage, int total) {
    const int step = std::max(1, total / 10);
    return [stage, step](const TrainState &s) {
        if (s.iteration % step != 0) return;
        const LogRow &r = s.log.back();
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s iter %d  total %.5f  l_rec %.5f  splats %lld", stage, s.iteration, r.total,
                      r.l_rec, static_cast<long long>(r.n_splats));
        log_info(buf);
    };
}

void write_log(const fs::path &path, const std::vector<LogRow> &rows, std::size_t from, bool append) {
    const std::vector<LogRow> tail(rows.begin() + static_cast<std::ptrdiff_t>(from), rows.end());
    const bool header = !(append && fs::exists(path));
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << log_csv(tail, header);
}

TrainConfig config_or_default(const std::string &path) { return path.empty() ? TrainConfig{} : load_config(path); }

int synth_scene(const Options &o) {
    const Tracking t = write_synthetic_scene(o.out, o.seed, o.force);
    print_json({{"out", o.out}, {"frames", t.frames.size()}, {"mesh_id", t.mesh_id}});
    return kOk;
}

int build_avatar(const Options &o) {
    const TrainConfig cfg = config_or_default(o.config);
    const Scene scene = load_scene(o.scene, cfg.background);
    TrainState st;
    if (o.resume) {
        const Checkpoint ck = load_checkpoint(o.out);
        if (ck.info.stage != "A") throw ParameterError("--resume expects a stage A checkpoint");
        if (ck.info.mesh_id != scene.mesh_id) throw ParameterError("checkpoint was built for a different mesh");
        if (ck.info.config_hash != config_hash(cfg)) log_warning("resuming with a different config");
        st = load_train_state(o.out, ck.info);
    } else {
        st = TrainState::start(init_cloud(scene.mesh), cfg.seed);
    }
    const int start = st.iteration;
    train_stage_a(st, scene, cfg, progress("stage A", cfg.stage_a_iters));

    CheckpointInfo info;
    info.stage = "A";
    info.config = serialize_config(cfg);
    info.config_hash = config_hash(cfg);
    info.mesh_id = scene.mesh_id;
    info.shape = scene.views.front().params.shape;
    info.scene = fs::absolute(o.scene).lexically_normal().string();
    save_checkpoint(o.out, st, info);
    write_log(o.out + ".csv", st.log, 0, o.resume);
    print_json({{"ckpt", o.out},
                {"iterations", st.iteration - start},
                {"n_splats", st.cloud.size()},
                {"psnr", mean_psnr(st.cloud, scene, cfg.background)}});
    return kOk;
}

int swap(const Options &o) {
    if (o.encoders != "toy" && o.encoders != "remote") throw ParameterError("--encoders must be toy or remote");
    const Image<double> source = read_png_rgb(o.source);
    const Checkpoint ck = load_checkpoint(o.ckpt);
    const TrainConfig cfg = o.config.empty() ? ck.config() : load_config(o.config);
    const Scene scene = load_scene(ck.info.scene, cfg.background);

    std::shared_ptr<EmbeddingClient> client;
    std::vector<IdentityEmbedding> remote_source;
    if (o.encoders == "remote") {
        client = std::make_shared<EmbeddingClient>();
        remote_source = client->embed(source);
    }
    const IdentityTarget identity = IdentityTarget::from_source(source, toy_encoder_set());
    TrainState st = TrainState::start(ck.cloud, cfg.seed);
    const double lid0 = mean_identity_loss(st.cloud, scene, identity, cfg);
    const double psnr0 = mean_psnr(st.cloud, scene, cfg.background);
    train_stage_b(st, scene, identity, cfg, progress("stage B", cfg.stage_b_iters));

    CheckpointInfo info = ck.info;
    info.stage = "B";
    info.config = serialize_config(cfg);
    info.config_hash = config_hash(cfg);
    save_checkpoint(o.out, st, info);
    write_log(o.out + ".csv", st.log, 0, false);

    json summary = {{"ckpt", o.out},
                    {"l_id_initial", lid0},
                    {"l_id_final", mean_identity_loss(st.cloud, scene, identity, cfg)},
                    {"psnr_initial", psnr0},
                    {"psnr_final", mean_psnr(st.cloud, scene, cfg.background)},
                    {"n_splats", st.cloud.size()}};
    if (client) {
        json remote = json::object();
        const auto renders = render_views(st.cloud, scene, cfg.background);
        for (const auto &src : remote_source) {
            double sum = 0;
            for (const auto &r : renders)
                for (const auto &e : client->embed(r.rgb))
                    if (e.encoder_name == src.encoder_name) sum += cosine(src, e);
            remote[src.encoder_name] = 100.0 * sum / static_cast<double>(renders.size());
        }
        summary["remote_ids"] = remote;
    }
    print_json(summary);
    return kOk;
}

struct Avatar {
    GaussianCloud<double> cloud;
    RiggedMesh<double> mesh;
    VecX<double> shape;
};

Avatar load_avatar(const std::string &ckpt) {
    Checkpoint ck = load_checkpoint(ckpt);
    Avatar a{std::move(ck.cloud), mesh_from_id(ck.info.mesh_id), ck.info.shape};
    check_binding(a.cloud, a.mesh.face_count());
    return a;
}

// Drives the avatar with a tracked frame; the avatar keeps its own shape.
RenderedImage<double> render_tracked(const Avatar &a, const TrackedFrame &f, const Vec3<double> &bg) {
    FrameParams<double> p = f.params;
    if (p.expression.size() != a.mesh.expression_count())
        throw ParameterError("driving expression has " + std::to_string(p.expression.size()) + " coefficients, avatar has " +
                             std::to_string(a.mesh.expression_count()));
    p.shape = a.shape;
    const auto frames = triangle_frames(deform_mesh(a.mesh, p), a.mesh.faces);
    return render<double>(a.cloud, frames, f.camera, bg);
}

int render_video(const Options &o) {
    const Avatar avatar = load_avatar(o.ckpt);
    const Tracking tracking = load_tracking(fs::path(o.scene) / "tracking.json");
    std::vector<fs::path> backgrounds;
    if (o.bg != "frames" && o.bg != "color") {
        backgrounds = list_pngs(o.bg);
        if (backgrounds.empty()) throw IoError("no PNG backgrounds in " + o.bg);
    }
    fs::create_directories(o.out);
    const Vec3<double> color = color_of(o);
    for (std::size_t i = 0; i < tracking.frames.size(); ++i) {
        const TrackedFrame &f = tracking.frames[i];
        Image<double> out;
        if (o.bg == "color") {
            out = render_tracked(avatar, f, color).rgb;
        } else {
            const RenderedImage<double> rendered = unpremultiply(render_tracked(avatar, f, Vec3<double>::Zero()));
            if (o.bg == "frames") {
                const Image<double> target = read_png_rgb(fs::path(o.scene) / f.target_frame_path);
                const Mask<double> matte = read_png_gray(fs::path(o.scene) / f.matte_path);
                const Image<double> swapped = replace_background(rendered, target);
                const Mask<double> fused = fuse_masks(threshold_mask(rendered.alpha), matte);
                out = blend(swapped, target, refine_mask(fused, o.erode, o.blur));
            } else {
                out = replace_background(rendered, read_png_rgb(backgrounds[i % backgrounds.size()]));
            }
        }
        write_png_rgb(fs::path(o.out) / frame_name(i), out);
    }
    print_json({{"out", o.out}, {"frames", tracking.frames.size()}, {"bg", o.bg}});
    return kOk;
}

int reenact(const Options &o) {
    const Avatar avatar = load_avatar(o.ckpt);
    const Tracking driving = load_tracking(o.driving);
    const Vec3<double> color = color_of(o);
    fs::create_directories(o.out);
    for (std::size_t i = 0; i < driving.frames.size(); ++i)
        write_png_rgb(fs::path(o.out) / frame_name(i), render_tracked(avatar, driving.frames[i], color).rgb);
    print_json({{"out", o.out}, {"frames", driving.frames.size()}});
    return kOk;
}

int eval(const Options &o) {
    const Image<double> source = read_png_rgb(o.source);
    std::vector<Image<double>> frames;
    for (const auto &p : list_pngs(o.frames)) frames.push_back(read_png_rgb(p));
    std::shared_ptr<IdentityEncoder> encoder;
    if (o.encoders == "toy") {
        encoder = std::make_shared<ToyEncoder>();
    } else if (o.encoders == "remote") {
        encoder = std::make_shared<RemoteEncoder>(std::make_shared<EmbeddingClient>(), o.model);
    } else {
        throw ParameterError("--encoder must be toy or remote");
    }
    print_json({{"ids", ids_score(source, frames, *encoder)},
                {"vidd", vidd(frames, *encoder)},
                {"n_frames", frames.size()},
                {"encoder", encoder->name()}});
    return kOk;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Gaussian head avatars: build, identity swap, render, reenact, evaluate"};
    app.require_subcommand(1);
    Options o;

    auto *synth = app.add_subcommand("synth-scene", "Write a synthetic tracked scene");
    synth->add_option("--seed", o.seed, "Scene seed");
    synth->add_option("--out", o.out, "Output directory")->required();
    synth->add_flag("--force", o.force, "Overwrite a non-empty output directory");

    auto *build = app.add_subcommand("build-avatar", "Stage A: reconstruct an avatar from a scene");
    build->add_option("--scene", o.scene, "Scene directory")->required()->check(CLI::ExistingDirectory);
    build->add_option("--config", o.config, "Config file")->check(CLI::ExistingFile);
    build->add_option("--out", o.out, "Checkpoint path")->required();
    build->add_flag("--resume", o.resume, "Continue training from --out");

    auto *sw = app.add_subcommand("swap", "Stage B: finetune toward a source identity");
    sw->add_option("--ckpt", o.ckpt, "Stage A checkpoint")->required();
    sw->add_option("--source", o.source, "Source face image (PNG)")->required();
    sw->add_option("--encoders", o.encoders, "toy or remote");
    sw->add_option("--config", o.config, "Config override")->check(CLI::ExistingFile);
    sw->add_option("--out", o.out, "Output checkpoint")->required();

    auto *rv = app.add_subcommand("render-video", "Render the avatar over a scene's frames");
    rv->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
    rv->add_option("--scene", o.scene, "Scene directory")->required()->check(CLI::ExistingDirectory);
    rv->add_option("--bg", o.bg, "frames, color, or a directory of background PNGs");
    rv->add_option("--color", o.color, "Background colour for --bg color")->expected(3);
    rv->add_option("--erode", o.erode, "Mask erosion radius (px)")->check(CLI::NonNegativeNumber);
    rv->add_option("--blur", o.blur, "Mask blur sigma (px)")->check(CLI::NonNegativeNumber);
    rv->add_option("--out", o.out, "Output directory")->required();

    auto *re = app.add_subcommand("reenact", "Drive the avatar with another tracking file");
    re->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
    re->add_option("--driving", o.driving, "Driving tracking.json")->required();
    re->add_option("--color", o.color, "Background colour")->expected(3);
    re->add_option("--out", o.out, "Output directory")->required();

    auto *ev = app.add_subcommand("eval", "Identity similarity and temporal identity distance");
    ev->add_option("--source", o.source, "Source face image")->required();
    ev->add_option("--frames", o.frames, "Directory of PNG frames")->required();
    ev->add_option("--encoder", o.encoders, "toy or remote");
    ev->add_option("--model", o.model, "Remote model name");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (*synth) return synth_scene(o);
        if (*build) return build_avatar(o);
        if (*sw) return swap(o);
        if (*rv) return render_video(o);
        if (*re) return reenact(o);
        if (*ev) return eval(o);
    } catch (const NumericError &e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumeric;
    } catch (const IdentityError &e) {
        std::cerr << "identity service error";
        if (!e.encoder().empty()) std::cerr << " (" << e.encoder() << ")";
        std::cerr << ": " << e.what() << "\n";
        return kService;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}

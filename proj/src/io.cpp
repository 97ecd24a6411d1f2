// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/io.hpp"

#include "splatswap/errors.hpp"
#include "splatswap/synthetic.hpp"

#include <json.hpp>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace splatswap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct FileCloser {
    void operator()(std::FILE *f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct Decoded {
    int width = 0, height = 0;
    std::vector<std::uint8_t> rgb;
};

Decoded decode_png(const fs::path &path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError("cannot open " + path.string());
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_stdio(&image, file.get()))
        throw IoError("not a readable PNG: " + path.string() + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    Decoded out;
    out.width = static_cast<int>(image.width);
    out.height = static_cast<int>(image.height);
    out.rgb.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.rgb.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw IoError("PNG decode failed: " + path.string() + ": " + msg);
    }
    return out;
}

std::uint8_t quantize(double v) {
    if (!(v > 0)) return 0;
    return static_cast<std::uint8_t>(std::lround(std::min(v, 1.0) * 255.0));
}

void encode_png(const fs::path &path, int width, int height, bool gray, const std::vector<std::uint8_t> &data) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, data.data(), 0, nullptr))
        throw IoError("PNG encode failed: " + path.string());
    std::string bytes(size, '\0');
    if (!png_image_write_to_memory(&image, bytes.data(), &size, 0, data.data(), 0, nullptr))
        throw IoError("PNG encode failed: " + path.string());
    bytes.resize(size);
    write_file_atomic(path, bytes);
}

template <class J> const J &field(const J &obj, const char *key, const std::string &where) {
    if (!obj.is_object() || !obj.contains(key)) throw ParameterError(where + ": missing field '" + key + "'");
    return obj.at(key);
}

double number(const json &obj, const char *key, const std::string &where) {
    const json &v = field(obj, key, where);
    if (!v.is_number()) throw ParameterError(where + ": field '" + key + "' must be a number");
    return v.get<double>();
}

VecX<double> vector_field(const json &obj, const char *key, const std::string &where, Index expected = -1) {
    const json &v = field(obj, key, where);
    if (!v.is_array()) throw ParameterError(where + ": field '" + key + "' must be an array");
    if (expected >= 0 && static_cast<Index>(v.size()) != expected)
        throw ParameterError(where + ": field '" + key + "' must have " + std::to_string(expected) + " entries");
    VecX<double> out(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) throw ParameterError(where + ": field '" + key + "' must hold numbers");
        out[static_cast<Index>(i)] = v[i].get<double>();
    }
    return out;
}

json to_json(const VecX<double> &v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

} // namespace

void write_file_atomic(const fs::path &path, const std::string &bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

Image<double> read_png_rgb(const fs::path &path) {
    const Decoded d = decode_png(path);
    Image<double> img(d.height, d.width);
    for (Index y = 0; y < d.height; ++y)
        for (Index x = 0; x < d.width; ++x)
            for (int c = 0; c < 3; ++c) img[c](y, x) = d.rgb[static_cast<std::size_t>((y * d.width + x) * 3 + c)] / 255.0;
    return img;
}

Plane<double> read_png_gray(const fs::path &path) { return read_png_rgb(path)[0]; }

void write_png_rgb(const fs::path &path, const Image<double> &image) {
    const Index H = image.height(), W = image.width();
    std::vector<std::uint8_t> data(static_cast<std::size_t>(H * W * 3));
    for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) data[static_cast<std::size_t>((y * W + x) * 3 + c)] = quantize(image[c](y, x));
    encode_png(path, static_cast<int>(W), static_cast<int>(H), false, data);
}

void write_png_gray(const fs::path &path, const Plane<double> &plane) {
    const Index H = plane.rows(), W = plane.cols();
    std::vector<std::uint8_t> data(static_cast<std::size_t>(H * W));
    for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x) data[static_cast<std::size_t>(y * W + x)] = quantize(plane(y, x));
    encode_png(path, static_cast<int>(W), static_cast<int>(H), true, data);
}

std::vector<fs::path> list_pngs(const fs::path &dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto &e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

Tracking load_tracking(const fs::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open tracking file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception &e) {
        throw ParameterError("tracking file " + path.string() + " is not valid JSON: " + e.what());
    }
    const std::string where = path.filename().string();
    Tracking t;
    t.shape = vector_field(doc, "shape", where);
    const json &id = field(doc, "mesh_id", where);
    if (!id.is_string()) throw ParameterError(where + ": mesh_id must be a string");
    t.mesh_id = id.get<std::string>();
    const json &frames = field(doc, "frames", where);
    if (!frames.is_array() || frames.empty()) throw ParameterError(where + ": frames must be a non-empty array");
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const json &f = frames[i];
        const std::string w = where + " frame " + std::to_string(i);
        TrackedFrame tf;
        tf.params.shape = t.shape;
        tf.params.expression = vector_field(f, "expression", w);
        tf.params.jaw_angle = number(f, "jaw_angle", w);
        const VecX<double> q = vector_field(f, "global_rotation", w, 4);
        tf.params.global_rotation = Quat<double>(q[0], q[1], q[2], q[3]);
        if (std::abs(tf.params.global_rotation.norm() - 1.0) > 1e-6)
            throw ParameterError(w + ": global_rotation must be a unit quaternion");
        tf.params.global_translation = vector_field(f, "global_translation", w, 3);
        const json &cam = field(f, "camera", w);
        tf.camera.fx = number(cam, "fx", w);
        tf.camera.fy = number(cam, "fy", w);
        tf.camera.cx = number(cam, "cx", w);
        tf.camera.cy = number(cam, "cy", w);
        tf.camera.width = static_cast<int>(number(cam, "width", w));
        tf.camera.height = static_cast<int>(number(cam, "height", w));
        const VecX<double> cq = vector_field(cam, "rotation", w, 4);
        tf.camera.rotation = Quat<double>(cq[0], cq[1], cq[2], cq[3]);
        tf.camera.translation = vector_field(cam, "translation", w, 3);
        validate(tf.camera);
        const json &tp = field(f, "target_frame_path", w);
        const json &mp = field(f, "matte_path", w);
        if (!tp.is_string() || !mp.is_string()) throw ParameterError(w + ": frame paths must be strings");
        tf.target_frame_path = tp.get<std::string>();
        tf.matte_path = mp.get<std::string>();
        if (i > 0 && tf.params.expression.size() != t.frames[0].params.expression.size())
            throw ParameterError(w + ": expression length differs from frame 0");
        t.frames.push_back(std::move(tf));
    }
    return t;
}

void save_tracking(const fs::path &path, const Tracking &tracking) {
    json doc;
    doc["mesh_id"] = tracking.mesh_id;
    doc["shape"] = to_json(tracking.shape);
    json frames = json::array();
    for (const auto &f : tracking.frames) {
        const auto &p = f.params;
        const auto &c = f.camera;
        const auto &q = p.global_rotation;
        const auto &cq = c.rotation;
        frames.push_back({
            {"expression", to_json(p.expression)},
            {"jaw_angle", p.jaw_angle},
            {"global_rotation", {q.w(), q.x(), q.y(), q.z()}},
            {"global_translation", to_json(p.global_translation)},
            {"camera",
             {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height},
              {"rotation", {cq.w(), cq.x(), cq.y(), cq.z()}}, {"translation", to_json(c.translation)}}},
            {"target_frame_path", f.target_frame_path},
            {"matte_path", f.matte_path},
        });
    }
    doc["frames"] = std::move(frames);
    write_file_atomic(path, doc.dump(2) + "\n");
}

RiggedMesh<double> mesh_from_id(const std::string &mesh_id) {
    const std::string prefix = "synthetic:";
    if (mesh_id.rfind(prefix, 0) != 0) throw ParameterError("unknown mesh_id '" + mesh_id + "'");
    std::uint64_t seed = 0;
    std::istringstream in(mesh_id.substr(prefix.size()));
    if (!(in >> seed) || !in.eof()) throw ParameterError("bad mesh_id '" + mesh_id + "'");
    return synthetic_head<double>(seed).mesh;
}

Tracking write_synthetic_scene(const fs::path &dir, std::uint64_t seed, bool force) {
    std::error_code ec;
    if (fs::exists(dir) && !fs::is_empty(dir) && !force)
        throw IoError(dir.string() + " is not empty (use --force to overwrite)");
    fs::create_directories(dir / "frames", ec);
    fs::create_directories(dir / "mattes", ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    const auto head = synthetic_head<double>(seed);
    const Rows<double, 3> albedo = synthetic_albedo(head.mesh, seed);
    Tracking t;
    t.mesh_id = "synthetic:" + std::to_string(seed);
    t.shape = head.frames.front().shape;
    for (std::size_t i = 0; i < head.frames.size(); ++i) {
        const auto &cam = head.cameras[i];
        const MeshRaster raster = rasterize_mesh(deform_mesh(head.mesh, head.frames[i]), head.mesh.faces, albedo, cam);
        const Image<double> bg = synthetic_background(cam.width, cam.height, seed, static_cast<int>(i));
        Image<double> frame(cam.height, cam.width);
        for (int c = 0; c < 3; ++c) frame[c] = raster.premultiplied[c] + bg[c] * (1.0 - raster.coverage);
        char name[32];
        std::snprintf(name, sizeof name, "%03zu.png", i);
        TrackedFrame tf{head.frames[i], cam, std::string("frames/frame_") + name, std::string("mattes/matte_") + name};
        write_png_rgb(dir / tf.target_frame_path, frame);
        write_png_gray(dir / tf.matte_path, raster.coverage);
        t.frames.push_back(std::move(tf));
    }
    save_tracking(dir / "tracking.json", t);
    return t;
}

} // namespace splatswap

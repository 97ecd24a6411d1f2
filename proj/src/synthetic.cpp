// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <utility>

namespace splatswap {

namespace {

struct Icosphere {
    std::vector<Vec3<double>> vertices;
    std::vector<std::array<int, 3>> faces;
};

Icosphere icosphere(int subdivisions) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    Icosphere s;
    s.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                  {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto &v : s.vertices) v.normalize();
    s.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
               {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
               {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int level = 0; level < subdivisions; ++level) {
        std::map<std::pair<int, int>, int> midpoints;
        auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            if (auto it = midpoints.find(key); it != midpoints.end()) return it->second;
            s.vertices.push_back((s.vertices[a] + s.vertices[b]).normalized());
            const int id = static_cast<int>(s.vertices.size()) - 1;
            midpoints.emplace(key, id);
            return id;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(s.faces.size() * 4);
        for (const auto &f : s.faces) {
            const int ab = midpoint(f[0], f[1]);
            const int bc = midpoint(f[1], f[2]);
            const int ca = midpoint(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        s.faces = std::move(next);
    }
    return s;
}

double smoothstep(double edge0, double edge1, double x) {
    const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
    return t * t * (3 - 2 * t);
}

double blob(const Vec3<double> &u, const Vec3<double> &centre, double radius) {
    return std::exp(-(u - centre).squaredNorm() / (radius * radius));
}

} // namespace

template <class T> SyntheticHead<T> synthetic_head(std::uint64_t seed, const SyntheticOptions &options) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);

    const Icosphere sphere = icosphere(options.subdivisions);
    const Index nv = static_cast<Index>(sphere.vertices.size());
    const Vec3<double> radii = Vec3<double>(0.075, 0.1, 0.085).cwiseProduct(
        Vec3<double>(1 + 0.04 * uni(rng), 1 + 0.04 * uni(rng), 1 + 0.04 * uni(rng)));
    std::array<Vec3<double>, 3> bump_centres;
    for (auto &c : bump_centres) c = Vec3<double>(uni(rng), uni(rng), uni(rng)).normalized();

    RiggedMesh<double> mesh;
    mesh.neutral_vertices.resize(nv, 3);
    mesh.shape_basis.assign(2, Points<double>::Zero(nv, 3));
    mesh.expr_basis.assign(3, Points<double>::Zero(nv, 3));
    mesh.jaw_weights.resize(nv);
    mesh.jaw_pivot = Vec3<double>(0, -0.015, -0.03);
    mesh.jaw_axis = Vec3<double>::UnitX();
    for (Index i = 0; i < nv; ++i) {
        const Vec3<double> &u = sphere.vertices[i];
        double bump = 0;
        for (const auto &c : bump_centres) bump += 0.003 * blob(u, c, 0.6);
        const Vec3<double> p = u.cwiseProduct(radii) + bump * u;
        mesh.neutral_vertices.row(i) = p.transpose();

        mesh.shape_basis[0].row(i) << 0.1 * p.x(), 0, 0;
        mesh.shape_basis[1].row(i) << 0, 0.1 * p.y(), 0.05 * p.z();

        const double front = std::max(u.z(), 0.0);
        const double side = u.x() >= 0 ? 1.0 : -1.0;
        const double smile = std::exp(-(u.y() + 0.35) * (u.y() + 0.35) / 0.05) * front;
        const double brow = std::exp(-(u.y() - 0.35) * (u.y() - 0.35) / 0.03) * front * front;
        const double puff = std::exp(-(u.y() + 0.15) * (u.y() + 0.15) / 0.05) * std::abs(u.x()) * front;
        mesh.expr_basis[0].row(i) << 0.012 * side * std::abs(u.x()) * smile, 0.008 * smile, 0;
        mesh.expr_basis[1].row(i) << 0, 0.01 * brow, 0.003 * brow;
        mesh.expr_basis[2].row(i) << 0.01 * side * puff, 0, 0.004 * puff;

        mesh.jaw_weights[i] = smoothstep(-0.15, -0.45, u.y()) * smoothstep(-0.3, 0.1, u.z());
    }
    mesh.faces.resize(static_cast<Index>(sphere.faces.size()), 3);
    for (Index f = 0; f < mesh.faces.rows(); ++f) {
        for (int k = 0; k < 3; ++k) mesh.faces(f, k) = sphere.faces[f][k];
    }

    const int count = std::max(options.frames, 3);
    std::vector<FrameParams<double>> frames;
    std::vector<Camera<double>> cameras;
    const Vec3<double> centroid = mesh.neutral_vertices.colwise().mean().transpose();
    const double fov_scale = 170.0 / 96.0;
    for (int k = 0; k < count; ++k) {
        FrameParams<double> p = FrameParams<double>::neutral(2, 3);
        for (Index e = 0; e < 3; ++e) p.expression[e] = 0.8 * uni(rng);
        p.jaw_angle = 0.1 * (1 + uni(rng));
        const double yaw = 0.05 * uni(rng);
        const double pitch = 0.05 * uni(rng);
        p.global_rotation = Quat<double>(Eigen::AngleAxisd(yaw, Vec3<double>::UnitY()) *
                                         Eigen::AngleAxisd(pitch, Vec3<double>::UnitX()));
        p.global_translation = Vec3<double>(0.004 * uni(rng), 0.004 * uni(rng), 0.004 * uni(rng));
        frames.push_back(p);

        const double azimuth = (-25.0 + 50.0 * k / (count - 1)) * std::numbers::pi / 180.0;
        const Vec3<double> eye = centroid + 0.55 * Vec3<double>(std::sin(azimuth), 0.0, std::cos(azimuth));
        cameras.push_back(Camera<double>::look_at(eye, centroid, Vec3<double>::UnitY(),
                                                  fov_scale * options.width, fov_scale * options.width,
                                                  options.width, options.height));
    }

    SyntheticHead<T> out;
    out.mesh.neutral_vertices = mesh.neutral_vertices.template cast<T>();
    out.mesh.faces = mesh.faces;
    for (const auto &b : mesh.shape_basis) out.mesh.shape_basis.push_back(b.template cast<T>());
    for (const auto &b : mesh.expr_basis) out.mesh.expr_basis.push_back(b.template cast<T>());
    out.mesh.jaw_weights = mesh.jaw_weights.template cast<T>();
    out.mesh.jaw_pivot = mesh.jaw_pivot.template cast<T>();
    out.mesh.jaw_axis = mesh.jaw_axis.template cast<T>();
    for (const auto &p : frames) {
        FrameParams<T> q;
        q.shape = p.shape.template cast<T>();
        q.expression = p.expression.template cast<T>();
        q.jaw_angle = static_cast<T>(p.jaw_angle);
        q.global_rotation = p.global_rotation.template cast<T>();
        q.global_translation = p.global_translation.template cast<T>();
        out.frames.push_back(q);
    }
    for (const auto &c : cameras) {
        Camera<T> d;
        d.fx = static_cast<T>(c.fx);
        d.fy = static_cast<T>(c.fy);
        d.cx = static_cast<T>(c.cx);
        d.cy = static_cast<T>(c.cy);
        d.width = c.width;
        d.height = c.height;
        d.rotation = c.rotation.template cast<T>();
        d.translation = c.translation.template cast<T>();
        out.cameras.push_back(d);
    }
    return out;
}

Rows<double, 3> synthetic_albedo(const RiggedMesh<double> &mesh, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    const Vec3<double> skin = Vec3<double>(0.82, 0.62, 0.52) + 0.08 * Vec3<double>(uni(rng), uni(rng), uni(rng));
    const Vec3<double> hair = Vec3<double>(0.22, 0.14, 0.09) + 0.08 * Vec3<double>(uni(rng), uni(rng), uni(rng));
    const Vec3<double> eye_colour(0.08, 0.08, 0.1);
    const Vec3<double> lips(0.72, 0.26, 0.26);
    const double hairline = 0.45 + 0.15 * uni(rng);
    const double eye_spacing = 0.35 + 0.08 * uni(rng);
    const double eye_height = 0.15 + 0.05 * uni(rng);
    const double mouth_width = 0.22 + 0.08 * uni(rng);
    const bool beard = (seed % 2) == 1;

    const Vec3<double> centroid = mesh.neutral_vertices.colwise().mean().transpose();
    Rows<double, 3> colours(mesh.vertex_count(), 3);
    for (Index i = 0; i < mesh.vertex_count(); ++i) {
        const Vec3<double> u = (mesh.neutral_vertices.row(i).transpose() - centroid).normalized();
        Vec3<double> c = skin * (0.9 + 0.1 * u.z());
        const double h = std::max(smoothstep(hairline - 0.1, hairline + 0.1, u.y()),
                                  smoothstep(-0.1, -0.4, u.z()) * smoothstep(-0.4, -0.1, u.y()));
        c = c * (1 - h) + hair * h;
        const double eyes = std::max(blob(u, Vec3<double>(eye_spacing, eye_height, 0.9).normalized(), 0.22),
                                     blob(u, Vec3<double>(-eye_spacing, eye_height, 0.9).normalized(), 0.22));
        c = c * (1 - eyes) + eye_colour * eyes;
        const double mouth = std::exp(-(u.x() * u.x()) / (mouth_width * mouth_width) -
                                      (u.y() + 0.42) * (u.y() + 0.42) / 0.01) *
                             smoothstep(0.2, 0.6, u.z());
        c = c * (1 - mouth) + lips * mouth;
        if (beard) {
            const double b = smoothstep(-0.35, -0.6, u.y()) * smoothstep(0.0, 0.4, u.z());
            c = c * (1 - b) + hair * b;
        }
        colours.row(i) = c.cwiseMax(0.0).cwiseMin(1.0).transpose();
    }
    return colours;
}

Image<double> synthetic_background(int width, int height, std::uint64_t seed, int frame) {
    std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double phase = 2 * std::numbers::pi * uni(rng);
    const Vec3<double> tint(0.3 + 0.2 * uni(rng), 0.3 + 0.2 * uni(rng), 0.3 + 0.2 * uni(rng));
    Image<double> bg(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double s = std::sin(2 * std::numbers::pi * (1.5 * x / width + 0.1 * frame) + phase);
            const double g = static_cast<double>(y) / height;
            for (int c = 0; c < 3; ++c) bg[c](y, x) = std::clamp(tint[c] + 0.15 * s + 0.2 * (g - 0.5) * (c - 1), 0.0, 1.0);
        }
    }
    return bg;
}

MeshRaster rasterize_mesh(const Points<double> &vertices, const Faces &faces, const Rows<double, 3> &colors,
                          const Camera<double> &camera, int supersample) {
    const int ss = std::max(supersample, 1);
    const int W = camera.width * ss;
    const int H = camera.height * ss;
    const Mat3<double> R = camera.R();
    Rows<double, 3> proj(vertices.rows(), 3);
    for (Index i = 0; i < vertices.rows(); ++i) {
        const Vec3<double> p = R * vertices.row(i).transpose() + camera.translation;
        proj.row(i) << (camera.fx * p.x() / p.z() + camera.cx) * ss, (camera.fy * p.y() / p.z() + camera.cy) * ss, p.z();
    }
    std::vector<double> depth(static_cast<std::size_t>(W) * H, std::numeric_limits<double>::infinity());
    std::vector<Vec3<double>> colour(static_cast<std::size_t>(W) * H, Vec3<double>::Zero());
    for (Index f = 0; f < faces.rows(); ++f) {
        const Vec3<double> a = proj.row(faces(f, 0)).transpose();
        const Vec3<double> b = proj.row(faces(f, 1)).transpose();
        const Vec3<double> c = proj.row(faces(f, 2)).transpose();
        if (a.z() <= 0.01 || b.z() <= 0.01 || c.z() <= 0.01) continue;
        const double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
        if (std::abs(area) < 1e-12) continue;
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}))));
        const int x1 = std::min(W - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}))));
        const int y1 = std::min(H - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                const double w0 = ((b.x() - px) * (c.y() - py) - (b.y() - py) * (c.x() - px)) / area;
                const double w1 = ((c.x() - px) * (a.y() - py) - (c.y() - py) * (a.x() - px)) / area;
                const double w2 = 1 - w0 - w1;
                if (w0 < 0 || w1 < 0 || w2 < 0) continue;
                const double z = w0 * a.z() + w1 * b.z() + w2 * c.z();
                const std::size_t idx = static_cast<std::size_t>(y) * W + x;
                if (z >= depth[idx]) continue;
                depth[idx] = z;
                colour[idx] = w0 * colors.row(faces(f, 0)).transpose() + w1 * colors.row(faces(f, 1)).transpose() +
                              w2 * colors.row(faces(f, 2)).transpose();
            }
        }
    }
    MeshRaster out{Image<double>(camera.height, camera.width), Plane<double>::Zero(camera.height, camera.width)};
    const double inv = 1.0 / (ss * ss);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * W + x;
            if (!std::isfinite(depth[idx])) continue;
            out.coverage(y / ss, x / ss) += inv;
            for (int ch = 0; ch < 3; ++ch) out.premultiplied[ch](y / ss, x / ss) += inv * colour[idx][ch];
        }
    }
    return out;
}

template SyntheticHead<float> synthetic_head<float>(std::uint64_t, const SyntheticOptions &);
template SyntheticHead<double> synthetic_head<double>(std::uint64_t, const SyntheticOptions &);

} // namespace splatswap

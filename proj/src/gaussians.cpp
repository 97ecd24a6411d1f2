// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/gaussians.hpp"

#include "splatswap/errors.hpp"
#include "splatswap/rotation.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>

namespace splatswap {

template <class T> SplatParams<T> SplatParams<T>::gather(std::span<const Index> rows) const {
    SplatParams out = zeros(static_cast<Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const Index r = rows[k];
        const Index i = static_cast<Index>(k);
        out.mu_local.row(i) = mu_local.row(r);
        out.rot_local.row(i) = rot_local.row(r);
        out.scale_raw.row(i) = scale_raw.row(r);
        out.opacity_raw[i] = opacity_raw[r];
        out.sh.row(i) = sh.row(r);
    }
    return out;
}

template <class T> GaussianCloud<T> init_cloud(const RiggedMesh<T> &mesh) {
    const Index n = mesh.face_count();
    GaussianCloud<T> cloud;
    cloud.params = SplatParams<T>::zeros(n);
    cloud.params.rot_local.col(0).setOnes();
    // scale_raw = log(1) and opacity_raw = logit(0.5) are both zero; an all-zero
    // SH block evaluates to mid-grey.
    cloud.parent_face.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) cloud.parent_face[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(i);
    return cloud;
}

template <class T>
BoundSplat<T> bind_splat(const TriangleFrame<T> &frame, const Vec3<T> &mu, const Vec4<T> &rot, const Vec3<T> &scale) {
    return {frame.l * (frame.K * mu) + frame.V, frame.K * quat_to_matrix(rot), frame.l * scale};
}

template <class T>
LocalSplatGrad<T> bind_splat_backward(const TriangleFrame<T> &frame, const Vec3<T> &mu, const Vec4<T> &rot,
                                      const Vec3<T> &scale, const BoundSplatGrad<T> &grad) {
    LocalSplatGrad<T> out;
    out.scale = frame.l * grad.s;
    out.frame.l = grad.s.dot(scale) + grad.mu.dot(frame.K * mu);
    out.frame.K = grad.R * quat_to_matrix(rot).transpose() + frame.l * grad.mu * mu.transpose();
    out.frame.V = grad.mu;
    out.rot = quat_to_matrix_backward<T>(rot, frame.K.transpose() * grad.R);
    out.mu = frame.l * (frame.K.transpose() * grad.mu);
    return out;
}

template <class T> void check_binding(const GaussianCloud<T> &cloud, Index face_count) {
    if (static_cast<Index>(cloud.parent_face.size()) != cloud.size()) {
        throw BindingError("parent_face length does not match splat count");
    }
    for (std::size_t i = 0; i < cloud.parent_face.size(); ++i) {
        if (static_cast<Index>(cloud.parent_face[i]) >= face_count) {
            throw BindingError("splat " + std::to_string(i) + " bound to face " +
                               std::to_string(cloud.parent_face[i]) + " of " + std::to_string(face_count));
        }
    }
}

template <class T>
GlobalGaussians<T> local_to_global(const GaussianCloud<T> &cloud, std::span<const TriangleFrame<T>> frames) {
    check_binding(cloud, static_cast<Index>(frames.size()));
    const Index n = cloud.size();
    GlobalGaussians<T> g;
    g.mu.resize(n, 3);
    g.rot.resize(n, 4);
    g.scale.resize(n, 3);
    g.opacity.resize(n);
    g.sh = cloud.params.sh;
    for (Index i = 0; i < n; ++i) {
        const auto &frame = frames[cloud.parent_face[static_cast<std::size_t>(i)]];
        const Vec4<T> r = cloud.params.rot_local.row(i).transpose();
        const BoundSplat<T> b = bind_splat<T>(frame, cloud.params.mu_local.row(i).transpose(), r, cloud.local_scale(i));
        g.mu.row(i) = b.mu.transpose();
        g.scale.row(i) = b.s.transpose();
        const Vec4<T> q = quat_multiply<T>(quat_coeffs<T>(Quat<T>(frame.K)), r / r.norm());
        g.rot.row(i) = q.transpose();
        g.opacity[i] = cloud.opacity(i);
    }
    return g;
}

template <class T> Mat3<T> covariance(const GlobalGaussians<T> &global, Index i) {
    const Mat3<T> R = quat_to_matrix<T>(global.rot.row(i).transpose());
    const Vec3<T> s = global.scale.row(i).transpose();
    const Mat3<T> M = R * s.asDiagonal();
    return M * M.transpose();
}

template <class T> void normalize_rotations(SplatParams<T> &params) {
    for (Index i = 0; i < params.size(); ++i) {
        const T n = params.rot_local.row(i).norm();
        if (n > T(0)) {
            params.rot_local.row(i) /= n;
        } else {
            params.rot_local.row(i) << 1, 0, 0, 0;
        }
    }
}

namespace {

constexpr std::array<char, 4> kMagic = {'G', 'S', 'W', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream &out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char *>(b), 4);
}

std::uint32_t get_u32(std::istream &in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char *>(b), 4)) throw IoError("truncated checkpoint");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

template <class Block> void put_floats(std::ostream &out, const Block &block) {
    for (Index r = 0; r < block.rows(); ++r) {
        for (Index c = 0; c < block.cols(); ++c) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(block(r, c))));
    }
}

template <class Block> void get_floats(std::istream &in, Block &block) {
    for (Index r = 0; r < block.rows(); ++r) {
        for (Index c = 0; c < block.cols(); ++c) block(r, c) = std::bit_cast<float>(get_u32(in));
    }
}

} // namespace

void save_cloud(const std::filesystem::path &path, const GaussianCloud<double> &cloud) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(kMagic.data(), 4);
        put_u32(out, kVersion);
        put_u32(out, static_cast<std::uint32_t>(cloud.size()));
        put_floats(out, cloud.params.mu_local);
        put_floats(out, cloud.params.rot_local);
        put_floats(out, cloud.params.scale_raw);
        put_floats(out, cloud.params.opacity_raw);
        put_floats(out, cloud.params.sh);
        for (auto p : cloud.parent_face) put_u32(out, p);
        if (!out) throw IoError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

GaussianCloud<double> load_cloud(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4) || magic != kMagic) throw IoError(path.string() + " is not a GSWP checkpoint");
    if (const auto v = get_u32(in); v != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(v));
    const Index n = get_u32(in);
    GaussianCloud<double> cloud;
    cloud.params = SplatParams<double>::zeros(n);
    get_floats(in, cloud.params.mu_local);
    get_floats(in, cloud.params.rot_local);
    get_floats(in, cloud.params.scale_raw);
    get_floats(in, cloud.params.opacity_raw);
    get_floats(in, cloud.params.sh);
    cloud.parent_face.resize(static_cast<std::size_t>(n));
    for (auto &p : cloud.parent_face) p = get_u32(in);
    return cloud;
}

#define SPLATSWAP_INSTANTIATE(T)                                                                               \
    template struct SplatParams<T>;                                                                            \
    template GaussianCloud<T> init_cloud<T>(const RiggedMesh<T> &);                                            \
    template BoundSplat<T> bind_splat<T>(const TriangleFrame<T> &, const Vec3<T> &, const Vec4<T> &,           \
                                         const Vec3<T> &);                                                     \
    template LocalSplatGrad<T> bind_splat_backward<T>(const TriangleFrame<T> &, const Vec3<T> &, const Vec4<T> &, \
                                                      const Vec3<T> &, const BoundSplatGrad<T> &);              \
    template void check_binding<T>(const GaussianCloud<T> &, Index);                                           \
    template GlobalGaussians<T> local_to_global<T>(const GaussianCloud<T> &, std::span<const TriangleFrame<T>>); \
    template Mat3<T> covariance<T>(const GlobalGaussians<T> &, Index);                                         \
    template void normalize_rotations<T>(SplatParams<T> &);

SPLATSWAP_INSTANTIATE(float)
SPLATSWAP_INSTANTIATE(double)

} // namespace splatswap

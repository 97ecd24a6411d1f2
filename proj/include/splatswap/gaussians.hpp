// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
// Gaussian cloud bound to mesh triangles and its local-to-global transform.
#pragma once

#include "splatswap/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace splatswap {

/// SH order 1: one DC and three linear coefficients per colour channel,
/// stored per splat as [coefficient * 3 + channel].
inline constexpr int kShCoeffs = 4;
inline constexpr int kShValues = kShCoeffs * 3;

/// Optimizable per-splat parameters. The same layout holds gradients and
/// optimizer moments. Scales are log-space, opacities logit-space.
template <class T> struct SplatParams {
    Rows<T, 3> mu_local;
    Rows<T, 4> rot_local; ///< (w, x, y, z)
    Rows<T, 3> scale_raw;
    VecX<T> opacity_raw;
    Rows<T, kShValues> sh;

    Index size() const { return mu_local.rows(); }

    static SplatParams zeros(Index n) {
        SplatParams p;
        p.mu_local = Rows<T, 3>::Zero(n, 3);
        p.rot_local = Rows<T, 4>::Zero(n, 4);
        p.scale_raw = Rows<T, 3>::Zero(n, 3);
        p.opacity_raw = VecX<T>::Zero(n);
        p.sh = Rows<T, kShValues>::Zero(n, kShValues);
        return p;
    }

    /// Calls f(a_block, b_block) for each parameter group of two congruent sets.
    template <class F> static void zip(SplatParams &a, const SplatParams &b, F &&f) {
        f(a.mu_local, b.mu_local);
        f(a.rot_local, b.rot_local);
        f(a.scale_raw, b.scale_raw);
        f(a.opacity_raw, b.opacity_raw);
        f(a.sh, b.sh);
    }

    /// Keeps the listed rows, in order.
    SplatParams gather(std::span<const Index> rows) const;
};

template <class T> struct GaussianCloud {
    SplatParams<T> params;
    std::vector<std::uint32_t> parent_face;

    Index size() const { return params.size(); }
    Vec3<T> local_scale(Index i) const { return params.scale_raw.row(i).array().exp().transpose(); }
    T opacity(Index i) const { return T(1) / (T(1) + std::exp(-params.opacity_raw[i])); }
};

template <class T> struct GlobalGaussians {
    Rows<T, 3> mu;
    Rows<T, 4> rot; ///< (w, x, y, z)
    Rows<T, 3> scale;
    VecX<T> opacity;
    Rows<T, kShValues> sh;

    Index size() const { return mu.rows(); }
};

/// One splat placed in world space: centre, rotation matrix, scale.
template <class T> struct BoundSplat {
    Vec3<T> mu;
    Mat3<T> R;
    Vec3<T> s;
};

template <class T> struct BoundSplatGrad {
    Vec3<T> mu = Vec3<T>::Zero();
    Mat3<T> R = Mat3<T>::Zero();
    Vec3<T> s = Vec3<T>::Zero();
};

template <class T> struct LocalSplatGrad {
    Vec3<T> mu;
    Vec4<T> rot;
    Vec3<T> scale; ///< with respect to the local scale, not its logarithm
    TriangleFrameGrad<T> frame;
};

/// One splat per face at the face origin, identity rotation, unit scale,
/// opacity 0.5 and mid-grey colour.
template <class T> GaussianCloud<T> init_cloud(const RiggedMesh<T> &mesh);

/// mu' = l K mu + V, R' = K R(r), s' = l s.
template <class T>
BoundSplat<T> bind_splat(const TriangleFrame<T> &frame, const Vec3<T> &mu, const Vec4<T> &rot, const Vec3<T> &scale);

/// Vector-Jacobian product of bind_splat.
template <class T>
LocalSplatGrad<T> bind_splat_backward(const TriangleFrame<T> &frame, const Vec3<T> &mu, const Vec4<T> &rot,
                                      const Vec3<T> &scale, const BoundSplatGrad<T> &grad);

template <class T>
GlobalGaussians<T> local_to_global(const GaussianCloud<T> &cloud, std::span<const TriangleFrame<T>> frames);

/// R diag(s²) Rᵀ of splat i.
template <class T> Mat3<T> covariance(const GlobalGaussians<T> &global, Index i);

/// Throws BindingError if any parent index is out of range for `face_count`.
template <class T> void check_binding(const GaussianCloud<T> &cloud, Index face_count);

/// Renormalizes every rotation quaternion.
template <class T> void normalize_rotations(SplatParams<T> &params);

/// Binary checkpoint: "GSWP", version, N, float32 fields, u32 parents.
void save_cloud(const std::filesystem::path &path, const GaussianCloud<double> &cloud);
GaussianCloud<double> load_cloud(const std::filesystem::path &path);

} // namespace splatswap

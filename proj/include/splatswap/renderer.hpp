// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
// CPU splatting renderer with an analytic backward pass.
//
// Splats are projected with a pinhole model, their 2D covariance is
// J W Σ Wᵀ Jᵀ + 0.3 I, and pixels blend front to back in depth order (ties by
// splat index). Contributions below 1/255 are skipped and a pixel stops once its
// transmittance falls under 1e-4. Colour is order-1 SH evaluated along the view
// direction expressed in the parent triangle's frame.
#pragma once

#include "splatswap/gaussians.hpp"
#include "splatswap/image.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace splatswap {

inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;
inline constexpr double kNearPlane = 0.01;
inline constexpr double kScreenDilation = 0.3;
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr double kMinTransmittance = 1e-4;

template <class T> struct RenderedImage {
    Image<T> rgb;
    Plane<T> alpha;

    RenderedImage() = default;
    RenderedImage(Index height, Index width) : rgb(height, width), alpha(Plane<T>::Zero(height, width)) {}
    Index height() const { return alpha.rows(); }
    Index width() const { return alpha.cols(); }
};

/// Screen-space footprint of one splat.
template <class T> struct ProjectedSplat {
    bool visible = false;
    T u = 0, v = 0;
    T conic_a = 0, conic_b = 0, conic_c = 0;
    T opacity = 0;
    T depth = 0;
    Vec3<T> color = Vec3<T>::Zero();
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1; ///< inclusive pixel bounds
};

template <class T> struct Contribution {
    std::uint32_t splat;
    T alpha;
    T transmittance; ///< before this splat
};

/// Everything render_backward needs from the forward pass.
template <class T> struct ForwardState {
    int width = 0, height = 0;
    std::uint64_t fingerprint = 0;
    Vec3<T> background = Vec3<T>::Zero();
    std::vector<ProjectedSplat<T>> projected;
    std::vector<std::uint32_t> pixel_offsets; ///< H*W + 1 offsets into contributions
    std::vector<Contribution<T>> contributions;
    std::vector<T> final_transmittance;
};

template <class T> struct RenderOutput {
    RenderedImage<T> image;
    ForwardState<T> state;
};

template <class T> struct SplatGradients {
    SplatParams<T> params;
    std::vector<TriangleFrameGrad<T>> frames;
    /// Per-splat norm of the loss gradient w.r.t. the projected centre, in NDC units.
    VecX<T> screen;
    /// Filled by callers that chain into FrameParams (see mesh_params_gradient).
    FrameParamsGrad<T> mesh_params;
};

template <class T>
RenderOutput<T> render_with_state(const GaussianCloud<T> &cloud, std::span<const TriangleFrame<T>> frames,
                                  const Camera<T> &camera, const Vec3<T> &background = Vec3<T>::Zero());

template <class T>
RenderedImage<T> render(const GaussianCloud<T> &cloud, std::span<const TriangleFrame<T>> frames,
                        const Camera<T> &camera, const Vec3<T> &background = Vec3<T>::Zero());

/// `upstream` holds dLoss/dRGB and dLoss/dAlpha. Throws ContractError when the
/// scene differs from the one that produced `state`.
template <class T>
SplatGradients<T> render_backward(const GaussianCloud<T> &cloud, std::span<const TriangleFrame<T>> frames,
                                  const Camera<T> &camera, const ForwardState<T> &state,
                                  const RenderedImage<T> &upstream);

} // namespace splatswap

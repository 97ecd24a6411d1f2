// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
// Training objectives: photometric reconstruction, scale and position
// regularizers on local splat parameters, compound identity loss, and their
// weighted total.
#pragma once

#include "splatswap/gaussians.hpp"
#include "splatswap/image.hpp"

#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace splatswap {

class IdentityEncoder;
struct IdentityEmbedding;

struct LossWeights {
    double lambda_ssim = 0.2;
    double lambda_scale = 1.0;
    double lambda_pos = 0.01;
    double phi_scale = 0.6;
    double phi_pos = 1.0;
    double lambda_id = 0.1;
    std::vector<double> lambda_k = {0.9, 0.001, 0.1};

    /// Throws ConfigError on negative weights or an empty lambda_k.
    void validate() const;
};

template <class T> struct ImageLoss {
    T value = 0;
    Image<T> grad;
};

/// Value and gradient of a regularizer w.r.t. local scale (not log-scale) or local centre.
template <class T> struct RegLoss {
    T value = 0;
    Rows<T, 3> grad;
};

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean SSIM over pixels and channels; 11×11 Gaussian window, zero padding.
template <class T> T ssim(const Image<T> &a, const Image<T> &b);

/// (1 − λ) mean|render − target| + λ (1 − SSIM(render, target)).
template <class T> ImageLoss<T> reconstruction_loss(const Image<T> &render, const Image<T> &target, T lambda_ssim = T(0.2));

/// ‖max(s, φ)‖₂ over every component of every splat's local scale.
template <class T> RegLoss<T> scale_reg(const GaussianCloud<T> &cloud, T phi = T(0.6));

/// ‖max(|μ|, φ)‖₂ over every component of every splat's local centre.
template <class T> RegLoss<T> position_reg(const GaussianCloud<T> &cloud, T phi = T(1.0));

/// Σ_k λ_k (1 − cos(source_k, E_k(render))). Encoders must be differentiable.
/// Throws ConfigError when the three lists differ in length.
ImageLoss<double> identity_loss(const Image<double> &render, std::span<const IdentityEmbedding> sources,
                                std::span<const std::shared_ptr<IdentityEncoder>> encoders,
                                std::span<const double> lambda_k);

enum class Stage { A, B };

template <class T> struct LossParts {
    ImageLoss<T> rec;
    RegLoss<T> scale;
    RegLoss<T> pos;
    std::optional<ImageLoss<T>> id;
};

template <class T> struct TotalLoss {
    T value = 0;
    Image<T> d_image;
    Rows<T, 3> d_scale_local;
    Rows<T, 3> d_mu_local;
};

/// L_rec + λ_scale L_scale + λ_pos L_pos, plus λ_id L_id in stage B.
template <class T> TotalLoss<T> total_loss(Stage stage, const LossParts<T> &parts, const LossWeights &weights);

} // namespace splatswap

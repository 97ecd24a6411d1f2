// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/losses.hpp"

#include "splatswap/errors.hpp"
#include "splatswap/identity.hpp"

#include <cmath>
#include <string>

namespace splatswap {

void LossWeights::validate() const {
    for (double w : {lambda_ssim, lambda_scale, lambda_pos, phi_scale, phi_pos, lambda_id}) {
        if (!(w >= 0)) throw ConfigError("loss weights must be nonnegative");
    }
    if (lambda_ssim > 1) throw ConfigError("lambda_ssim must lie in [0, 1]");
    if (lambda_k.empty()) throw ConfigError("lambda_k must list one weight per identity encoder");
    for (double w : lambda_k) {
        if (!(w >= 0)) throw ConfigError("lambda_k weights must be nonnegative");
    }
}

namespace {

template <class T> std::array<T, kSsimWindow> gaussian_window() {
    std::array<T, kSsimWindow> w{};
    T sum = 0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        w[i] = static_cast<T>(std::exp(-d * d / (2 * kSsimSigma * kSsimSigma)));
        sum += w[i];
    }
    for (auto &v : w) v /= sum;
    return w;
}

// Separable "same" filter with zero padding. The window is symmetric, so this is
// also its own adjoint.
template <class T> Plane<T> gaussian_filter(const Plane<T> &in) {
    static const auto w = gaussian_window<T>();
    const Index H = in.rows(), W = in.cols();
    constexpr int r = kSsimWindow / 2;
    Plane<T> tmp = Plane<T>::Zero(H, W);
    for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x) {
            T acc = 0;
            for (int k = -r; k <= r; ++k) {
                const Index xx = x + k;
                if (xx >= 0 && xx < W) acc += w[k + r] * in(y, xx);
            }
            tmp(y, x) = acc;
        }
    Plane<T> out = Plane<T>::Zero(H, W);
    for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x) {
            T acc = 0;
            for (int k = -r; k <= r; ++k) {
                const Index yy = y + k;
                if (yy >= 0 && yy < H) acc += w[k + r] * tmp(yy, x);
            }
            out(y, x) = acc;
        }
    return out;
}

template <class T> struct SsimResult {
    T value = 0;
    Image<T> grad; ///< d(mean SSIM)/d(first image)
};

template <class T> SsimResult<T> ssim_with_grad(const Image<T> &a, const Image<T> &b, bool want_grad) {
    const Index H = a.height(), W = a.width();
    const T C1 = T(kSsimC1), C2 = T(kSsimC2);
    const T norm = T(1) / T(3 * H * W);
    SsimResult<T> res;
    if (want_grad) res.grad = Image<T>(H, W);
    for (int c = 0; c < 3; ++c) {
        const Plane<T> &x = a[c];
        const Plane<T> &y = b[c];
        const Plane<T> mx = gaussian_filter<T>(x);
        const Plane<T> my = gaussian_filter<T>(y);
        const Plane<T> sxx = gaussian_filter<T>(x * x) - mx * mx;
        const Plane<T> syy = gaussian_filter<T>(y * y) - my * my;
        const Plane<T> sxy = gaussian_filter<T>(x * y) - mx * my;
        const Plane<T> A1 = T(2) * mx * my + C1;
        const Plane<T> A2 = T(2) * sxy + C2;
        const Plane<T> B1 = mx * mx + my * my + C1;
        const Plane<T> B2 = sxx + syy + C2;
        const Plane<T> S = (A1 * A2) / (B1 * B2);
        res.value += S.sum() * norm;
        if (!want_grad) continue;
        const Plane<T> dS_dsxx = -S / B2;
        const Plane<T> dS_dsxy = T(2) * A1 / (B1 * B2);
        const Plane<T> dS_dmx = T(2) * my * A2 / (B1 * B2) - S * T(2) * mx / B1 + dS_dsxx * (T(-2) * mx) + dS_dsxy * (-my);
        res.grad[c] = norm * (gaussian_filter<T>(dS_dmx) + T(2) * x * gaussian_filter<T>(dS_dsxx) +
                              y * gaussian_filter<T>(dS_dsxy));
    }
    return res;
}

} // namespace

template <class T> T ssim(const Image<T> &a, const Image<T> &b) {
    if (!same_size(a, b)) throw ParameterError("ssim: image sizes differ");
    return ssim_with_grad(a, b, false).value;
}

template <class T> ImageLoss<T> reconstruction_loss(const Image<T> &render, const Image<T> &target, T lambda_ssim) {
    if (!same_size(render, target)) throw ParameterError("reconstruction_loss: image sizes differ");
    const Index H = render.height(), W = render.width();
    const T norm = T(1) / T(3 * H * W);
    ImageLoss<T> loss;
    loss.grad = Image<T>(H, W);
    T l1 = 0;
    for (int c = 0; c < 3; ++c) {
        const Plane<T> diff = render[c] - target[c];
        l1 += diff.abs().sum() * norm;
        loss.grad[c] = (T(1) - lambda_ssim) * norm * diff.sign();
    }
    const SsimResult<T> s = ssim_with_grad(render, target, lambda_ssim != T(0));
    loss.value = (T(1) - lambda_ssim) * l1 + lambda_ssim * (T(1) - s.value);
    if (lambda_ssim != T(0)) {
        for (int c = 0; c < 3; ++c) loss.grad[c] -= lambda_ssim * s.grad[c];
    }
    return loss;
}

template <class T> RegLoss<T> scale_reg(const GaussianCloud<T> &cloud, T phi) {
    const Rows<T, 3> s = cloud.params.scale_raw.array().exp().matrix();
    const Rows<T, 3> m = s.cwiseMax(phi);
    RegLoss<T> loss;
    loss.value = m.norm();
    loss.grad = Rows<T, 3>::Zero(s.rows(), 3);
    if (loss.value > T(0)) {
        for (Index i = 0; i < s.rows(); ++i)
            for (int k = 0; k < 3; ++k)
                if (s(i, k) > phi) loss.grad(i, k) = s(i, k) / loss.value;
    }
    return loss;
}

template <class T> RegLoss<T> position_reg(const GaussianCloud<T> &cloud, T phi) {
    const Rows<T, 3> &mu = cloud.params.mu_local;
    const Rows<T, 3> m = mu.cwiseAbs().cwiseMax(phi);
    RegLoss<T> loss;
    loss.value = m.norm();
    loss.grad = Rows<T, 3>::Zero(mu.rows(), 3);
    if (loss.value > T(0)) {
        for (Index i = 0; i < mu.rows(); ++i)
            for (int k = 0; k < 3; ++k)
                if (std::abs(mu(i, k)) > phi) loss.grad(i, k) = mu(i, k) / loss.value;
    }
    return loss;
}

ImageLoss<double> identity_loss(const Image<double> &render, std::span<const IdentityEmbedding> sources,
                                std::span<const std::shared_ptr<IdentityEncoder>> encoders,
                                std::span<const double> lambda_k) {
    if (sources.size() != encoders.size() || lambda_k.size() != encoders.size()) {
        throw ConfigError("identity loss needs one source embedding and one weight per encoder (got " +
                          std::to_string(sources.size()) + " embeddings, " + std::to_string(encoders.size()) +
                          " encoders, " + std::to_string(lambda_k.size()) + " weights)");
    }
    ImageLoss<double> loss;
    loss.grad = Image<double>(render.height(), render.width());
    for (std::size_t k = 0; k < encoders.size(); ++k) {
        const auto &enc = *encoders[k];
        if (sources[k].encoder_name != enc.name()) {
            throw ConfigError("source embedding '" + sources[k].encoder_name + "' paired with encoder '" +
                              enc.name() + "'");
        }
        const CosineResult cr = cosine_with_grad(enc, render, sources[k]);
        loss.value += lambda_k[k] * (1.0 - cr.cosine);
        for (int c = 0; c < 3; ++c) loss.grad[c] -= lambda_k[k] * cr.grad[c];
    }
    return loss;
}

template <class T> TotalLoss<T> total_loss(Stage stage, const LossParts<T> &parts, const LossWeights &weights) {
    TotalLoss<T> total;
    total.value = parts.rec.value + T(weights.lambda_scale) * parts.scale.value + T(weights.lambda_pos) * parts.pos.value;
    total.d_image = parts.rec.grad;
    total.d_scale_local = T(weights.lambda_scale) * parts.scale.grad;
    total.d_mu_local = T(weights.lambda_pos) * parts.pos.grad;
    if (stage == Stage::B) {
        if (!parts.id) throw ParameterError("stage B total loss requires the identity term");
        total.value += T(weights.lambda_id) * parts.id->value;
        for (int c = 0; c < 3; ++c) total.d_image[c] += T(weights.lambda_id) * parts.id->grad[c];
    }
    return total;
}

#define SPLATSWAP_INSTANTIATE(T)                                                                         \
    template T ssim<T>(const Image<T> &, const Image<T> &);                                              \
    template ImageLoss<T> reconstruction_loss<T>(const Image<T> &, const Image<T> &, T);                 \
    template RegLoss<T> scale_reg<T>(const GaussianCloud<T> &, T);                                       \
    template RegLoss<T> position_reg<T>(const GaussianCloud<T> &, T);                                    \
    template TotalLoss<T> total_loss<T>(Stage, const LossParts<T> &, const LossWeights &);

SPLATSWAP_INSTANTIATE(float)
SPLATSWAP_INSTANTIATE(double)

} // namespace splatswap

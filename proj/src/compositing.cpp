// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/compositing.hpp"

#include "splatswap/errors.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace splatswap {

namespace {

template <class T> void require_same(const Mask<T> &a, const Mask<T> &b, const char *what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ParameterError(std::string(what) + ": dimension mismatch");
}

Index clamp_index(Index v, Index n) { return std::clamp<Index>(v, 0, n - 1); }

} // namespace

template <class T> Mask<T> fuse_masks(const Mask<T> &swapped, const Mask<T> &target) {
    require_same(swapped, target, "fuse_masks");
    return swapped * target;
}

template <class T> Mask<T> refine_mask(const Mask<T> &mask, int erode_radius, T blur_sigma) {
    if (erode_radius < 0 || blur_sigma < T(0)) throw ParameterError("refine_mask: negative radius or sigma");
    const Index H = mask.rows(), W = mask.cols();
    Mask<T> m = mask.cwiseMax(T(0)).cwiseMin(T(1));
    if (erode_radius > 0) {
        std::vector<std::pair<int, int>> disc;
        for (int dy = -erode_radius; dy <= erode_radius; ++dy)
            for (int dx = -erode_radius; dx <= erode_radius; ++dx)
                if (dx * dx + dy * dy <= erode_radius * erode_radius) disc.emplace_back(dx, dy);
        Mask<T> eroded(H, W);
        for (Index y = 0; y < H; ++y)
            for (Index x = 0; x < W; ++x) {
                T v = T(1);
                for (auto [dx, dy] : disc) v = std::min(v, m(clamp_index(y + dy, H), clamp_index(x + dx, W)));
                eroded(y, x) = v;
            }
        m = eroded;
    }
    if (blur_sigma > T(0)) {
        const int r = static_cast<int>(std::ceil(3 * blur_sigma));
        std::vector<T> k(static_cast<std::size_t>(2 * r + 1));
        T sum = 0;
        for (int i = -r; i <= r; ++i) sum += k[static_cast<std::size_t>(i + r)] = std::exp(-T(i * i) / (2 * blur_sigma * blur_sigma));
        for (auto &v : k) v /= sum;
        Mask<T> tmp(H, W);
        for (Index y = 0; y < H; ++y)
            for (Index x = 0; x < W; ++x) {
                T acc = 0;
                for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * m(y, clamp_index(x + i, W));
                tmp(y, x) = acc;
            }
        for (Index y = 0; y < H; ++y)
            for (Index x = 0; x < W; ++x) {
                T acc = 0;
                for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * tmp(clamp_index(y + i, H), x);
                m(y, x) = acc;
            }
    }
    return m.cwiseMax(T(0)).cwiseMin(T(1));
}

template <class T> Image<T> blend(const Image<T> &swapped, const Image<T> &target, const Mask<T> &mask) {
    if (!same_size(swapped, target) || !same_size(swapped, mask)) throw ParameterError("blend: dimension mismatch");
    Image<T> out;
    for (int c = 0; c < 3; ++c) out[c] = swapped[c] * mask + target[c] * (T(1) - mask);
    return out;
}

template <class T> Image<T> replace_background(const RenderedImage<T> &rendered, const Image<T> &background) {
    if (!same_size(background, rendered.alpha)) throw ParameterError("replace_background: dimension mismatch");
    return blend(rendered.rgb, background, rendered.alpha);
}

template <class T> Mask<T> threshold_mask(const Plane<T> &values, T threshold) {
    return (values > threshold).template cast<T>();
}

template <class T> RenderedImage<T> unpremultiply(const RenderedImage<T> &rendered_on_black) {
    RenderedImage<T> out = rendered_on_black;
    const Plane<T> &a = rendered_on_black.alpha;
    for (int c = 0; c < 3; ++c)
        out.rgb[c] = (a > T(0)).select((rendered_on_black.rgb[c] / a).cwiseMin(T(1)), T(0));
    return out;
}

#define SPLATSWAP_INSTANTIATE(T)                                                           \
    template Mask<T> fuse_masks<T>(const Mask<T> &, const Mask<T> &);                      \
    template Mask<T> refine_mask<T>(const Mask<T> &, int, T);                              \
    template Image<T> blend<T>(const Image<T> &, const Image<T> &, const Mask<T> &);       \
    template Image<T> replace_background<T>(const RenderedImage<T> &, const Image<T> &);   \
    template Mask<T> threshold_mask<T>(const Plane<T> &, T);                               \
    template RenderedImage<T> unpremultiply<T>(const RenderedImage<T> &);

SPLATSWAP_INSTANTIATE(float)
SPLATSWAP_INSTANTIATE(double)

} // namespace splatswap

// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
// Mask fusion, mask refinement and blending of rendered avatars onto frames.
#pragma once

#include "splatswap/image.hpp"
#include "splatswap/renderer.hpp"

namespace splatswap {

/// Elementwise product of two masks.
template <class T> Mask<T> fuse_masks(const Mask<T> &swapped, const Mask<T> &target);

/// Grayscale erosion with a disc of `erode_radius` pixels, then a Gaussian blur
/// truncated at 3σ. Both use replicate borders; radius 0 / sigma 0 skip a step.
template <class T> Mask<T> refine_mask(const Mask<T> &mask, int erode_radius = 3, T blur_sigma = T(2));

/// swapped · M + target · (1 − M), per channel.
template <class T> Image<T> blend(const Image<T> &swapped, const Image<T> &target, const Mask<T> &mask);

/// rgb · alpha + background · (1 − alpha) using the renderer's alpha.
template <class T> Image<T> replace_background(const RenderedImage<T> &rendered, const Image<T> &background);

/// 1 where value > threshold, else 0.
template <class T> Mask<T> threshold_mask(const Plane<T> &values, T threshold = T(0.5));

/// Divides colour rendered over black by its alpha; zero where alpha is zero.
template <class T> RenderedImage<T> unpremultiply(const RenderedImage<T> &rendered_on_black);

} // namespace splatswap

// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "splatswap/identity.hpp"

#include <span>

namespace splatswap {

/// 100 × mean cosine between the source embedding and each frame's embedding.
double ids_score(const Image<double> &source, std::span<const Image<double>> frames, const IdentityEncoder &encoder);

/// Mean of (1 − cosine) over consecutive frame pairs. Needs at least two frames.
double vidd(std::span<const Image<double>> frames, const IdentityEncoder &encoder);

} // namespace splatswap

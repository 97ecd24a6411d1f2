// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/metrics.hpp"

#include "splatswap/errors.hpp"

#include <vector>

namespace splatswap {

double ids_score(const Image<double> &source, std::span<const Image<double>> frames, const IdentityEncoder &encoder) {
    if (frames.empty()) throw ParameterError("ids_score needs at least one frame");
    const IdentityEmbedding src = encoder.encode(source);
    double sum = 0;
    for (const auto &f : frames) sum += cosine(src, encoder.encode(f));
    return 100.0 * sum / static_cast<double>(frames.size());
}

double vidd(std::span<const Image<double>> frames, const IdentityEncoder &encoder) {
    if (frames.size() < 2) throw ParameterError("vidd needs at least two frames");
    std::vector<IdentityEmbedding> emb;
    emb.reserve(frames.size());
    for (const auto &f : frames) emb.push_back(encoder.encode(f));
    double sum = 0;
    for (std::size_t t = 0; t + 1 < emb.size(); ++t) sum += 1.0 - cosine(emb[t], emb[t + 1]);
    return sum / static_cast<double>(emb.size() - 1);
}

} // namespace splatswap

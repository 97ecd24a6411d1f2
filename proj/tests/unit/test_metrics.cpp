// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/errors.hpp"
#include "splatswap/identity.hpp"
#include "splatswap/metrics.hpp"

#include "../support.hpp"

#include <doctest.h>

using namespace splatswap;
using namespace splatswap::test;

namespace {

// Embeds the top-left red value as a basis index.
class BasisEncoder final : public IdentityEncoder {
  public:
    const std::string &name() const override { return mName; }
    IdentityEmbedding encode(const Image<double> &image) const override {
        IdentityEmbedding e{mName, VecX<double>::Zero(4)};
        e.vector[static_cast<Index>(image[0](0, 0))] = 1;
        return e;
    }

  private:
    std::string mName = "basis";
};

Image<double> basis_image(int k) { return Image<double>::constant(8, 8, Vec3<double>(k, 0, 0)); }

} // namespace

TEST_CASE("self sequence scores 100 and a static video has zero distance") {
    const ToyEncoder enc;
    const auto src = random_image(16, 16);
    const std::vector<Image<double>> frames(5, src);
    CHECK(std::abs(ids_score(src, frames, enc) - 100) <= 1e-3);
    CHECK(std::abs(vidd(frames, enc)) <= 1e-6);
}

TEST_CASE("orthogonal embeddings") {
    const BasisEncoder enc;
    const std::vector<Image<double>> frames{basis_image(1), basis_image(2)};
    CHECK(ids_score(basis_image(0), frames, enc) == 0.0);
    CHECK(vidd(frames, enc) == 1.0);
}

TEST_CASE("metrics match a pairwise recomputation on 10 random frames") {
    const ToyEncoder enc;
    const auto src = random_image(16, 16);
    std::vector<Image<double>> frames;
    for (int i = 0; i < 10; ++i) frames.push_back(random_image(16, 16));
    double ids = 0, dist = 0;
    for (const auto &f : frames) ids += cosine(enc.encode(src), enc.encode(f));
    for (std::size_t i = 0; i + 1 < frames.size(); ++i) dist += 1 - cosine(enc.encode(frames[i]), enc.encode(frames[i + 1]));
    CHECK(ids_score(src, frames, enc) == doctest::Approx(100 * ids / 10).epsilon(1e-12));
    CHECK(vidd(frames, enc) == doctest::Approx(dist / 9).epsilon(1e-12));
    CHECK(vidd(frames, enc) >= 0);

    SUBCASE("identity score ignores frame order") {
        auto shuffled = frames;
        std::shuffle(shuffled.begin(), shuffled.end(), rng());
        CHECK(ids_score(src, shuffled, enc) == doctest::Approx(ids_score(src, frames, enc)).epsilon(1e-12));
    }
}

TEST_CASE("too few frames") {
    const ToyEncoder enc;
    const std::vector<Image<double>> one{random_image(16, 16)};
    const std::vector<Image<double>> none;
    CHECK_THROWS_AS(vidd(one, enc), ParameterError);
    CHECK_THROWS_AS(ids_score(one[0], none, enc), ParameterError);
}

// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/errors.hpp"
#include "splatswap/identity.hpp"
#include "splatswap/losses.hpp"

#include "../support.hpp"

#include <doctest.h>

using namespace splatswap;
using namespace splatswap::test;

namespace {

// Direct 11x11 window sum, zero outside the image.
double ssim_oracle(const Image<double> &a, const Image<double> &b) {
    const int r = 5;
    double w[11][11], wsum = 0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            w[i][j] = std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2 * 1.5 * 1.5));
            wsum += w[i][j];
        }
    const double C1 = 1e-4, C2 = 9e-4;
    const Index H = a.height(), W = a.width();
    double total = 0;
    for (int c = 0; c < 3; ++c)
        for (Index y = 0; y < H; ++y)
            for (Index x = 0; x < W; ++x) {
                double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
                for (int i = -r; i <= r; ++i)
                    for (int j = -r; j <= r; ++j) {
                        const Index py = y + i, px = x + j;
                        if (py < 0 || py >= H || px < 0 || px >= W) continue;
                        const double k = w[i + r][j + r] / wsum;
                        const double u = a[c](py, px), v = b[c](py, px);
                        mx += k * u;
                        my += k * v;
                        xx += k * u * u;
                        yy += k * v * v;
                        xy += k * u * v;
                    }
                const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
                total += (2 * mx * my + C1) * (2 * cxy + C2) / ((mx * mx + my * my + C1) * (vx + vy + C2));
            }
    return total / static_cast<double>(3 * H * W);
}

GaussianCloud<double> cloud_with(const Rows<double, 3> &scale, const Rows<double, 3> &mu) {
    GaussianCloud<double> c;
    c.params = SplatParams<double>::zeros(scale.rows());
    c.params.rot_local.col(0).setOnes();
    c.params.scale_raw = scale.array().log().matrix();
    c.params.mu_local = mu;
    c.parent_face.assign(static_cast<std::size_t>(scale.rows()), 0);
    return c;
}

double image_dot(const Image<double> &a, const Image<double> &b) {
    double s = 0;
    for (int c = 0; c < 3; ++c) s += (a[c] * b[c]).sum();
    return s;
}

// A unit vector orthogonal to v.
VecX<double> orthogonal_to(const VecX<double> &v) {
    VecX<double> u(v.size());
    for (Index i = 0; i < u.size(); ++i) u[i] = uniform();
    u -= v * v.dot(u);
    return u.normalized();
}

} // namespace

TEST_CASE("reconstruction loss of identical images is zero") {
    const auto img = random_image(12, 10);
    const auto l = reconstruction_loss(img, img);
    CHECK(std::abs(l.value) <= 1e-8);
}

TEST_CASE("black against white: L1 term 0.8 and SSIM term from a direct window sum") {
    const auto black = Image<double>::constant(16, 16, Vec3<double>::Zero());
    const auto white = Image<double>::constant(16, 16, Vec3<double>::Ones());
    const double s = ssim_oracle(black, white);
    CHECK(ssim(black, white) == doctest::Approx(s).epsilon(1e-12));
    const auto l = reconstruction_loss(black, white);
    CHECK(l.value == doctest::Approx(0.8 + 0.2 * (1 - s)).epsilon(1e-12));
    const auto l1_only = reconstruction_loss(black, white, 0.0);
    CHECK(l1_only.value == doctest::Approx(1.0));
}

TEST_CASE("SSIM matches the direct window sum on random images") {
    const auto a = random_image(9, 13), b = random_image(9, 13);
    CHECK(ssim(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-12));
}

TEST_CASE("reconstruction gradient matches central differences on 8x8") {
    auto a = random_image(8, 8);
    const auto b = random_image(8, 8);
    const auto g = reconstruction_loss(a, b).grad;
    GradCheck check;
    for (int c = 0; c < 3; ++c)
        for (Index i = 0; i < a[c].size(); ++i)
            check.add(g[c].data()[i], central(a[c].data()[i], 1e-6, [&] { return reconstruction_loss(a, b).value; }));
    CHECK(check.max_rel() <= 1e-4);
}

TEST_CASE("reconstruction loss is nonnegative and rejects size mismatch") {
    for (int t = 0; t < 5; ++t) CHECK(reconstruction_loss(random_image(6, 7), random_image(6, 7)).value >= 0);
    CHECK_THROWS_AS(reconstruction_loss(random_image(6, 7), random_image(7, 6)), ParameterError);
}

TEST_CASE("scale regularizer saturates below the threshold") {
    const Index n = 5;
    const auto l = scale_reg(cloud_with(Rows<double, 3>::Constant(n, 3, 0.5), Rows<double, 3>::Zero(n, 3)));
    CHECK(l.value == doctest::Approx(0.6 * std::sqrt(3.0 * n)).epsilon(1e-12));
    CHECK(l.grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scale regularizer with one large component") {
    Rows<double, 3> s(1, 3);
    s << 1.0, 0.1, 0.1;
    const auto l = scale_reg(cloud_with(s, Rows<double, 3>::Zero(1, 3)));
    const double expect = std::sqrt(1 + 2 * 0.36);
    CHECK(l.value == doctest::Approx(expect).epsilon(1e-12));
    CHECK(l.grad(0, 0) == doctest::Approx(1.0 / expect).epsilon(1e-12));
    CHECK(l.grad(0, 1) == 0.0);
    CHECK(l.grad(0, 2) == 0.0);
}

TEST_CASE("scale regularizer gradient matches central differences away from the kink") {
    Rows<double, 3> s(6, 3);
    for (Index i = 0; i < s.size(); ++i) {
        double v;
        do v = uniform(0.1, 1.5);
        while (std::abs(v - 0.6) <= 2e-2);
        s.data()[i] = v;
    }
    const Rows<double, 3> mu = Rows<double, 3>::Zero(6, 3);
    const auto g = scale_reg(cloud_with(s, mu)).grad;
    GradCheck check;
    for (Index i = 0; i < s.size(); ++i)
        check.add(g.data()[i], central(s.data()[i], 1e-6, [&] { return scale_reg(cloud_with(s, mu)).value; }));
    CHECK(check.max_rel() <= 1e-4);
}

TEST_CASE("position regularizer") {
    const Rows<double, 3> ones = Rows<double, 3>::Ones(1, 3);
    SUBCASE("zero centres") {
        const auto l = position_reg(cloud_with(Rows<double, 3>::Ones(4, 3), Rows<double, 3>::Zero(4, 3)));
        CHECK(l.grad.cwiseAbs().maxCoeff() == 0.0);
        CHECK(l.value == doctest::Approx(std::sqrt(12.0)));
    }
    SUBCASE("one centre at (2,0,0)") {
        Rows<double, 3> mu(1, 3);
        mu << 2, 0, 0;
        const auto l = position_reg(cloud_with(ones, mu));
        CHECK(l.value == doctest::Approx(std::sqrt(6.0)).epsilon(1e-12));
        CHECK(l.grad(0, 0) == doctest::Approx(2 / std::sqrt(6.0)).epsilon(1e-12));
        CHECK(l.grad(0, 1) == 0.0);
        CHECK(l.grad(0, 2) == 0.0);
    }
    SUBCASE("symmetric under negation") {
        Rows<double, 3> mu(3, 3);
        for (Index i = 0; i < mu.size(); ++i) mu.data()[i] = uniform(-3, 3);
        const auto p = position_reg(cloud_with(Rows<double, 3>::Ones(3, 3), mu));
        const Rows<double, 3> neg = -mu;
        const auto q = position_reg(cloud_with(Rows<double, 3>::Ones(3, 3), neg));
        CHECK(p.value == q.value);
        CHECK((p.grad + q.grad).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("identity loss") {
    const auto encoders = toy_encoder_set();
    const std::vector<double> lambda{0.9, 0.001, 0.1};
    const auto render = random_image(16, 16);

    SUBCASE("self gives zero") {
        std::vector<IdentityEmbedding> src;
        for (const auto &e : encoders) src.push_back(e->encode(render));
        CHECK(std::abs(identity_loss(render, src, encoders, lambda).value) <= 1e-12);
    }
    SUBCASE("orthogonal sources give the weight sum") {
        std::vector<IdentityEmbedding> src;
        for (const auto &e : encoders) {
            auto emb = e->encode(render);
            emb.vector = orthogonal_to(emb.vector);
            src.push_back(emb);
        }
        CHECK(identity_loss(render, src, encoders, lambda).value == doctest::Approx(1.001).epsilon(1e-12));
    }
    SUBCASE("gradient matches central differences on 16x16") {
        std::vector<IdentityEmbedding> src;
        const auto other = random_image(16, 16);
        for (const auto &e : encoders) src.push_back(e->encode(other));
        auto img = render;
        const auto g = identity_loss(img, src, encoders, lambda).grad;
        GradCheck check;
        for (int c = 0; c < 3; ++c)
            for (Index i = 0; i < img[c].size(); ++i)
                check.add(g[c].data()[i],
                          central(img[c].data()[i], 1e-6, [&] { return identity_loss(img, src, encoders, lambda).value; }));
        CHECK(check.max_rel() <= 1e-3);
    }
    SUBCASE("bounded by twice the weight sum") {
        std::vector<IdentityEmbedding> src;
        for (const auto &e : encoders) {
            auto emb = e->encode(render);
            emb.vector = -emb.vector;
            src.push_back(emb);
        }
        const double v = identity_loss(render, src, encoders, lambda).value;
        CHECK(v == doctest::Approx(2 * 1.001).epsilon(1e-12));
    }
    SUBCASE("count mismatch is a configuration error") {
        std::vector<IdentityEmbedding> src;
        for (const auto &e : encoders) src.push_back(e->encode(render));
        const std::vector<double> two{0.9, 0.1};
        CHECK_THROWS_AS(identity_loss(render, src, encoders, two), ConfigError);
    }
}

TEST_CASE("total loss") {
    const auto render = random_image(16, 16), target = random_image(16, 16);
    Rows<double, 3> s(3, 3), mu(3, 3);
    for (Index i = 0; i < s.size(); ++i) {
        s.data()[i] = uniform(0.2, 1.2);
        mu.data()[i] = uniform(-2, 2);
    }
    const auto cloud = cloud_with(s, mu);
    const auto encoders = toy_encoder_set();
    std::vector<IdentityEmbedding> src;
    for (const auto &e : encoders) src.push_back(e->encode(target));
    const LossWeights w;

    LossParts<double> parts;
    parts.rec = reconstruction_loss(render, target);
    parts.scale = scale_reg(cloud);
    parts.pos = position_reg(cloud);
    parts.id = identity_loss(render, src, encoders, w.lambda_k);

    SUBCASE("stage A with zero parts is zero") {
        LossParts<double> zero;
        zero.rec.grad = Image<double>(4, 4);
        zero.scale.grad = zero.pos.grad = Rows<double, 3>::Zero(1, 3);
        CHECK(total_loss(Stage::A, zero, w).value == 0.0);
    }
    SUBCASE("stage B adds the weighted identity term") {
        const auto a = total_loss(Stage::A, parts, w);
        const auto b = total_loss(Stage::B, parts, w);
        CHECK(b.value == doctest::Approx(a.value + 0.1 * parts.id->value).epsilon(1e-14));
        CHECK(a.value == doctest::Approx(parts.rec.value + parts.scale.value + 0.01 * parts.pos.value).epsilon(1e-14));
    }
    SUBCASE("gradients add with their weights") {
        const auto b = total_loss(Stage::B, parts, w);
        double worst = 0;
        for (int c = 0; c < 3; ++c)
            worst = std::max(worst, (b.d_image[c] - parts.rec.grad[c] - 0.1 * parts.id->grad[c]).abs().maxCoeff());
        worst = std::max(worst, (b.d_scale_local - parts.scale.grad).cwiseAbs().maxCoeff());
        worst = std::max(worst, (b.d_mu_local - 0.01 * parts.pos.grad).cwiseAbs().maxCoeff());
        CHECK(worst <= 1e-10);
        // Directional check of the image term against a recomputation.
        const auto dir = random_image(16, 16, -1, 1);
        auto shifted = render;
        const double h = 1e-6;
        for (int c = 0; c < 3; ++c) shifted[c] += h * dir[c];
        LossParts<double> p2 = parts;
        p2.rec = reconstruction_loss(shifted, target);
        p2.id = identity_loss(shifted, src, encoders, w.lambda_k);
        const double fd = (total_loss(Stage::B, p2, w).value - b.value) / h;
        CHECK(fd == doctest::Approx(image_dot(b.d_image, dir)).epsilon(1e-3));
    }
    SUBCASE("stage B without an identity term is rejected") {
        parts.id.reset();
        CHECK_THROWS_AS(total_loss(Stage::B, parts, w), ParameterError);
    }
}

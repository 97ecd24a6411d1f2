// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/identity.hpp"

#include "splatswap/errors.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>

namespace splatswap {

namespace {

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;
constexpr double kDegenerateNorm = 1e-8;

// Row-stochastic triangle-filter resampling matrix (out × in).
Eigen::MatrixXd resample_matrix(Index in, Index out) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(out, in);
    const double scale = static_cast<double>(in) / out;
    const double support = std::max(scale, 1.0);
    for (Index o = 0; o < out; ++o) {
        const double centre = (o + 0.5) * scale;
        double sum = 0;
        for (Index i = 0; i < in; ++i) {
            const double w = std::max(0.0, 1.0 - std::abs(i + 0.5 - centre) / support);
            m(o, i) = w;
            sum += w;
        }
        m.row(o) /= sum;
    }
    return m;
}

Eigen::MatrixXd luma(const Image<double> &image) {
    return (kLumaR * image[0] + kLumaG * image[1] + kLumaB * image[2]).matrix();
}

} // namespace

double cosine(const IdentityEmbedding &a, const IdentityEmbedding &b) {
    if (a.encoder_name != b.encoder_name || a.vector.size() != b.vector.size()) {
        throw IdentityError("cannot compare embeddings from '" + a.encoder_name + "' and '" + b.encoder_name + "'",
                            a.encoder_name);
    }
    return a.vector.dot(b.vector) / (a.vector.norm() * b.vector.norm());
}

Image<double> IdentityEncoder::backward(const Image<double> &, const VecX<double> &) const {
    throw IdentityError("encoder '" + name() + "' is not differentiable", name());
}

ToyEncoder::ToyEncoder(int grid, std::string name) : mGrid(grid), mName(std::move(name)) {
    if (grid < 1) throw ParameterError("toy encoder grid must be positive");
}

VecX<double> ToyEncoder::downsample(const Image<double> &image) const {
    if (image.height() < 8 || image.width() < 8) {
        throw IdentityError("image is smaller than 8x8", mName);
    }
    const Eigen::MatrixXd Dy = resample_matrix(image.height(), mGrid);
    const Eigen::MatrixXd Dx = resample_matrix(image.width(), mGrid);
    const Eigen::MatrixXd small = Dy * luma(image) * Dx.transpose();
    // row-major flattening
    VecX<double> out(mGrid * mGrid);
    for (int y = 0; y < mGrid; ++y)
        for (int x = 0; x < mGrid; ++x) out[y * mGrid + x] = small(y, x);
    return out;
}

IdentityEmbedding ToyEncoder::encode(const Image<double> &image) const {
    VecX<double> z = downsample(image);
    z.array() -= z.mean();
    const double n = z.norm();
    IdentityEmbedding e{mName, VecX<double>::Zero(z.size())};
    if (n < kDegenerateNorm) {
        e.vector[0] = 1.0;
    } else {
        e.vector = z / n;
    }
    return e;
}

Image<double> ToyEncoder::backward(const Image<double> &image, const VecX<double> &d_vector) const {
    VecX<double> z = downsample(image);
    z.array() -= z.mean();
    const double n = z.norm();
    Image<double> grad(image.height(), image.width());
    if (n < kDegenerateNorm) return grad;
    const VecX<double> e = z / n;
    VecX<double> gz = (d_vector - e * e.dot(d_vector)) / n;
    gz.array() -= gz.mean();
    Eigen::MatrixXd gsmall(mGrid, mGrid);
    for (int y = 0; y < mGrid; ++y)
        for (int x = 0; x < mGrid; ++x) gsmall(y, x) = gz[y * mGrid + x];
    const Eigen::MatrixXd Dy = resample_matrix(image.height(), mGrid);
    const Eigen::MatrixXd Dx = resample_matrix(image.width(), mGrid);
    const Plane<double> ggray = (Dy.transpose() * gsmall * Dx).array();
    grad[0] = kLumaR * ggray;
    grad[1] = kLumaG * ggray;
    grad[2] = kLumaB * ggray;
    return grad;
}

std::vector<std::shared_ptr<IdentityEncoder>> toy_encoder_set() {
    return {std::make_shared<ToyEncoder>(8, "toy"), std::make_shared<ToyEncoder>(6, "toy6"),
            std::make_shared<ToyEncoder>(4, "toy4")};
}

CosineResult cosine_with_grad(const IdentityEncoder &encoder, const Image<double> &image,
                              const IdentityEmbedding &target) {
    const IdentityEmbedding e = encoder.encode(image);
    if (e.vector.size() != target.vector.size()) {
        throw IdentityError("embedding size mismatch for encoder '" + encoder.name() + "'", encoder.name());
    }
    const VecX<double> t = target.vector / target.vector.norm();
    CosineResult r;
    r.cosine = e.vector.dot(t);
    r.grad = encoder.backward(image, t);
    return r;
}

namespace {

Eigen::Matrix<double, 2, 3> inverse_affine(const AlignmentAffine &affine) {
    const Mat2<double> A = affine.matrix.leftCols<2>();
    if (std::abs(A.determinant()) < 1e-12) throw ParameterError("alignment affine is singular");
    const Mat2<double> Ai = A.inverse();
    Eigen::Matrix<double, 2, 3> inv;
    inv.leftCols<2>() = Ai;
    inv.col(2) = -Ai * affine.matrix.col(2);
    return inv;
}

template <class F> void for_each_tap(const Eigen::Matrix<double, 2, 3> &inv, int qx, int qy, Index H, Index W, F &&f) {
    const Vec2<double> s = inv.leftCols<2>() * Vec2<double>(qx, qy) + inv.col(2);
    const double fx0 = std::floor(s.x()), fy0 = std::floor(s.y());
    const double ax = s.x() - fx0, ay = s.y() - fy0;
    const Index x0 = static_cast<Index>(fx0), y0 = static_cast<Index>(fy0);
    const double w[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
    const Index xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const Index ys[4] = {y0, y0, y0 + 1, y0 + 1};
    for (int k = 0; k < 4; ++k) {
        if (w[k] == 0.0 || xs[k] < 0 || xs[k] >= W || ys[k] < 0 || ys[k] >= H) continue;
        f(ys[k], xs[k], w[k]);
    }
}

} // namespace

Image<double> apply_affine(const Image<double> &image, const AlignmentAffine &affine, int size) {
    const auto inv = inverse_affine(affine);
    Image<double> out(size, size);
    for (int qy = 0; qy < size; ++qy)
        for (int qx = 0; qx < size; ++qx)
            for_each_tap(inv, qx, qy, image.height(), image.width(), [&](Index y, Index x, double w) {
                for (int c = 0; c < 3; ++c) out[c](qy, qx) += w * image[c](y, x);
            });
    return out;
}

Image<double> apply_affine_backward(Index height, Index width, const AlignmentAffine &affine,
                                    const Image<double> &d_crop) {
    const auto inv = inverse_affine(affine);
    Image<double> grad(height, width);
    for (int qy = 0; qy < d_crop.height(); ++qy)
        for (int qx = 0; qx < d_crop.width(); ++qx)
            for_each_tap(inv, qx, qy, height, width, [&](Index y, Index x, double w) {
                for (int c = 0; c < 3; ++c) grad[c](y, x) += w * d_crop[c](qy, qx);
            });
    return grad;
}

AlignedEncoder::AlignedEncoder(std::shared_ptr<IdentityEncoder> inner, AlignmentAffine affine, int size)
    : mInner(std::move(inner)), mAffine(affine), mSize(size) {
    inverse_affine(mAffine);
}

IdentityEmbedding AlignedEncoder::encode(const Image<double> &image) const {
    return mInner->encode(apply_affine(image, mAffine, mSize));
}

Image<double> AlignedEncoder::backward(const Image<double> &image, const VecX<double> &d_vector) const {
    const Image<double> crop = apply_affine(image, mAffine, mSize);
    return apply_affine_backward(image.height(), image.width(), mAffine, mInner->backward(crop, d_vector));
}

} // namespace splatswap

// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
// Identity encoders. ToyEncoder is an in-process differentiable stand-in for a
// face-recognition network; RemoteEncoder (embedding_client.hpp) talks to the
// embedding service and is used for metrics and source targets only.
#pragma once

#include "splatswap/image.hpp"

#include <memory>
#include <string>
#include <vector>

namespace splatswap {

/// Unit-norm feature vector produced by one named encoder.
struct IdentityEmbedding {
    std::string encoder_name;
    VecX<double> vector;
};

/// Cosine of two embeddings from the same encoder. Throws IdentityError on a name or size mismatch.
double cosine(const IdentityEmbedding &a, const IdentityEmbedding &b);

class IdentityEncoder {
  public:
    virtual ~IdentityEncoder() = default;
    virtual const std::string &name() const = 0;
    virtual IdentityEmbedding encode(const Image<double> &image) const = 0;
    virtual bool differentiable() const { return false; }
    /// Pulls `d_vector` (gradient w.r.t. the unit-norm embedding) back to pixels.
    virtual Image<double> backward(const Image<double> &image, const VecX<double> &d_vector) const;
};

/// Bilinear (triangle-filter) downsample to grid×grid grayscale, subtract the
/// mean, L2-normalize. A zero-variance input maps to the first basis vector.
class ToyEncoder final : public IdentityEncoder {
  public:
    explicit ToyEncoder(int grid = 8, std::string name = "toy");

    const std::string &name() const override { return mName; }
    IdentityEmbedding encode(const Image<double> &image) const override;
    bool differentiable() const override { return true; }
    Image<double> backward(const Image<double> &image, const VecX<double> &d_vector) const override;

    int grid() const { return mGrid; }
    /// Downsampled grayscale before centring and normalization.
    VecX<double> downsample(const Image<double> &image) const;

  private:
    int mGrid;
    std::string mName;
};

/// Three toy encoders at 8×8, 6×6 and 4×4 resolution, one per compound-loss weight.
std::vector<std::shared_ptr<IdentityEncoder>> toy_encoder_set();

struct CosineResult {
    double cosine = 0;
    Image<double> grad; ///< d cos / d image
};

CosineResult cosine_with_grad(const IdentityEncoder &encoder, const Image<double> &image,
                              const IdentityEmbedding &target);

/// 2×3 matrix mapping render pixel coordinates to crop pixel coordinates.
struct AlignmentAffine {
    Eigen::Matrix<double, 2, 3> matrix = Eigen::Matrix<double, 2, 3>::Identity();

    static AlignmentAffine translation(double tx, double ty) {
        AlignmentAffine a;
        a.matrix(0, 2) = tx;
        a.matrix(1, 2) = ty;
        return a;
    }
};

inline constexpr int kAlignedCropSize = 112;

/// Bilinear warp into a size×size crop; samples outside the source read 0.
/// Throws ParameterError for a singular affine.
Image<double> apply_affine(const Image<double> &image, const AlignmentAffine &affine, int size = kAlignedCropSize);

/// Adjoint of apply_affine: scatters a crop gradient back onto a source-sized image.
Image<double> apply_affine_backward(Index height, Index width, const AlignmentAffine &affine,
                                    const Image<double> &d_crop);

/// Warps with a fixed affine before delegating to another encoder.
class AlignedEncoder final : public IdentityEncoder {
  public:
    AlignedEncoder(std::shared_ptr<IdentityEncoder> inner, AlignmentAffine affine, int size = kAlignedCropSize);

    const std::string &name() const override { return mInner->name(); }
    IdentityEmbedding encode(const Image<double> &image) const override;
    bool differentiable() const override { return mInner->differentiable(); }
    Image<double> backward(const Image<double> &image, const VecX<double> &d_vector) const override;

  private:
    std::shared_ptr<IdentityEncoder> mInner;
    AlignmentAffine mAffine;
    int mSize;
};

} // namespace splatswap

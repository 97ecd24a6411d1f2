// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "splatswap/types.hpp"

#include <array>

namespace splatswap {

/// Single-channel H×W image (row-major, row = y).
template <class T> using Plane = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T> using Mask = Plane<T>;

/// Planar RGB image.
template <class T> struct Image {
    std::array<Plane<T>, 3> channels;

    Image() = default;
    Image(Index height, Index width) {
        for (auto &c : channels) c = Plane<T>::Zero(height, width);
    }
    static Image constant(Index height, Index width, const Vec3<T> &rgb) {
        Image img;
        for (int c = 0; c < 3; ++c) img.channels[c] = Plane<T>::Constant(height, width, rgb[c]);
        return img;
    }

    Index height() const { return channels[0].rows(); }
    Index width() const { return channels[0].cols(); }
    Plane<T> &operator[](int c) { return channels[c]; }
    const Plane<T> &operator[](int c) const { return channels[c]; }

    template <class U> Image<U> cast() const {
        Image<U> out;
        for (int c = 0; c < 3; ++c) out.channels[c] = channels[c].template cast<U>();
        return out;
    }
};

template <class T> bool same_size(const Image<T> &a, const Image<T> &b) {
    return a.height() == b.height() && a.width() == b.width();
}

template <class T> bool same_size(const Image<T> &a, const Plane<T> &b) {
    return a.height() == b.rows() && a.width() == b.cols();
}

} // namespace splatswap

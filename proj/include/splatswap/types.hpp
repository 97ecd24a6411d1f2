// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>

namespace splatswap {

using Index = Eigen::Index;

template <class T> using Vec2 = Eigen::Matrix<T, 2, 1>;
template <class T> using Vec3 = Eigen::Matrix<T, 3, 1>;
template <class T> using Vec4 = Eigen::Matrix<T, 4, 1>;
template <class T> using Mat2 = Eigen::Matrix<T, 2, 2>;
template <class T> using Mat3 = Eigen::Matrix<T, 3, 3>;
template <class T> using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T> using Quat = Eigen::Quaternion<T>;

/// Row-major N×C block, one row per element (vertex, splat, ...).
template <class T, int C> using Rows = Eigen::Matrix<T, Eigen::Dynamic, C, Eigen::RowMajor>;
template <class T> using Points = Rows<T, 3>;

using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

} // namespace splatswap

// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
// Quaternion helpers. Quaternions are stored as (w, x, y, z) with the Hamilton
// product; every conversion normalizes its input first.
#pragma once

#include "splatswap/types.hpp"

#include <cmath>

namespace splatswap {

template <class T> Mat3<T> quat_to_matrix(const Vec4<T> &q) {
    const Vec4<T> n = q / q.norm();
    const T w = n[0], x = n[1], y = n[2], z = n[3];
    Mat3<T> R;
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return R;
}

template <class T> Vec4<T> quat_coeffs(const Quat<T> &q) { return Vec4<T>(q.w(), q.x(), q.y(), q.z()); }

template <class T> Quat<T> quat_from_coeffs(const Vec4<T> &c) { return Quat<T>(c[0], c[1], c[2], c[3]); }

template <class T> Vec4<T> quat_multiply(const Vec4<T> &a, const Vec4<T> &b) {
    return quat_coeffs<T>(quat_from_coeffs(a) * quat_from_coeffs(b));
}

/// Given dL/dR for R = quat_to_matrix(q), returns dL/dq for the unnormalized q.
template <class T> Vec4<T> quat_to_matrix_backward(const Vec4<T> &q, const Mat3<T> &dR) {
    const T norm = q.norm();
    const Vec4<T> n = q / norm;
    const T w = n[0], x = n[1], y = n[2], z = n[3];
    Mat3<T> Dw, Dx, Dy, Dz;
    Dw << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
    Dx << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
    Dy << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
    Dz << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
    const Vec4<T> dn((dR.array() * Dw.array()).sum(), (dR.array() * Dx.array()).sum(),
                     (dR.array() * Dy.array()).sum(), (dR.array() * Dz.array()).sum());
    // project out the radial component of the normalization
    return (dn - n * n.dot(dn)) / norm;
}

/// Rotation by `angle` about `axis` (right-hand rule).
template <class T> Mat3<T> axis_angle_matrix(const Vec3<T> &axis, T angle) {
    return Eigen::AngleAxis<T>(angle, axis.normalized()).toRotationMatrix();
}

} // namespace splatswap

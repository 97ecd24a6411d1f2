// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
// Parametric head rig, per-frame deformation and the per-triangle coordinate
// frames that splats are bound to.
#pragma once

#include "splatswap/types.hpp"

#include <span>
#include <vector>

namespace splatswap {

/// Minimal head rig: linear shape and expression blendshapes, one jaw joint and a
/// global rigid transform. Bases are stored as one V×3 offset block per coefficient.
template <class T> struct RiggedMesh {
    Points<T> neutral_vertices;
    Faces faces;
    std::vector<Points<T>> shape_basis;
    std::vector<Points<T>> expr_basis;
    /// Per-vertex fraction of the jaw angle applied to that vertex, in [0, 1].
    VecX<T> jaw_weights;
    Vec3<T> jaw_pivot = Vec3<T>::Zero();
    Vec3<T> jaw_axis = Vec3<T>::UnitX();

    Index vertex_count() const { return neutral_vertices.rows(); }
    Index face_count() const { return faces.rows(); }
    Index shape_count() const { return static_cast<Index>(shape_basis.size()); }
    Index expression_count() const { return static_cast<Index>(expr_basis.size()); }
};

/// Throws GeometryError when indices, basis sizes or neutral-pose triangles are invalid.
template <class T> void validate(const RiggedMesh<T> &mesh);

template <class T> struct FrameParams {
    VecX<T> shape;
    VecX<T> expression;
    T jaw_angle = 0;
    Quat<T> global_rotation = Quat<T>::Identity();
    Vec3<T> global_translation = Vec3<T>::Zero();

    static FrameParams neutral(Index shapes, Index expressions) {
        FrameParams p;
        p.shape = VecX<T>::Zero(shapes);
        p.expression = VecX<T>::Zero(expressions);
        return p;
    }
};

/// Gradient of a scalar with respect to FrameParams. The rotation gradient is
/// taken with respect to the (w, x, y, z) coefficients.
template <class T> struct FrameParamsGrad {
    VecX<T> shape;
    VecX<T> expression;
    T jaw_angle = 0;
    Vec4<T> global_rotation = Vec4<T>::Zero();
    Vec3<T> global_translation = Vec3<T>::Zero();
};

/// Local frame of one triangle: orientation K, origin V (centroid) and size l.
template <class T> struct TriangleFrame {
    Mat3<T> K = Mat3<T>::Identity();
    Vec3<T> V = Vec3<T>::Zero();
    T l = 1;
};

template <class T> struct TriangleFrameGrad {
    Mat3<T> K = Mat3<T>::Zero();
    Vec3<T> V = Vec3<T>::Zero();
    T l = 0;

    TriangleFrameGrad &operator+=(const TriangleFrameGrad &o) {
        K += o.K;
        V += o.V;
        l += o.l;
        return *this;
    }
};

/// Pinhole camera. `rotation`/`translation` map world points into camera space,
/// where +z looks forward, +x right and +y down in the image.
template <class T> struct Camera {
    T fx = 1, fy = 1, cx = 0, cy = 0;
    int width = 1, height = 1;
    Quat<T> rotation = Quat<T>::Identity();
    Vec3<T> translation = Vec3<T>::Zero();

    Mat3<T> R() const { return rotation.normalized().toRotationMatrix(); }
    Vec3<T> center() const { return -(R().transpose() * translation); }
    Vec3<T> to_camera(const Vec3<T> &world) const { return R() * world + translation; }

    /// Camera at `eye` looking at `target`, image y axis aligned with -`up`.
    static Camera look_at(const Vec3<T> &eye, const Vec3<T> &target, const Vec3<T> &up, T fx, T fy,
                          int width, int height);
};

/// Throws ParameterError on non-positive focal lengths or a principal point outside the image.
template <class T> void validate(const Camera<T> &camera);

/// Deformed vertex positions: blendshapes, then jaw rotation, then global rigid.
template <class T> Points<T> deform_mesh(const RiggedMesh<T> &mesh, const FrameParams<T> &params);

/// Vector-Jacobian product of deform_mesh.
template <class T>
FrameParamsGrad<T> deform_mesh_backward(const RiggedMesh<T> &mesh, const FrameParams<T> &params,
                                        const Points<T> &d_vertices);

/// Frame of a single triangle. Throws GeometryError when its area is below 1e-12.
template <class T> TriangleFrame<T> triangle_frame(const Vec3<T> &v0, const Vec3<T> &v1, const Vec3<T> &v2);

/// Frames of every face; a degenerate face is reported by index.
template <class T> std::vector<TriangleFrame<T>> triangle_frames(const Points<T> &vertices, const Faces &faces);

template <class T>
void triangle_frame_backward(const Vec3<T> &v0, const Vec3<T> &v1, const Vec3<T> &v2,
                             const TriangleFrameGrad<T> &grad, Vec3<T> &d0, Vec3<T> &d1, Vec3<T> &d2);

/// Scatters per-face frame gradients onto vertices.
template <class T>
Points<T> triangle_frames_backward(const Points<T> &vertices, const Faces &faces,
                                   std::span<const TriangleFrameGrad<T>> grads);

} // namespace splatswap

namespace splatswap {

/// Chains per-face frame gradients through the frames and deform_mesh back to FrameParams.
template <class T>
FrameParamsGrad<T> mesh_params_gradient(const RiggedMesh<T> &mesh, const FrameParams<T> &params,
                                        std::span<const TriangleFrameGrad<T>> frame_grads);

} // namespace splatswap

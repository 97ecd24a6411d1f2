// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/geometry.hpp"

#include "splatswap/errors.hpp"
#include "splatswap/rotation.hpp"

#include <cmath>
#include <string>

namespace splatswap {

namespace {

constexpr double kMinTriangleArea = 1e-12;

template <class T> T triangle_area(const Vec3<T> &v0, const Vec3<T> &v1, const Vec3<T> &v2) {
    return T(0.5) * (v1 - v0).cross(v2 - v0).norm();
}

} // namespace

template <class T> void validate(const RiggedMesh<T> &mesh) {
    const Index nv = mesh.vertex_count();
    if (nv == 0 || mesh.face_count() == 0) {
        throw GeometryError("mesh has no vertices or no faces");
    }
    for (Index f = 0; f < mesh.face_count(); ++f) {
        for (int k = 0; k < 3; ++k) {
            if (mesh.faces(f, k) < 0 || mesh.faces(f, k) >= nv) {
                throw GeometryError("face " + std::to_string(f) + " references vertex " +
                                    std::to_string(mesh.faces(f, k)) + " out of range");
            }
        }
        const Vec3<T> v0 = mesh.neutral_vertices.row(mesh.faces(f, 0)).transpose();
        const Vec3<T> v1 = mesh.neutral_vertices.row(mesh.faces(f, 1)).transpose();
        const Vec3<T> v2 = mesh.neutral_vertices.row(mesh.faces(f, 2)).transpose();
        if (!(triangle_area(v0, v1, v2) > T(kMinTriangleArea))) {
            throw GeometryError("face " + std::to_string(f) + " is degenerate in the neutral pose");
        }
    }
    for (const auto &b : mesh.shape_basis) {
        if (b.rows() != nv) throw GeometryError("shape basis vertex count mismatch");
    }
    for (const auto &b : mesh.expr_basis) {
        if (b.rows() != nv) throw GeometryError("expression basis vertex count mismatch");
    }
    if (mesh.jaw_weights.size() != nv) throw GeometryError("jaw weight count mismatch");
    if (!(mesh.jaw_axis.norm() > T(0))) throw GeometryError("jaw axis is zero");
}

template <class T>
Camera<T> Camera<T>::look_at(const Vec3<T> &eye, const Vec3<T> &target, const Vec3<T> &up, T fx, T fy,
                             int width, int height) {
    const Vec3<T> z = (target - eye).normalized();
    const Vec3<T> x = z.cross(up).normalized();
    const Vec3<T> y = z.cross(x);
    Mat3<T> R;
    R.row(0) = x.transpose();
    R.row(1) = y.transpose();
    R.row(2) = z.transpose();
    Camera cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = T(width) / 2;
    cam.cy = T(height) / 2;
    cam.width = width;
    cam.height = height;
    cam.rotation = Quat<T>(R).normalized();
    cam.translation = -(R * eye);
    return cam;
}

template <class T> void validate(const Camera<T> &camera) {
    if (!(camera.fx > 0 && camera.fy > 0)) throw ParameterError("camera focal lengths must be positive");
    if (camera.width <= 0 || camera.height <= 0) throw ParameterError("camera image size must be positive");
    if (!(camera.cx >= 0 && camera.cx < camera.width && camera.cy >= 0 && camera.cy < camera.height)) {
        throw ParameterError("camera principal point lies outside the image");
    }
}

namespace {

template <class T> void check_dimensions(const RiggedMesh<T> &mesh, const FrameParams<T> &params) {
    if (params.shape.size() != mesh.shape_count()) {
        throw ParameterError("expected " + std::to_string(mesh.shape_count()) + " shape coefficients, got " +
                             std::to_string(params.shape.size()));
    }
    if (params.expression.size() != mesh.expression_count()) {
        throw ParameterError("expected " + std::to_string(mesh.expression_count()) +
                             " expression coefficients, got " + std::to_string(params.expression.size()));
    }
}

// Vertices after blendshapes, before any rotation.
template <class T> Points<T> blend(const RiggedMesh<T> &mesh, const FrameParams<T> &params) {
    Points<T> p = mesh.neutral_vertices;
    for (Index k = 0; k < mesh.shape_count(); ++k) p += params.shape[k] * mesh.shape_basis[k];
    for (Index k = 0; k < mesh.expression_count(); ++k) p += params.expression[k] * mesh.expr_basis[k];
    return p;
}

} // namespace

template <class T> Points<T> deform_mesh(const RiggedMesh<T> &mesh, const FrameParams<T> &params) {
    check_dimensions(mesh, params);
    const Points<T> p = blend(mesh, params);
    const Mat3<T> Rg = params.global_rotation.normalized().toRotationMatrix();
    const Vec3<T> axis = mesh.jaw_axis.normalized();
    Points<T> out(p.rows(), 3);
    for (Index i = 0; i < p.rows(); ++i) {
        Vec3<T> v = p.row(i).transpose();
        const T angle = mesh.jaw_weights[i] * params.jaw_angle;
        if (angle != T(0)) v = mesh.jaw_pivot + axis_angle_matrix(axis, angle) * (v - mesh.jaw_pivot);
        out.row(i) = (Rg * v + params.global_translation).transpose();
    }
    return out;
}

template <class T>
FrameParamsGrad<T> deform_mesh_backward(const RiggedMesh<T> &mesh, const FrameParams<T> &params,
                                        const Points<T> &d_vertices) {
    check_dimensions(mesh, params);
    if (d_vertices.rows() != mesh.vertex_count()) throw ParameterError("vertex gradient count mismatch");
    const Points<T> p = blend(mesh, params);
    const Vec4<T> q = quat_coeffs(params.global_rotation);
    const Mat3<T> Rg = quat_to_matrix(q);
    const Vec3<T> axis = mesh.jaw_axis.normalized();

    FrameParamsGrad<T> g;
    g.shape = VecX<T>::Zero(mesh.shape_count());
    g.expression = VecX<T>::Zero(mesh.expression_count());
    Mat3<T> dRg = Mat3<T>::Zero();
    Points<T> dp(p.rows(), 3);
    for (Index i = 0; i < p.rows(); ++i) {
        const Vec3<T> gv = d_vertices.row(i).transpose();
        const Vec3<T> rel = p.row(i).transpose() - mesh.jaw_pivot;
        const T w = mesh.jaw_weights[i];
        const Mat3<T> Rj = axis_angle_matrix(axis, w * params.jaw_angle);
        const Vec3<T> jawed = mesh.jaw_pivot + Rj * rel;
        g.global_translation += gv;
        dRg += gv * jawed.transpose();
        const Vec3<T> gj = Rg.transpose() * gv;
        g.jaw_angle += w * gj.dot(axis.cross(Rj * rel));
        dp.row(i) = (Rj.transpose() * gj).transpose();
    }
    g.global_rotation = quat_to_matrix_backward(q, dRg);
    for (Index k = 0; k < mesh.shape_count(); ++k) g.shape[k] = (mesh.shape_basis[k].array() * dp.array()).sum();
    for (Index k = 0; k < mesh.expression_count(); ++k)
        g.expression[k] = (mesh.expr_basis[k].array() * dp.array()).sum();
    return g;
}

template <class T> TriangleFrame<T> triangle_frame(const Vec3<T> &v0, const Vec3<T> &v1, const Vec3<T> &v2) {
    const Vec3<T> e1 = v1 - v0;
    const Vec3<T> c = e1.cross(v2 - v0);
    const T cn = c.norm();
    const T e1n = e1.norm();
    if (!(T(0.5) * cn > T(kMinTriangleArea)) || !(e1n > T(0))) {
        throw GeometryError("degenerate triangle");
    }
    const Vec3<T> a = e1 / e1n;
    const Vec3<T> n = c / cn;
    TriangleFrame<T> f;
    f.K.col(0) = a;
    f.K.col(1) = n.cross(a);
    f.K.col(2) = n;
    f.V = (v0 + v1 + v2) / T(3);
    // mean of the first edge length and the height over it (2A / |e1| = |c| / |e1|)
    f.l = T(0.5) * (e1n + cn / e1n);
    return f;
}

template <class T> std::vector<TriangleFrame<T>> triangle_frames(const Points<T> &vertices, const Faces &faces) {
    std::vector<TriangleFrame<T>> frames;
    frames.reserve(faces.rows());
    for (Index f = 0; f < faces.rows(); ++f) {
        try {
            frames.push_back(triangle_frame<T>(vertices.row(faces(f, 0)).transpose(),
                                               vertices.row(faces(f, 1)).transpose(),
                                               vertices.row(faces(f, 2)).transpose()));
        } catch (const GeometryError &) {
            throw GeometryError("degenerate triangle at face " + std::to_string(f));
        }
    }
    return frames;
}

template <class T>
void triangle_frame_backward(const Vec3<T> &v0, const Vec3<T> &v1, const Vec3<T> &v2,
                             const TriangleFrameGrad<T> &grad, Vec3<T> &d0, Vec3<T> &d1, Vec3<T> &d2) {
    const Vec3<T> e1 = v1 - v0;
    const Vec3<T> e2 = v2 - v0;
    const Vec3<T> c = e1.cross(e2);
    const T cn = c.norm();
    const T e1n = e1.norm();
    const Vec3<T> a = e1 / e1n;
    const Vec3<T> n = c / cn;

    const Vec3<T> ga0 = grad.K.col(0);
    const Vec3<T> gb = grad.K.col(1);
    const Vec3<T> gn0 = grad.K.col(2);
    // b = n × a
    const Vec3<T> gn = gn0 + a.cross(gb);
    const Vec3<T> ga = ga0 + gb.cross(n);

    Vec3<T> ge1 = (ga - a * a.dot(ga)) / e1n;
    Vec3<T> gc = (gn - n * n.dot(gn)) / cn;
    // l = 0.5 (|e1| + |c| / |e1|)
    ge1 += grad.l * T(0.5) * (T(1) - cn / (e1n * e1n)) * a;
    gc += grad.l * T(0.5) / e1n * n;
    // c = e1 × e2
    ge1 += e2.cross(gc);
    const Vec3<T> ge2 = gc.cross(e1);

    const Vec3<T> gV = grad.V / T(3);
    d0 = gV - ge1 - ge2;
    d1 = gV + ge1;
    d2 = gV + ge2;
}

template <class T>
Points<T> triangle_frames_backward(const Points<T> &vertices, const Faces &faces,
                                   std::span<const TriangleFrameGrad<T>> grads) {
    if (static_cast<Index>(grads.size()) != faces.rows()) throw ParameterError("frame gradient count mismatch");
    Points<T> d = Points<T>::Zero(vertices.rows(), 3);
    for (Index f = 0; f < faces.rows(); ++f) {
        Vec3<T> d0, d1, d2;
        triangle_frame_backward<T>(vertices.row(faces(f, 0)).transpose(), vertices.row(faces(f, 1)).transpose(),
                                   vertices.row(faces(f, 2)).transpose(), grads[f], d0, d1, d2);
        d.row(faces(f, 0)) += d0.transpose();
        d.row(faces(f, 1)) += d1.transpose();
        d.row(faces(f, 2)) += d2.transpose();
    }
    return d;
}

template <class T>
FrameParamsGrad<T> mesh_params_gradient(const RiggedMesh<T> &mesh, const FrameParams<T> &params,
                                        std::span<const TriangleFrameGrad<T>> frame_grads) {
    const Points<T> vertices = deform_mesh(mesh, params);
    return deform_mesh_backward(mesh, params, triangle_frames_backward(vertices, mesh.faces, frame_grads));
}

#define SPLATSWAP_INSTANTIATE(T)                                                                              \
    template void validate<T>(const RiggedMesh<T> &);                                                         \
    template struct Camera<T>;                                                                                \
    template void validate<T>(const Camera<T> &);                                                             \
    template Points<T> deform_mesh<T>(const RiggedMesh<T> &, const FrameParams<T> &);                         \
    template FrameParamsGrad<T> deform_mesh_backward<T>(const RiggedMesh<T> &, const FrameParams<T> &,        \
                                                        const Points<T> &);                                   \
    template TriangleFrame<T> triangle_frame<T>(const Vec3<T> &, const Vec3<T> &, const Vec3<T> &);           \
    template std::vector<TriangleFrame<T>> triangle_frames<T>(const Points<T> &, const Faces &);              \
    template void triangle_frame_backward<T>(const Vec3<T> &, const Vec3<T> &, const Vec3<T> &,               \
                                             const TriangleFrameGrad<T> &, Vec3<T> &, Vec3<T> &, Vec3<T> &);  \
    template Points<T> triangle_frames_backward<T>(const Points<T> &, const Faces &,                          \
                                                   std::span<const TriangleFrameGrad<T>>);        \
    template FrameParamsGrad<T> mesh_params_gradient<T>(const RiggedMesh<T> &, const FrameParams<T> &,        \
                                                        std::span<const TriangleFrameGrad<T>>);

SPLATSWAP_INSTANTIATE(float)
SPLATSWAP_INSTANTIATE(double)

} // namespace splatswap

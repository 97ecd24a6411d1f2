// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/renderer.hpp"

#include "splatswap/errors.hpp"
#include "splatswap/rotation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

namespace splatswap {

namespace {

constexpr int kTile = 16;

template <class T> using Mat23 = Eigen::Matrix<T, 2, 3>;

template <class T> struct SplatGeometry {
    bool visible = false;
    BoundSplat<T> bound;
    Vec3<T> pc;
    Mat23<T> J, Tm;
    Mat3<T> M, sigma;
    Mat2<T> conic;
    Vec3<T> dir_world;
    T dist = 0;
    Vec3<T> dir_local;
    Vec3<T> color_raw;
    T u = 0, v = 0, opacity = 0;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

template <class T> Vec4<T> sh_basis(const Vec3<T> &d) {
    return Vec4<T>(T(kShC0), -T(kShC1) * d.y(), T(kShC1) * d.z(), -T(kShC1) * d.x());
}

template <class T> bool finite_splat(const GaussianCloud<T> &cloud, Index i) {
    return cloud.params.mu_local.row(i).allFinite() && cloud.params.rot_local.row(i).allFinite() &&
           cloud.params.scale_raw.row(i).allFinite() && std::isfinite(cloud.params.opacity_raw[i]) &&
           cloud.params.sh.row(i).allFinite() && cloud.params.rot_local.row(i).norm() > T(0);
}

template <class T>
SplatGeometry<T> project(const GaussianCloud<T> &cloud, Index i, const TriangleFrame<T> &frame,
                         const Camera<T> &cam, const Mat3<T> &W, const Vec3<T> &eye) {
    SplatGeometry<T> g;
    const Vec4<T> rot = cloud.params.rot_local.row(i).transpose();
    g.bound = bind_splat<T>(frame, cloud.params.mu_local.row(i).transpose(), rot, cloud.local_scale(i));
    if (!g.bound.mu.allFinite() || !g.bound.s.allFinite()) {
        throw NumericError("splat " + std::to_string(i) + " has a non-finite global transform", i);
    }
    g.pc = W * g.bound.mu + cam.translation;
    const T x = g.pc.x(), y = g.pc.y(), z = g.pc.z();
    if (!(z > T(kNearPlane))) return g;

    g.u = cam.fx * x / z + cam.cx;
    g.v = cam.fy * y / z + cam.cy;
    g.J << cam.fx / z, 0, -cam.fx * x / (z * z), 0, cam.fy / z, -cam.fy * y / (z * z);
    g.Tm = g.J * W;
    g.M = g.bound.R * g.bound.s.asDiagonal();
    g.sigma = g.M * g.M.transpose();
    Mat2<T> cov2 = g.Tm * g.sigma * g.Tm.transpose();
    cov2(0, 0) += T(kScreenDilation);
    cov2(1, 1) += T(kScreenDilation);
    const T det = cov2.determinant();
    if (!(det > T(0))) return g;
    g.conic = cov2.inverse();

    g.opacity = cloud.opacity(i);
    const Vec3<T> diff = g.bound.mu - eye;
    g.dist = diff.norm();
    g.dir_world = diff / g.dist;
    g.dir_local = frame.K.transpose() * g.dir_world;
    const Vec4<T> basis = sh_basis(g.dir_local);
    for (int c = 0; c < 3; ++c) {
        T acc = T(0.5);
        for (int k = 0; k < kShCoeffs; ++k) acc += basis[k] * cloud.params.sh(i, k * 3 + c);
        g.color_raw[c] = acc;
    }

    const T cutoff = T(255) * g.opacity;
    if (!(cutoff > T(1))) return g;
    const T mid = (cov2(0, 0) + cov2(1, 1)) / 2;
    const T half = (cov2(0, 0) - cov2(1, 1)) / 2;
    const T lambda_max = mid + std::sqrt(half * half + cov2(0, 1) * cov2(0, 1));
    const T radius = std::sqrt(T(2) * std::log(cutoff) * lambda_max) + T(1);
    // pixel centres sit at integer + 0.5
    g.x0 = std::max(0, static_cast<int>(std::ceil(g.u - radius - T(0.5))));
    g.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(g.u + radius - T(0.5))));
    g.y0 = std::max(0, static_cast<int>(std::ceil(g.v - radius - T(0.5))));
    g.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(g.v + radius - T(0.5))));
    g.visible = g.x0 <= g.x1 && g.y0 <= g.y1;
    return g;
}

class Fingerprint {
  public:
    template <class Derived> void add(const Eigen::DenseBase<Derived> &block) {
        for (Index r = 0; r < block.rows(); ++r)
            for (Index c = 0; c < block.cols(); ++c) add_scalar(block(r, c));
    }
    template <class S> void add_scalar(S value) {
        unsigned char bytes[sizeof(S)];
        std::memcpy(bytes, &value, sizeof(S));
        for (unsigned char b : bytes) mHash = (mHash ^ b) * 0x100000001b3ULL;
    }
    std::uint64_t value() const { return mHash; }

  private:
    std::uint64_t mHash = 0xcbf29ce484222325ULL;
};

template <class T>
std::uint64_t scene_fingerprint(const GaussianCloud<T> &cloud, std::span<const TriangleFrame<T>> frames,
                                const Camera<T> &cam, const Vec3<T> &background) {
    Fingerprint fp;
    fp.add(cloud.params.mu_local);
    fp.add(cloud.params.rot_local);
    fp.add(cloud.params.scale_raw);
    fp.add(cloud.params.opacity_raw);
    fp.add(cloud.params.sh);
    for (auto p : cloud.parent_face) fp.add_scalar(p);
    for (const auto &f : frames) {
        fp.add(f.K);
        fp.add(f.V);
        fp.add_scalar(f.l);
    }
    fp.add_scalar(cam.fx);
    fp.add_scalar(cam.fy);
    fp.add_scalar(cam.cx);
    fp.add_scalar(cam.cy);
    fp.add_scalar(cam.width);
    fp.add_scalar(cam.height);
    fp.add(cam.rotation.coeffs());
    fp.add(cam.translation);
    fp.add(background);
    return fp.value();
}

} // namespace

template <class T>
RenderOutput<T> render_with_state(const GaussianCloud<T> &cloud, std::span<const TriangleFrame<T>> frames,
                                  const Camera<T> &camera, const Vec3<T> &background) {
    validate(camera);
    check_binding(cloud, static_cast<Index>(frames.size()));
    const Index n = cloud.size();
    const int W = camera.width, H = camera.height;
    const Mat3<T> Wr = camera.R();
    const Vec3<T> eye = camera.center();

    RenderOutput<T> out{RenderedImage<T>(H, W), {}};
    ForwardState<T> &state = out.state;
    state.width = W;
    state.height = H;
    state.background = background;
    state.fingerprint = scene_fingerprint(cloud, frames, camera, background);
    state.projected.resize(static_cast<std::size_t>(n));

    std::vector<std::uint32_t> order;
    for (Index i = 0; i < n; ++i) {
        if (!finite_splat(cloud, i)) throw NumericError("splat " + std::to_string(i) + " has non-finite parameters", i);
        const auto g = project(cloud, i, frames[cloud.parent_face[static_cast<std::size_t>(i)]], camera, Wr, eye);
        auto &p = state.projected[static_cast<std::size_t>(i)];
        p.visible = g.visible;
        if (!g.visible) continue;
        p.u = g.u;
        p.v = g.v;
        p.conic_a = g.conic(0, 0);
        p.conic_b = g.conic(0, 1);
        p.conic_c = g.conic(1, 1);
        p.opacity = g.opacity;
        p.depth = g.pc.z();
        p.color = g.color_raw.cwiseMax(T(0)).cwiseMin(T(1));
        p.x0 = g.x0;
        p.x1 = g.x1;
        p.y0 = g.y0;
        p.y1 = g.y1;
        order.push_back(static_cast<std::uint32_t>(i));
    }
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return state.projected[a].depth < state.projected[b].depth;
    });

    const int tiles_x = (W + kTile - 1) / kTile;
    const int tiles_y = (H + kTile - 1) / kTile;
    std::vector<std::vector<std::uint32_t>> tiles(static_cast<std::size_t>(tiles_x * tiles_y));
    for (auto s : order) {
        const auto &p = state.projected[s];
        for (int ty = p.y0 / kTile; ty <= p.y1 / kTile; ++ty)
            for (int tx = p.x0 / kTile; tx <= p.x1 / kTile; ++tx) tiles[static_cast<std::size_t>(ty * tiles_x + tx)].push_back(s);
    }

    state.pixel_offsets.assign(static_cast<std::size_t>(W * H) + 1, 0);
    state.final_transmittance.assign(static_cast<std::size_t>(W * H), T(1));
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y) * W + x;
            state.pixel_offsets[pix] = static_cast<std::uint32_t>(state.contributions.size());
            const T px = T(x) + T(0.5), py = T(y) + T(0.5);
            T trans = 1;
            Vec3<T> color = Vec3<T>::Zero();
            for (auto s : tiles[static_cast<std::size_t>((y / kTile) * tiles_x + x / kTile)]) {
                const auto &p = state.projected[s];
                if (x < p.x0 || x > p.x1 || y < p.y0 || y > p.y1) continue;
                const T dx = px - p.u, dy = py - p.v;
                const T power = T(-0.5) * (p.conic_a * dx * dx + p.conic_c * dy * dy) - p.conic_b * dx * dy;
                if (power > T(0)) continue;
                const T alpha = p.opacity * std::exp(power);
                if (alpha < T(kMinAlpha)) continue;
                state.contributions.push_back({s, alpha, trans});
                color += trans * alpha * p.color;
                trans *= T(1) - alpha;
                if (trans < T(kMinTransmittance)) break;
            }
            state.final_transmittance[pix] = trans;
            for (int c = 0; c < 3; ++c) out.image.rgb[c](y, x) = color[c] + trans * background[c];
            out.image.alpha(y, x) = T(1) - trans;
        }
    }
    state.pixel_offsets.back() = static_cast<std::uint32_t>(state.contributions.size());
    return out;
}

template <class T>
RenderedImage<T> render(const GaussianCloud<T> &cloud, std::span<const TriangleFrame<T>> frames,
                        const Camera<T> &camera, const Vec3<T> &background) {
    return render_with_state(cloud, frames, camera, background).image;
}

template <class T>
SplatGradients<T> render_backward(const GaussianCloud<T> &cloud, std::span<const TriangleFrame<T>> frames,
                                  const Camera<T> &camera, const ForwardState<T> &state,
                                  const RenderedImage<T> &upstream) {
    const int W = camera.width, H = camera.height;
    if (state.width != W || state.height != H || state.projected.size() != static_cast<std::size_t>(cloud.size()) ||
        state.fingerprint != scene_fingerprint(cloud, frames, camera, state.background)) {
        throw ContractError("render_backward called with a scene that differs from the forward pass");
    }
    if (upstream.height() != H || upstream.width() != W || upstream.rgb.height() != H || upstream.rgb.width() != W) {
        throw ContractError("upstream gradient size does not match the rendered image");
    }
    const Index n = cloud.size();

    struct Accum {
        T gu = 0, gv = 0, ga = 0, gb = 0, gc = 0, go = 0;
        Vec3<T> gcolor = Vec3<T>::Zero();
    };
    std::vector<Accum> acc(static_cast<std::size_t>(n));

    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y) * W + x;
            const Vec3<T> gC(upstream.rgb[0](y, x), upstream.rgb[1](y, x), upstream.rgb[2](y, x));
            const T gA = upstream.alpha(y, x);
            if (gC.isZero(0) && gA == T(0)) continue;
            const T px = T(x) + T(0.5), py = T(y) + T(0.5);
            Vec3<T> behind = state.background;
            T after = 1;
            for (auto k = state.pixel_offsets[pix + 1]; k-- > state.pixel_offsets[pix];) {
                const auto &ctb = state.contributions[k];
                const auto &p = state.projected[ctb.splat];
                auto &a = acc[ctb.splat];
                const T alpha = ctb.alpha, trans = ctb.transmittance;
                a.gcolor += gC * (alpha * trans);
                const T g_alpha = trans * gC.dot(p.color - behind) + gA * trans * after;
                behind = alpha * p.color + (T(1) - alpha) * behind;
                after *= T(1) - alpha;

                const T g_power = g_alpha * alpha;
                const T dx = px - p.u, dy = py - p.v;
                a.gu += g_power * (p.conic_a * dx + p.conic_b * dy);
                a.gv += g_power * (p.conic_b * dx + p.conic_c * dy);
                a.ga += g_power * T(-0.5) * dx * dx;
                a.gb += -g_power * dx * dy;
                a.gc += g_power * T(-0.5) * dy * dy;
                a.go += g_alpha * alpha / p.opacity;
            }
        }
    }

    SplatGradients<T> grads;
    grads.params = SplatParams<T>::zeros(n);
    grads.frames.assign(frames.size(), TriangleFrameGrad<T>{});
    grads.screen = VecX<T>::Zero(n);
    const Mat3<T> Wr = camera.R();
    const Vec3<T> eye = camera.center();
    for (Index i = 0; i < n; ++i) {
        if (!state.projected[static_cast<std::size_t>(i)].visible) continue;
        const auto &a = acc[static_cast<std::size_t>(i)];
        const std::uint32_t face = cloud.parent_face[static_cast<std::size_t>(i)];
        const TriangleFrame<T> &frame = frames[face];
        const SplatGeometry<T> g = project(cloud, i, frame, camera, Wr, eye);
        TriangleFrameGrad<T> &gf = grads.frames[face];

        grads.screen[i] = std::hypot(a.gu * T(W) / 2, a.gv * T(H) / 2);

        // colour
        Vec3<T> g_dir_local = Vec3<T>::Zero();
        const Vec4<T> basis = sh_basis(g.dir_local);
        for (int c = 0; c < 3; ++c) {
            if (g.color_raw[c] < T(0) || g.color_raw[c] > T(1)) continue;
            const T gc = a.gcolor[c];
            for (int k = 0; k < kShCoeffs; ++k) grads.params.sh(i, k * 3 + c) = gc * basis[k];
            g_dir_local += gc * T(kShC1) *
                           Vec3<T>(-cloud.params.sh(i, 3 * 3 + c), -cloud.params.sh(i, 1 * 3 + c),
                                   cloud.params.sh(i, 2 * 3 + c));
        }
        const Vec3<T> g_dir_world = frame.K * g_dir_local;
        gf.K += g.dir_world * g_dir_local.transpose();
        Vec3<T> g_mu = (g_dir_world - g.dir_world * g.dir_world.dot(g_dir_world)) / g.dist;

        // opacity
        grads.params.opacity_raw[i] = a.go * g.opacity * (T(1) - g.opacity);

        // conic -> 2D covariance -> 3D covariance and projection Jacobian
        Mat2<T> g_conic;
        g_conic << a.ga, a.gb / 2, a.gb / 2, a.gc;
        const Mat2<T> g_cov2 = -g.conic * g_conic * g.conic;
        const Mat3<T> g_sigma = g.Tm.transpose() * g_cov2 * g.Tm;
        const Mat23<T> g_T = T(2) * g_cov2 * g.Tm * g.sigma;
        const Mat23<T> g_J = g_T * Wr.transpose();

        const T x = g.pc.x(), y = g.pc.y(), z = g.pc.z();
        const T z2 = z * z, z3 = z2 * z;
        Vec3<T> g_pc;
        g_pc.x() = g_J(0, 2) * (-camera.fx / z2) + a.gu * camera.fx / z;
        g_pc.y() = g_J(1, 2) * (-camera.fy / z2) + a.gv * camera.fy / z;
        g_pc.z() = g_J(0, 0) * (-camera.fx / z2) + g_J(0, 2) * (T(2) * camera.fx * x / z3) +
                   g_J(1, 1) * (-camera.fy / z2) + g_J(1, 2) * (T(2) * camera.fy * y / z3) -
                   a.gu * camera.fx * x / z2 - a.gv * camera.fy * y / z2;
        g_mu += Wr.transpose() * g_pc;

        // Σ = M Mᵀ, M = R diag(s)
        const Mat3<T> g_M = T(2) * g_sigma * g.M;
        const Mat3<T> g_R = g_M * g.bound.s.asDiagonal();
        const Vec3<T> g_s = (g_M.array() * g.bound.R.array()).colwise().sum().transpose();

        const LocalSplatGrad<T> local = bind_splat_backward<T>(
            frame, cloud.params.mu_local.row(i).transpose(), cloud.params.rot_local.row(i).transpose(),
            cloud.local_scale(i), BoundSplatGrad<T>{g_mu, g_R, g_s});
        grads.params.mu_local.row(i) = local.mu.transpose();
        grads.params.rot_local.row(i) = local.rot.transpose();
        grads.params.scale_raw.row(i) = local.scale.cwiseProduct(cloud.local_scale(i)).transpose();
        gf += local.frame;
    }
    return grads;
}

#define SPLATSWAP_INSTANTIATE(T)                                                                              \
    template RenderOutput<T> render_with_state<T>(const GaussianCloud<T> &, std::span<const TriangleFrame<T>>, \
                                                  const Camera<T> &, const Vec3<T> &);                        \
    template RenderedImage<T> render<T>(const GaussianCloud<T> &, std::span<const TriangleFrame<T>>,          \
                                        const Camera<T> &, const Vec3<T> &);                                  \
    template SplatGradients<T> render_backward<T>(const GaussianCloud<T> &, std::span<const TriangleFrame<T>>, \
                                                  const Camera<T> &, const ForwardState<T> &,                 \
                                                  const RenderedImage<T> &);

SPLATSWAP_INSTANTIATE(float)
SPLATSWAP_INSTANTIATE(double)

} // namespace splatswap

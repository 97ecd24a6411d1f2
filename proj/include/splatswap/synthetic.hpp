// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic test scenes: a subdivided-icosahedron head with procedural
// blendshapes, a frontal camera arc, per-vertex albedo and a reference mesh
// rasterizer used to produce ground-truth frames.
#pragma once

#include "splatswap/geometry.hpp"
#include "splatswap/image.hpp"

#include <cstdint>
#include <vector>

namespace splatswap {

struct SyntheticOptions {
    int frames = 3;
    int width = 96;
    int height = 96;
    int subdivisions = 2;
};

template <class T> struct SyntheticHead {
    RiggedMesh<T> mesh;
    std::vector<FrameParams<T>> frames;
    std::vector<Camera<T>> cameras;
};

template <class T> SyntheticHead<T> synthetic_head(std::uint64_t seed, const SyntheticOptions &options = {});

/// Per-vertex RGB albedo in [0, 1]; different seeds give visibly different faces.
Rows<double, 3> synthetic_albedo(const RiggedMesh<double> &mesh, std::uint64_t seed);

/// Smooth procedural background; `frame` animates it.
Image<double> synthetic_background(int width, int height, std::uint64_t seed, int frame);

struct MeshRaster {
    Image<double> premultiplied; ///< colour × coverage
    Plane<double> coverage;
};

/// Z-buffered Gouraud rasterization with `supersample`² samples per pixel.
MeshRaster rasterize_mesh(const Points<double> &vertices, const Faces &faces, const Rows<double, 3> &colors,
                          const Camera<double> &camera, int supersample = 4);

} // namespace splatswap

// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
// PNG frames and tracking files.
#pragma once

#include "splatswap/geometry.hpp"
#include "splatswap/image.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace splatswap {

/// 8-bit PNG, any colour type; grey is replicated, alpha dropped. Values / 255.
Image<double> read_png_rgb(const std::filesystem::path &path);
/// 8-bit PNG, first channel only.
Plane<double> read_png_gray(const std::filesystem::path &path);

/// Values are clamped to [0,1] and rounded to 8 bits.
void write_png_rgb(const std::filesystem::path &path, const Image<double> &image);
void write_png_gray(const std::filesystem::path &path, const Plane<double> &plane);

/// Sorted *.png entries of a directory.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path &dir);

struct TrackedFrame {
    FrameParams<double> params;
    Camera<double> camera;
    std::string target_frame_path; ///< relative to the tracking file's directory
    std::string matte_path;
};

struct Tracking {
    VecX<double> shape;
    std::string mesh_id;
    std::vector<TrackedFrame> frames;
};

/// Throws IoError on unreadable files and ParameterError on schema violations.
Tracking load_tracking(const std::filesystem::path &path);
void save_tracking(const std::filesystem::path &path, const Tracking &tracking);

/// Rebuilds the rig named by a tracking mesh_id ("synthetic:<seed>").
RiggedMesh<double> mesh_from_id(const std::string &mesh_id);

/// Renders a synthetic_head scene into `dir`: tracking.json, frames/frame_NNN.png
/// (textured head over a procedural background) and mattes/matte_NNN.png.
/// A non-empty `dir` is refused unless `force`.
Tracking write_synthetic_scene(const std::filesystem::path &dir, std::uint64_t seed, bool force = false);

/// Writes `bytes` to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path &path, const std::string &bytes);

} // namespace splatswap

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "pointview/cloud.hpp"
#include "pointview/rng.hpp"

namespace pointview {

/// Primitive shapes for the desk-scale learning task.
enum class ShapeKind { sphere_shell, cube_shell, flat_plane, line_segment };

inline constexpr std::array<ShapeKind, 4> kAllShapes = {
    ShapeKind::sphere_shell, ShapeKind::cube_shell, ShapeKind::flat_plane,
    ShapeKind::line_segment};

std::string_view to_string(ShapeKind kind);

/// Samples `n_points` from the shape surface, applies a uniformly random
/// 3D rotation and N(0, noise^2) per-axis noise, then normalizes to the unit
/// cube.
PointCloud make_shape(ShapeKind kind, std::size_t n_points, Rng& rng,
                      double noise = 0.01);

struct LabeledCloud {
  PointCloud cloud;
  std::size_t label = 0;
};

/// Balanced set: `per_class` clouds of each shape, interleaved by class
/// (class 0, 1, 2, 3, 0, 1, ...). Ids are "<prefix><index>".
std::vector<LabeledCloud> make_shape_set(std::size_t per_class, std::size_t n_points,
                                         std::uint64_t seed, std::string_view prefix);

std::vector<std::string> shape_class_names();

struct SyntheticFiles {
  std::filesystem::path classes;
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
};

/// Writes a train and a test split (xyz_bin_f32le clouds), both manifests and
/// the class-names file under `dir`.
SyntheticFiles write_shape_dataset(const std::filesystem::path& dir,
                                   std::size_t train_per_class,
                                   std::size_t test_per_class, std::size_t n_points,
                                   std::uint64_t seed);

}  // namespace pointview

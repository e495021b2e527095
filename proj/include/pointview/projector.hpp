#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pointview/cloud.hpp"

namespace pointview {

/// Row-major 3x3 matrix.
using Mat3 = std::array<std::array<double, 3>, 3>;

/// A camera orientation. `rotation` maps world coordinates into view
/// coordinates whose +z axis points away from the camera.
struct ViewFrame {
  std::string name;
  Mat3 rotation{};
};

enum class ViewSet { zs6, zs12, fs10 };

ViewSet parse_view_set(std::string_view name);
std::string_view to_string(ViewSet set);

/// zs6: front, right, back, left, top, bottom.
/// zs12: zs6 followed by the upper/lower right diagonal front/back views and
///       the upper left diagonal front/back views (45 degree tilts).
/// fs10: the zs12 list mirrored left<->right, first ten views.
std::vector<ViewFrame> view_set(ViewSet set);

/// A set name, or a comma-separated list of view names drawn from zs12 and
/// fs10 (e.g. "front,top"). Throws ParseError on unknown names.
std::vector<ViewFrame> resolve_views(std::string_view names);

/// Frame rotating by `yaw_steps` * 45 degrees about +y, then `pitch_steps`
/// * 45 degrees about +x. Sines and cosines come from an exact table.
ViewFrame make_view(std::string name, int yaw_steps, int pitch_steps);

struct ProjectionSettings {
  double distance = 1.6;    // image-plane offset from the center, > 1
  std::size_t side = 121;   // raw depth-map side
  double focal = 110.0;     // pixels per unit of x/depth
  std::size_t target = 224; // side after bilinear upsampling

  void validate() const;
};

enum class DatasetPreset { modelnet10, modelnet40, scanobjectnn };

DatasetPreset parse_dataset_preset(std::string_view name);  // mn10 | mn40 | sonn
ProjectionSettings projection_preset(DatasetPreset preset);

/// Square single-channel map, row-major. 0 marks an empty pixel.
struct DepthMap {
  std::size_t side = 0;
  std::vector<double> values;
  std::string view;

  DepthMap() = default;
  DepthMap(std::size_t s, std::string view_name)
      : side(s), values(s * s, 0.0), view(std::move(view_name)) {}

  double& at(std::size_t row, std::size_t col) { return values[row * side + col]; }
  double at(std::size_t row, std::size_t col) const { return values[row * side + col]; }
};

/// Largest |coordinate| a projected cloud may have.
inline constexpr double kNormalizedTolerance = 1e-9;

/// Perspective projection into a raw side x side map.
///
/// q = R p, depth = q.z + d, column = side/2 + ceil(focal * q.x / depth),
/// row = side/2 + ceil(focal * q.y / depth). Points off the map or with
/// depth <= 0 are dropped. The nearest point wins each pixel and is stored as
/// 1 - (depth - (d - 1)) / 2, clamped to [0, 1].
///
/// Throws DomainError if any coordinate exceeds 1 + kNormalizedTolerance.
DepthMap project_view(const PointCloud& cloud, const ViewFrame& view,
                      const ProjectionSettings& settings);

/// Corner-aligned bilinear resampling to target x target.
DepthMap resize_bilinear(const DepthMap& map, std::size_t target);

/// project_view followed by resize_bilinear to settings.target, per view.
std::vector<DepthMap> project_all(const PointCloud& cloud,
                                  std::span<const ViewFrame> views,
                                  const ProjectionSettings& settings);

/// Fraction of nonzero pixels.
double occupancy(const DepthMap& map);

struct PixelExtent {
  std::size_t width = 0;   // columns spanned by nonzero pixels
  std::size_t height = 0;  // rows spanned by nonzero pixels
};
PixelExtent pixel_extent(const DepthMap& map);

/// Binary PGM ("P5", maxval 65535, big-endian samples), sample = round(65535 v).
void write_pgm(const std::filesystem::path& path, const DepthMap& map);
std::string encode_pgm(const DepthMap& map);
/// Reads 8- or 16-bit square P5 files; values are scaled to [0, 1].
DepthMap read_pgm(const std::filesystem::path& path);

}  // namespace pointview

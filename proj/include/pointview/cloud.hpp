#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pointview/rng.hpp"

namespace pointview {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

/// A sample's raw or normalized points. Never empty once loaded.
struct PointCloud {
  std::string id;
  std::vector<Point3> points;
};

enum class CloudFormat { xyz_text, xyz_bin_f32le };

CloudFormat parse_cloud_format(std::string_view name);
std::string_view to_string(CloudFormat format);
/// ".bin" / ".f32" map to xyz_bin_f32le, anything else to xyz_text.
CloudFormat cloud_format_from_path(const std::filesystem::path& path);

/// Reads every point in file order. The cloud id is the file stem.
/// Throws ParseError on malformed input and EmptyCloudError on an empty file.
PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format);
void save_cloud(const std::filesystem::path& path, const PointCloud& cloud,
                CloudFormat format);

/// Centers on the centroid and divides by the largest absolute coordinate
/// offset, so the result lies in [-1, 1]^3 with some coordinate at +-1.
/// All-coincident clouds collapse to the origin.
PointCloud normalize_unit_cube(const PointCloud& cloud);

/// Divides by max(1, largest |coordinate|), leaving clouds already inside
/// [-1, 1]^3 untouched. Used after augmentation so augmented clouds satisfy the
/// projector's domain without undoing the augmentation's translation.
PointCloud fit_unit_cube(const PointCloud& cloud);

// ---------------------------------------------------------------------------
// Dataset manifests

struct ManifestEntry {
  std::string id;
  std::filesystem::path path;
  std::size_t label = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  /// Throws ParseError when labels, ids or class names break the invariants.
  void validate() const;
};

/// Class-names file: one name per line, order defines label indices.
std::vector<std::string> load_class_names(const std::filesystem::path& path);
void save_class_names(const std::filesystem::path& path,
                      const std::vector<std::string>& names);

/// Manifest: one JSON record {"id","path","label"} per line. Relative paths are
/// resolved against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& manifest_path,
                              const std::filesystem::path& classes_path);
void save_manifest(const std::filesystem::path& manifest_path,
                   const DatasetManifest& manifest);

/// Loads the entry's cloud (format by extension) and tags it with the entry id.
PointCloud load_entry_cloud(const ManifestEntry& entry);

/// Picks min(shots, population) entries per class uniformly without
/// replacement. Output is ordered by class, then by original position.
DatasetManifest kshot_sample(const DatasetManifest& manifest, std::size_t shots,
                             std::uint64_t seed);

// ---------------------------------------------------------------------------
// Augmentation

enum class AugmentRecipe { none, scale_translate, jitter_rotate };

AugmentRecipe parse_augment_recipe(std::string_view name);
std::string_view to_string(AugmentRecipe recipe);

inline constexpr double kScaleMin = 0.8;
inline constexpr double kScaleMax = 1.25;
inline constexpr double kTranslateMax = 0.1;
inline constexpr double kJitterSigma = 0.01;
inline constexpr double kJitterClip = 0.05;

/// p -> scale * p + translation.
PointCloud apply_scale_translate(const PointCloud& cloud, double scale,
                                 const Point3& translation);
/// Adds per-point offsets, then rotates about +y by `angle` radians.
PointCloud apply_jitter_rotate(const PointCloud& cloud,
                               const std::vector<Point3>& offsets, double angle);

/// Draws the recipe's parameters from `rng` and applies them.
PointCloud augment(const PointCloud& cloud, AugmentRecipe recipe, Rng& rng);

}  // namespace pointview

#include "pointview/synthetic.hpp"

#include <cmath>
#include <string>

namespace pointview {
namespace {

Point3 random_unit(Rng& rng) {
  for (;;) {
    Point3 p{rng.normal(), rng.normal(), rng.normal()};
    const double n = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
    if (n > 1e-12) return {p.x / n, p.y / n, p.z / n};
  }
}

Point3 sample_surface(ShapeKind kind, Rng& rng) {
  switch (kind) {
    case ShapeKind::sphere_shell:
      return random_unit(rng);
    case ShapeKind::cube_shell: {
      const std::size_t face = rng.below(6);
      const double a = rng.uniform(-1.0, 1.0);
      const double b = rng.uniform(-1.0, 1.0);
      const double s = (face % 2 == 0) ? 1.0 : -1.0;
      switch (face / 2) {
        case 0: return {s, a, b};
        case 1: return {a, s, b};
        default: return {a, b, s};
      }
    }
    case ShapeKind::flat_plane:
      return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0};
    case ShapeKind::line_segment:
      return {rng.uniform(-1.0, 1.0), 0.0, 0.0};
  }
  return {};
}

// Rotation matrix from a uniformly random unit quaternion.
std::array<double, 9> random_rotation(Rng& rng) {
  double q[4];
  double n = 0.0;
  do {
    n = 0.0;
    for (double& v : q) {
      v = rng.normal();
      n += v * v;
    }
  } while (n < 1e-12);
  n = std::sqrt(n);
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

}  // namespace

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::sphere_shell: return "sphere_shell";
    case ShapeKind::cube_shell: return "cube_shell";
    case ShapeKind::flat_plane: return "flat_plane";
    case ShapeKind::line_segment: return "line_segment";
  }
  return "";
}

std::vector<std::string> shape_class_names() {
  std::vector<std::string> names;
  for (auto k : kAllShapes) names.emplace_back(to_string(k));
  return names;
}

PointCloud make_shape(ShapeKind kind, std::size_t n_points, Rng& rng, double noise) {
  const auto r = random_rotation(rng);
  PointCloud cloud;
  cloud.points.reserve(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const Point3 p = sample_surface(kind, rng);
    cloud.points.push_back({r[0] * p.x + r[1] * p.y + r[2] * p.z + noise * rng.normal(),
                            r[3] * p.x + r[4] * p.y + r[5] * p.z + noise * rng.normal(),
                            r[6] * p.x + r[7] * p.y + r[8] * p.z + noise * rng.normal()});
  }
  return normalize_unit_cube(cloud);
}

std::vector<LabeledCloud> make_shape_set(std::size_t per_class, std::size_t n_points,
                                         std::uint64_t seed, std::string_view prefix) {
  Rng rng(seed);
  std::vector<LabeledCloud> out;
  out.reserve(per_class * kAllShapes.size());
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t k = 0; k < kAllShapes.size(); ++k) {
      LabeledCloud item{make_shape(kAllShapes[k], n_points, rng), k};
      item.cloud.id = std::string(prefix) + std::to_string(out.size());
      out.push_back(std::move(item));
    }
  }
  return out;
}

SyntheticFiles write_shape_dataset(const std::filesystem::path& dir,
                                   std::size_t train_per_class,
                                   std::size_t test_per_class, std::size_t n_points,
                                   std::uint64_t seed) {
  std::filesystem::create_directories(dir / "clouds");
  SyntheticFiles files{dir / "classes.txt", dir / "train.jsonl", dir / "test.jsonl"};
  save_class_names(files.classes, shape_class_names());

  auto write_split = [&](std::size_t per_class, std::uint64_t split_seed,
                         std::string_view prefix, const std::filesystem::path& manifest) {
    DatasetManifest m;
    m.class_names = shape_class_names();
    for (auto& item : make_shape_set(per_class, n_points, split_seed, prefix)) {
      const auto rel = std::filesystem::path("clouds") / (item.cloud.id + ".bin");
      save_cloud(dir / rel, item.cloud, CloudFormat::xyz_bin_f32le);
      m.entries.push_back({item.cloud.id, dir / rel, item.label});
    }
    save_manifest(manifest, m);
  };
  write_split(train_per_class, seed, "train", files.train_manifest);
  write_split(test_per_class, seed ^ 0x9e3779b97f4a7c15ULL, "test", files.test_manifest);
  return files;
}

}  // namespace pointview

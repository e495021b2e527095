#include "pointview/cloud.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "pointview/error.hpp"

namespace pointview {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

bool parse_double(std::string_view token, double& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::vector<Point3> parse_xyz_text(const std::string& text,
                                   const std::filesystem::path& path) {
  std::vector<Point3> points;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    ++line_no;
    const auto tokens = split_ws(line);
    if (!tokens.empty()) {
      Point3 p;
      if (tokens.size() != 3 || !parse_double(tokens[0], p.x) ||
          !parse_double(tokens[1], p.y) || !parse_double(tokens[2], p.z)) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": expected three real numbers");
      }
      points.push_back(p);
    }
    start = end + 1;
  }
  return points;
}

std::vector<Point3> parse_xyz_bin(const std::string& bytes,
                                  const std::filesystem::path& path) {
  constexpr std::size_t kStride = 3 * sizeof(float);
  if (bytes.size() % kStride != 0) {
    throw ParseError(path.string() + ": size " + std::to_string(bytes.size()) +
                     " is not a multiple of 12 bytes");
  }
  std::vector<Point3> points(bytes.size() / kStride);
  for (std::size_t i = 0; i < points.size(); ++i) {
    float xyz[3];
    std::memcpy(xyz, bytes.data() + i * kStride, kStride);
    points[i] = {xyz[0], xyz[1], xyz[2]};
  }
  return points;
}

}  // namespace

CloudFormat parse_cloud_format(std::string_view name) {
  if (name == "xyz_text") return CloudFormat::xyz_text;
  if (name == "xyz_bin_f32le") return CloudFormat::xyz_bin_f32le;
  throw DomainError("unknown cloud format: " + std::string(name));
}

std::string_view to_string(CloudFormat format) {
  return format == CloudFormat::xyz_text ? "xyz_text" : "xyz_bin_f32le";
}

CloudFormat cloud_format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".bin" || ext == ".f32") return CloudFormat::xyz_bin_f32le;
  return CloudFormat::xyz_text;
}

PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format) {
  const std::string data = read_file(path);
  PointCloud cloud;
  cloud.id = path.stem().string();
  cloud.points = format == CloudFormat::xyz_text ? parse_xyz_text(data, path)
                                                 : parse_xyz_bin(data, path);
  if (cloud.points.empty()) throw EmptyCloudError(path.string() + ": empty cloud");
  return cloud;
}

void save_cloud(const std::filesystem::path& path, const PointCloud& cloud,
                CloudFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  if (format == CloudFormat::xyz_text) {
    char buf[96];
    for (const auto& p : cloud.points) {
      const int n = std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p.x, p.y, p.z);
      out.write(buf, n);
    }
  } else {
    for (const auto& p : cloud.points) {
      const float xyz[3] = {static_cast<float>(p.x), static_cast<float>(p.y),
                            static_cast<float>(p.z)};
      out.write(reinterpret_cast<const char*>(xyz), sizeof xyz);
    }
  }
  if (!out) throw ParseError("write failed: " + path.string());
}

PointCloud normalize_unit_cube(const PointCloud& cloud) {
  if (cloud.points.empty()) throw EmptyCloudError("normalize: empty cloud " + cloud.id);
  const double n = static_cast<double>(cloud.points.size());
  Point3 c;
  for (const auto& p : cloud.points) {
    c.x += p.x;
    c.y += p.y;
    c.z += p.z;
  }
  c = {c.x / n, c.y / n, c.z / n};

  double m = 0.0;
  for (const auto& p : cloud.points) {
    m = std::max({m, std::abs(p.x - c.x), std::abs(p.y - c.y), std::abs(p.z - c.z)});
  }

  PointCloud out;
  out.id = cloud.id;
  out.points.resize(cloud.points.size());
  if (m == 0.0) return out;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const auto& p = cloud.points[i];
    out.points[i] = {std::clamp((p.x - c.x) / m, -1.0, 1.0),
                     std::clamp((p.y - c.y) / m, -1.0, 1.0),
                     std::clamp((p.z - c.z) / m, -1.0, 1.0)};
  }
  return out;
}

PointCloud fit_unit_cube(const PointCloud& cloud) {
  double m = 1.0;
  for (const auto& p : cloud.points) {
    m = std::max({m, std::abs(p.x), std::abs(p.y), std::abs(p.z)});
  }
  if (m == 1.0) return cloud;
  PointCloud out{cloud.id, {}};
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points) {
    out.points.push_back({std::clamp(p.x / m, -1.0, 1.0), std::clamp(p.y / m, -1.0, 1.0),
                          std::clamp(p.z / m, -1.0, 1.0)});
  }
  return out;
}

// ---------------------------------------------------------------------------

void DatasetManifest::validate() const {
  std::unordered_set<std::string> names;
  for (const auto& name : class_names) {
    if (!names.insert(name).second) throw ParseError("duplicate class name: " + name);
  }
  std::unordered_set<std::string> ids;
  for (const auto& e : entries) {
    if (e.label >= class_names.size()) {
      throw ParseError("entry " + e.id + ": label " + std::to_string(e.label) +
                       " out of range for " + std::to_string(class_names.size()) +
                       " classes");
    }
    if (!ids.insert(e.id).second) throw ParseError("duplicate sample id: " + e.id);
  }
}

std::vector<std::string> load_class_names(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<std::string> names;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    names.push_back(line);
  }
  return names;
}

void save_class_names(const std::filesystem::path& path,
                      const std::vector<std::string>& names) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  for (const auto& n : names) out << n << '\n';
}

DatasetManifest load_manifest(const std::filesystem::path& manifest_path,
                              const std::filesystem::path& classes_path) {
  DatasetManifest manifest;
  manifest.class_names = load_class_names(classes_path);
  const auto base = manifest_path.parent_path();
  const std::string text = read_file(manifest_path);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto record = nlohmann::json::parse(line);
      ManifestEntry entry;
      entry.id = record.at("id").get<std::string>();
      std::filesystem::path p = record.at("path").get<std::string>();
      entry.path = p.is_relative() ? base / p : p;
      const auto label = record.at("label").get<long long>();
      if (label < 0) throw ParseError("negative label");
      entry.label = static_cast<std::size_t>(label);
      manifest.entries.push_back(std::move(entry));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(manifest_path.string() + ":" + std::to_string(line_no) + ": " +
                       e.what());
    } catch (const ParseError& e) {
      throw ParseError(manifest_path.string() + ":" + std::to_string(line_no) + ": " +
                       e.what());
    }
  }
  manifest.validate();
  return manifest;
}

void save_manifest(const std::filesystem::path& manifest_path,
                   const DatasetManifest& manifest) {
  std::ofstream out(manifest_path);
  if (!out) throw ParseError("cannot write " + manifest_path.string());
  // Entry paths are relative to the working directory in memory and to the
  // manifest's directory on disk.
  const auto base = std::filesystem::absolute(manifest_path).parent_path();
  for (const auto& e : manifest.entries) {
    const auto rel = std::filesystem::absolute(e.path).lexically_relative(base);
    nlohmann::json record = {
        {"id", e.id}, {"path", rel.generic_string()}, {"label", e.label}};
    out << record.dump() << '\n';
  }
}

PointCloud load_entry_cloud(const ManifestEntry& entry) {
  auto cloud = load_cloud(entry.path, cloud_format_from_path(entry.path));
  cloud.id = entry.id;
  return cloud;
}

DatasetManifest kshot_sample(const DatasetManifest& manifest, std::size_t shots,
                             std::uint64_t seed) {
  if (manifest.entries.empty()) throw DomainError("kshot_sample: empty manifest");
  if (shots == 0) throw DomainError("kshot_sample: shots must be positive");
  std::vector<std::vector<std::size_t>> members(manifest.num_classes());
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    members.at(manifest.entries[i].label).push_back(i);
  }
  Rng rng(seed);
  DatasetManifest out;
  out.class_names = manifest.class_names;
  for (auto& pool : members) {
    const std::size_t take = std::min(shots, pool.size());
    // Partial Fisher-Yates: the first `take` slots become a uniform draw.
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    }
    std::vector<std::size_t> chosen(pool.begin(), pool.begin() + take);
    std::sort(chosen.begin(), chosen.end());
    for (auto idx : chosen) out.entries.push_back(manifest.entries[idx]);
  }
  return out;
}

// ---------------------------------------------------------------------------

AugmentRecipe parse_augment_recipe(std::string_view name) {
  if (name == "none") return AugmentRecipe::none;
  if (name == "scale_translate") return AugmentRecipe::scale_translate;
  if (name == "jitter_rotate") return AugmentRecipe::jitter_rotate;
  throw DomainError("unknown augmentation: " + std::string(name));
}

std::string_view to_string(AugmentRecipe recipe) {
  switch (recipe) {
    case AugmentRecipe::none: return "none";
    case AugmentRecipe::scale_translate: return "scale_translate";
    case AugmentRecipe::jitter_rotate: return "jitter_rotate";
  }
  return "none";
}

PointCloud apply_scale_translate(const PointCloud& cloud, double scale,
                                 const Point3& t) {
  PointCloud out{cloud.id, {}};
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points) {
    out.points.push_back({scale * p.x + t.x, scale * p.y + t.y, scale * p.z + t.z});
  }
  return out;
}

PointCloud apply_jitter_rotate(const PointCloud& cloud,
                               const std::vector<Point3>& offsets, double angle) {
  if (offsets.size() != cloud.points.size()) {
    throw DomainError("jitter offsets do not match point count");
  }
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  PointCloud out{cloud.id, {}};
  out.points.reserve(cloud.points.size());
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Point3 j{cloud.points[i].x + offsets[i].x, cloud.points[i].y + offsets[i].y,
                   cloud.points[i].z + offsets[i].z};
    out.points.push_back({c * j.x + s * j.z, j.y, -s * j.x + c * j.z});
  }
  return out;
}

PointCloud augment(const PointCloud& cloud, AugmentRecipe recipe, Rng& rng) {
  switch (recipe) {
    case AugmentRecipe::none:
      return cloud;
    case AugmentRecipe::scale_translate: {
      const double scale = rng.uniform(kScaleMin, kScaleMax);
      Point3 t;
      t.x = rng.uniform(-kTranslateMax, kTranslateMax);
      t.y = rng.uniform(-kTranslateMax, kTranslateMax);
      t.z = rng.uniform(-kTranslateMax, kTranslateMax);
      return apply_scale_translate(cloud, scale, t);
    }
    case AugmentRecipe::jitter_rotate: {
      std::vector<Point3> offsets(cloud.points.size());
      auto draw = [&] {
        return std::clamp(kJitterSigma * rng.normal(), -kJitterClip, kJitterClip);
      };
      for (auto& o : offsets) {
        o.x = draw();
        o.y = draw();
        o.z = draw();
      }
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      return apply_jitter_rotate(cloud, offsets, angle);
    }
  }
  return cloud;
}

}  // namespace pointview

#include "pointview/projector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>

#include "pointview/error.hpp"

namespace pointview {
namespace {

// cos/sin of k * 45 degrees, exact where the true value is 0 or +-1.
double cos_step(int k) {
  static const double h = std::sqrt(0.5);
  static const double table[8] = {1.0, h, 0.0, -h, -1.0, -h, 0.0, h};
  return table[((k % 8) + 8) % 8];
}
double sin_step(int k) { return cos_step(k - 2); }

Mat3 multiply(const Mat3& a, const Mat3& b) {
  Mat3 out{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
    }
  }
  return out;
}

struct ViewSpec {
  const char* name;
  int yaw;
  int pitch;
};

// Front camera sits on -z; +yaw turns it toward +x (right); -pitch lifts it
// toward +y (up).
constexpr ViewSpec kTwelveViews[] = {
    {"front", 0, 0},
    {"right", 2, 0},
    {"back", 4, 0},
    {"left", -2, 0},
    {"top", 0, -2},
    {"bottom", 0, 2},
    {"upper_right_front", 1, -1},
    {"upper_right_back", 3, -1},
    {"lower_right_front", 1, 1},
    {"lower_right_back", 3, 1},
    {"upper_left_front", -1, -1},
    {"upper_left_back", -3, -1},
};

std::string mirror_name(std::string name) {
  const auto swap_word = [&](const std::string& from, const std::string& to) {
    const auto pos = name.find(from);
    if (pos == std::string::npos) return false;
    name.replace(pos, from.size(), to);
    return true;
  };
  if (!swap_word("right", "left")) swap_word("left", "right");
  return name;
}

void check_normalized(const PointCloud& cloud) {
  constexpr double bound = 1.0 + kNormalizedTolerance;
  for (const auto& p : cloud.points) {
    if (!(std::abs(p.x) <= bound && std::abs(p.y) <= bound && std::abs(p.z) <= bound)) {
      throw DomainError("cloud " + cloud.id + " is not normalized to [-1, 1]");
    }
  }
}

}  // namespace

ViewSet parse_view_set(std::string_view name) {
  if (name == "zs6") return ViewSet::zs6;
  if (name == "zs12") return ViewSet::zs12;
  if (name == "fs10") return ViewSet::fs10;
  throw DomainError("unknown view set: " + std::string(name));
}

std::string_view to_string(ViewSet set) {
  switch (set) {
    case ViewSet::zs6: return "zs6";
    case ViewSet::zs12: return "zs12";
    case ViewSet::fs10: return "fs10";
  }
  return "";
}

ViewFrame make_view(std::string name, int yaw_steps, int pitch_steps) {
  const double cy = cos_step(yaw_steps), sy = sin_step(yaw_steps);
  const double cp = cos_step(pitch_steps), sp = sin_step(pitch_steps);
  const Mat3 yaw{{{cy, 0.0, sy}, {0.0, 1.0, 0.0}, {-sy, 0.0, cy}}};
  const Mat3 pitch{{{1.0, 0.0, 0.0}, {0.0, cp, -sp}, {0.0, sp, cp}}};
  return {std::move(name), multiply(pitch, yaw)};
}

std::vector<ViewFrame> view_set(ViewSet set) {
  std::vector<ViewFrame> views;
  switch (set) {
    case ViewSet::zs6:
      for (std::size_t i = 0; i < 6; ++i) {
        views.push_back(make_view(kTwelveViews[i].name, kTwelveViews[i].yaw,
                                  kTwelveViews[i].pitch));
      }
      break;
    case ViewSet::zs12:
      for (const auto& v : kTwelveViews) views.push_back(make_view(v.name, v.yaw, v.pitch));
      break;
    case ViewSet::fs10:
      for (std::size_t i = 0; i < 10; ++i) {
        const auto& v = kTwelveViews[i];
        views.push_back(make_view(mirror_name(v.name), -v.yaw, v.pitch));
      }
      break;
  }
  return views;
}

std::vector<ViewFrame> resolve_views(std::string_view names) {
  for (auto set : {ViewSet::zs6, ViewSet::zs12, ViewSet::fs10}) {
    if (names == to_string(set)) return view_set(set);
  }
  std::vector<ViewFrame> known = view_set(ViewSet::zs12);
  for (auto& v : view_set(ViewSet::fs10)) known.push_back(std::move(v));
  std::vector<ViewFrame> out;
  std::size_t start = 0;
  while (start <= names.size()) {
    const std::size_t end = std::min(names.find(',', start), names.size());
    const std::string_view name = names.substr(start, end - start);
    const auto it = std::find_if(known.begin(), known.end(),
                                 [&](const ViewFrame& v) { return v.name == name; });
    if (it == known.end()) throw ParseError("unknown view '" + std::string(name) + "'");
    out.push_back(*it);
    start = end + 1;
  }
  return out;
}

void ProjectionSettings::validate() const {
  if (!(distance > 1.0) || !std::isfinite(distance)) {
    throw DomainError("projection distance must be > 1");
  }
  if (side == 0) throw DomainError("projection side must be positive");
  if (!(focal > 0.0) || !std::isfinite(focal)) throw DomainError("focal must be > 0");
  if (target == 0) throw DomainError("target side must be positive");
}

DatasetPreset parse_dataset_preset(std::string_view name) {
  if (name == "mn10") return DatasetPreset::modelnet10;
  if (name == "mn40") return DatasetPreset::modelnet40;
  if (name == "sonn") return DatasetPreset::scanobjectnn;
  throw DomainError("unknown preset: " + std::string(name));
}

ProjectionSettings projection_preset(DatasetPreset preset) {
  ProjectionSettings s;
  switch (preset) {
    case DatasetPreset::modelnet10: s.distance = 1.7; s.side = 100; break;
    case DatasetPreset::modelnet40: s.distance = 1.6; s.side = 121; break;
    case DatasetPreset::scanobjectnn: s.distance = 1.8; s.side = 196; break;
  }
  return s;
}

DepthMap project_view(const PointCloud& cloud, const ViewFrame& view,
                      const ProjectionSettings& settings) {
  settings.validate();
  check_normalized(cloud);

  const std::size_t side = settings.side;
  const double half = static_cast<double>(side / 2);
  const double max_index = static_cast<double>(side - 1);
  const double d = settings.distance;
  const double c = settings.focal;
  const auto& r = view.rotation;

  constexpr double kEmpty = std::numeric_limits<double>::infinity();
  std::vector<double> nearest(side * side, kEmpty);
  for (const auto& p : cloud.points) {
    const double qx = r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z;
    const double qy = r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z;
    const double qz = r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z;
    const double depth = qz + d;
    if (!(depth > 0.0)) continue;
    const double col = half + std::ceil(qx / depth * c);
    const double row = half + std::ceil(qy / depth * c);
    if (col < 0.0 || col > max_index || row < 0.0 || row > max_index) continue;
    double& slot = nearest[static_cast<std::size_t>(row) * side +
                           static_cast<std::size_t>(col)];
    slot = std::min(slot, depth);
  }

  DepthMap map(side, view.name);
  for (std::size_t i = 0; i < nearest.size(); ++i) {
    if (nearest[i] == kEmpty) continue;
    map.values[i] = std::clamp(1.0 - (nearest[i] - (d - 1.0)) / 2.0, 0.0, 1.0);
  }
  return map;
}

DepthMap resize_bilinear(const DepthMap& map, std::size_t target) {
  if (target == 0) throw DomainError("resize target must be positive");
  if (map.side == 0) throw DomainError("cannot resize an empty map");
  const std::size_t s = map.side;
  DepthMap out(target, map.view);
  auto source_coord = [&](std::size_t i) {
    if (target == 1) return static_cast<double>(s - 1) / 2.0;
    return static_cast<double>(i) * static_cast<double>(s - 1) /
           static_cast<double>(target - 1);
  };
  for (std::size_t i = 0; i < target; ++i) {
    const double y = source_coord(i);
    const std::size_t y0 = std::min(static_cast<std::size_t>(y), s - 1);
    const std::size_t y1 = std::min(y0 + 1, s - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t j = 0; j < target; ++j) {
      const double x = source_coord(j);
      const std::size_t x0 = std::min(static_cast<std::size_t>(x), s - 1);
      const std::size_t x1 = std::min(x0 + 1, s - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = std::lerp(map.at(y0, x0), map.at(y0, x1), fx);
      const double bottom = std::lerp(map.at(y1, x0), map.at(y1, x1), fx);
      out.at(i, j) = std::clamp(std::lerp(top, bottom, fy), 0.0, 1.0);
    }
  }
  return out;
}

std::vector<DepthMap> project_all(const PointCloud& cloud,
                                  std::span<const ViewFrame> views,
                                  const ProjectionSettings& settings) {
  std::vector<DepthMap> maps;
  maps.reserve(views.size());
  for (const auto& v : views) {
    auto raw = project_view(cloud, v, settings);
    maps.push_back(settings.target == settings.side ? std::move(raw)
                                                    : resize_bilinear(raw, settings.target));
  }
  return maps;
}

double occupancy(const DepthMap& map) {
  if (map.values.empty()) return 0.0;
  const auto filled = std::count_if(map.values.begin(), map.values.end(),
                                    [](double v) { return v != 0.0; });
  return static_cast<double>(filled) / static_cast<double>(map.values.size());
}

PixelExtent pixel_extent(const DepthMap& map) {
  std::size_t rmin = map.side, rmax = 0, cmin = map.side, cmax = 0;
  bool any = false;
  for (std::size_t r = 0; r < map.side; ++r) {
    for (std::size_t c = 0; c < map.side; ++c) {
      if (map.at(r, c) == 0.0) continue;
      any = true;
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
      cmin = std::min(cmin, c);
      cmax = std::max(cmax, c);
    }
  }
  if (!any) return {};
  return {cmax - cmin + 1, rmax - rmin + 1};
}

std::string encode_pgm(const DepthMap& map) {
  std::string out = "P5\n" + std::to_string(map.side) + " " + std::to_string(map.side) +
                    "\n65535\n";
  out.reserve(out.size() + 2 * map.values.size());
  for (double v : map.values) {
    const auto sample =
        static_cast<std::uint16_t>(std::lround(65535.0 * std::clamp(v, 0.0, 1.0)));
    out.push_back(static_cast<char>(sample >> 8));
    out.push_back(static_cast<char>(sample & 0xff));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const DepthMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const std::string bytes = encode_pgm(map);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

DepthMap read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string magic;
  std::size_t width = 0, height = 0, maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (!in || magic != "P5" || width == 0 || width != height || maxval == 0 ||
      maxval > 65535) {
    throw ParseError(path.string() + ": not a square binary PGM");
  }
  in.get();  // single whitespace after maxval
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::string data(width * height * bytes_per, '\0');
  in.read(data.data(), static_cast<std::streamsize>(data.size()));
  if (in.gcount() != static_cast<std::streamsize>(data.size())) {
    throw ParseError(path.string() + ": truncated PGM");
  }
  DepthMap map(width, path.stem().string());
  for (std::size_t i = 0; i < width * height; ++i) {
    std::size_t sample = static_cast<unsigned char>(data[i * bytes_per]);
    if (bytes_per == 2) sample = (sample << 8) | static_cast<unsigned char>(data[2 * i + 1]);
    map.values[i] = static_cast<double>(sample) / static_cast<double>(maxval);
  }
  return map;
}

}  // namespace pointview

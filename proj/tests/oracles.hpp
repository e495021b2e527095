#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls the implementation paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "pointview/adapter.hpp"
#include "pointview/cloud.hpp"
#include "pointview/projector.hpp"
#include "pointview/rng.hpp"

namespace pointview::oracle {

inline PointCloud random_cloud(std::size_t n, Rng& rng, double radius = 1.0) {
  PointCloud c;
  c.id = "rand";
  for (std::size_t i = 0; i < n; ++i) {
    c.points.push_back({rng.uniform(-radius, radius), rng.uniform(-radius, radius),
                        rng.uniform(-radius, radius)});
  }
  return c;
}

/// Per-pixel scan: every pixel looks at every point and keeps the nearest
/// depth among those landing on it. Each point's landing pixel is computed
/// once, straight from the projection formula.
inline DepthMap brute_force_project(const PointCloud& cloud, const ViewFrame& view,
                                    const ProjectionSettings& s) {
  DepthMap map(s.side, view.name);
  const auto& r = view.rotation;
  const long half = static_cast<long>(s.side / 2);
  const std::size_t n = cloud.points.size();
  std::vector<long> cols(n), rows(n);
  std::vector<double> depths(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = cloud.points[i];
    const double qx = r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z;
    const double qy = r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z;
    const double qz = r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z;
    depths[i] = qz + s.distance;
    if (depths[i] <= 0.0) {
      cols[i] = rows[i] = std::numeric_limits<long>::min();
      continue;
    }
    cols[i] = half + static_cast<long>(std::ceil(qx / depths[i] * s.focal));
    rows[i] = half + static_cast<long>(std::ceil(qy / depths[i] * s.focal));
  }
  for (std::size_t row = 0; row < s.side; ++row) {
    for (std::size_t col = 0; col < s.side; ++col) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        const bool hit = cols[i] == static_cast<long>(col) && rows[i] == static_cast<long>(row);
        best = hit && depths[i] < best ? depths[i] : best;
      }
      if (std::isfinite(best)) {
        const double value = 1.0 - (best - (s.distance - 1.0)) / 2.0;
        map.at(row, col) = value < 0.0 ? 0.0 : (value > 1.0 ? 1.0 : value);
      }
    }
  }
  return map;
}

/// Textbook bilinear interpolation with corner-aligned sample positions.
inline std::vector<double> reference_bilinear(const std::vector<double>& src,
                                              std::size_t s, std::size_t t) {
  std::vector<double> out(t * t);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      const double y = t == 1 ? (s - 1) / 2.0 : double(i) * (s - 1) / (t - 1);
      const double x = t == 1 ? (s - 1) / 2.0 : double(j) * (s - 1) / (t - 1);
      const auto y0 = static_cast<std::size_t>(std::floor(y));
      const auto x0 = static_cast<std::size_t>(std::floor(x));
      const std::size_t y1 = std::min(y0 + 1, s - 1), x1 = std::min(x0 + 1, s - 1);
      const double wy = y - y0, wx = x - x0;
      out[i * t + j] = (1 - wy) * (1 - wx) * src[y0 * s + x0] + (1 - wy) * wx * src[y0 * s + x1] +
                       wy * (1 - wx) * src[y1 * s + x0] + wy * wx * src[y1 * s + x1];
    }
  }
  return out;
}

using Matrix = std::vector<std::vector<double>>;

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, std::vector<double>(c));
  for (auto& row : m)
    for (auto& v : row) v = scale * rng.normal();
  return m;
}

inline double loop_norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// scale * <f/|f|, w_k/|w_k|> for every class k, by explicit loops.
inline std::vector<double> loop_view_logits(const std::vector<double>& f, const Matrix& w,
                                            double scale, bool normalize = true) {
  const double nf = normalize ? loop_norm(f) : 1.0;
  std::vector<double> out(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double nw = normalize ? loop_norm(w[k]) : 1.0;
    double dot = 0;
    for (std::size_t j = 0; j < f.size(); ++j) dot += (f[j] / nf) * (w[k][j] / nw);
    out[k] = scale * dot;
  }
  return out;
}

inline std::vector<double> loop_aggregate(const Matrix& per_view, const std::vector<double>& a) {
  std::vector<double> out(per_view[0].size(), 0.0);
  for (std::size_t i = 0; i < per_view.size(); ++i)
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += a[i] * per_view[i][k];
  return out;
}

/// Softmax in long double without max subtraction when it is safe; with it
/// otherwise. Used as the high-precision reference.
inline std::vector<double> loop_softmax(const std::vector<double>& z) {
  long double m = z[0];
  for (double v : z) m = std::max<long double>(m, v);
  long double total = 0;
  std::vector<long double> e(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) total += e[i] = std::exp((long double)z[i] - m);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = static_cast<double>(e[i] / total);
  return out;
}

struct LoopForward {
  Matrix adapted;               // M x C
  std::vector<double> global;   // C
};

/// The adapter forward pass written with scalar loops over plain vectors.
inline LoopForward loop_adapter_forward(const AdapterParams& p, const Matrix& f) {
  const std::size_t m = p.views, c = p.dim, h = p.hidden;
  std::vector<double> x;
  for (const auto& row : f) x.insert(x.end(), row.begin(), row.end());
  std::vector<double> hidden(h);
  for (std::size_t j = 0; j < h; ++j) {
    double acc = p.b1(j);
    for (std::size_t q = 0; q < m * c; ++q) acc += p.w1(j, q) * x[q];
    hidden[j] = acc > 0 ? acc : 0;
  }
  LoopForward out;
  out.global.assign(c, 0.0);
  for (std::size_t q = 0; q < c; ++q) {
    double acc = p.b2(q);
    for (std::size_t j = 0; j < h; ++j) acc += p.w2(q, j) * hidden[j];
    out.global[q] = acc;
  }
  out.adapted.assign(m, std::vector<double>(c));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t q = 0; q < c; ++q) {
      double acc = p.b3(i * c + q);
      for (std::size_t j = 0; j < c; ++j) acc += p.w3(i * c + q, j) * out.global[j];
      const double a = acc > 0 ? acc : 0;
      out.adapted[i][q] = (1 - p.beta) * f[i][q] + p.beta * a;
    }
  }
  return out;
}

/// Random adapter with every tensor (including w3, biases and alpha) filled,
/// so no ReLU sits on its kink.
inline AdapterParams random_adapter(std::size_t m, std::size_t c, std::size_t h, Rng& rng,
                                    double beta = 0.6) {
  AdapterParams p = adapter_init(m, c, h, rng.next(), beta);
  p.for_each([&](auto& t) {
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index q = 0; q < t.cols(); ++q) t(r, q) = 0.5 * rng.normal();
  });
  for (Eigen::Index i = 0; i < p.alpha.size(); ++i) p.alpha(i) = rng.uniform(0.2, 2.0);
  return p;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Central finite differences of `loss(params)` for every entry of every
/// tensor, compared against `analytic`. The relative error of an entry is
/// |a - n| / max(|a|, |n|, floor); the floor keeps entries whose true
/// gradient is ~0 from dividing noise by noise.
template <typename Loss>
GradCheck check_gradients(const AdapterParams& params, const AdapterTensors& analytic,
                          Loss&& loss, double step = 1e-5, double floor = 1e-6) {
  GradCheck result;
  AdapterParams probe = params;
  auto visit = [&](auto member) {
    auto& t = probe.*member;
    const auto& a = analytic.*member;
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index q = 0; q < t.cols(); ++q) {
        const double saved = t(r, q);
        t(r, q) = saved + step;
        const double up = loss(probe);
        t(r, q) = saved - step;
        const double down = loss(probe);
        t(r, q) = saved;
        const double numeric = (up - down) / (2 * step);
        const double exact = a(r, q);
        const double denom = std::max({std::abs(exact), std::abs(numeric), floor});
        result.max_rel_error = std::max(result.max_rel_error, std::abs(exact - numeric) / denom);
        ++result.checked;
      }
    }
  };
  visit(&AdapterTensors::w1);
  visit(&AdapterTensors::b1);
  visit(&AdapterTensors::w2);
  visit(&AdapterTensors::b2);
  visit(&AdapterTensors::w3);
  visit(&AdapterTensors::b3);
  visit(&AdapterTensors::alpha);
  return result;
}

}  // namespace pointview::oracle

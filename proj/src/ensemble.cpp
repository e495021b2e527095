#include "pointview/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "pointview/error.hpp"

namespace pointview {

LogitsTable align_to(const LogitsTable& a, const LogitsTable& b) {
  a.validate();
  b.validate();
  if (a.class_names != b.class_names) {
    throw AlignmentError("logits tables disagree on class names or their order",
                         a.ids.empty() ? std::string() : a.ids.front());
  }
  std::unordered_map<std::string, std::size_t> b_index;
  b_index.reserve(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) b_index.emplace(b.ids[i], i);
  if (b_index.size() != b.size()) {
    throw AlignmentError("duplicate id in second logits table", {});
  }

  LogitsTable out;
  out.class_names = b.class_names;
  out.logits.resize(a.logits.rows(), b.logits.cols());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto it = b_index.find(a.ids[i]);
    if (it == b_index.end()) {
      throw AlignmentError("id " + a.ids[i] + " missing from second logits table", a.ids[i]);
    }
    if (b.labels[it->second] != a.labels[i]) {
      throw AlignmentError("id " + a.ids[i] + " has different labels", a.ids[i]);
    }
    out.ids.push_back(a.ids[i]);
    out.labels.push_back(a.labels[i]);
    out.logits.row(static_cast<Eigen::Index>(i)) =
        b.logits.row(static_cast<Eigen::Index>(it->second));
  }
  if (a.size() != b.size()) {
    std::unordered_map<std::string, bool> in_a;
    for (const auto& id : a.ids) in_a.emplace(id, true);
    for (const auto& id : b.ids) {
      if (!in_a.contains(id)) {
        throw AlignmentError("id " + id + " missing from first logits table", id);
      }
    }
    throw AlignmentError("duplicate id in first logits table", {});
  }
  return out;
}

namespace {

Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    out.row(i) = softmax(logits.row(i).transpose()).transpose();
  }
  return out;
}

LogitsTable mix(const LogitsTable& a, const Eigen::MatrixXd& a_values,
                const Eigen::MatrixXd& b_values, double ratio) {
  LogitsTable out;
  out.ids = a.ids;
  out.labels = a.labels;
  out.class_names = a.class_names;
  out.logits = ratio * a_values + (1.0 - ratio) * b_values;
  return out;
}

}  // namespace

LogitsTable fuse(const LogitsTable& a, const LogitsTable& b, double ratio, FusionSpace space) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw DomainError("fusion ratio must be in [0, 1]");
  const LogitsTable b_aligned = align_to(a, b);
  if (space == FusionSpace::probabilities) {
    return mix(a, row_softmax(a.logits), row_softmax(b_aligned.logits), ratio);
  }
  return mix(a, a.logits, b_aligned.logits, ratio);
}

double top1_accuracy(const LogitsTable& table) {
  table.validate();
  if (table.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    correct += argmax(table.logits.row(static_cast<Eigen::Index>(i)).transpose()) ==
                       table.labels[i]
                   ? 1
                   : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(table.size());
}

RatioSearch search_ratio(const LogitsTable& a, const LogitsTable& b, double step,
                         FusionSpace space) {
  if (!(step > 0.0 && step <= 1.0)) throw DomainError("ratio step must be in (0, 1]");
  const double steps_real = 1.0 / step;
  const auto steps = static_cast<std::size_t>(std::llround(steps_real));
  if (std::abs(steps_real - static_cast<double>(steps)) > 1e-9) {
    throw DomainError("ratio step must divide 1 evenly");
  }
  const LogitsTable b_aligned = align_to(a, b);
  const Eigen::MatrixXd a_values =
      space == FusionSpace::probabilities ? row_softmax(a.logits) : a.logits;
  const Eigen::MatrixXd b_values =
      space == FusionSpace::probabilities ? row_softmax(b_aligned.logits) : b_aligned.logits;

  RatioSearch search;
  search.best_accuracy = -1.0;
  for (std::size_t i = 0; i <= steps; ++i) {
    // i / steps instead of i * step keeps grid points like 0.15 exact-ish and
    // the endpoints exactly 0 and 1.
    const double r = static_cast<double>(i) / static_cast<double>(steps);
    const double acc = top1_accuracy(mix(a, a_values, b_values, r));
    search.curve.push_back({r, acc});
    if (acc > search.best_accuracy) {
      search.best_accuracy = acc;
      search.best_ratio = r;
    }
  }
  return search;
}

LogitStats logit_stats(const LogitsTable& table) {
  LogitStats s;
  const auto n = table.logits.size();
  if (n == 0) return s;
  s.mean = table.logits.mean();
  s.stddev = std::sqrt((table.logits.array() - s.mean).square().mean());
  s.min = table.logits.minCoeff();
  s.max = table.logits.maxCoeff();
  double margin = 0.0;
  for (Eigen::Index i = 0; i < table.logits.rows(); ++i) {
    double top = -std::numeric_limits<double>::infinity();
    double second = top;
    for (Eigen::Index k = 0; k < table.logits.cols(); ++k) {
      const double v = table.logits(i, k);
      if (v > top) {
        second = top;
        top = v;
      } else if (v > second) {
        second = v;
      }
    }
    margin += table.logits.cols() > 1 ? top - second : 0.0;
  }
  s.mean_margin = margin / static_cast<double>(table.logits.rows());
  return s;
}

}  // namespace pointview

#pragma once

#include <cstddef>
#include <vector>

#include "pointview/zeroshot.hpp"

namespace pointview {

enum class FusionSpace {
  logits,        // r * A + (1 - r) * B on raw logits
  probabilities  // same mix applied to per-row softmax outputs
};

/// Returns `b` reordered to `a`'s id order. Throws AlignmentError when the id
/// sets differ, a shared id carries different labels, or the class lists
/// differ.
LogitsTable align_to(const LogitsTable& a, const LogitsTable& b);

/// r * A + (1 - r) * B row by row after joining on id; ids and labels follow A.
LogitsTable fuse(const LogitsTable& a, const LogitsTable& b, double ratio,
                 FusionSpace space = FusionSpace::logits);

double top1_accuracy(const LogitsTable& table);

struct RatioPoint {
  double ratio = 0.0;
  double accuracy = 0.0;
};

struct RatioSearch {
  double best_ratio = 0.0;
  double best_accuracy = 0.0;
  std::vector<RatioPoint> curve;
};

/// Accuracy of fuse(A, B, r) for r = 0, step, 2 step, ..., 1. `step` must
/// divide 1 evenly. Ties go to the smallest ratio.
RatioSearch search_ratio(const LogitsTable& a, const LogitsTable& b, double step = 0.05,
                         FusionSpace space = FusionSpace::logits);

/// Summary of a table's logit scale, for spotting mismatched models.
struct LogitStats {
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
  /// Mean over rows of (top logit - runner-up).
  double mean_margin = 0.0;
};

LogitStats logit_stats(const LogitsTable& table);

}  // namespace pointview

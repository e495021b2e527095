#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pointview/featurebank.hpp"
#include "pointview/projector.hpp"

namespace pointview {

/// Relative view weights from the zero-shot presets (one per zs6 view).
std::vector<double> view_weight_preset(DatasetPreset preset);

/// Throws DomainError unless `alpha` has `views` entries, all non-negative and
/// finite, at least one positive.
void validate_view_weights(std::span<const double> alpha, std::size_t views);

struct LogitOptions {
  double scale = 100.0;
  /// Cosine logits when true; the literal f W^T when false.
  bool normalize = true;
};

/// Classifier prepared once for repeated per-view scoring.
class ClassifierHead {
 public:
  ClassifierHead(const Eigen::MatrixXd& weights, const LogitOptions& options);

  std::size_t num_classes() const noexcept { return static_cast<std::size_t>(weights_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(weights_.cols()); }
  const LogitOptions& options() const noexcept { return options_; }
  /// Row-normalized weights (or the raw ones when normalization is off).
  const Eigen::MatrixXd& prepared() const noexcept { return weights_; }

  /// Throws DomainError on a dimension mismatch.
  Eigen::VectorXd logits(const Eigen::Ref<const Eigen::VectorXd>& feature) const;

 private:
  Eigen::MatrixXd weights_;
  LogitOptions options_;
};

/// scale * normalize(f) . normalize_rows(W)^T
Eigen::VectorXd view_logits(const Eigen::Ref<const Eigen::VectorXd>& feature,
                            const Eigen::MatrixXd& classifier,
                            const LogitOptions& options = {});

/// sum_i alpha_i * per_view.row(i), per_view is M x K.
Eigen::VectorXd aggregate(const Eigen::MatrixXd& per_view, std::span<const double> alpha);

/// Max-subtracted softmax.
Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(const Eigen::Ref<const Eigen::VectorXd>& v);

// ---------------------------------------------------------------------------

/// N x K per-sample logits with labels, the unit of evaluation and ensembling.
///
/// CSV form: header "id,label,<class0>,...,<classK-1>", one row per sample,
/// logits printed with 9 significant digits.
struct LogitsTable {
  std::vector<std::string> ids;
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;
  Eigen::MatrixXd logits;

  std::size_t size() const noexcept { return ids.size(); }
  std::size_t num_classes() const noexcept { return class_names.size(); }
  /// Throws DomainError on inconsistent shapes or out-of-range labels.
  void validate() const;
};

std::string format_logits_csv(const LogitsTable& table);
LogitsTable parse_logits_csv(std::string_view text);
void write_logits_csv(const std::filesystem::path& path, const LogitsTable& table);
LogitsTable read_logits_csv(const std::filesystem::path& path);

struct EvalResult {
  double accuracy = 0.0;
  /// NaN for classes absent from the evaluated set.
  std::vector<double> per_class_accuracy;
  std::vector<std::size_t> per_class_count;
  LogitsTable table;
};

/// Top-1 accuracy (lowest-index tie rule) and per-class breakdown.
EvalResult summarize(LogitsTable table);

}  // namespace pointview

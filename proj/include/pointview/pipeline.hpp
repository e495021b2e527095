#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pointview/cloud.hpp"
#include "pointview/featurebank.hpp"
#include "pointview/parallel.hpp"
#include "pointview/projector.hpp"
#include "pointview/synthetic.hpp"
#include "pointview/zeroshot.hpp"

namespace pointview {

struct SampleFeatures {
  std::string id;
  std::size_t label = 0;
  Eigen::MatrixXd views;  // M x C, one row per view
};

/// Frozen per-view features of a sample set, in sample order.
struct FeatureSet {
  std::vector<std::string> view_names;
  std::vector<std::string> class_names;
  std::size_t dim = 0;
  std::vector<SampleFeatures> samples;

  std::size_t num_views() const noexcept { return view_names.size(); }
};

/// Loads and normalizes every manifest cloud.
std::vector<LabeledCloud> load_labeled_clouds(const DatasetManifest& manifest,
                                              std::size_t workers = worker_count());

/// Per-sample features for the given clouds. Samples are processed in
/// parallel; the result is identical for any worker count.
FeatureSet extract_features(std::span<const LabeledCloud> clouds,
                            const std::vector<std::string>& class_names,
                            const FeatureProvider& provider,
                            std::span<const ViewFrame> views,
                            const ProjectionSettings& settings,
                            std::size_t workers = worker_count());

/// Manifest overload. Precomputed providers are served by key alone and the
/// cloud files are not read.
FeatureSet extract_features(const DatasetManifest& manifest, const FeatureProvider& provider,
                            std::span<const ViewFrame> views,
                            const ProjectionSettings& settings,
                            std::size_t workers = worker_count());

/// Zero-shot scoring of extracted features: per-view logits, weighted sum.
EvalResult evaluate_features(const FeatureSet& features, const TextClassifier& classifier,
                             std::span<const double> alpha, const LogitOptions& options = {});

/// Full zero-shot path: load, normalize, project, encode, score.
EvalResult evaluate(const DatasetManifest& manifest, const FeatureProvider& provider,
                    const TextClassifier& classifier, std::span<const ViewFrame> views,
                    const ProjectionSettings& settings, std::span<const double> alpha,
                    const LogitOptions& options = {});

}  // namespace pointview

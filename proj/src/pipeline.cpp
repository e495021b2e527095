#include "pointview/pipeline.hpp"

#include "pointview/error.hpp"

namespace pointview {
namespace {

template <typename F>
auto with_sample_context(const std::string& id, F&& body) {
  try {
    return body();
  } catch (const LookupError&) {
    throw;  // the key already names the sample
  } catch (const ParseError& e) {
    throw ParseError("sample " + id + ": " + e.what());
  } catch (const EmptyCloudError& e) {
    throw EmptyCloudError("sample " + id + ": " + e.what());
  } catch (const DomainError& e) {
    throw DomainError("sample " + id + ": " + e.what());
  } catch (const Error& e) {
    throw Error("sample " + id + ": " + e.what());
  }
}

Eigen::MatrixXd encode_views(const std::string& id, const PointCloud* cloud,
                             const FeatureProvider& provider,
                             std::span<const ViewFrame> views,
                             const ProjectionSettings& settings) {
  const auto c = static_cast<Eigen::Index>(provider.dim());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(views.size()), c);
  std::vector<DepthMap> maps;
  if (provider.needs_maps()) {
    if (cloud == nullptr) throw DomainError("toy features need a point cloud");
    maps = project_all(*cloud, views, settings);
  }
  static const DepthMap kNoMap;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto f = provider.feature(id, views[v].name, maps.empty() ? kNoMap : maps[v]);
    if (static_cast<Eigen::Index>(f.size()) != c) {
      throw DomainError("feature width " + std::to_string(f.size()) + " != " +
                        std::to_string(c));
    }
    out.row(static_cast<Eigen::Index>(v)) =
        Eigen::Map<const Eigen::RowVectorXd>(f.data(), c);
  }
  return out;
}

FeatureSet empty_set(const std::vector<std::string>& class_names,
                     const FeatureProvider& provider, std::span<const ViewFrame> views) {
  FeatureSet set;
  set.class_names = class_names;
  set.dim = provider.dim();
  for (const auto& v : views) set.view_names.push_back(v.name);
  return set;
}

}  // namespace

std::vector<LabeledCloud> load_labeled_clouds(const DatasetManifest& manifest,
                                              std::size_t workers) {
  std::vector<LabeledCloud> out(manifest.entries.size());
  parallel_for(
      manifest.entries.size(),
      [&](std::size_t i) {
        const auto& entry = manifest.entries[i];
        out[i] = with_sample_context(entry.id, [&] {
          return LabeledCloud{normalize_unit_cube(load_entry_cloud(entry)), entry.label};
        });
      },
      workers);
  return out;
}

FeatureSet extract_features(std::span<const LabeledCloud> clouds,
                            const std::vector<std::string>& class_names,
                            const FeatureProvider& provider,
                            std::span<const ViewFrame> views,
                            const ProjectionSettings& settings, std::size_t workers) {
  settings.validate();
  FeatureSet set = empty_set(class_names, provider, views);
  set.samples.resize(clouds.size());
  parallel_for(
      clouds.size(),
      [&](std::size_t i) {
        const auto& item = clouds[i];
        set.samples[i] = with_sample_context(item.cloud.id, [&] {
          return SampleFeatures{item.cloud.id, item.label,
                                encode_views(item.cloud.id, &item.cloud, provider, views,
                                             settings)};
        });
      },
      workers);
  return set;
}

FeatureSet extract_features(const DatasetManifest& manifest, const FeatureProvider& provider,
                            std::span<const ViewFrame> views,
                            const ProjectionSettings& settings, std::size_t workers) {
  if (provider.needs_maps()) {
    const auto clouds = load_labeled_clouds(manifest, workers);
    return extract_features(clouds, manifest.class_names, provider, views, settings, workers);
  }
  FeatureSet set = empty_set(manifest.class_names, provider, views);
  set.samples.resize(manifest.entries.size());
  parallel_for(
      manifest.entries.size(),
      [&](std::size_t i) {
        const auto& e = manifest.entries[i];
        set.samples[i] = SampleFeatures{
            e.id, e.label, encode_views(e.id, nullptr, provider, views, settings)};
      },
      workers);
  return set;
}

EvalResult evaluate_features(const FeatureSet& features, const TextClassifier& classifier,
                             std::span<const double> alpha, const LogitOptions& options) {
  validate_view_weights(alpha, features.num_views());
  if (classifier.dim() != features.dim) {
    throw DomainError("classifier dim " + std::to_string(classifier.dim()) +
                      " != feature dim " + std::to_string(features.dim));
  }
  const ClassifierHead head(classifier.weights, options);
  const auto n = features.samples.size();
  const auto m = static_cast<Eigen::Index>(features.num_views());
  LogitsTable table;
  table.class_names = classifier.class_names;
  table.logits.resize(static_cast<Eigen::Index>(n),
                      static_cast<Eigen::Index>(classifier.num_classes()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = features.samples[i];
    Eigen::MatrixXd per_view(m, table.logits.cols());
    for (Eigen::Index v = 0; v < m; ++v) {
      per_view.row(v) = head.logits(s.views.row(v).transpose()).transpose();
    }
    table.logits.row(static_cast<Eigen::Index>(i)) = aggregate(per_view, alpha).transpose();
    table.ids.push_back(s.id);
    table.labels.push_back(s.label);
  }
  return summarize(std::move(table));
}

EvalResult evaluate(const DatasetManifest& manifest, const FeatureProvider& provider,
                    const TextClassifier& classifier, std::span<const ViewFrame> views,
                    const ProjectionSettings& settings, std::span<const double> alpha,
                    const LogitOptions& options) {
  validate_view_weights(alpha, views.size());
  if (classifier.class_names != manifest.class_names) {
    throw DomainError("classifier classes do not match the manifest's class names");
  }
  const auto features = extract_features(manifest, provider, views, settings);
  return evaluate_features(features, classifier, alpha, options);
}

}  // namespace pointview

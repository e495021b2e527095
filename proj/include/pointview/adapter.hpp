#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pointview/cloud.hpp"
#include "pointview/featurebank.hpp"
#include "pointview/pipeline.hpp"
#include "pointview/zeroshot.hpp"

namespace pointview {

/// The trainable tensors of the inter-view adapter. Gradients and momentum
/// buffers share this shape.
///
///   w1: h x (M*C)   b1: h
///   w2: C x h       b2: C
///   w3: (M*C) x C   b3: M*C   (rows [i*C, (i+1)*C) form view i's block)
///   alpha: M        learnable view weights
struct AdapterTensors {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
  Eigen::MatrixXd w3;
  Eigen::VectorXd b3;
  Eigen::VectorXd alpha;

  void set_zero();
  AdapterTensors zeros_like() const;
  AdapterTensors& operator+=(const AdapterTensors& other);
  AdapterTensors& operator*=(double factor);
  /// Largest |entry| over all tensors.
  double max_abs() const;
  std::size_t size() const;

  /// Calls f(tensor) for each tensor in checkpoint order (w1, b1, ..., alpha).
  template <typename F>
  void for_each(F&& f) {
    f(w1); f(b1); f(w2); f(b2); f(w3); f(b3); f(alpha);
  }
  template <typename F>
  void for_each(F&& f) const {
    f(w1); f(b1); f(w2); f(b2); f(w3); f(b3); f(alpha);
  }
};

struct AdapterParams : AdapterTensors {
  std::size_t views = 0;
  std::size_t dim = 0;
  std::size_t hidden = 0;
  /// Share of the adapted feature in the residual mix.
  double beta = 0.6;

  /// Throws DomainError on shape or beta violations.
  void validate() const;
};

inline constexpr double kDefaultFusionRatio = 0.6;

/// max(C / 4, 1)
std::size_t default_hidden(std::size_t dim);

/// w1, w2 ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) rounded to f32; w3 and biases
/// zero; alpha all ones; beta rounded to f32.
AdapterParams adapter_init(std::size_t views, std::size_t dim, std::size_t hidden,
                           std::uint64_t seed, double beta = kDefaultFusionRatio);

struct AdapterOutput {
  Eigen::MatrixXd adapted;  // M x C
  Eigen::VectorXd global;   // C
};

/// global = W2 relu(W1 concat(f) + b1) + b2
/// adapted_i = (1 - beta) f_i + beta relu(W3_i global + b3_i)
AdapterOutput adapter_forward(const AdapterParams& params, const Eigen::MatrixXd& features);

/// Aggregated logits sum_i alpha_i * head(adapted_i).
Eigen::VectorXd adapter_logits(const AdapterParams& params, const Eigen::MatrixXd& features,
                               const ClassifierHead& head);

/// -sum_k t_k log p_k with t_label = 1 - eps + eps/K and t_other = eps/K.
/// log is floored at 1e-12.
double smoothed_ce(const Eigen::Ref<const Eigen::VectorXd>& probabilities,
                   std::size_t label, double eps);

/// The same loss evaluated in log space from logits, -sum_k t_k (z_k - lse(z)).
/// Needs no floor, so it stays differentiable when softmax saturates; it
/// equals smoothed_ce(softmax(z)) whenever no probability is below 1e-12.
double smoothed_ce_from_logits(const Eigen::Ref<const Eigen::VectorXd>& logits,
                               std::size_t label, double eps);

/// smoothed_ce_from_logits(adapter_logits(...))
double adapter_loss(const AdapterParams& params, const Eigen::MatrixXd& features,
                    std::size_t label, const ClassifierHead& head, double eps);

struct BackwardResult {
  double loss = 0.0;
  Eigen::VectorXd logits;
  AdapterTensors grad;
};

/// Loss and exact gradients for one sample. The classifier and the input
/// features are constants. ReLU uses the right derivative at 0.
BackwardResult backward(const AdapterParams& params, const Eigen::MatrixXd& features,
                        std::size_t label, const ClassifierHead& head, double eps);

/// lr0 * (1 + cos(pi * epoch / total)) / 2
double cosine_lr(std::size_t epoch, std::size_t total, double lr0);

// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t shots = 16;
  std::size_t epochs = 250;
  std::size_t batch_size = 32;
  double lr0 = 0.01;
  double momentum = 0.9;
  double smoothing = 0.1;
  double beta = kDefaultFusionRatio;
  std::size_t hidden = 0;  // 0 picks default_hidden(C)
  std::uint64_t seed = 0;
  AugmentRecipe augment = AugmentRecipe::none;
  /// Initial view weights; empty means all ones.
  std::vector<double> alpha_init;
  LogitOptions logits;
  /// >1 computes per-sample gradients concurrently; the reduction order is
  /// fixed so results match the single-threaded run bit for bit.
  std::size_t workers = 1;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double train_acc = 0.0;
};

struct TrainResult {
  AdapterParams params;
  std::vector<EpochStats> trace;
  std::vector<std::string> warnings;
};

/// Momentum SGD (v <- m v - lr g, theta <- theta + v) on batch-mean gradients,
/// cosine schedule per epoch, seeded reshuffle per epoch. Final parameters are
/// rounded to f32 so they survive a checkpoint round-trip unchanged.
TrainResult train_on_features(const FeatureSet& features, const TextClassifier& classifier,
                              const TrainConfig& config);

/// As above from an explicit starting point (dims must match).
TrainResult train_on_features(const FeatureSet& features, const TextClassifier& classifier,
                              const TrainConfig& config, AdapterParams start);

/// Trains on already-sampled clouds. Without augmentation features are
/// extracted once; with it, clouds are re-augmented and re-projected every
/// epoch. Precomputed providers cannot see augmented clouds, so augmentation
/// is dropped with a warning.
TrainResult train(std::span<const LabeledCloud> clouds,
                  const std::vector<std::string>& class_names,
                  const FeatureProvider& provider, const TextClassifier& classifier,
                  std::span<const ViewFrame> views, const ProjectionSettings& settings,
                  const TrainConfig& config);

/// Manifest form (the manifest is the already K-shot sampled training set).
TrainResult train(const DatasetManifest& manifest, const FeatureProvider& provider,
                  const TextClassifier& classifier, std::span<const ViewFrame> views,
                  const ProjectionSettings& settings, const TrainConfig& config);

/// Scores features through the adapter with its learned view weights.
EvalResult evaluate_adapter(const FeatureSet& features, const AdapterParams& params,
                            const TextClassifier& classifier, const LogitOptions& options = {});

void write_trace_csv(const std::filesystem::path& path, std::span<const EpochStats> trace);

// ---------------------------------------------------------------------------

/// .pcad layout (little-endian): "PCAD" | u8 version = 1 | u32 M | u32 C |
/// u32 h | f32 tensors w1, b1, w2, b2, w3, b3, alpha (matrices row-major) |
/// f32 beta.
inline constexpr std::uint8_t kCheckpointVersion = 1;

std::size_t checkpoint_size(std::size_t views, std::size_t dim, std::size_t hidden);
std::string encode_checkpoint(const AdapterParams& params);
AdapterParams decode_checkpoint(std::string_view bytes);
void checkpoint_save(const AdapterParams& params, const std::filesystem::path& path);
AdapterParams checkpoint_load(const std::filesystem::path& path);

/// Rounds every tensor entry and beta to the nearest f32.
void round_to_f32(AdapterParams& params);
bool bit_equal(const AdapterParams& a, const AdapterParams& b);

}  // namespace pointview

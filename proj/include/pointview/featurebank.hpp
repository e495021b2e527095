#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "pointview/projector.hpp"

namespace pointview {

/// Keyed matrix of dim-wide float rows, kept in insertion order.
///
/// This is the boundary to the pretrained encoders: visual features keyed
/// "<sample>/<view>" and text classifiers keyed by class name both travel as
/// .pcem files.
///
/// .pcem layout (little-endian):
///   "PCEM" | u8 version = 1 | u32 rows | u32 dim |
///   rows x ( u32 key_len | key bytes (UTF-8) | dim x f32 )
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return keys_.size(); }
  bool empty() const noexcept { return keys_.empty(); }
  const std::vector<std::string>& keys() const noexcept { return keys_; }

  /// Throws DomainError on a duplicate key or a row of the wrong width.
  void add(std::string key, std::span<const float> row);
  /// Rounds to f32.
  void add(std::string key, std::span<const double> row);

  bool contains(std::string_view key) const;
  /// Throws LookupError naming the key.
  std::span<const float> row(std::string_view key) const;
  std::span<const float> row(std::size_t index) const;

  /// Same keys, order and bit patterns.
  bool bit_equal(const EmbeddingStore& other) const;

 private:
  std::size_t dim_;
  std::vector<std::string> keys_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr std::uint8_t kStoreVersion = 1;

std::string encode_store(const EmbeddingStore& store);
/// Throws FormatError on bad magic/version, truncation, trailing bytes or
/// duplicate keys.
EmbeddingStore decode_store(std::string_view bytes);
void store_write(const std::filesystem::path& path, const EmbeddingStore& store);
EmbeddingStore store_read(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

inline constexpr std::size_t kToyInputSide = 224;
inline constexpr std::size_t kToyPooledSide = 32;
// Standard deviation of the seeded toy bias.
inline constexpr double kToyBiasScale = 0.05;

/// Deterministic stand-in for the frozen visual encoder: 7x7 average pooling
/// of a 224x224 map to 32x32, a fixed seeded 1024 -> dim Gaussian projection
/// scaled by 1/32, a seeded bias, then ReLU.
class ToyEncoder {
 public:
  ToyEncoder(std::uint64_t seed, std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<double>& bias() const noexcept { return bias_; }

  /// Throws DomainError unless the map is 224x224.
  std::vector<double> encode(const DepthMap& map) const;

 private:
  std::uint64_t seed_;
  std::size_t dim_;
  std::vector<double> weights_;  // dim x 1024, row-major
  std::vector<double> bias_;
};

std::vector<double> toy_encode(const DepthMap& map, std::uint64_t seed, std::size_t dim);

/// "<sample>/<view>"
std::string feature_key(std::string_view sample_id, std::string_view view);

/// Where per-view visual features come from.
class FeatureProvider {
 public:
  static FeatureProvider precomputed(std::shared_ptr<const EmbeddingStore> store);
  static FeatureProvider toy(std::uint64_t seed, std::size_t dim);

  std::size_t dim() const;
  /// Toy providers encode the projected map; precomputed ones ignore it.
  bool needs_maps() const noexcept;

  /// Precomputed: the stored row for feature_key(id, view) (LookupError when
  /// missing). Toy: ToyEncoder::encode(map).
  std::vector<double> feature(std::string_view sample_id, std::string_view view,
                              const DepthMap& map) const;

 private:
  using Source =
      std::variant<std::shared_ptr<const EmbeddingStore>, std::shared_ptr<const ToyEncoder>>;
  explicit FeatureProvider(Source source) : source_(std::move(source)) {}
  Source source_;
};

inline std::vector<double> get_feature(const FeatureProvider& provider,
                                       std::string_view sample_id, std::string_view view,
                                       const DepthMap& map) {
  return provider.feature(sample_id, view, map);
}

/// v / ||v||. A zero vector comes back unchanged and sets *degenerate.
std::vector<double> l2_normalize(std::span<const double> v, bool* degenerate = nullptr);

// ---------------------------------------------------------------------------

/// K x C text-derived classifier, one row per class in label order.
struct TextClassifier {
  std::vector<std::string> class_names;
  Eigen::MatrixXd weights;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(weights.cols()); }
};

/// Throws DomainError unless the store's keys equal `class_names` in order.
TextClassifier classifier_from_store(const EmbeddingStore& store,
                                     const std::vector<std::string>& class_names);
EmbeddingStore classifier_to_store(const TextClassifier& classifier);
/// Entries drawn i.i.d. N(0, 1), rounded to f32.
TextClassifier random_classifier(const std::vector<std::string>& class_names,
                                 std::size_t dim, std::uint64_t seed);

}  // namespace pointview

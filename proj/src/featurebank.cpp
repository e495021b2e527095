#include "pointview/featurebank.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pointview/error.hpp"
#include "pointview/rng.hpp"

namespace pointview {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

constexpr char kStoreMagic[4] = {'P', 'C', 'E', 'M'};

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("truncated embedding store while reading ") + what);
    }
  }
  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    std::memcpy(&v, take(4, what).data(), 4);
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

EmbeddingStore::EmbeddingStore(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw DomainError("embedding dim must be positive");
}

void EmbeddingStore::add(std::string key, std::span<const float> row) {
  if (row.size() != dim_) {
    throw DomainError("row for " + key + " has " + std::to_string(row.size()) +
                      " entries, expected " + std::to_string(dim_));
  }
  if (index_.contains(key)) throw DomainError("duplicate embedding key: " + key);
  index_.emplace(key, keys_.size());
  keys_.push_back(std::move(key));
  data_.insert(data_.end(), row.begin(), row.end());
}

void EmbeddingStore::add(std::string key, std::span<const double> row) {
  std::vector<float> f(row.begin(), row.end());
  add(std::move(key), std::span<const float>(f));
}

bool EmbeddingStore::contains(std::string_view key) const {
  return index_.contains(std::string(key));
}

std::span<const float> EmbeddingStore::row(std::string_view key) const {
  const auto it = index_.find(std::string(key));
  if (it == index_.end()) throw LookupError(std::string(key));
  return row(it->second);
}

std::span<const float> EmbeddingStore::row(std::size_t index) const {
  return std::span<const float>(data_).subspan(index * dim_, dim_);
}

bool EmbeddingStore::bit_equal(const EmbeddingStore& other) const {
  return dim_ == other.dim_ && keys_ == other.keys_ && data_.size() == other.data_.size() &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

std::string encode_store(const EmbeddingStore& store) {
  std::string out(kStoreMagic, 4);
  out.push_back(static_cast<char>(kStoreVersion));
  put_u32(out, static_cast<std::uint32_t>(store.size()));
  put_u32(out, static_cast<std::uint32_t>(store.dim()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& key = store.keys()[i];
    put_u32(out, static_cast<std::uint32_t>(key.size()));
    out += key;
    const auto row = store.row(i);
    out.append(reinterpret_cast<const char*>(row.data()), row.size_bytes());
  }
  return out;
}

EmbeddingStore decode_store(std::string_view bytes) {
  Reader in(bytes);
  if (in.remaining() < 4 || std::memcmp(bytes.data(), kStoreMagic, 4) != 0) {
    throw FormatError("not an embedding store (bad magic)");
  }
  in.take(4, "magic");
  const auto version = static_cast<std::uint8_t>(in.take(1, "version")[0]);
  if (version != kStoreVersion) {
    throw FormatError("unsupported embedding store version " + std::to_string(version));
  }
  const std::uint32_t rows = in.u32("row count");
  const std::uint32_t dim = in.u32("dim");
  if (dim == 0) throw FormatError("embedding store has dim 0");
  // Every row needs at least its length prefix and dim floats.
  if (static_cast<std::uint64_t>(rows) * (4 + 4ull * dim) > in.remaining()) {
    throw FormatError("truncated embedding store: header claims " + std::to_string(rows) +
                      " rows");
  }
  EmbeddingStore store(dim);
  std::vector<float> row(dim);
  for (std::uint32_t r = 0; r < rows; ++r) {
    const std::uint32_t key_len = in.u32("key length");
    std::string key(in.take(key_len, "key"));
    std::memcpy(row.data(), in.take(4ull * dim, "row").data(), 4ull * dim);
    if (store.contains(key)) throw FormatError("duplicate key in embedding store: " + key);
    store.add(std::move(key), std::span<const float>(row));
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after embedding store");
  return store;
}

void store_write(const std::filesystem::path& path, const EmbeddingStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const auto bytes = encode_store(store);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

EmbeddingStore store_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return decode_store(buffer.view());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

ToyEncoder::ToyEncoder(std::uint64_t seed, std::size_t dim)
    : seed_(seed), dim_(dim), weights_(dim * kToyPooledSide * kToyPooledSide), bias_(dim) {
  if (dim == 0) throw DomainError("toy encoder dim must be positive");
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(kToyPooledSide * kToyPooledSide));
  for (double& w : weights_) w = scale * rng.normal();
  for (double& b : bias_) b = kToyBiasScale * rng.normal();
}

std::vector<double> ToyEncoder::encode(const DepthMap& map) const {
  if (map.side != kToyInputSide || map.values.size() != kToyInputSide * kToyInputSide) {
    throw DomainError("toy encoder expects a 224x224 map, got " + std::to_string(map.side));
  }
  constexpr std::size_t block = kToyInputSide / kToyPooledSide;
  constexpr std::size_t inputs = kToyPooledSide * kToyPooledSide;
  std::vector<double> pooled(inputs, 0.0);
  for (std::size_t r = 0; r < kToyInputSide; ++r) {
    for (std::size_t c = 0; c < kToyInputSide; ++c) {
      pooled[(r / block) * kToyPooledSide + c / block] += map.at(r, c);
    }
  }
  for (double& p : pooled) p /= static_cast<double>(block * block);

  std::vector<double> out(dim_);
  for (std::size_t k = 0; k < dim_; ++k) {
    const double* w = weights_.data() + k * inputs;
    double acc = 0.0;
    for (std::size_t j = 0; j < inputs; ++j) acc += w[j] * pooled[j];
    out[k] = std::max(0.0, acc + bias_[k]);
  }
  return out;
}

std::vector<double> toy_encode(const DepthMap& map, std::uint64_t seed, std::size_t dim) {
  return ToyEncoder(seed, dim).encode(map);
}

std::string feature_key(std::string_view sample_id, std::string_view view) {
  std::string key(sample_id);
  key += '/';
  key += view;
  return key;
}

FeatureProvider FeatureProvider::precomputed(std::shared_ptr<const EmbeddingStore> store) {
  if (!store) throw DomainError("precomputed provider needs a store");
  return FeatureProvider(Source(std::move(store)));
}

FeatureProvider FeatureProvider::toy(std::uint64_t seed, std::size_t dim) {
  return FeatureProvider(Source(std::make_shared<const ToyEncoder>(seed, dim)));
}

std::size_t FeatureProvider::dim() const {
  return std::visit([](const auto& s) { return s->dim(); }, source_);
}

bool FeatureProvider::needs_maps() const noexcept {
  return std::holds_alternative<std::shared_ptr<const ToyEncoder>>(source_);
}

std::vector<double> FeatureProvider::feature(std::string_view sample_id,
                                             std::string_view view,
                                             const DepthMap& map) const {
  if (const auto* toy = std::get_if<std::shared_ptr<const ToyEncoder>>(&source_)) {
    return (*toy)->encode(map);
  }
  const auto& store = std::get<std::shared_ptr<const EmbeddingStore>>(source_);
  const auto row = store->row(feature_key(sample_id, view));
  return {row.begin(), row.end()};
}

std::vector<double> l2_normalize(std::span<const double> v, bool* degenerate) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (degenerate) *degenerate = norm == 0.0;
  std::vector<double> out(v.begin(), v.end());
  if (norm == 0.0) return out;
  for (double& x : out) x /= norm;
  return out;
}

// ---------------------------------------------------------------------------

TextClassifier classifier_from_store(const EmbeddingStore& store,
                                     const std::vector<std::string>& class_names) {
  if (store.keys() != class_names) {
    std::string detail;
    const std::size_t n = std::min(store.size(), class_names.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (store.keys()[i] != class_names[i]) {
        detail = ": row " + std::to_string(i) + " is '" + store.keys()[i] +
                 "', class list has '" + class_names[i] + "'";
        break;
      }
    }
    if (detail.empty()) {
      detail = ": " + std::to_string(store.size()) + " rows vs " +
               std::to_string(class_names.size()) + " classes";
    }
    throw DomainError("classifier keys do not match class names" + detail);
  }
  TextClassifier out;
  out.class_names = class_names;
  out.weights.resize(static_cast<Eigen::Index>(store.size()),
                     static_cast<Eigen::Index>(store.dim()));
  for (std::size_t k = 0; k < store.size(); ++k) {
    const auto row = store.row(k);
    for (std::size_t j = 0; j < row.size(); ++j) {
      out.weights(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = row[j];
    }
  }
  return out;
}

EmbeddingStore classifier_to_store(const TextClassifier& classifier) {
  EmbeddingStore store(classifier.dim());
  for (std::size_t k = 0; k < classifier.num_classes(); ++k) {
    const Eigen::VectorXd row = classifier.weights.row(static_cast<Eigen::Index>(k));
    store.add(classifier.class_names[k],
              std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
  }
  return store;
}

TextClassifier random_classifier(const std::vector<std::string>& class_names,
                                 std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  TextClassifier out;
  out.class_names = class_names;
  out.weights.resize(static_cast<Eigen::Index>(class_names.size()),
                     static_cast<Eigen::Index>(dim));
  for (Eigen::Index k = 0; k < out.weights.rows(); ++k) {
    for (Eigen::Index j = 0; j < out.weights.cols(); ++j) {
      out.weights(k, j) = static_cast<float>(rng.normal());
    }
  }
  return out;
}

}  // namespace pointview

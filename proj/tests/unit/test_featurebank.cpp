#include <cmath>
#include <cstring>

#include <gtest/gtest.h>

#include "../test_util.hpp"
#include "pointview/error.hpp"
#include "pointview/featurebank.hpp"
#include "pointview/rng.hpp"

namespace pointview {
namespace {

EmbeddingStore sample_store(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingStore store(dim);
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<float> row(dim);
    for (float& v : row) v = static_cast<float>(rng.normal());
    store.add("obj" + std::to_string(r / 10) + "/view" + std::to_string(r % 10), row);
  }
  return store;
}

TEST(EmbeddingStore, RoundTripIsBitExact) {
  const auto store = sample_store(25, 64, 1);
  test::TempDir dir;
  store_write(dir / "f.pcem", store);
  const auto back = store_read(dir / "f.pcem");
  EXPECT_TRUE(store.bit_equal(back));
  EXPECT_EQ(back.keys(), store.keys());
  EXPECT_EQ(encode_store(back), encode_store(store));
}

TEST(EmbeddingStore, SpecialFloatsSurvive) {
  EmbeddingStore store(4);
  const float row[4] = {-0.0f, 1e-40f, std::numeric_limits<float>::max(), -3.5f};
  store.add("k", row);
  const auto back = decode_store(encode_store(store));
  EXPECT_TRUE(store.bit_equal(back));
  EXPECT_TRUE(std::signbit(back.row("k")[0]));
}

TEST(EmbeddingStore, SizeFollowsLayout) {
  // 10 samples x 10 views of 512 floats with keys "objN/viewM" (10 bytes).
  const auto store = sample_store(100, 512, 2);
  const std::size_t expected = 4 + 1 + 4 + 4 + 100 * (4 + 10 + 512 * 4);
  EXPECT_EQ(expected, 206213u);
  EXPECT_EQ(encode_store(store).size(), expected);

  EmbeddingStore small(512);
  std::vector<float> zeros(512, 0.0f);
  for (int i = 0; i < 40; ++i) small.add("class_" + std::to_string(1000 + i), zeros);
  ASSERT_EQ(small.keys()[0].size(), 10u);
  EXPECT_EQ(encode_store(small).size(), 13u + 40u * (4 + 10 + 2048));
  EXPECT_EQ(encode_store(small).size(), 82493u);
}

TEST(EmbeddingStore, HeaderBytes) {
  EmbeddingStore store(2);
  const float row[2] = {1.0f, 2.0f};
  store.add("ab", row);
  const std::string bytes = encode_store(store);
  ASSERT_EQ(bytes.size(), 13u + 4 + 2 + 8);
  EXPECT_EQ(bytes.substr(0, 4), "PCEM");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(std::string(bytes.data() + 5, 4), std::string("\x01\x00\x00\x00", 4));
  EXPECT_EQ(std::string(bytes.data() + 9, 4), std::string("\x02\x00\x00\x00", 4));
  EXPECT_EQ(bytes.substr(17, 2), "ab");
  float first;
  std::memcpy(&first, bytes.data() + 19, 4);
  EXPECT_EQ(first, 1.0f);
}

TEST(EmbeddingStore, BadMagicRejected) {
  std::string bytes = encode_store(sample_store(3, 8, 3));
  bytes.replace(0, 4, "XXXX");
  EXPECT_THROW(decode_store(bytes), FormatError);
}

TEST(EmbeddingStore, BadVersionRejected) {
  std::string bytes = encode_store(sample_store(3, 8, 3));
  bytes[4] = 2;
  EXPECT_THROW(decode_store(bytes), FormatError);
}

TEST(EmbeddingStore, TruncationRejectedAtEveryLength) {
  const std::string bytes = encode_store(sample_store(3, 8, 3));
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    EXPECT_THROW(decode_store(std::string_view(bytes).substr(0, n)), FormatError) << n;
  }
  EXPECT_THROW(decode_store(bytes + "x"), FormatError);
}

TEST(EmbeddingStore, DuplicateKeysRejected) {
  EmbeddingStore store(2);
  const float row[2] = {0, 0};
  store.add("a", row);
  EXPECT_THROW(store.add("a", row), DomainError);
  const float wide[3] = {0, 0, 0};
  EXPECT_THROW(store.add("b", wide), DomainError);

  // Hand-built file with the same key twice.
  std::string bytes = encode_store(store);
  bytes[5] = 2;
  bytes += bytes.substr(13);
  EXPECT_THROW(decode_store(bytes), FormatError);
}

TEST(EmbeddingStore, LookupErrorsNameTheKey) {
  const auto store = sample_store(2, 4, 5);
  try {
    store.row("missing/key");
    FAIL();
  } catch (const LookupError& e) {
    EXPECT_EQ(e.key(), "missing/key");
    EXPECT_NE(std::string(e.what()).find("missing/key"), std::string::npos);
  }
}

TEST(EmbeddingStore, DoubleRowsRoundToFloat) {
  EmbeddingStore store(2);
  const double row[2] = {0.1, 1.0 / 3.0};
  store.add("k", row);
  EXPECT_EQ(store.row("k")[0], 0.1f);
  EXPECT_EQ(store.row("k")[1], static_cast<float>(1.0 / 3.0));
}

DepthMap random_map(std::uint64_t seed) {
  Rng rng(seed);
  DepthMap m(kToyInputSide, "v");
  for (double& v : m.values) v = rng.uniform() < 0.2 ? rng.uniform() : 0.0;
  return m;
}

TEST(ToyEncoder, DeterministicAndSeedSensitive) {
  const auto map = random_map(7);
  const auto a = toy_encode(map, 42, 128);
  const auto b = toy_encode(map, 42, 128);
  const auto c = toy_encode(map, 43, 128);
  ASSERT_EQ(a.size(), 128u);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(ToyEncoder(42, 128).encode(map), a);
}

TEST(ToyEncoder, ZeroMapGivesRectifiedBias) {
  const ToyEncoder enc(9, 64);
  const auto f = enc.encode(DepthMap(kToyInputSide, "v"));
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(f[i], std::max(0.0, enc.bias()[i]));
}

TEST(ToyEncoder, OutputsNonNegative) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    for (double v : toy_encode(random_map(s), s, 96)) EXPECT_GE(v, 0.0);
  }
}

TEST(ToyEncoder, RespondsToPooledContent) {
  // Pixels inside one 7x7 pooling cell only matter through their mean.
  DepthMap a(kToyInputSide, "v"), b(kToyInputSide, "v");
  a.at(0, 0) = 0.8;
  b.at(6, 6) = 0.8;
  const ToyEncoder enc(3, 32);
  const auto fa = enc.encode(a), fb = enc.encode(b);
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_NEAR(fa[i], fb[i], 1e-15);
  DepthMap c(kToyInputSide, "v");
  c.at(100, 100) = 0.8;
  EXPECT_NE(enc.encode(c), fa);
}

TEST(ToyEncoder, RejectsWrongSize) {
  const ToyEncoder enc(1, 8);
  EXPECT_THROW(enc.encode(DepthMap(121, "v")), DomainError);
}

TEST(FeatureProvider, PrecomputedLookup) {
  auto store = std::make_shared<EmbeddingStore>(3);
  const float row[3] = {1, 2, 3};
  store->add("obj1/front", row);
  const auto provider = FeatureProvider::precomputed(store);
  EXPECT_FALSE(provider.needs_maps());
  EXPECT_EQ(provider.dim(), 3u);
  const DepthMap unused;
  EXPECT_EQ(get_feature(provider, "obj1", "front", unused), (std::vector<double>{1, 2, 3}));
  try {
    provider.feature("obj1", "back", unused);
    FAIL();
  } catch (const LookupError& e) {
    EXPECT_EQ(e.key(), "obj1/back");
  }
}

TEST(FeatureProvider, ToyMatchesEncoder) {
  const auto provider = FeatureProvider::toy(5, 16);
  EXPECT_TRUE(provider.needs_maps());
  EXPECT_EQ(provider.dim(), 16u);
  const auto map = random_map(1);
  EXPECT_EQ(provider.feature("x", "front", map), toy_encode(map, 5, 16));
}

TEST(L2Normalize, UnitNormAndDegenerate) {
  const std::vector<double> v = {3, 4};
  bool degenerate = true;
  const auto n = l2_normalize(v, &degenerate);
  EXPECT_FALSE(degenerate);
  EXPECT_DOUBLE_EQ(n[0], 0.6);
  EXPECT_DOUBLE_EQ(n[1], 0.8);
  const std::vector<double> z = {0, 0, 0};
  EXPECT_EQ(l2_normalize(z, &degenerate), z);
  EXPECT_TRUE(degenerate);
}

TEST(L2Normalize, UnitNormIdempotentAndScaleFree) {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + rng.below(64));
    for (double& x : v) x = rng.normal();
    const auto n = l2_normalize(v);
    double sq = 0;
    for (double x : n) sq += x * x;
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-12);
    const auto again = l2_normalize(n);
    for (std::size_t i = 0; i < n.size(); ++i) EXPECT_NEAR(again[i], n[i], 1e-15);
    const double a = std::exp(rng.uniform(-5.0, 5.0));
    std::vector<double> scaled = v;
    for (double& x : scaled) x *= a;
    const auto ns = l2_normalize(scaled);
    for (std::size_t i = 0; i < n.size(); ++i) EXPECT_NEAR(ns[i], n[i], 1e-14);
  }
  const std::vector<double> e = {0, 1, 0};
  EXPECT_EQ(l2_normalize(e), e);
}

TEST(EmbeddingStore, LargeStoreRoundTrip) {
  Rng rng(77);
  EmbeddingStore store(3);
  for (int i = 0; i < 100000; ++i) {
    const float row[3] = {static_cast<float>(rng.normal()), static_cast<float>(i), -1.0f};
    store.add("s" + std::to_string(i), row);
  }
  EXPECT_TRUE(decode_store(encode_store(store)).bit_equal(store));
}

TEST(TextClassifier, StoreRoundTripAndKeyOrder) {
  const std::vector<std::string> names = {"chair", "table", "lamp"};
  const auto cls = random_classifier(names, 16, 11);
  ASSERT_EQ(cls.weights.rows(), 3);
  ASSERT_EQ(cls.dim(), 16u);
  const auto store = classifier_to_store(cls);
  const auto back = classifier_from_store(store, names);
  EXPECT_EQ(back.weights, cls.weights);
  EXPECT_THROW(classifier_from_store(store, {"table", "chair", "lamp"}), DomainError);
  EXPECT_THROW(classifier_from_store(store, {"chair", "table"}), DomainError);
  for (Eigen::Index i = 0; i < cls.weights.size(); ++i) {
    EXPECT_EQ(cls.weights.data()[i], static_cast<float>(cls.weights.data()[i]));
  }
}

}  // namespace
}  // namespace pointview

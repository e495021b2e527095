#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "../oracles.hpp"
#include "../test_util.hpp"
#include "pointview/error.hpp"
#include "pointview/pipeline.hpp"
#include "pointview/zeroshot.hpp"

namespace pointview {
namespace {

Eigen::MatrixXd to_eigen(const oracle::Matrix& m) {
  Eigen::MatrixXd out(m.size(), m[0].size());
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[0].size(); ++c) out(r, c) = m[r][c];
  return out;
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
}

TEST(Presets, ViewWeights) {
  EXPECT_EQ(view_weight_preset(DatasetPreset::modelnet10), (std::vector<double>{2, 5, 7, 10, 5, 6}));
  EXPECT_EQ(view_weight_preset(DatasetPreset::modelnet40), (std::vector<double>{3, 9, 5, 4, 5, 4}));
  EXPECT_EQ(view_weight_preset(DatasetPreset::scanobjectnn),
            (std::vector<double>{3, 10, 7, 4, 1, 0}));
}

TEST(ViewWeights, Validation) {
  const std::vector<double> ok = {0, 1};
  EXPECT_NO_THROW(validate_view_weights(ok, 2));
  EXPECT_THROW(validate_view_weights(ok, 3), DomainError);
  const std::vector<double> zero = {0, 0};
  EXPECT_THROW(validate_view_weights(zero, 2), DomainError);
  const std::vector<double> negative = {2, -1};
  EXPECT_THROW(validate_view_weights(negative, 2), DomainError);
  const std::vector<double> nan = {1, std::nan("")};
  EXPECT_THROW(validate_view_weights(nan, 2), DomainError);
}

TEST(ViewLogits, MatchesLoopOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto w = oracle::random_matrix(5, 8, rng);
    const auto f = oracle::random_matrix(1, 8, rng)[0];
    const auto got = view_logits(to_eigen(f), to_eigen(w), {100.0, true});
    const auto ref = oracle::loop_view_logits(f, w, 100.0);
    for (int k = 0; k < 5; ++k) EXPECT_NEAR(got(k), ref[k], 1e-12);
    const auto raw = view_logits(to_eigen(f), to_eigen(w), {1.0, false});
    const auto raw_ref = oracle::loop_view_logits(f, w, 1.0, false);
    for (int k = 0; k < 5; ++k) EXPECT_NEAR(raw(k), raw_ref[k], 1e-12);
  }
}

TEST(ViewLogits, OwnRowWinsWithOrthogonalClasses) {
  const Eigen::MatrixXd w = Eigen::MatrixXd::Identity(6, 6) * 3.0;
  for (int j = 0; j < 6; ++j) {
    EXPECT_EQ(argmax(view_logits(w.row(j).transpose(), w)), static_cast<std::size_t>(j));
  }
}

TEST(ViewLogits, LinearInScale) {
  Rng rng(4);
  const auto w = to_eigen(oracle::random_matrix(7, 12, rng));
  const auto f = to_eigen(oracle::random_matrix(1, 12, rng)[0]);
  const auto a = view_logits(f, w, {50.0, true});
  const auto b = view_logits(f, w, {100.0, true});
  for (int k = 0; k < 7; ++k) EXPECT_NEAR(b(k), 2 * a(k), 1e-12);
  EXPECT_EQ(argmax(a), argmax(b));
}

TEST(ViewLogits, DimensionMismatchAndZeroFeature) {
  const Eigen::MatrixXd w = Eigen::MatrixXd::Ones(3, 4);
  EXPECT_THROW(view_logits(Eigen::VectorXd::Ones(5), w), DomainError);
  EXPECT_EQ(view_logits(Eigen::VectorXd::Zero(4), w), Eigen::VectorXd::Zero(3));
}

TEST(ClassifierHead, PreparedRowsAreUnit) {
  Rng rng(5);
  const ClassifierHead head(to_eigen(oracle::random_matrix(4, 9, rng)), {});
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(head.prepared().row(k).norm(), 1.0, 1e-15);
}

TEST(Aggregate, SingleAndIndicatorWeights) {
  Rng rng(6);
  const auto one = to_eigen(oracle::random_matrix(1, 5, rng));
  const std::vector<double> a1 = {1};
  EXPECT_EQ(aggregate(one, a1), one.row(0).transpose());
  const auto many = to_eigen(oracle::random_matrix(6, 5, rng));
  const std::vector<double> first = {1, 0, 0, 0, 0, 0};
  EXPECT_EQ(aggregate(many, first), many.row(0).transpose());
  const std::vector<double> wrong = {1, 2};
  EXPECT_THROW(aggregate(many, wrong), DomainError);
}

TEST(Aggregate, MatchesLoopOracleAndIsLinear) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto l = oracle::random_matrix(6, 40, rng, 10.0);
    const auto l2 = oracle::random_matrix(6, 40, rng, 10.0);
    std::vector<double> a(6);
    for (double& x : a) x = rng.uniform(0, 10);
    const auto got = aggregate(to_eigen(l), a);
    const auto ref = oracle::loop_aggregate(l, a);
    for (int k = 0; k < 40; ++k) EXPECT_NEAR(got(k), ref[k], 1e-12);
    const auto sum = aggregate(to_eigen(l) + to_eigen(l2), a);
    const Eigen::VectorXd parts = got + aggregate(to_eigen(l2), a);
    for (int k = 0; k < 40; ++k) EXPECT_NEAR(sum(k), parts(k), 1e-11);
  }
}

TEST(Aggregate, ArgmaxInvariantUnderPositiveRescaling) {
  Rng rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto l = to_eigen(oracle::random_matrix(6, 10, rng, 20.0));
    std::vector<double> a(6), ca(6);
    for (double& x : a) x = rng.uniform(0, 10);
    const double c = std::exp(rng.uniform(-4, 4));
    for (int i = 0; i < 6; ++i) ca[i] = c * a[i];
    EXPECT_EQ(argmax(aggregate(l, a)), argmax(aggregate(l, ca)));
  }
}

TEST(Softmax, Examples) {
  const auto u = softmax(Eigen::Vector3d(0, 0, 0));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(u(i), 1.0 / 3.0, 1e-15);
  const auto big = softmax(Eigen::Vector2d(1000, 0));
  const auto ref = oracle::loop_softmax({1000, 0});
  EXPECT_TRUE(std::isfinite(big(0)));
  EXPECT_EQ(big(0), 1.0);
  EXPECT_NEAR(big(1), ref[1], 1e-300);
  EXPECT_GE(big(1), 0.0);
}

TEST(Softmax, SumsToOneShiftInvariantMatchesOracle) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    auto z = oracle::random_matrix(1, 1 + rng.below(50), rng, 30.0)[0];
    const auto p = softmax(to_eigen(z));
    const auto ref = oracle::loop_softmax(z);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    for (std::size_t i = 0; i < z.size(); ++i) {
      EXPECT_GT(p(i), 0.0);
      EXPECT_LE(p(i), 1.0);
      EXPECT_NEAR(p(i), ref[i], 1e-12);
    }
    const double shift = rng.uniform(-500, 500);
    for (double& v : z) v += shift;
    const auto q = softmax(to_eigen(z));
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(q(i), p(i), 1e-12);
  }
}

TEST(Argmax, TiesGoLow) {
  EXPECT_EQ(argmax(Eigen::Vector4d(1, 3, 3, 2)), 1u);
  EXPECT_EQ(argmax(Eigen::Vector3d(5, 5, 5)), 0u);
  EXPECT_EQ(argmax(Eigen::Vector3d(-1, -2, 0)), 2u);
}

// Features built directly, bypassing projection.
FeatureSet make_features(const std::vector<Eigen::MatrixXd>& per_sample,
                         const std::vector<std::size_t>& labels, std::size_t classes) {
  FeatureSet fs;
  fs.dim = per_sample[0].cols();
  for (Eigen::Index v = 0; v < per_sample[0].rows(); ++v) fs.view_names.push_back("v" + std::to_string(v));
  for (std::size_t k = 0; k < classes; ++k) fs.class_names.push_back("c" + std::to_string(k));
  for (std::size_t i = 0; i < per_sample.size(); ++i) {
    fs.samples.push_back({"s" + std::to_string(i), labels[i], per_sample[i]});
  }
  return fs;
}

TextClassifier make_classifier(const Eigen::MatrixXd& w) {
  TextClassifier t;
  for (Eigen::Index k = 0; k < w.rows(); ++k) t.class_names.push_back("c" + std::to_string(k));
  t.weights = w;
  return t;
}

TEST(EvaluateFeatures, OwnClassRowGivesPerfectAccuracy) {
  Rng rng(10);
  const auto w = to_eigen(oracle::random_matrix(5, 16, rng));
  std::vector<Eigen::MatrixXd> feats;
  std::vector<std::size_t> labels;
  for (int i = 0; i < 25; ++i) {
    const std::size_t y = i % 5;
    Eigen::MatrixXd views(3, 16);
    for (int v = 0; v < 3; ++v) views.row(v) = w.row(y) * (1.0 + v);
    feats.push_back(views);
    labels.push_back(y);
  }
  const std::vector<double> alpha = {1, 2, 3};
  const auto r = evaluate_features(make_features(feats, labels, 5), make_classifier(w), alpha);
  EXPECT_EQ(r.accuracy, 1.0);
  for (double a : r.per_class_accuracy) EXPECT_EQ(a, 1.0);
  for (auto n : r.per_class_count) EXPECT_EQ(n, 5u);
  EXPECT_EQ(r.table.size(), 25u);
  EXPECT_EQ(r.table.ids[3], "s3");
}

TEST(EvaluateFeatures, PermutationEquivariant) {
  Rng rng(11);
  const std::size_t k = 6;
  const auto w = to_eigen(oracle::random_matrix(k, 10, rng));
  std::vector<Eigen::MatrixXd> feats;
  std::vector<std::size_t> labels;
  for (int i = 0; i < 60; ++i) {
    feats.push_back(to_eigen(oracle::random_matrix(2, 10, rng)));
    labels.push_back(rng.below(k));
  }
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = k - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  Eigen::MatrixXd wp(k, 10);
  for (std::size_t c = 0; c < k; ++c) wp.row(perm[c]) = w.row(c);
  std::vector<std::size_t> lp;
  for (auto y : labels) lp.push_back(perm[y]);
  const std::vector<double> alpha = {1, 1};
  const auto a = evaluate_features(make_features(feats, labels, k), make_classifier(w), alpha);
  const auto b = evaluate_features(make_features(feats, lp, k), make_classifier(wp), alpha);
  EXPECT_EQ(a.accuracy, b.accuracy);
}

TEST(EvaluateFeatures, RandomClassifierIsAtChance) {
  Rng rng(12);
  const std::size_t k = 10, n = 2000;
  const auto w = to_eigen(oracle::random_matrix(k, 32, rng));
  std::vector<Eigen::MatrixXd> feats;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < n; ++i) {
    feats.push_back(to_eigen(oracle::random_matrix(3, 32, rng)));
    labels.push_back(rng.below(k));
  }
  const std::vector<double> alpha = {1, 1, 1};
  const auto r = evaluate_features(make_features(feats, labels, k), make_classifier(w), alpha);
  const double se = std::sqrt(0.1 * 0.9 / n);
  EXPECT_NEAR(r.accuracy, 0.1, 3 * se);
}

TEST(EvaluateFeatures, ChecksShapes) {
  Rng rng(13);
  const auto w = to_eigen(oracle::random_matrix(3, 8, rng));
  const auto fs = make_features({to_eigen(oracle::random_matrix(2, 8, rng))}, {0}, 3);
  const std::vector<double> bad = {1, 1, 1};
  EXPECT_THROW(evaluate_features(fs, make_classifier(w), bad), DomainError);
  const std::vector<double> ok = {1, 1};
  const auto wide = to_eigen(oracle::random_matrix(3, 9, rng));
  EXPECT_THROW(evaluate_features(fs, make_classifier(wide), ok), DomainError);
}

TEST(Summarize, TieRuleAndAbsentClasses) {
  LogitsTable t;
  t.ids = {"a", "b", "c"};
  t.labels = {0, 1, 0};
  t.class_names = {"x", "y", "z"};
  t.logits.resize(3, 3);
  t.logits << 1, 1, 0,   // tie -> class 0, correct
      2, 2, 2,           // tie -> class 0, wrong
      0, 5, 1;           // class 1, wrong
  const auto r = summarize(t);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.per_class_accuracy[0], 0.5);
  EXPECT_DOUBLE_EQ(r.per_class_accuracy[1], 0.0);
  EXPECT_TRUE(std::isnan(r.per_class_accuracy[2]));
  EXPECT_EQ(r.per_class_count[2], 0u);
}

TEST(LogitsCsv, RoundTripAtNineDigits) {
  Rng rng(14);
  LogitsTable t;
  t.class_names = {"airplane", "bed", "chair"};
  for (int i = 0; i < 20; ++i) {
    t.ids.push_back("sample_" + std::to_string(i));
    t.labels.push_back(rng.below(3));
  }
  t.logits = to_eigen(oracle::random_matrix(20, 3, rng, 40.0));
  const std::string csv = format_logits_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "id,label,airplane,bed,chair");
  const auto back = parse_logits_csv(csv);
  EXPECT_EQ(back.ids, t.ids);
  EXPECT_EQ(back.labels, t.labels);
  EXPECT_EQ(back.class_names, t.class_names);
  for (Eigen::Index i = 0; i < t.logits.size(); ++i) {
    const double a = t.logits.data()[i], b = back.logits.data()[i];
    EXPECT_LE(std::abs(a - b), 5e-9 * std::abs(a) + 1e-300);
  }
  // Re-formatting the parsed table reproduces the text exactly.
  EXPECT_EQ(format_logits_csv(back), csv);
  test::TempDir dir;
  write_logits_csv(dir / "l.csv", t);
  EXPECT_EQ(read_logits_csv(dir / "l.csv").ids, t.ids);
}

TEST(LogitsCsv, RejectsMalformed) {
  EXPECT_THROW(parse_logits_csv("id,label,a\nx,0\n"), ParseError);
  EXPECT_THROW(parse_logits_csv("id,label,a\nx,3,1.0\n"), ParseError);
  EXPECT_THROW(parse_logits_csv("name,label,a\nx,0,1.0\n"), ParseError);
  EXPECT_THROW(parse_logits_csv("id,label,a\nx,0,abc\n"), ParseError);
}

TEST(Evaluate, DeterministicEndToEnd) {
  test::TempDir dir;
  const auto files = write_shape_dataset(dir.path(), 3, 2, 96, 5);
  const auto manifest = load_manifest(files.test_manifest, files.classes);
  const auto provider = FeatureProvider::toy(1, 32);
  const auto cls = random_classifier(manifest.class_names, 32, 2);
  const auto views = view_set(ViewSet::zs6);
  const auto alpha = view_weight_preset(DatasetPreset::modelnet40);
  const ProjectionSettings s;
  const auto a = evaluate(manifest, provider, cls, views, s, alpha);
  const auto b = evaluate(manifest, provider, cls, views, s, alpha);
  EXPECT_EQ(a.table.logits, b.table.logits);
  EXPECT_EQ(a.table.ids.size(), manifest.entries.size());
  auto wrong = cls;
  std::swap(wrong.class_names[0], wrong.class_names[1]);
  EXPECT_THROW(evaluate(manifest, provider, wrong, views, s, alpha), DomainError);
}

TEST(Evaluate, PrecomputedMissingKeyNamesTheSample) {
  test::TempDir dir;
  const auto files = write_shape_dataset(dir.path(), 1, 1, 32, 6);
  const auto manifest = load_manifest(files.test_manifest, files.classes);
  auto store = std::make_shared<EmbeddingStore>(4);
  const auto provider = FeatureProvider::precomputed(store);
  const auto cls = random_classifier(manifest.class_names, 4, 2);
  const auto views = view_set(ViewSet::zs6);
  const std::vector<double> alpha(6, 1.0);
  try {
    evaluate(manifest, provider, cls, views, ProjectionSettings{}, alpha);
    FAIL();
  } catch (const LookupError& e) {
    EXPECT_EQ(e.key(), feature_key(manifest.entries[0].id, "front"));
  }
}

}  // namespace
}  // namespace pointview

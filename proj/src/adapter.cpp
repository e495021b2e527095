#include "pointview/adapter.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pointview/error.hpp"
#include "pointview/parallel.hpp"
#include "pointview/rng.hpp"

namespace pointview {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

Index idx(std::size_t v) { return static_cast<Index>(v); }

void check_features(const AdapterParams& p, const MatrixXd& features) {
  if (features.rows() != idx(p.views) || features.cols() != idx(p.dim)) {
    throw DomainError("adapter expects " + std::to_string(p.views) + "x" +
                      std::to_string(p.dim) + " features, got " +
                      std::to_string(features.rows()) + "x" + std::to_string(features.cols()));
  }
}

void check_head(const AdapterParams& p, const ClassifierHead& head) {
  if (head.dim() != p.dim) {
    throw DomainError("classifier dim " + std::to_string(head.dim()) + " != adapter dim " +
                      std::to_string(p.dim));
  }
}

VectorXd concat_views(const MatrixXd& features) {
  VectorXd x(features.size());
  const Index c = features.cols();
  for (Index i = 0; i < features.rows(); ++i) x.segment(i * c, c) = features.row(i).transpose();
  return x;
}

// Everything backward() needs from the forward pass.
struct ForwardCache {
  VectorXd x;       // concat(f), MC
  VectorXd z1;      // h
  VectorXd r1;      // h
  VectorXd global;  // C
  VectorXd z3;      // MC
  MatrixXd adapted; // M x C
};

ForwardCache forward_cached(const AdapterParams& p, const MatrixXd& features) {
  p.validate();
  check_features(p, features);
  ForwardCache fc;
  fc.x = concat_views(features);
  fc.z1 = p.w1 * fc.x + p.b1;
  fc.r1 = fc.z1.cwiseMax(0.0);
  fc.global = p.w2 * fc.r1 + p.b2;
  fc.z3 = p.w3 * fc.global + p.b3;
  const Index c = idx(p.dim);
  fc.adapted.resize(features.rows(), c);
  for (Index i = 0; i < features.rows(); ++i) {
    fc.adapted.row(i) = (1.0 - p.beta) * features.row(i) +
                        p.beta * fc.z3.segment(i * c, c).cwiseMax(0.0).transpose();
  }
  return fc;
}

constexpr double kLogFloor = 1e-12;

VectorXd smoothed_targets(Index k, std::size_t label, double eps) {
  VectorXd t = VectorXd::Constant(k, eps / static_cast<double>(k));
  t(idx(label)) += 1.0 - eps;
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------

void AdapterTensors::set_zero() {
  for_each([](auto& t) { t.setZero(); });
}

AdapterTensors AdapterTensors::zeros_like() const {
  AdapterTensors out = *this;
  out.set_zero();
  return out;
}

AdapterTensors& AdapterTensors::operator+=(const AdapterTensors& o) {
  w1 += o.w1;
  b1 += o.b1;
  w2 += o.w2;
  b2 += o.b2;
  w3 += o.w3;
  b3 += o.b3;
  alpha += o.alpha;
  return *this;
}

AdapterTensors& AdapterTensors::operator*=(double f) {
  for_each([f](auto& t) { t *= f; });
  return *this;
}

double AdapterTensors::max_abs() const {
  double m = 0.0;
  for_each([&m](const auto& t) {
    if (t.size() > 0) m = std::max(m, t.cwiseAbs().maxCoeff());
  });
  return m;
}

std::size_t AdapterTensors::size() const {
  std::size_t n = 0;
  for_each([&n](const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

void AdapterParams::validate() const {
  if (views == 0 || dim == 0 || hidden == 0) throw DomainError("adapter dims must be positive");
  const Index mc = idx(views * dim);
  const bool ok = w1.rows() == idx(hidden) && w1.cols() == mc && b1.size() == idx(hidden) &&
                  w2.rows() == idx(dim) && w2.cols() == idx(hidden) && b2.size() == idx(dim) &&
                  w3.rows() == mc && w3.cols() == idx(dim) && b3.size() == mc &&
                  alpha.size() == idx(views);
  if (!ok) throw DomainError("adapter tensors do not match M, C, h");
  if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("fusion ratio beta must be in [0, 1]");
}

std::size_t default_hidden(std::size_t dim) { return std::max<std::size_t>(dim / 4, 1); }

AdapterParams adapter_init(std::size_t views, std::size_t dim, std::size_t hidden,
                           std::uint64_t seed, double beta) {
  if (views == 0 || dim == 0 || hidden == 0) throw DomainError("adapter dims must be positive");
  AdapterParams p;
  p.views = views;
  p.dim = dim;
  p.hidden = hidden;
  p.beta = static_cast<float>(beta);
  const Index mc = idx(views * dim);
  Rng rng(seed);
  auto fill_uniform = [&rng](MatrixXd& m, Index rows, Index cols, double fan_in) {
    // Float-rounded bound and draws keep |w| <= bound after rounding.
    const auto bound = static_cast<float>(1.0 / std::sqrt(fan_in));
    m.resize(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) {
        const auto w = static_cast<float>(rng.uniform(-bound, bound));
        m(r, c) = std::clamp(w, -bound, bound);
      }
    }
  };
  fill_uniform(p.w1, idx(hidden), mc, static_cast<double>(views * dim));
  fill_uniform(p.w2, idx(dim), idx(hidden), static_cast<double>(hidden));
  p.b1 = VectorXd::Zero(idx(hidden));
  p.b2 = VectorXd::Zero(idx(dim));
  p.w3 = MatrixXd::Zero(mc, idx(dim));
  p.b3 = VectorXd::Zero(mc);
  p.alpha = VectorXd::Ones(idx(views));
  p.validate();
  return p;
}

AdapterOutput adapter_forward(const AdapterParams& params, const MatrixXd& features) {
  auto fc = forward_cached(params, features);
  return {std::move(fc.adapted), std::move(fc.global)};
}

VectorXd adapter_logits(const AdapterParams& params, const MatrixXd& features,
                        const ClassifierHead& head) {
  check_head(params, head);
  const auto fc = forward_cached(params, features);
  VectorXd out = VectorXd::Zero(idx(head.num_classes()));
  for (Index i = 0; i < fc.adapted.rows(); ++i) {
    out += params.alpha(i) * head.logits(fc.adapted.row(i).transpose());
  }
  return out;
}

double smoothed_ce(const Eigen::Ref<const VectorXd>& probabilities, std::size_t label,
                   double eps) {
  const Index k = probabilities.size();
  if (label >= static_cast<std::size_t>(k)) throw DomainError("label out of range");
  const VectorXd t = smoothed_targets(k, label, eps);
  double loss = 0.0;
  for (Index j = 0; j < k; ++j) {
    loss -= t(j) * std::log(std::max(probabilities(j), kLogFloor));
  }
  return loss;
}

double smoothed_ce_from_logits(const Eigen::Ref<const VectorXd>& logits, std::size_t label,
                               double eps) {
  const Index k = logits.size();
  if (label >= static_cast<std::size_t>(k)) throw DomainError("label out of range");
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  const VectorXd t = smoothed_targets(k, label, eps);
  return -(t.array() * (logits.array() - lse)).sum();
}

double adapter_loss(const AdapterParams& params, const MatrixXd& features, std::size_t label,
                    const ClassifierHead& head, double eps) {
  return smoothed_ce_from_logits(adapter_logits(params, features, head), label, eps);
}

BackwardResult backward(const AdapterParams& params, const MatrixXd& features,
                        std::size_t label, const ClassifierHead& head, double eps) {
  check_head(params, head);
  const ForwardCache fc = forward_cached(params, features);
  const Index m = idx(params.views);
  const Index c = idx(params.dim);
  const Index k = idx(head.num_classes());
  const bool normalize = head.options().normalize;
  const double scale = head.options().scale;
  const MatrixXd& w = head.prepared();

  // Forward through the head, keeping per-view unit features and logits.
  MatrixXd units(m, c);
  VectorXd norms(m);
  MatrixXd view_logits(m, k);
  for (Index i = 0; i < m; ++i) {
    const VectorXd fa = fc.adapted.row(i).transpose();
    norms(i) = normalize ? fa.norm() : 1.0;
    if (norms(i) > 0.0) {
      units.row(i) = (fa / norms(i)).transpose();
    } else {
      units.row(i) = fa.transpose();
    }
    view_logits.row(i) = (scale * (w * units.row(i).transpose())).transpose();
  }
  VectorXd logits = VectorXd::Zero(k);
  for (Index i = 0; i < m; ++i) logits += params.alpha(i) * view_logits.row(i).transpose();
  const VectorXd p = softmax(logits);

  BackwardResult out;
  out.loss = smoothed_ce_from_logits(logits, label, eps);
  out.logits = logits;
  AdapterTensors& g = out.grad;

  const VectorXd d_logits = p - smoothed_targets(k, label, eps);
  g.alpha = view_logits * d_logits;

  VectorXd d_z3(m * c);
  for (Index i = 0; i < m; ++i) {
    const VectorXd d_unit = scale * params.alpha(i) * (w.transpose() * d_logits);
    VectorXd d_fa;
    if (!normalize) {
      d_fa = d_unit;
    } else if (norms(i) > 0.0) {
      const VectorXd u = units.row(i).transpose();
      d_fa = (d_unit - u * u.dot(d_unit)) / norms(i);
    } else {
      d_fa = VectorXd::Zero(c);
    }
    const auto z3 = fc.z3.segment(i * c, c);
    d_z3.segment(i * c, c) = (params.beta * d_fa.array() * (z3.array() >= 0.0).cast<double>()).matrix();
  }

  g.w3 = d_z3 * fc.global.transpose();
  g.b3 = d_z3;
  const VectorXd d_global = params.w3.transpose() * d_z3;
  g.w2 = d_global * fc.r1.transpose();
  g.b2 = d_global;
  const VectorXd d_r1 = params.w2.transpose() * d_global;
  const VectorXd d_z1 = (d_r1.array() * (fc.z1.array() >= 0.0).cast<double>()).matrix();
  g.w1 = d_z1 * fc.x.transpose();
  g.b1 = d_z1;
  return out;
}

double cosine_lr(std::size_t epoch, std::size_t total, double lr0) {
  if (total == 0) return lr0;
  return lr0 * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                         static_cast<double>(total)));
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (shots == 0) throw DomainError("shots must be positive");
  if (batch_size == 0) throw DomainError("batch size must be positive");
  if (!(lr0 >= 0.0)) throw DomainError("learning rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("momentum must be in [0, 1)");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw DomainError("smoothing must be in [0, 1)");
  if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("beta must be in [0, 1]");
  if (!(logits.scale > 0.0)) throw DomainError("logit scale must be positive");
}

TrainResult train_on_features(const FeatureSet& features, const TextClassifier& classifier,
                              const TrainConfig& config) {
  const std::size_t hidden = config.hidden == 0 ? default_hidden(features.dim) : config.hidden;
  AdapterParams start =
      adapter_init(features.num_views(), features.dim, hidden, config.seed, config.beta);
  if (!config.alpha_init.empty()) {
    if (config.alpha_init.size() != features.num_views()) {
      throw DomainError("alpha_init has " + std::to_string(config.alpha_init.size()) +
                        " entries for " + std::to_string(features.num_views()) + " views");
    }
    start.alpha = Eigen::Map<const VectorXd>(config.alpha_init.data(),
                                             idx(config.alpha_init.size()));
  }
  return train_on_features(features, classifier, config, std::move(start));
}

namespace {

// Shared loop; `epoch_features(e)` yields the feature set used in epoch e.
template <typename EpochFeatures>
TrainResult run_training(EpochFeatures&& epoch_features, std::size_t n,
                         const TextClassifier& classifier, const TrainConfig& config,
                         AdapterParams params) {
  config.validate();
  params.validate();
  if (n == 0) throw DomainError("training set is empty");
  if (classifier.dim() != params.dim) {
    throw DomainError("classifier dim does not match adapter dim");
  }
  const ClassifierHead head(classifier.weights, config.logits);

  TrainResult result;
  AdapterTensors velocity = params.zeros_like();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng shuffle_rng(config.seed ^ 0x5eed5eedULL);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const FeatureSet& set = epoch_features(epoch);
    const double lr = cosine_lr(epoch, config.epochs, config.lr0);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, n - start);
      std::vector<BackwardResult> per_sample(count);
      parallel_for(
          count,
          [&](std::size_t j) {
            const auto& s = set.samples[order[start + j]];
            per_sample[j] = backward(params, s.views, s.label, head, config.smoothing);
          },
          config.workers);
      AdapterTensors grad = params.zeros_like();
      for (std::size_t j = 0; j < count; ++j) {
        const auto& s = set.samples[order[start + j]];
        grad += per_sample[j].grad;
        loss_sum += per_sample[j].loss;
        correct += argmax(per_sample[j].logits) == s.label ? 1 : 0;
      }
      grad *= 1.0 / static_cast<double>(count);

      velocity *= config.momentum;
      grad *= -lr;
      velocity += grad;
      static_cast<AdapterTensors&>(params) += velocity;
    }
    result.trace.push_back({epoch, lr, loss_sum / static_cast<double>(n),
                            static_cast<double>(correct) / static_cast<double>(n)});
  }
  round_to_f32(params);
  result.params = std::move(params);
  return result;
}

}  // namespace

TrainResult train_on_features(const FeatureSet& features, const TextClassifier& classifier,
                              const TrainConfig& config, AdapterParams start) {
  if (start.views != features.num_views() || start.dim != features.dim) {
    throw DomainError("starting adapter does not match the feature set");
  }
  return run_training([&](std::size_t) -> const FeatureSet& { return features; },
                      features.samples.size(), classifier, config, std::move(start));
}

TrainResult train(std::span<const LabeledCloud> clouds,
                  const std::vector<std::string>& class_names,
                  const FeatureProvider& provider, const TextClassifier& classifier,
                  std::span<const ViewFrame> views, const ProjectionSettings& settings,
                  const TrainConfig& config) {
  config.validate();
  if (clouds.empty()) throw DomainError("training set is empty");
  std::vector<std::string> warnings;
  const bool augmenting = config.augment != AugmentRecipe::none;
  if (augmenting && !provider.needs_maps()) {
    warnings.push_back("precomputed features cannot follow augmented clouds; "
                       "training without augmentation");
  }
  if (!augmenting || !provider.needs_maps()) {
    const auto features = extract_features(clouds, class_names, provider, views, settings);
    auto result = train_on_features(features, classifier, config);
    result.warnings = std::move(warnings);
    return result;
  }

  const std::size_t hidden = config.hidden == 0 ? default_hidden(provider.dim()) : config.hidden;
  AdapterParams start = adapter_init(views.size(), provider.dim(), hidden, config.seed, config.beta);
  if (!config.alpha_init.empty()) {
    if (config.alpha_init.size() != views.size()) throw DomainError("alpha_init size mismatch");
    start.alpha = Eigen::Map<const VectorXd>(config.alpha_init.data(),
                                             idx(config.alpha_init.size()));
  }
  FeatureSet current;
  Rng augment_rng(config.seed ^ 0xa0a0a0a0ULL);
  std::vector<LabeledCloud> augmented(clouds.size());
  auto epoch_features = [&](std::size_t) -> const FeatureSet& {
    // Draws are sequential in sample order so the epoch is reproducible.
    for (std::size_t i = 0; i < clouds.size(); ++i) {
      augmented[i] = {fit_unit_cube(augment(clouds[i].cloud, config.augment, augment_rng)),
                      clouds[i].label};
    }
    current = extract_features(augmented, class_names, provider, views, settings);
    return current;
  };
  auto result = run_training(epoch_features, clouds.size(), classifier, config, std::move(start));
  result.warnings = std::move(warnings);
  return result;
}

TrainResult train(const DatasetManifest& manifest, const FeatureProvider& provider,
                  const TextClassifier& classifier, std::span<const ViewFrame> views,
                  const ProjectionSettings& settings, const TrainConfig& config) {
  if (manifest.entries.empty()) throw DomainError("training set is empty");
  if (!provider.needs_maps()) {
    const auto features = extract_features(manifest, provider, views, settings);
    auto result = train_on_features(features, classifier, config);
    if (config.augment != AugmentRecipe::none) {
      result.warnings.push_back("precomputed features cannot follow augmented clouds; "
                                "training without augmentation");
    }
    return result;
  }
  const auto clouds = load_labeled_clouds(manifest);
  return train(clouds, manifest.class_names, provider, classifier, views, settings, config);
}

EvalResult evaluate_adapter(const FeatureSet& features, const AdapterParams& params,
                            const TextClassifier& classifier, const LogitOptions& options) {
  const ClassifierHead head(classifier.weights, options);
  LogitsTable table;
  table.class_names = classifier.class_names;
  table.logits.resize(idx(features.samples.size()), idx(classifier.num_classes()));
  for (std::size_t i = 0; i < features.samples.size(); ++i) {
    const auto& s = features.samples[i];
    table.logits.row(idx(i)) = adapter_logits(params, s.views, head).transpose();
    table.ids.push_back(s.id);
    table.labels.push_back(s.label);
  }
  return summarize(std::move(table));
}

void write_trace_csv(const std::filesystem::path& path, std::span<const EpochStats> trace) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,lr,mean_loss,train_acc\n";
  char buf[128];
  for (const auto& e : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", e.epoch, e.lr, e.mean_loss,
                  e.train_acc);
    out << buf;
  }
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'P', 'C', 'A', 'D'};
constexpr std::size_t kCheckpointHeader = 4 + 1 + 3 * 4;

void put_f32(std::string& out, double v) {
  const auto f = static_cast<float>(v);
  char b[4];
  std::memcpy(b, &f, 4);
  out.append(b, 4);
}

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

// Matrices are written row-major.
template <typename T>
void put_tensor(std::string& out, const T& t) {
  for (Index r = 0; r < t.rows(); ++r) {
    for (Index c = 0; c < t.cols(); ++c) put_f32(out, t(r, c));
  }
}

}  // namespace

std::size_t checkpoint_size(std::size_t m, std::size_t c, std::size_t h) {
  const std::size_t mc = m * c;
  return kCheckpointHeader + 4 * (h * mc + h + c * h + c + mc * c + mc + m + 1);
}

std::string encode_checkpoint(const AdapterParams& params) {
  params.validate();
  std::string out(kCheckpointMagic, 4);
  out.push_back(static_cast<char>(kCheckpointVersion));
  put_u32(out, static_cast<std::uint32_t>(params.views));
  put_u32(out, static_cast<std::uint32_t>(params.dim));
  put_u32(out, static_cast<std::uint32_t>(params.hidden));
  params.for_each([&out](const auto& t) { put_tensor(out, t); });
  put_f32(out, params.beta);
  return out;
}

AdapterParams decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kCheckpointHeader || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("not an adapter checkpoint (bad magic or truncated header)");
  }
  if (static_cast<std::uint8_t>(bytes[4]) != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(static_cast<std::uint8_t>(bytes[4])));
  }
  std::uint32_t dims[3];
  std::memcpy(dims, bytes.data() + 5, 12);
  AdapterParams p;
  p.views = dims[0];
  p.dim = dims[1];
  p.hidden = dims[2];
  if (p.views == 0 || p.dim == 0 || p.hidden == 0) throw FormatError("checkpoint has a zero dim");
  // Guard the multiplication below against absurd headers.
  if (p.views > (1u << 16) || p.dim > (1u << 20) || p.hidden > (1u << 20)) {
    throw FormatError("checkpoint dims out of range");
  }
  const std::size_t expected = checkpoint_size(p.views, p.dim, p.hidden);
  if (bytes.size() != expected) {
    throw FormatError("checkpoint is " + std::to_string(bytes.size()) + " bytes, shape needs " +
                      std::to_string(expected));
  }
  const Index mc = idx(p.views * p.dim);
  p.w1.resize(idx(p.hidden), mc);
  p.b1.resize(idx(p.hidden));
  p.w2.resize(idx(p.dim), idx(p.hidden));
  p.b2.resize(idx(p.dim));
  p.w3.resize(mc, idx(p.dim));
  p.b3.resize(mc);
  p.alpha.resize(idx(p.views));
  std::size_t pos = kCheckpointHeader;
  auto next = [&] {
    float f;
    std::memcpy(&f, bytes.data() + pos, 4);
    pos += 4;
    return static_cast<double>(f);
  };
  p.for_each([&](auto& t) {
    for (Index r = 0; r < t.rows(); ++r) {
      for (Index c = 0; c < t.cols(); ++c) t(r, c) = next();
    }
  });
  p.beta = next();
  if (!(p.beta >= 0.0 && p.beta <= 1.0)) throw FormatError("checkpoint beta outside [0, 1]");
  return p;
}

void checkpoint_save(const AdapterParams& params, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

AdapterParams checkpoint_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return decode_checkpoint(buffer.view());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void round_to_f32(AdapterParams& params) {
  params.for_each([](auto& t) {
    t = t.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
  });
  params.beta = static_cast<float>(params.beta);
}

bool bit_equal(const AdapterParams& a, const AdapterParams& b) {
  if (a.views != b.views || a.dim != b.dim || a.hidden != b.hidden ||
      std::bit_cast<std::uint64_t>(a.beta) != std::bit_cast<std::uint64_t>(b.beta)) {
    return false;
  }
  bool same = true;
  auto cmp = [&](const auto& x, const auto& y) {
    same = same && x.rows() == y.rows() && x.cols() == y.cols() &&
           std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) == 0;
  };
  cmp(a.w1, b.w1);
  cmp(a.b1, b.b1);
  cmp(a.w2, b.w2);
  cmp(a.b2, b.b2);
  cmp(a.w3, b.w3);
  cmp(a.b3, b.b3);
  cmp(a.alpha, b.alpha);
  return same;
}

}  // namespace pointview

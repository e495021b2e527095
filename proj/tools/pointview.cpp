#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pointview/adapter.hpp"
#include "pointview/cloud.hpp"
#include "pointview/ensemble.hpp"
#include "pointview/error.hpp"
#include "pointview/featurebank.hpp"
#include "pointview/pipeline.hpp"
#include "pointview/projector.hpp"
#include "pointview/synthetic.hpp"
#include "pointview/zeroshot.hpp"

namespace fs = std::filesystem;
using namespace pointview;

namespace {

// Projection flags shared by every command that renders depth maps. A preset
// fills in values; flags given explicitly override it.
struct ProjectionFlags {
  std::string preset;
  double distance = 1.6;
  std::size_t side = 121;
  double focal = 110.0;
  std::size_t target = 224;
  CLI::Option* distance_opt = nullptr;
  CLI::Option* side_opt = nullptr;

  void add(CLI::App& cmd) {
    cmd.add_option("--preset", preset, "Dataset preset: mn10, mn40 or sonn")
        ->check(CLI::IsMember({"mn10", "mn40", "sonn"}));
    distance_opt = cmd.add_option("--distance", distance, "Image-plane distance, > 1");
    side_opt = cmd.add_option("--side", side, "Raw depth-map side in pixels");
    cmd.add_option("--focal", focal, "Focal length in pixels");
    cmd.add_option("--target", target, "Side after bilinear upsampling");
  }

  ProjectionSettings settings() const {
    ProjectionSettings s{distance, side, focal, target};
    if (!preset.empty()) {
      const auto p = projection_preset(parse_dataset_preset(preset));
      if (distance_opt->count() == 0) s.distance = p.distance;
      if (side_opt->count() == 0) s.side = p.side;
    }
    s.validate();
    return s;
  }
};

// Where visual features come from: a precomputed store or the toy encoder.
struct FeatureFlags {
  std::string features;
  std::uint64_t toy_seed = 0;
  std::size_t dim = 128;
  CLI::Option* toy_opt = nullptr;

  void add(CLI::App& cmd) {
    auto* f = cmd.add_option("--features", features, "Precomputed per-view features (.pcem)");
    toy_opt = cmd.add_option("--toy-seed", toy_seed, "Use the toy encoder with this seed");
    cmd.add_option("--dim", dim, "Toy encoder feature width");
    f->excludes(toy_opt);
  }

  FeatureProvider provider() const {
    if (!features.empty()) {
      return FeatureProvider::precomputed(std::make_shared<EmbeddingStore>(store_read(features)));
    }
    if (toy_opt->count() == 0) throw DomainError("either --features or --toy-seed is required");
    return FeatureProvider::toy(toy_seed, dim);
  }
};

struct DataFlags {
  std::string manifest;
  std::string classes;
  std::string classifier;
  std::string views = "zs6";

  void add(CLI::App& cmd, const std::string& default_views) {
    views = default_views;
    cmd.add_option("--manifest", manifest, "JSONL dataset manifest")->required();
    cmd.add_option("--classes", classes, "Class-names file")->required();
    cmd.add_option("--classifier", classifier, "Text classifier (.pcem keyed by class)")
        ->required();
    cmd.add_option("--views", views, "View set (zs6, zs12, fs10) or comma list of views");
  }
};

struct LogitFlags {
  double scale = 100.0;
  bool no_normalize = false;

  void add(CLI::App& cmd) {
    cmd.add_option("--scale", scale, "Logit scale");
    cmd.add_flag("--no-normalize", no_normalize, "Use raw dot products instead of cosines");
  }
  LogitOptions options() const { return {scale, !no_normalize}; }
};

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    const std::string item = text.substr(start, end - start);
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ParseError("not a number: '" + item + "'");
    out.push_back(v);
    start = end + 1;
  }
  return out;
}

void print_eval(const EvalResult& r) {
  std::printf("accuracy %.4f (%zu samples)\n", r.accuracy, r.table.size());
  for (std::size_t k = 0; k < r.table.num_classes(); ++k) {
    if (r.per_class_count[k] == 0) {
      std::printf("  %-24s n=0\n", r.table.class_names[k].c_str());
    } else {
      std::printf("  %-24s %.4f n=%zu\n", r.table.class_names[k].c_str(),
                  r.per_class_accuracy[k], r.per_class_count[k]);
    }
  }
}

void print_settings(const ProjectionSettings& s, std::span<const ViewFrame> views,
                    std::span<const double> alpha) {
  std::printf("distance %g side %zu focal %g target %zu views %zu alpha", s.distance, s.side,
              s.focal, s.target, views.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) std::printf("%c%g", i ? ',' : ' ', alpha[i]);
  std::printf("\n");
}

TextClassifier load_classifier(const DataFlags& d, const DatasetManifest& m) {
  return classifier_from_store(store_read(d.classifier), m.class_names);
}

// Keeps the timed projections from being optimized away.
volatile double g_sink = 0.0;

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-cloud classification through projected depth maps"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a key=value file; flags override it");

  // project ------------------------------------------------------------------
  auto* project = app.add_subcommand("project", "Render a cloud into per-view depth maps");
  std::string p_input, p_format, p_out = ".", p_views = "zs6", p_pgm = "resized";
  ProjectionFlags p_proj;
  project->add_option("--input", p_input, "Point cloud file")->required();
  project->add_option("--format", p_format, "xyz_text or xyz_bin_f32le (default: by extension)")
      ->check(CLI::IsMember({"xyz_text", "xyz_bin_f32le"}));
  project->add_option("--views", p_views, "View set or comma list of views");
  project->add_option("--out-dir", p_out, "Output directory");
  project->add_option("--pgm", p_pgm, "Write the raw or the resized map")
      ->check(CLI::IsMember({"raw", "resized"}));
  p_proj.add(*project);

  // zeroshot -----------------------------------------------------------------
  auto* zeroshot = app.add_subcommand("zeroshot", "Zero-shot evaluation of a dataset");
  DataFlags z_data;
  FeatureFlags z_feat;
  ProjectionFlags z_proj;
  LogitFlags z_logit;
  std::string z_alpha, z_logits_out;
  z_data.add(*zeroshot, "zs6");
  z_feat.add(*zeroshot);
  z_proj.add(*zeroshot);
  z_logit.add(*zeroshot);
  zeroshot->add_option("--alpha", z_alpha, "Comma-separated view weights (default: preset or ones)");
  zeroshot->add_option("--logits-out", z_logits_out, "Write the logits table as CSV");

  // fewshot-train ------------------------------------------------------------
  auto* fewshot = app.add_subcommand("fewshot-train", "Train the inter-view adapter");
  DataFlags t_data;
  FeatureFlags t_feat;
  ProjectionFlags t_proj;
  TrainConfig t_cfg;
  std::string t_augment = "none", t_out, t_trace, t_alpha_init = "ones";
  t_data.add(*fewshot, "fs10");
  t_feat.add(*fewshot);
  t_proj.add(*fewshot);
  fewshot->add_option("--shots", t_cfg.shots, "Samples per class");
  fewshot->add_option("--epochs", t_cfg.epochs, "Training epochs");
  fewshot->add_option("--lr", t_cfg.lr0, "Initial learning rate");
  fewshot->add_option("--batch", t_cfg.batch_size, "Batch size");
  fewshot->add_option("--momentum", t_cfg.momentum, "SGD momentum");
  fewshot->add_option("--smooth-eps", t_cfg.smoothing, "Label smoothing");
  fewshot->add_option("--beta", t_cfg.beta, "Share of the adapted feature");
  fewshot->add_option("--hidden", t_cfg.hidden, "Bottleneck width (0: dim / 4)");
  fewshot->add_option("--seed", t_cfg.seed, "Seed for sampling, init and shuffling");
  fewshot->add_option("--augment", t_augment, "none, scale_translate or jitter_rotate")
      ->check(CLI::IsMember({"none", "scale_translate", "jitter_rotate"}));
  fewshot->add_option("--alpha-init", t_alpha_init, "ones, or preset (needs --preset)")
      ->check(CLI::IsMember({"ones", "preset"}));
  fewshot->add_option("--scale", t_cfg.logits.scale, "Logit scale");
  fewshot->add_option("--out", t_out, "Checkpoint path (.pcad)")->required();
  fewshot->add_option("--trace", t_trace, "Write the per-epoch trace as CSV");

  // eval ---------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Evaluate a trained adapter");
  DataFlags e_data;
  FeatureFlags e_feat;
  ProjectionFlags e_proj;
  LogitFlags e_logit;
  std::string e_adapter, e_logits_out;
  e_data.add(*eval, "fs10");
  e_feat.add(*eval);
  e_proj.add(*eval);
  e_logit.add(*eval);
  eval->add_option("--adapter", e_adapter, "Checkpoint (.pcad)")->required();
  eval->add_option("--logits-out", e_logits_out, "Write the logits table as CSV");

  // ensemble -----------------------------------------------------------------
  auto* ensemble = app.add_subcommand("ensemble", "Fuse two logits tables");
  std::string n_a, n_b, n_ratio = "auto", n_out;
  double n_step = 0.05;
  bool n_softmax = false;
  ensemble->add_option("--a", n_a, "First logits CSV")->required();
  ensemble->add_option("--b", n_b, "Second logits CSV")->required();
  ensemble->add_option("--ratio", n_ratio, "Weight of A in [0, 1], or auto");
  ensemble->add_option("--step", n_step, "Grid step for --ratio auto");
  ensemble->add_flag("--softmax", n_softmax, "Fuse probabilities instead of logits");
  ensemble->add_option("--out", n_out, "Write the fused table as CSV");

  // bench --------------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "Time the projector");
  std::size_t b_points = 1024, b_iters = 100;
  std::string b_views = "zs6";
  ProjectionSettings b_settings;
  std::uint64_t b_seed = 1;
  bench->add_option("--n-points", b_points, "Points per cloud");
  bench->add_option("--views", b_views, "View set or comma list of views");
  bench->add_option("--side", b_settings.side, "Raw depth-map side");
  bench->add_option("--distance", b_settings.distance, "Image-plane distance");
  bench->add_option("--iters", b_iters, "Timed iterations")->check(CLI::PositiveNumber);
  bench->add_option("--seed", b_seed, "Cloud seed");

  // synth --------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Write the four-shape synthetic dataset");
  std::string s_out;
  std::size_t s_train = 50, s_test = 50, s_points = 256;
  std::uint64_t s_seed = 0;
  synth->add_option("--out-dir", s_out, "Output directory")->required();
  synth->add_option("--train-per-class", s_train, "Training samples per class");
  synth->add_option("--test-per-class", s_test, "Test samples per class");
  synth->add_option("--n-points", s_points, "Points per cloud");
  synth->add_option("--seed", s_seed, "Seed");

  // random-classifier --------------------------------------------------------
  auto* randcls = app.add_subcommand("random-classifier", "Write a Gaussian text classifier");
  std::string r_classes, r_out;
  std::size_t r_dim = 128;
  std::uint64_t r_seed = 0;
  randcls->add_option("--classes", r_classes, "Class-names file")->required();
  randcls->add_option("--dim", r_dim, "Embedding width");
  randcls->add_option("--seed", r_seed, "Seed");
  randcls->add_option("--out", r_out, "Output store (.pcem)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*project) {
      const auto settings = p_proj.settings();
      const auto format =
          p_format.empty() ? cloud_format_from_path(p_input) : parse_cloud_format(p_format);
      const auto cloud = normalize_unit_cube(load_cloud(p_input, format));
      const auto views = resolve_views(p_views);
      fs::create_directories(p_out);
      std::printf("%-20s %10s %8s\n", "view", "occupancy", "pixels");
      for (const auto& v : views) {
        DepthMap map = project_view(cloud, v, settings);
        const double occ = occupancy(map);
        const auto filled = static_cast<std::size_t>(std::llround(occ * map.values.size()));
        if (p_pgm == "resized") map = resize_bilinear(map, settings.target);
        write_pgm(fs::path(p_out) / (cloud.id + "_" + v.name + ".pgm"), map);
        std::printf("%-20s %10.6f %8zu\n", v.name.c_str(), occ, filled);
      }
    } else if (*zeroshot) {
      const auto manifest = load_manifest(z_data.manifest, z_data.classes);
      const auto classifier = load_classifier(z_data, manifest);
      const auto views = resolve_views(z_data.views);
      std::vector<double> alpha;
      if (!z_alpha.empty()) {
        alpha = parse_doubles(z_alpha);
      } else if (!z_proj.preset.empty() && views.size() == 6) {
        alpha = view_weight_preset(parse_dataset_preset(z_proj.preset));
      } else {
        alpha.assign(views.size(), 1.0);
      }
      const auto settings = z_proj.settings();
      print_settings(settings, views, alpha);
      const auto result = evaluate(manifest, z_feat.provider(), classifier, views, settings,
                                   alpha, z_logit.options());
      print_eval(result);
      if (!z_logits_out.empty()) {
        ensure_parent(z_logits_out);
        write_logits_csv(z_logits_out, result.table);
      }
    } else if (*fewshot) {
      const auto full = load_manifest(t_data.manifest, t_data.classes);
      const auto classifier = load_classifier(t_data, full);
      const auto views = resolve_views(t_data.views);
      t_cfg.augment = parse_augment_recipe(t_augment);
      t_cfg.workers = worker_count();
      if (t_alpha_init == "preset") {
        if (t_proj.preset.empty()) throw DomainError("--alpha-init preset needs --preset");
        t_cfg.alpha_init = view_weight_preset(parse_dataset_preset(t_proj.preset));
      }
      const auto shots = kshot_sample(full, t_cfg.shots, t_cfg.seed);
      const auto result =
          train(shots, t_feat.provider(), classifier, views, t_proj.settings(), t_cfg);
      for (const auto& w : result.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      ensure_parent(t_out);
      checkpoint_save(result.params, t_out);
      if (!t_trace.empty()) {
        ensure_parent(t_trace);
        write_trace_csv(t_trace, result.trace);
      }
      std::printf("trained on %zu samples, %zu epochs\n", shots.entries.size(), t_cfg.epochs);
      if (!result.trace.empty()) {
        const auto& first = result.trace.front();
        const auto& last = result.trace.back();
        std::printf("loss %.6f -> %.6f, train accuracy %.4f\n", first.mean_loss, last.mean_loss,
                    last.train_acc);
      }
    } else if (*eval) {
      const auto manifest = load_manifest(e_data.manifest, e_data.classes);
      const auto classifier = load_classifier(e_data, manifest);
      const auto views = resolve_views(e_data.views);
      const auto params = checkpoint_load(e_adapter);
      const auto features = extract_features(manifest, e_feat.provider(), views,
                                             e_proj.settings());
      const auto result = evaluate_adapter(features, params, classifier, e_logit.options());
      print_eval(result);
      if (!e_logits_out.empty()) {
        ensure_parent(e_logits_out);
        write_logits_csv(e_logits_out, result.table);
      }
    } else if (*ensemble) {
      const auto a = read_logits_csv(n_a);
      const auto b = align_to(a, read_logits_csv(n_b));
      const auto space = n_softmax ? FusionSpace::probabilities : FusionSpace::logits;
      std::printf("accuracy A %.4f\naccuracy B %.4f\n", top1_accuracy(a), top1_accuracy(b));
      for (const auto& [name, t] : {std::pair{"A", &a}, std::pair{"B", &b}}) {
        const auto st = logit_stats(*t);
        std::printf("logits %s mean %.4g sd %.4g min %.4g max %.4g margin %.4g\n", name, st.mean,
                    st.stddev, st.min, st.max, st.mean_margin);
      }
      double ratio = 0;
      if (n_ratio == "auto") {
        const auto s = search_ratio(a, b, n_step, space);
        for (const auto& pt : s.curve) std::printf("  r=%.2f %.4f\n", pt.ratio, pt.accuracy);
        ratio = s.best_ratio;
      } else {
        ratio = parse_doubles(n_ratio).at(0);
      }
      const auto fused = fuse(a, b, ratio, space);
      std::printf("ratio %.2f fused accuracy %.4f\n", ratio, top1_accuracy(fused));
      if (!n_out.empty()) {
        ensure_parent(n_out);
        write_logits_csv(n_out, fused);
      }
    } else if (*bench) {
      b_settings.validate();
      Rng rng(b_seed);
      PointCloud cloud{"bench", {}};
      for (std::size_t i = 0; i < b_points; ++i) {
        cloud.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
      }
      const auto views = resolve_views(b_views);
      std::vector<double> ms;
      for (std::size_t it = 0; it < b_iters; ++it) {
        const auto t0 = std::chrono::steady_clock::now();
        for (const auto& v : views) g_sink = project_view(cloud, v, b_settings).values[0];
        const auto t1 = std::chrono::steady_clock::now();
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
      double mean = 0, var = 0;
      for (double x : ms) mean += x;
      mean /= ms.size();
      for (double x : ms) var += (x - mean) * (x - mean);
      const double sd = ms.size() > 1 ? std::sqrt(var / (ms.size() - 1)) : 0.0;
      const double per_view = mean / views.size();
      const double throughput = b_points * views.size() / (mean / 1000.0);
      std::printf("points %zu views %zu side %zu iters %zu\n", b_points, views.size(),
                  b_settings.side, b_iters);
      std::printf("latency per cloud %.4f ms (sd %.4f), per view %.4f ms\n", mean, sd, per_view);
      std::printf("throughput %.4g point-views/s\n", throughput);
    } else if (*synth) {
      const auto files = write_shape_dataset(s_out, s_train, s_test, s_points, s_seed);
      std::printf("classes %s\ntrain %s\ntest %s\n", files.classes.string().c_str(),
                  files.train_manifest.string().c_str(), files.test_manifest.string().c_str());
    } else if (*randcls) {
      const auto names = load_class_names(r_classes);
      ensure_parent(r_out);
      store_write(r_out, classifier_to_store(random_classifier(names, r_dim, r_seed)));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

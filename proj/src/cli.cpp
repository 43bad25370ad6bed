#include "hsphere/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hsphere/config.hpp"
#include "hsphere/dataset.hpp"
#include "hsphere/eval.hpp"
#include "hsphere/gradcheck.hpp"
#include "hsphere/losses.hpp"
#include "hsphere/pca.hpp"
#include "hsphere/theory.hpp"
#include "hsphere/train.hpp"

namespace hsphere::cli {

namespace {

LossKind parse_loss_kind(const std::string& name) {
  if (name == "softmax") return LossKind::BaselineSoftmax;
  if (name == "cosine") return LossKind::ScaledCosineSoftmax;
  if (name == "c_contrastive") return LossKind::CContrastive;
  if (name == "c_triplet") return LossKind::CTriplet;
  if (name == "c_triplet_center") return LossKind::CTripletCenter;
  if (name == "combination") return LossKind::Combination;
  throw ConfigError("config: unknown loss '" + name + "'");
}

SecondLoss parse_second_loss(const std::string& name) {
  if (name == "c_contrastive") return SecondLoss::CContrastive;
  if (name == "c_triplet") return SecondLoss::CTriplet;
  if (name == "c_triplet_center") return SecondLoss::CTripletCenter;
  throw ConfigError("config: unknown combination second loss '" + name + "'");
}

double default_margin(LossKind kind, SecondLoss second) {
  switch (kind) {
    case LossKind::CTriplet:
    case LossKind::CTripletCenter:
      return 0.8;
    case LossKind::Combination:
      return second == SecondLoss::CContrastive ? 1.0 : 0.8;
    default:
      return 1.0;
  }
}

std::vector<std::size_t> parse_hidden(const std::string& spec) {
  std::vector<std::size_t> sizes;
  std::string token;
  for (char c : spec + ",") {
    if (c == ',') {
      if (!token.empty()) {
        sizes.push_back(static_cast<std::size_t>(std::stoul(token)));
        token.clear();
      }
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      token.push_back(c);
    }
  }
  return sizes;
}

const std::set<std::string> kTrainKeys = {
    "data",         "classes",       "per_class",     "input_dim",
    "spread",       "mnist_images",  "mnist_labels",  "hidden",
    "feature_dim",  "loss",          "use_bias",      "s_mode",
    "s_value",      "margin",        "combo_weight",  "combo_second",
    "lr",           "momentum",      "weight_decay",  "batch_size",
    "iterations",   "seed",          "snapshot_every","snapshot_count",
    "pretrain_iterations", "pretrain_lr",
    "normalize_features",  "normalize_weights",
};

struct TrainSetup {
  Dataset data;
  std::vector<std::size_t> net_sizes;
  TrainConfig cfg;
  TrainConfig pretrain_cfg;
  bool two_phase = false;
};

LossConfig loss_from_config(const KeyValueConfig& file) {
  LossConfig loss;
  loss.kind = parse_loss_kind(file.get_string("loss", "cosine"));
  loss.use_bias = file.get_bool("use_bias", false);
  const std::string s_mode = file.get_string("s_mode", "learned");
  if (s_mode == "learned") {
    loss.learn_scale = true;
    loss.scale = file.get_double("s_value", 10.0);
  } else if (s_mode == "fixed") {
    loss.learn_scale = false;
    loss.scale = file.get_double("s_value", 30.0);
  } else {
    throw ConfigError("config: s_mode must be 'learned' or 'fixed'");
  }
  loss.second = parse_second_loss(file.get_string("combo_second", "c_contrastive"));
  loss.margin =
      file.get_double("margin", default_margin(loss.kind, loss.second));
  loss.combo_weight = file.get_double("combo_weight", 0.01);
  loss.normalize_features = file.get_bool("normalize_features", true);
  loss.normalize_weights = file.get_bool("normalize_weights", true);
  loss.validate();
  return loss;
}

TrainSetup setup_from_config(const KeyValueConfig& file, std::uint64_t seed_override,
                             bool has_seed_override) {
  file.require_known(kTrainKeys);

  TrainSetup setup;
  const std::uint64_t seed =
      has_seed_override ? seed_override : file.get_u64("seed", 1);

  const std::string data_kind = file.get_string("data", "blobs");
  const int classes = file.get_int("classes", 10);
  const int per_class = file.get_int("per_class", 100);
  const auto input_dim = static_cast<std::size_t>(file.get_int("input_dim", 2));
  const double spread = file.get_double("spread", 0.1);
  if (data_kind == "blobs") {
    setup.data = make_blobs(classes, per_class, input_dim, spread, seed);
  } else if (data_kind == "blobs_origin") {
    setup.data =
        make_blobs_with_origin_class(classes, per_class, input_dim, spread, seed);
  } else if (data_kind == "mnist") {
    const std::string images = file.get_string("mnist_images", "");
    const std::string labels = file.get_string("mnist_labels", "");
    if (images.empty() || labels.empty()) {
      throw ConfigError("config: data=mnist needs mnist_images and mnist_labels");
    }
    setup.data = load_mnist_idx(images, labels);
  } else {
    throw ConfigError("config: unknown data kind '" + data_kind + "'");
  }

  setup.net_sizes.push_back(setup.data.samples.cols());
  for (std::size_t h : parse_hidden(file.get_string("hidden", "16,16"))) {
    setup.net_sizes.push_back(h);
  }
  setup.net_sizes.push_back(static_cast<std::size_t>(file.get_int("feature_dim", 2)));

  setup.cfg.loss = loss_from_config(file);
  setup.cfg.lr = file.get_double("lr", 1e-3);
  setup.cfg.momentum = file.get_double("momentum", 0.9);
  setup.cfg.weight_decay = file.get_double("weight_decay", 5e-4);
  setup.cfg.batch_size = file.get_int("batch_size", 256);
  setup.cfg.iterations = file.get_int("iterations", 2000);
  setup.cfg.seed = seed;
  setup.cfg.snapshot_every = file.get_int("snapshot_every", 1000);
  setup.cfg.snapshot_count = file.get_int("snapshot_count", 5);
  setup.cfg.validate();

  const int pretrain_iters = file.get_int("pretrain_iterations", 0);
  if (pretrain_iters > 0) {
    setup.two_phase = true;
    setup.pretrain_cfg = setup.cfg;
    setup.pretrain_cfg.loss = LossConfig{};
    setup.pretrain_cfg.loss.kind = LossKind::BaselineSoftmax;
    setup.pretrain_cfg.iterations = pretrain_iters;
    setup.pretrain_cfg.lr = file.get_double("pretrain_lr", setup.cfg.lr);
  }
  return setup;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::uint64_t seed_override, bool has_seed_override) {
  const KeyValueConfig file = KeyValueConfig::parse_file(config_path);
  TrainSetup setup = setup_from_config(file, seed_override, has_seed_override);
  std::filesystem::create_directories(out_dir);

  Rng init_rng(setup.cfg.seed ^ 0xe0f1a2b3c4d5e6f7ULL);
  EmbeddingNet net = EmbeddingNet::init(setup.net_sizes, init_rng);

  TrainReport report;
  if (setup.two_phase) {
    TwoPhaseReport two =
        two_phase_train(std::move(net), setup.data, setup.pretrain_cfg, setup.cfg);
    report = std::move(two.finetune);
  } else {
    report = train(std::move(net), setup.data, setup.cfg);
  }

  write_loss_curve_csv(out_dir + "/loss_curve.csv", report.loss_curve);
  for (std::size_t i = 0; i < report.snapshots.size(); ++i) {
    save_snapshot(out_dir + "/snapshot_" + std::to_string(i + 1) + ".bin",
                  report.snapshots[i]);
  }
  std::cout << "final_loss=" << report.loss_curve.back()
            << " train_accuracy=" << report.train_accuracy
            << " distortion_ema=" << report.distortion_ema
            << " scale=" << report.final_state.scale << "\n";
  return kExitOk;
}

const std::set<std::string> kScatterKeys = {
    "data",       "classes",    "per_class",  "input_dim",  "spread",
    "hidden",     "use_bias",   "lr",         "momentum",   "weight_decay",
    "batch_size", "iterations", "seed",
};

int cmd_scatter(const std::string& config_path, const std::string& out_dir,
                std::uint64_t seed_override, bool has_seed_override) {
  const KeyValueConfig file = KeyValueConfig::parse_file(config_path);
  file.require_known(kScatterKeys);
  const std::uint64_t seed =
      has_seed_override ? seed_override : file.get_u64("seed", 1);

  const std::string data_kind = file.get_string("data", "blobs");
  const int classes = file.get_int("classes", 10);
  const int per_class = file.get_int("per_class", 100);
  const auto input_dim = static_cast<std::size_t>(file.get_int("input_dim", 2));
  const double spread = file.get_double("spread", 0.1);
  Dataset data;
  if (data_kind == "blobs") {
    data = make_blobs(classes, per_class, input_dim, spread, seed);
  } else if (data_kind == "blobs_origin") {
    data = make_blobs_with_origin_class(classes, per_class, input_dim, spread, seed);
  } else {
    throw ConfigError("config: scatter supports data = blobs | blobs_origin");
  }

  std::vector<std::size_t> sizes;
  sizes.push_back(input_dim);
  for (std::size_t h : parse_hidden(file.get_string("hidden", "16,16"))) {
    sizes.push_back(h);
  }
  sizes.push_back(2);  // scatter runs are 2-D by definition

  TrainConfig cfg;
  cfg.loss.kind = LossKind::BaselineSoftmax;
  cfg.loss.use_bias = file.get_bool("use_bias", false);
  cfg.lr = file.get_double("lr", 1e-2);
  cfg.momentum = file.get_double("momentum", 0.9);
  cfg.weight_decay = file.get_double("weight_decay", 5e-4);
  cfg.batch_size = file.get_int("batch_size", 64);
  cfg.iterations = file.get_int("iterations", 3000);
  cfg.seed = seed;
  cfg.validate();

  Rng init_rng(seed ^ 0xe0f1a2b3c4d5e6f7ULL);
  EmbeddingNet net = EmbeddingNet::init(sizes, init_rng);
  const TrainReport report = train(std::move(net), data, cfg);

  std::filesystem::create_directories(out_dir);
  export_feature_scatter(report.final_state.net, data, out_dir + "/scatter.csv");
  const Matrix features = report.final_state.net.forward(data.samples);
  std::cout << "radialness=" << radialness(features, data.labels)
            << " near_origin_class="
            << (has_near_origin_class(features, data.labels) ? "yes" : "no")
            << " train_accuracy=" << report.train_accuracy << "\n";
  return kExitOk;
}

int cmd_bounds(std::vector<int> ns, double ell_sq, bool has_ell_sq,
               const std::string& out_dir) {
  if (ns.empty()) ns = {10, 1000, 10575, 100000};
  if (has_ell_sq) {
    for (int n : ns) {
      std::cout << "n=" << n << " ell_sq=" << ell_sq
                << " bound=" << prop2_bound(n, ell_sq) << "\n";
    }
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir + "/bound_curve.csv");
    if (!out) throw std::runtime_error("bounds: cannot open bound_curve.csv");
    out << "ell_sq,n,bound\n";
    for (int n : ns) {
      for (double e = 0.25; e <= 30.0 + 1e-9; e += 0.25) {
        out << e << ',' << n << ',' << prop2_bound(n, e) << '\n';
      }
    }
  }
  if (!has_ell_sq && out_dir.empty()) {
    for (int n : ns) {
      std::cout << "n=" << n << " ell_sq=1 bound=" << prop2_bound(n, 1.0) << "\n";
    }
  }
  return kExitOk;
}

int cmd_gradcheck(const std::string& loss_name, int trials, std::uint64_t seed) {
  GradCheckOptions opts;
  opts.trials = trials;
  opts.seed = seed;

  std::vector<GradCheckTarget> targets;
  if (loss_name == "all") {
    targets = all_gradcheck_targets();
  } else {
    bool found = false;
    for (GradCheckTarget t : all_gradcheck_targets()) {
      if (gradcheck_target_name(t) == loss_name) {
        targets.push_back(t);
        found = true;
      }
    }
    if (!found) {
      throw ConfigError("gradcheck: unknown loss '" + loss_name +
                        "' (use --loss all to list everything)");
    }
  }

  bool all_passed = true;
  for (GradCheckTarget t : targets) {
    const GradCheckReport report = run_gradcheck(t, opts);
    const bool ok = report.passed();
    all_passed = all_passed && ok;
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << gradcheck_target_name(t)
              << ": trials=" << report.trials << " failures=" << report.failures
              << " max_rel_error=" << report.max_rel_error << "\n";
  }
  return all_passed ? kExitOk : kExitCheckFailed;
}

int cmd_prop_check(int trials, std::uint64_t seed) {
  bool all_passed = true;
  auto report = [&](bool ok, const std::string& what) {
    all_passed = all_passed && ok;
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << what << "\n";
  };

  {
    Rng rng(seed);
    int failures = 0;
    for (int t = 0; t < trials; ++t) {
      const std::size_t d = 2 + rng.index(7);
      const std::size_t n = 2 + rng.index(19);
      const Matrix w = rng.normal_matrix(d, n);
      const std::vector<double> f = rng.normal_vector(d);
      const double s = 1.0 + std::exp(rng.uniform(std::log(0.01), std::log(100.0)));
      if (!prop1_check(w, f, s)) ++failures;
    }
    report(failures == 0, "proposition 1 scaling monotonicity: " +
                              std::to_string(trials) + " trials, " +
                              std::to_string(failures) + " failures");
  }

  {
    const double b = prop2_bound(10575, 1.0);
    report(std::abs(b - 8.27) <= 0.01,
           "proposition 2 bound value at n=10575, ell_sq=1: " + std::to_string(b));
  }

  {
    const Prop2Gap tri = prop2_empirical_gap(2, 3, 1.0, seed);
    const Prop2Gap tet = prop2_empirical_gap(3, 4, 1.0, seed);
    report(std::abs(tri.gap) <= 1e-6 && std::abs(tet.gap) <= 1e-6,
           "proposition 2 tightness on the 2-simplex and 3-simplex");
    bool no_violation = true;
    for (std::size_t dim : {std::size_t{2}, std::size_t{3}, std::size_t{8}}) {
      for (std::size_t n : {std::size_t{3}, std::size_t{6}, std::size_t{10}}) {
        const Prop2Gap g = prop2_empirical_gap(dim, n, 1.0, seed);
        no_violation = no_violation && g.gap >= -1e-9;
      }
    }
    report(no_violation, "proposition 2 bound never undercut on tested grids");
  }

  {
    Rng rng(seed + 1);
    int violations = 0;
    const int prop3_trials = std::min(trials, 1000);
    for (int t = 0; t < prop3_trials; ++t) {
      const std::size_t d = 8;
      Matrix cluster(20, d);
      for (std::size_t r = 0; r < cluster.rows(); ++r) {
        const std::vector<double> u = rng.unit_vector(d);
        for (std::size_t c = 0; c < d; ++c) cluster(r, c) = u[c];
      }
      const Distortion res =
          prop3_distortion(rng.unit_vector(d), cluster, rng.unit_vector(d));
      if (res.distortion > res.bound) ++violations;
    }
    report(violations == 0, "proposition 3 distortion <= bound: " +
                                std::to_string(prop3_trials) + " trials, " +
                                std::to_string(violations) + " violations");
  }

  return all_passed ? kExitOk : kExitCheckFailed;
}

int cmd_eval_pairs(const std::string& features_path, const std::string& pairs_path,
                   const std::string& out_dir, int pca_keep, bool has_pca,
                   int folds, const std::vector<double>& fars) {
  Matrix store = load_feature_store(features_path);
  if (has_pca) {
    const std::size_t keep = pca_keep > 0
                                 ? std::min<std::size_t>(pca_keep, store.cols())
                                 : store.cols();
    const PcaModel model = pca_fit(store, keep);
    store = pca_apply_rows(model, store);
  }
  const std::vector<PairLine> lines = load_pair_list(pairs_path);
  const PairSet pairs = pair_set_from_store(store, lines, folds);

  std::filesystem::create_directories(out_dir);
  const KFoldResult result = kfold_accuracy(pairs, folds);
  write_fold_results_csv(out_dir + "/fold_results.csv", result);

  std::vector<std::pair<double, TprFarResult>> rows;
  for (double far : fars) rows.emplace_back(far, tpr_at_far(pairs, far));
  write_far_tpr_csv(out_dir + "/far_tpr.csv", rows);

  std::cout << "kfold_accuracy=" << result.mean_accuracy
            << " stderr=" << result.std_error << "\n";
  for (const auto& [far, r] : rows) {
    std::cout << "tpr@far=" << far << ": " << r.tpr
              << (r.resolvable ? "" : " (unresolvable at this negative count)")
              << "\n";
  }
  return kExitOk;
}

int cmd_eval_video(const std::string& features_path, const std::string& pairs_path,
                   const std::string& out_dir, double svm_c) {
  const Matrix store = load_feature_store(features_path);
  const std::vector<VideoPairLine> lines = load_video_pair_list(pairs_path);
  if (lines.size() < 4) {
    throw std::runtime_error("eval-video: need at least 4 video pairs");
  }

  std::vector<VideoPairInstance> instances;
  for (const VideoPairLine& v : lines) {
    if (v.a_end > store.rows() || v.b_end > store.rows()) {
      throw std::runtime_error("eval-video: frame range out of store bounds");
    }
    Matrix a(v.a_end - v.a_begin, store.cols());
    Matrix b(v.b_end - v.b_begin, store.cols());
    for (std::size_t r = v.a_begin; r < v.a_end; ++r)
      for (std::size_t c = 0; c < store.cols(); ++c)
        a(r - v.a_begin, c) = store(r, c);
    for (std::size_t r = v.b_begin; r < v.b_end; ++r)
      for (std::size_t c = 0; c < store.cols(); ++c)
        b(r - v.b_begin, c) = store(r, c);
    VideoPairInstance inst;
    inst.histogram = video_histogram(a, b);
    inst.mean_score = inst.histogram.mean_bin_center();
    inst.label = v.label != 0 ? 1 : -1;
    instances.push_back(std::move(inst));
  }

  const VideoBenchmarkResult result = run_video_benchmark(instances, svm_c);
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir + "/video_results.csv");
  out << "method,accuracy\n";
  out << "hik_svm," << result.svm_accuracy << "\n";
  out << "mean_score_threshold," << result.mean_score_accuracy << "\n";
  std::cout << "hik_svm_accuracy=" << result.svm_accuracy
            << " mean_score_accuracy=" << result.mean_score_accuracy << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"hypersphere embedding training and verification toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";
  std::uint64_t seed_override = 0;

  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("--config", config_path, "key=value config file")->required();
  train_cmd->add_option("--out", out_dir, "output directory (default .)");
  auto* train_seed =
      train_cmd->add_option("--seed", seed_override, "override the config seed");

  auto* scatter_cmd = app.add_subcommand(
      "scatter", "train a 2-D baseline softmax model and export the feature scatter");
  scatter_cmd->add_option("--config", config_path, "key=value config file")->required();
  scatter_cmd->add_option("--out", out_dir, "output directory (default .)");
  auto* scatter_seed =
      scatter_cmd->add_option("--seed", seed_override, "override the config seed");

  std::vector<int> bound_ns;
  double ell_sq = 1.0;
  std::string bounds_out;
  auto* bounds_cmd =
      app.add_subcommand("bounds", "evaluate the normalized softmax loss lower bound");
  bounds_cmd->add_option("--n", bound_ns, "class counts (repeatable)");
  auto* ell_opt = bounds_cmd->add_option("--ell-sq", ell_sq,
                                         "squared norm (= cosine scale s)");
  bounds_cmd->add_option("--out", bounds_out,
                         "directory for bound_curve.csv over an ell_sq grid");

  std::string gradcheck_loss = "all";
  int gradcheck_trials = 100;
  std::uint64_t gradcheck_seed = 42;
  auto* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "finite-difference audit of every analytic gradient");
  gradcheck_cmd->add_option("--loss", gradcheck_loss,
                            "loss name or 'all' (default all)");
  gradcheck_cmd->add_option("--trials", gradcheck_trials,
                            "random instances per target (default 100)");
  gradcheck_cmd->add_option("--seed", gradcheck_seed, "rng seed (default 42)");

  int prop_trials = 10000;
  std::uint64_t prop_seed = 7;
  auto* prop_cmd = app.add_subcommand(
      "prop-check", "randomized numeric checks of the three propositions");
  prop_cmd->add_option("--trials", prop_trials,
                       "random instances for proposition 1 (default 10000)");
  prop_cmd->add_option("--seed", prop_seed, "rng seed (default 7)");

  std::string features_path, pairs_path;
  int pca_keep = 0;
  int folds = 10;
  std::vector<double> fars{0.001, 0.01, 0.1};
  auto* pairs_cmd = app.add_subcommand(
      "eval-pairs", "k-fold pair verification over a feature store");
  pairs_cmd->add_option("--features", features_path, "binary feature store")
      ->required();
  pairs_cmd->add_option("--pairs", pairs_path, "text pair list: id_a id_b label")
      ->required();
  pairs_cmd->add_option("--out", out_dir, "output directory (default .)");
  auto* pca_opt = pairs_cmd->add_option(
      "--pca", pca_keep, "PCA dimensions to keep (0 = full rotation)");
  pairs_cmd->add_option("--folds", folds, "fold count (default 10)");
  pairs_cmd->add_option("--far", fars,
                        "false-accept rates for TPR@FAR (default 0.001 0.01 0.1)");

  double svm_c = 1.0;
  auto* video_cmd = app.add_subcommand(
      "eval-video", "histogram + HIK-SVM video pair verification");
  video_cmd->add_option("--features", features_path, "binary feature store")
      ->required();
  video_cmd->add_option("--pairs", pairs_path,
                        "video pair list: a_begin a_end b_begin b_end label")
      ->required();
  video_cmd->add_option("--out", out_dir, "output directory (default .)");
  video_cmd->add_option("--svm-c", svm_c, "SVM soft-margin C (default 1.0)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (app.got_subcommand(train_cmd)) {
      return cmd_train(config_path, out_dir, seed_override, train_seed->count() > 0);
    }
    if (app.got_subcommand(scatter_cmd)) {
      return cmd_scatter(config_path, out_dir, seed_override,
                         scatter_seed->count() > 0);
    }
    if (app.got_subcommand(bounds_cmd)) {
      return cmd_bounds(bound_ns, ell_sq, ell_opt->count() > 0, bounds_out);
    }
    if (app.got_subcommand(gradcheck_cmd)) {
      return cmd_gradcheck(gradcheck_loss, gradcheck_trials, gradcheck_seed);
    }
    if (app.got_subcommand(prop_cmd)) {
      return cmd_prop_check(prop_trials, prop_seed);
    }
    if (app.got_subcommand(pairs_cmd)) {
      return cmd_eval_pairs(features_path, pairs_path, out_dir, pca_keep,
                            pca_opt->count() > 0, folds, fars);
    }
    if (app.got_subcommand(video_cmd)) {
      return cmd_eval_video(features_path, pairs_path, out_dir, svm_c);
    }
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadConfig;
  }
  return kExitBadConfig;
}

}  // namespace hsphere::cli

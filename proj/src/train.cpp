#include "hsphere/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "hsphere/normalize.hpp"

namespace hsphere {

void TrainConfig::validate() const {
  loss.validate();
  if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
  }
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size >= 1");
  if (iterations < 1) throw std::invalid_argument("TrainConfig: iterations >= 1");
  if (weight_decay < 0.0) {
    throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  }
  if (snapshot_every < 1) {
    throw std::invalid_argument("TrainConfig: snapshot_every >= 1");
  }
}

namespace {

struct Momentum {
  std::vector<Matrix> net_weights;
  std::vector<std::vector<double>> net_biases;
  Matrix agents;
  std::vector<double> bias;
  double scale = 0.0;
};

void sgd_step(Matrix& param, Matrix& velocity, const Matrix& grad, double lr,
              double momentum, double weight_decay) {
  for (std::size_t i = 0; i < param.data().size(); ++i) {
    double g = grad.data()[i] + weight_decay * param.data()[i];
    velocity.data()[i] = momentum * velocity.data()[i] + lr * g;
    param.data()[i] -= velocity.data()[i];
  }
}

void sgd_step(std::vector<double>& param, std::vector<double>& velocity,
              const std::vector<double>& grad, double lr, double momentum) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + lr * grad[i];
    param[i] -= velocity[i];
  }
}

Matrix gather_rows(const Matrix& all, const std::vector<int>& order,
                   std::size_t begin, std::size_t count) {
  Matrix out(count, all.cols());
  for (std::size_t i = 0; i < count; ++i) {
    const auto src = static_cast<std::size_t>(order[begin + i]);
    for (std::size_t j = 0; j < all.cols(); ++j) out(i, j) = all(src, j);
  }
  return out;
}

/// Mean squared normalized distance between each batch feature and its own
/// agent: the on-line form of the distortion bound.
double batch_distortion_bound(const Matrix& features, const Matrix& agents,
                              const std::vector<int>& labels) {
  const Matrix ft = normalize_rows(features).normalized;
  const Matrix wt = normalize_cols(agents).normalized;
  double sum = 0.0;
  for (std::size_t i = 0; i < ft.rows(); ++i) {
    const auto yi = static_cast<std::size_t>(labels[i]);
    double d2 = 0.0;
    for (std::size_t k = 0; k < ft.cols(); ++k) {
      const double diff = ft(i, k) - wt(k, yi);
      d2 += diff * diff;
    }
    sum += d2;
  }
  return sum / static_cast<double>(ft.rows());
}

}  // namespace

TrainReport train(EmbeddingNet net, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n_samples = data.size();
  if (n_samples == 0) throw std::invalid_argument("train: empty dataset");
  const int n_classes = data.num_classes();
  if (n_classes < 2) throw std::invalid_argument("train: need at least 2 classes");
  const std::size_t d = net.feature_dim();

  Rng rng(cfg.seed);

  TrainState state;
  state.net = std::move(net);
  state.agents = Matrix(d, static_cast<std::size_t>(n_classes));
  for (int j = 0; j < n_classes; ++j) {
    state.agents.set_col(static_cast<std::size_t>(j), rng.unit_vector(d));
  }
  const bool use_bias =
      cfg.loss.kind == LossKind::BaselineSoftmax && cfg.loss.use_bias;
  if (use_bias) state.bias.assign(static_cast<std::size_t>(n_classes), 0.0);
  state.scale = cfg.loss.scale;

  Momentum vel;
  vel.net_weights.resize(state.net.layer_count());
  vel.net_biases.resize(state.net.layer_count());
  for (std::size_t k = 0; k < state.net.layer_count(); ++k) {
    vel.net_weights[k] =
        Matrix(state.net.weights()[k].rows(), state.net.weights()[k].cols());
    vel.net_biases[k].assign(state.net.biases()[k].size(), 0.0);
  }
  vel.agents = Matrix(state.agents.rows(), state.agents.cols());
  vel.bias.assign(state.bias.size(), 0.0);

  const bool normalized_loss = cfg.loss.kind != LossKind::BaselineSoftmax;
  DistortionTracker tracker;

  TrainReport report;
  report.loss_curve.reserve(static_cast<std::size_t>(cfg.iterations));
  report.min_agent_norm_curve.reserve(static_cast<std::size_t>(cfg.iterations));
  report.max_agent_norm_curve.reserve(static_cast<std::size_t>(cfg.iterations));

  std::vector<int> order(n_samples);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n_samples;  // forces a shuffle before the first batch
  const auto batch =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n_samples);

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    if (cursor + batch > n_samples) {
      rng.shuffle(order);
      cursor = 0;
    }
    const Matrix inputs = gather_rows(data.samples, order, cursor, batch);
    std::vector<int> labels(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      labels[i] = data.labels[static_cast<std::size_t>(order[cursor + i])];
    }
    cursor += batch;

    EmbeddingNet::Cache cache;
    const Matrix features = state.net.forward(inputs, cache);
    const AgentMatrix agents = AgentMatrix::raw(state.agents);
    const LossOutput out = evaluate_loss(features, agents,
                                         use_bias ? &state.bias : nullptr, labels,
                                         cfg.loss, state.scale);
    if (!std::isfinite(out.value)) {
      throw DivergenceError(iter, "train: loss diverged (non-finite) at iteration " +
                                      std::to_string(iter));
    }
    report.loss_curve.push_back(out.value);

    if (normalized_loss) {
      tracker.update(batch_distortion_bound(features, state.agents, labels));
    }

    const EmbeddingNet::Gradients net_grads = state.net.backward(cache, out.grad_features);
    for (std::size_t k = 0; k < state.net.layer_count(); ++k) {
      sgd_step(state.net.weights()[k], vel.net_weights[k], net_grads.weights[k],
               cfg.lr, cfg.momentum, cfg.weight_decay);
      if (!state.net.biases()[k].empty()) {
        sgd_step(state.net.biases()[k], vel.net_biases[k], net_grads.biases[k],
                 cfg.lr, cfg.momentum);
      }
    }
    sgd_step(state.agents, vel.agents, out.grad_weights, cfg.lr, cfg.momentum,
             cfg.weight_decay);
    if (use_bias) {
      sgd_step(state.bias, vel.bias, out.grad_bias, cfg.lr, cfg.momentum);
    }
    const bool scale_in_use = cfg.loss.kind == LossKind::ScaledCosineSoftmax ||
                              cfg.loss.kind == LossKind::Combination;
    if (cfg.loss.learn_scale && scale_in_use) {
      vel.scale = cfg.momentum * vel.scale + cfg.lr * out.grad_scale;
      state.scale -= vel.scale;
    }

    double mn = 1e300, mx = 0.0;
    for (std::size_t j = 0; j < state.agents.cols(); ++j) {
      double ss = 0.0;
      for (std::size_t r = 0; r < state.agents.rows(); ++r) {
        ss += state.agents(r, j) * state.agents(r, j);
      }
      const double nrm = std::sqrt(ss);
      mn = std::min(mn, nrm);
      mx = std::max(mx, nrm);
    }
    report.min_agent_norm_curve.push_back(mn);
    report.max_agent_norm_curve.push_back(mx);

    state.iteration = static_cast<std::uint64_t>(iter);
    if (iter % cfg.snapshot_every == 0) {
      report.snapshots.push_back(state);
      if (report.snapshots.size() > static_cast<std::size_t>(cfg.snapshot_count)) {
        report.snapshots.erase(report.snapshots.begin());
      }
    }
  }

  report.final_state = std::move(state);
  report.distortion_ema = tracker.ema;
  report.train_accuracy =
      classification_accuracy(report.final_state, data, cfg.loss);
  return report;
}

TwoPhaseReport two_phase_train(EmbeddingNet net, const Dataset& data,
                               const TrainConfig& pretrain_cfg,
                               const TrainConfig& finetune_cfg) {
  TwoPhaseReport report;
  report.pretrain = train(std::move(net), data, pretrain_cfg);
  report.finetune = train(report.pretrain.final_state.net, data, finetune_cfg);
  return report;
}

double classification_accuracy(const TrainState& state, const Dataset& data,
                               const LossConfig& loss) {
  if (data.size() == 0) return 0.0;
  const Matrix features = state.net.forward(data.samples);
  Matrix logits;
  if (loss.kind == LossKind::BaselineSoftmax) {
    logits = matmul(features, state.agents);
    if (loss.use_bias && !state.bias.empty()) {
      for (std::size_t i = 0; i < logits.rows(); ++i)
        for (std::size_t j = 0; j < logits.cols(); ++j)
          logits(i, j) += state.bias[j];
    }
  } else {
    logits = matmul(normalize_rows(features).normalized,
                    normalize_cols(state.agents).normalized);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > logits(i, best)) best = j;
    }
    if (static_cast<int>(best) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

double full_loss(const TrainState& state, const Dataset& data,
                 const LossConfig& loss) {
  const Matrix features = state.net.forward(data.samples);
  const AgentMatrix agents = AgentMatrix::raw(state.agents);
  const bool use_bias = loss.kind == LossKind::BaselineSoftmax && loss.use_bias;
  return evaluate_loss(features, agents, use_bias ? &state.bias : nullptr,
                       data.labels, loss, state.scale)
      .value;
}

void export_feature_scatter(const EmbeddingNet& net, const Dataset& data,
                            const std::string& path) {
  if (net.feature_dim() != 2) {
    throw std::invalid_argument("export_feature_scatter: needs 2-D features");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_feature_scatter: cannot open " + path);
  out << "feature_x,feature_y,label\n";
  if (data.size() == 0) return;
  const Matrix features = net.forward(data.samples);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    out << features(i, 0) << ',' << features(i, 1) << ',' << data.labels[i] << '\n';
  }
}

double radialness(const Matrix& features, const std::vector<int>& labels) {
  if (features.rows() == 0) return 0.0;
  int n_classes = 0;
  for (int y : labels) n_classes = std::max(n_classes, y + 1);
  Matrix means(static_cast<std::size_t>(n_classes), features.cols());
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    for (std::size_t j = 0; j < features.cols(); ++j) means(c, j) += features(i, j);
    ++counts[c];
  }
  for (std::size_t c = 0; c < means.rows(); ++c) {
    if (counts[c] == 0) continue;
    for (std::size_t j = 0; j < means.cols(); ++j) {
      means(c, j) /= static_cast<double>(counts[c]);
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    const double cosine = dot(features.row(i), means.row(c)) /
                          (l2_norm(features.row(i)) * l2_norm(means.row(c)));
    total += std::abs(cosine);
  }
  return total / static_cast<double>(features.rows());
}

bool has_near_origin_class(const Matrix& features, const std::vector<int>& labels,
                           double ratio) {
  if (features.rows() == 0) return false;
  int n_classes = 0;
  for (int y : labels) n_classes = std::max(n_classes, y + 1);
  Matrix means(static_cast<std::size_t>(n_classes), features.cols());
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
  double global_mean_norm = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    for (std::size_t j = 0; j < features.cols(); ++j) means(c, j) += features(i, j);
    ++counts[c];
    global_mean_norm += l2_norm(features.row(i));
  }
  global_mean_norm /= static_cast<double>(features.rows());
  for (std::size_t c = 0; c < means.rows(); ++c) {
    if (counts[c] == 0) continue;
    double ss = 0.0;
    for (std::size_t j = 0; j < means.cols(); ++j) {
      const double m = means(c, j) / static_cast<double>(counts[c]);
      ss += m * m;
    }
    if (std::sqrt(ss) < ratio * global_mean_norm) return true;
  }
  return false;
}

namespace {

constexpr std::uint32_t kSnapshotMagic = 0x48534e50;  // "HSNP"
constexpr std::uint32_t kSnapshotVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
double read_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  write_u64(out, m.rows());
  write_u64(out, m.cols());
  out.write(reinterpret_cast<const char*>(m.data().data()),
            static_cast<std::streamsize>(m.data().size() * sizeof(double)));
}

Matrix read_matrix(std::istream& in) {
  const std::uint64_t rows = read_u64(in);
  const std::uint64_t cols = read_u64(in);
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data().data()),
          static_cast<std::streamsize>(m.data().size() * sizeof(double)));
  return m;
}

void write_vector(std::ostream& out, const std::vector<double>& v) {
  write_u64(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_vector(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  return v;
}

}  // namespace

void save_snapshot(const std::string& path, const TrainState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_snapshot: cannot open " + path);
  write_u32(out, kSnapshotMagic);
  write_u32(out, kSnapshotVersion);
  write_u64(out, state.net.sizes().size());
  for (std::size_t s : state.net.sizes()) write_u64(out, s);
  for (const Matrix& w : state.net.weights()) write_matrix(out, w);
  for (const auto& b : state.net.biases()) write_vector(out, b);
  write_matrix(out, state.agents);
  write_vector(out, state.bias);
  write_f64(out, state.scale);
  write_u64(out, state.iteration);
  if (!out) throw std::runtime_error("save_snapshot: write failed for " + path);
}

TrainState load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_snapshot: cannot open " + path);
  if (read_u32(in) != kSnapshotMagic) {
    throw std::runtime_error("load_snapshot: bad magic in " + path);
  }
  const std::uint32_t version = read_u32(in);
  if (version != kSnapshotVersion) {
    throw std::runtime_error("load_snapshot: unsupported version " +
                             std::to_string(version));
  }
  const std::uint64_t n_sizes = read_u64(in);
  std::vector<std::size_t> sizes(n_sizes);
  for (auto& s : sizes) s = read_u64(in);

  Rng dummy(0);
  TrainState state;
  state.net = EmbeddingNet::init(sizes, dummy);
  for (Matrix& w : state.net.weights()) w = read_matrix(in);
  for (auto& b : state.net.biases()) b = read_vector(in);
  state.agents = read_matrix(in);
  state.bias = read_vector(in);
  state.scale = read_f64(in);
  state.iteration = read_u64(in);
  if (!in) throw std::runtime_error("load_snapshot: truncated file " + path);
  return state;
}

void write_loss_curve_csv(const std::string& path,
                          const std::vector<double>& losses) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_loss_curve_csv: cannot open " + path);
  out << "iteration,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    out << (i + 1) << ',' << losses[i] << '\n';
  }
}

}  // namespace hsphere

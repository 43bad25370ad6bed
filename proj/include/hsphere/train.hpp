#ifndef HSPHERE_TRAIN_HPP
#define HSPHERE_TRAIN_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsphere/dataset.hpp"
#include "hsphere/losses.hpp"
#include "hsphere/net.hpp"
#include "hsphere/theory.hpp"

namespace hsphere {

struct TrainConfig {
  LossConfig loss;
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;  // applied to net weights and agent columns
  int batch_size = 256;
  int iterations = 2000;
  std::uint64_t seed = 1;
  int snapshot_every = 1000;
  int snapshot_count = 5;

  void validate() const;
};

/// Everything learnable: the embedding net plus the loss head (agents, the
/// optional bias of the baseline head, and the cosine scale).
struct TrainState {
  EmbeddingNet net;
  Matrix agents;             // d x n
  std::vector<double> bias;  // n entries when the baseline head uses bias
  double scale = 1.0;
  std::uint64_t iteration = 0;

  bool operator==(const TrainState& other) const = default;
};

struct TrainReport {
  std::vector<double> loss_curve;  // one entry per iteration
  TrainState final_state;
  std::vector<TrainState> snapshots;   // last snapshot_count, snapshot_every apart
  double distortion_ema = 0.0;         // tracker value at the end of training
  double train_accuracy = 0.0;
  std::vector<double> min_agent_norm_curve;  // per-iteration extremes of ||W_j||
  std::vector<double> max_agent_norm_curve;
};

struct DivergenceError : std::runtime_error {
  DivergenceError(int iteration_, const std::string& msg)
      : std::runtime_error(msg), iteration(iteration_) {}
  int iteration;
};

/// SGD with momentum over net + loss head. Deterministic: the same config
/// and seed reproduce the loss curve bit for bit. Throws DivergenceError
/// when the loss turns non-finite.
TrainReport train(EmbeddingNet net, const Dataset& data, const TrainConfig& cfg);

/// Pretrain with one objective, then continue from the resulting net with
/// another (fresh loss head). Stands in for fine-tuning a pretrained model.
struct TwoPhaseReport {
  TrainReport pretrain;
  TrainReport finetune;
};
TwoPhaseReport two_phase_train(EmbeddingNet net, const Dataset& data,
                               const TrainConfig& pretrain_cfg,
                               const TrainConfig& finetune_cfg);

/// Fraction of samples whose nearest agent (cosine for normalized losses,
/// inner product plus bias for the baseline) matches the label.
double classification_accuracy(const TrainState& state, const Dataset& data,
                               const LossConfig& loss);

/// Mean loss of the state over the full dataset.
double full_loss(const TrainState& state, const Dataset& data,
                 const LossConfig& loss);

/// CSV of (feature_x, feature_y, label); requires 2-D features. An empty
/// dataset produces just the header.
void export_feature_scatter(const EmbeddingNet& net, const Dataset& data,
                            const std::string& path);

/// Mean |cos(f_i, mean of f_i's class)|: close to 1 when every class fans
/// out along a ray from the origin.
double radialness(const Matrix& features, const std::vector<int>& labels);

/// Flags the collapsed-cluster pathology: some class mean sits at less than
/// `ratio` of the average feature norm.
bool has_near_origin_class(const Matrix& features, const std::vector<int>& labels,
                           double ratio = 0.2);

/// Versioned binary snapshot of a TrainState; round-trips exactly.
void save_snapshot(const std::string& path, const TrainState& state);
TrainState load_snapshot(const std::string& path);

void write_loss_curve_csv(const std::string& path,
                          const std::vector<double>& losses);

}  // namespace hsphere

#endif  // HSPHERE_TRAIN_HPP

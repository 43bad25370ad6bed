#ifndef HSPHERE_LOSSES_HPP
#define HSPHERE_LOSSES_HPP

#include <optional>
#include <vector>

#include "hsphere/matrix.hpp"

namespace hsphere {

/// The d x n weight matrix whose column j is the learnable stand-in
/// ("agent") for class j. `normalized_columns` records whether the stored
/// columns are already unit length; the losses renormalize internally either
/// way, so the flag is informational plus an invariant check.
struct AgentMatrix {
  Matrix w;  // d x n
  bool normalized_columns = false;

  static AgentMatrix raw(Matrix w) { return {std::move(w), false}; }
  /// Copies w with every column scaled to unit norm and the flag set.
  static AgentMatrix normalized(const Matrix& w);
  std::size_t dim() const { return w.rows(); }
  std::size_t classes() const { return w.cols(); }
};

enum class LossKind {
  BaselineSoftmax,
  ScaledCosineSoftmax,
  CContrastive,
  CTriplet,
  CTripletCenter,
  Combination,
};

enum class SecondLoss { CContrastive, CTriplet, CTripletCenter };

/// Selects the training objective and its hyperparameters.
struct LossConfig {
  LossKind kind = LossKind::ScaledCosineSoftmax;
  /// When true the cosine scale is a trainable parameter (init below);
  /// when false it stays at `scale`.
  bool learn_scale = true;
  double scale = 10.0;        // init when learned; use ~30 when fixed
  double margin = 1.0;        // 1.0 for C-contrastive, 0.8 for C-triplet
  double combo_weight = 0.01; // weight of the second loss in Combination
  SecondLoss second = SecondLoss::CContrastive;
  bool use_bias = false;      // BaselineSoftmax only
  /// Ablation switches for the cosine softmax: turn off one side to train
  /// with feature-only or weight-only normalization.
  bool normalize_features = true;
  bool normalize_weights = true;

  void validate() const;  // throws std::invalid_argument
};

/// Loss value plus exact gradients w.r.t. the *raw* (un-normalized) inputs.
struct LossOutput {
  double value = 0.0;
  Matrix grad_features;           // batch x d
  Matrix grad_weights;            // d x n
  std::vector<double> grad_bias;  // n entries; empty unless bias in use
  double grad_scale = 0.0;        // dL/ds; meaningful when scale is learned
};

/// Plain softmax cross-entropy over unnormalized inner products
/// W_j^T f + b_j. Bias participates only when `bias` is non-null.
LossOutput baseline_softmax(const Matrix& features, const Matrix& weights,
                            const std::vector<double>* bias,
                            const std::vector<int>& labels);

/// Softmax cross-entropy over s * cos(f, W_j). Features and agent columns
/// are normalized internally; gradients are chained through the
/// normalization backward rule to the raw inputs. The two trailing flags
/// select the feature-only / weight-only ablations (the skipped side enters
/// the logits raw and its gradient passes straight through).
LossOutput scaled_cosine_softmax(const Matrix& features, const AgentMatrix& agents,
                                 double scale, const std::vector<int>& labels,
                                 bool normalize_features = true,
                                 bool normalize_weights = true);

/// Same objective written with squared normalized Euclidean distances,
/// exp(-s/2 * ||f~ - W~_j||^2). Value-only; serves as an algebraic oracle
/// for scaled_cosine_softmax via ||x~ - y~||^2 = 2 - 2 x~.y~.
double euclidean_form_equivalence(const Matrix& features, const AgentMatrix& agents,
                                  double scale, const std::vector<int>& labels);

/// Contrastive loss against class agents: pull ||f~_i - W~_j||^2 for the own
/// agent, hinge max(0, m - ||f~_i - W~_j||^2) for every other agent.
/// Per-sample sums averaged over the batch.
LossOutput c_contrastive(const Matrix& features, const AgentMatrix& agents,
                         const std::vector<int>& labels, double margin);

/// Triplet loss with the positive replaced by the own agent and every other
/// agent acting as negative: max(0, m + d2_pos - d2_neg) summed over
/// negatives, averaged over the batch.
LossOutput c_triplet(const Matrix& features, const AgentMatrix& agents,
                     const std::vector<int>& labels, double margin);

/// c_triplet plus the intra-class pull d2_pos added unconditionally,
/// whether or not any hinge is active.
LossOutput c_triplet_center(const Matrix& features, const AgentMatrix& agents,
                            const std::vector<int>& labels, double margin);

/// scaled_cosine_softmax + combo_weight * second loss; gradients add.
LossOutput combined_loss(const Matrix& features, const AgentMatrix& agents,
                         const std::vector<int>& labels, const LossConfig& cfg);

/// Dispatch on cfg.kind. `bias` is consulted only for BaselineSoftmax.
LossOutput evaluate_loss(const Matrix& features, const AgentMatrix& agents,
                         const std::vector<double>* bias,
                         const std::vector<int>& labels, const LossConfig& cfg,
                         double scale);

}  // namespace hsphere

#endif  // HSPHERE_LOSSES_HPP

#include "hsphere/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "hsphere/normalize.hpp"

namespace hsphere {

namespace {

void check_labels(const std::vector<int>& labels, std::size_t batch,
                  std::size_t classes) {
  if (labels.size() != batch) {
    throw std::invalid_argument("loss: labels size must equal batch size");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::out_of_range("loss: label out of range");
    }
  }
}

/// Row-stable softmax probabilities of `logits`, in place.
void softmax_rows(Matrix& logits) {
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
}

/// Mean cross-entropy of row-wise probabilities against labels.
double cross_entropy(const Matrix& probs, const std::vector<int>& labels) {
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    loss -= std::log(probs(i, static_cast<std::size_t>(labels[i])));
  }
  return loss / static_cast<double>(probs.rows());
}

/// dL/dlogits for mean cross-entropy: (p - onehot) / batch.
Matrix softmax_logit_grad(const Matrix& probs, const std::vector<int>& labels) {
  Matrix g = probs;
  const double inv_b = 1.0 / static_cast<double>(probs.rows());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) *= inv_b;
    g(i, static_cast<std::size_t>(labels[i])) -= inv_b;
  }
  return g;
}

/// Squared distances between unit rows and unit columns:
/// d2(i, j) = 2 - 2 f~_i . W~_j.
Matrix squared_distances(const Matrix& unit_rows, const Matrix& unit_cols) {
  Matrix d2 = matmul(unit_rows, unit_cols);
  for (double& v : d2.data()) v = 2.0 - 2.0 * v;
  return d2;
}

struct NormalizedPair {
  RowNormContext f;
  ColNormContext w;
};

NormalizedPair normalize_inputs(const Matrix& features, const AgentMatrix& agents) {
  if (features.cols() != agents.dim()) {
    throw std::invalid_argument("loss: feature dim does not match agent dim");
  }
  return {normalize_rows(features), normalize_cols(agents.w)};
}

/// Shared tail for the distance-based losses: given dL/dd2, push gradients
/// through d2 = 2 - 2 f~.W~ and the normalization chains.
LossOutput distance_loss_backward(const NormalizedPair& np, const Matrix& dloss_dd2,
                                  double value) {
  // dL/df~_i = sum_j dL/dd2_ij * 2 (f~_i - W~_j); likewise with opposite
  // sign for W~_j.
  const Matrix& ft = np.f.normalized;
  const Matrix& wt = np.w.normalized;
  Matrix grad_ft(ft.rows(), ft.cols());
  Matrix grad_wt(wt.rows(), wt.cols());
  for (std::size_t i = 0; i < ft.rows(); ++i) {
    for (std::size_t j = 0; j < wt.cols(); ++j) {
      const double g = dloss_dd2(i, j);
      if (g == 0.0) continue;
      for (std::size_t k = 0; k < ft.cols(); ++k) {
        const double diff = ft(i, k) - wt(k, j);
        grad_ft(i, k) += 2.0 * g * diff;
        grad_wt(k, j) -= 2.0 * g * diff;
      }
    }
  }
  LossOutput out;
  out.value = value;
  out.grad_features = normalize_rows_backward(np.f, grad_ft);
  out.grad_weights = normalize_cols_backward(np.w, grad_wt);
  return out;
}

}  // namespace

AgentMatrix AgentMatrix::normalized(const Matrix& w) {
  AgentMatrix out{normalize_cols(w).normalized, true};
  return out;
}

void LossConfig::validate() const {
  if (!learn_scale && scale <= 0.0) {
    throw std::invalid_argument("LossConfig: fixed scale must be positive");
  }
  if (margin < 0.0) throw std::invalid_argument("LossConfig: margin must be >= 0");
  if (combo_weight < 0.0) {
    throw std::invalid_argument("LossConfig: combo_weight must be >= 0");
  }
  if (use_bias && kind != LossKind::BaselineSoftmax) {
    throw std::invalid_argument("LossConfig: bias is only valid for BaselineSoftmax");
  }
}

LossOutput baseline_softmax(const Matrix& features, const Matrix& weights,
                            const std::vector<double>* bias,
                            const std::vector<int>& labels) {
  check_labels(labels, features.rows(), weights.cols());
  if (bias && bias->size() != weights.cols()) {
    throw std::invalid_argument("baseline_softmax: bias size mismatch");
  }
  Matrix logits = matmul(features, weights);
  if (bias) {
    for (std::size_t i = 0; i < logits.rows(); ++i)
      for (std::size_t j = 0; j < logits.cols(); ++j) logits(i, j) += (*bias)[j];
  }
  softmax_rows(logits);

  LossOutput out;
  out.value = cross_entropy(logits, labels);
  const Matrix g = softmax_logit_grad(logits, labels);
  out.grad_features = matmul(g, weights.transposed());
  out.grad_weights = matmul(features.transposed(), g);
  if (bias) {
    out.grad_bias.assign(weights.cols(), 0.0);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) out.grad_bias[j] += g(i, j);
  }
  return out;
}

LossOutput scaled_cosine_softmax(const Matrix& features, const AgentMatrix& agents,
                                 double scale, const std::vector<int>& labels,
                                 bool normalize_features, bool normalize_weights) {
  check_labels(labels, features.rows(), agents.classes());
  if (features.cols() != agents.dim()) {
    throw std::invalid_argument("loss: feature dim does not match agent dim");
  }
  const RowNormContext fn =
      normalize_features ? normalize_rows(features) : RowNormContext{};
  const ColNormContext wn =
      normalize_weights ? normalize_cols(agents.w) : ColNormContext{};
  const Matrix& ft = normalize_features ? fn.normalized : features;
  const Matrix& wt = normalize_weights ? wn.normalized : agents.w;

  const Matrix cosines = matmul(ft, wt);
  Matrix probs = cosines;
  for (double& v : probs.data()) v *= scale;
  softmax_rows(probs);

  LossOutput out;
  out.value = cross_entropy(probs, labels);
  const Matrix g = softmax_logit_grad(probs, labels);

  // Chain rule through z = s * cos: dL/dcos = s * dL/dz.
  Matrix grad_ft = matmul(g, wt.transposed());
  for (double& v : grad_ft.data()) v *= scale;
  Matrix grad_wt = matmul(ft.transposed(), g);
  for (double& v : grad_wt.data()) v *= scale;

  out.grad_features =
      normalize_features ? normalize_rows_backward(fn, grad_ft) : grad_ft;
  out.grad_weights =
      normalize_weights ? normalize_cols_backward(wn, grad_wt) : grad_wt;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j)
      out.grad_scale += g(i, j) * cosines(i, j);
  return out;
}

double euclidean_form_equivalence(const Matrix& features, const AgentMatrix& agents,
                                  double scale, const std::vector<int>& labels) {
  check_labels(labels, features.rows(), agents.classes());
  const NormalizedPair np = normalize_inputs(features, agents);
  Matrix logits = squared_distances(np.f.normalized, np.w.normalized);
  for (double& v : logits.data()) v *= -0.5 * scale;
  softmax_rows(logits);
  return cross_entropy(logits, labels);
}

LossOutput c_contrastive(const Matrix& features, const AgentMatrix& agents,
                         const std::vector<int>& labels, double margin) {
  check_labels(labels, features.rows(), agents.classes());
  if (margin < 0.0) throw std::invalid_argument("c_contrastive: margin must be >= 0");
  const NormalizedPair np = normalize_inputs(features, agents);
  const Matrix d2 = squared_distances(np.f.normalized, np.w.normalized);
  const double inv_b = 1.0 / static_cast<double>(features.rows());

  double value = 0.0;
  Matrix dloss_dd2(d2.rows(), d2.cols());
  for (std::size_t i = 0; i < d2.rows(); ++i) {
    const auto yi = static_cast<std::size_t>(labels[i]);
    for (std::size_t j = 0; j < d2.cols(); ++j) {
      if (j == yi) {
        value += inv_b * d2(i, j);
        dloss_dd2(i, j) = inv_b;
      } else if (margin - d2(i, j) > 0.0) {
        // Hinge subgradient at exactly zero uses the inactive side.
        value += inv_b * (margin - d2(i, j));
        dloss_dd2(i, j) = -inv_b;
      }
    }
  }
  return distance_loss_backward(np, dloss_dd2, value);
}

namespace {

LossOutput triplet_impl(const Matrix& features, const AgentMatrix& agents,
                        const std::vector<int>& labels, double margin,
                        bool unconditional_center) {
  check_labels(labels, features.rows(), agents.classes());
  if (margin < 0.0) throw std::invalid_argument("c_triplet: margin must be >= 0");
  const NormalizedPair np = normalize_inputs(features, agents);
  const Matrix d2 = squared_distances(np.f.normalized, np.w.normalized);
  const double inv_b = 1.0 / static_cast<double>(features.rows());

  double value = 0.0;
  Matrix dloss_dd2(d2.rows(), d2.cols());
  for (std::size_t i = 0; i < d2.rows(); ++i) {
    const auto yi = static_cast<std::size_t>(labels[i]);
    const double d2_pos = d2(i, yi);
    for (std::size_t k = 0; k < d2.cols(); ++k) {
      if (k == yi) continue;
      const double hinge = margin + d2_pos - d2(i, k);
      if (hinge > 0.0) {
        value += inv_b * hinge;
        dloss_dd2(i, yi) += inv_b;
        dloss_dd2(i, k) -= inv_b;
      }
    }
    if (unconditional_center) {
      value += inv_b * d2_pos;
      dloss_dd2(i, yi) += inv_b;
    }
  }
  return distance_loss_backward(np, dloss_dd2, value);
}

}  // namespace

LossOutput c_triplet(const Matrix& features, const AgentMatrix& agents,
                     const std::vector<int>& labels, double margin) {
  return triplet_impl(features, agents, labels, margin, false);
}

LossOutput c_triplet_center(const Matrix& features, const AgentMatrix& agents,
                            const std::vector<int>& labels, double margin) {
  return triplet_impl(features, agents, labels, margin, true);
}

LossOutput combined_loss(const Matrix& features, const AgentMatrix& agents,
                         const std::vector<int>& labels, const LossConfig& cfg) {
  if (cfg.kind != LossKind::Combination) {
    throw std::invalid_argument("combined_loss: cfg.kind must be Combination");
  }
  cfg.validate();
  LossOutput out = scaled_cosine_softmax(features, agents, cfg.scale, labels,
                                         cfg.normalize_features,
                                         cfg.normalize_weights);
  if (cfg.combo_weight == 0.0) return out;

  LossOutput second;
  switch (cfg.second) {
    case SecondLoss::CContrastive:
      second = c_contrastive(features, agents, labels, cfg.margin);
      break;
    case SecondLoss::CTriplet:
      second = c_triplet(features, agents, labels, cfg.margin);
      break;
    case SecondLoss::CTripletCenter:
      second = c_triplet_center(features, agents, labels, cfg.margin);
      break;
  }
  out.value += cfg.combo_weight * second.value;
  for (std::size_t i = 0; i < out.grad_features.data().size(); ++i) {
    out.grad_features.data()[i] += cfg.combo_weight * second.grad_features.data()[i];
  }
  for (std::size_t i = 0; i < out.grad_weights.data().size(); ++i) {
    out.grad_weights.data()[i] += cfg.combo_weight * second.grad_weights.data()[i];
  }
  return out;
}

LossOutput evaluate_loss(const Matrix& features, const AgentMatrix& agents,
                         const std::vector<double>* bias,
                         const std::vector<int>& labels, const LossConfig& cfg,
                         double scale) {
  switch (cfg.kind) {
    case LossKind::BaselineSoftmax:
      return baseline_softmax(features, agents.w, cfg.use_bias ? bias : nullptr,
                              labels);
    case LossKind::ScaledCosineSoftmax:
      return scaled_cosine_softmax(features, agents, scale, labels,
                                   cfg.normalize_features, cfg.normalize_weights);
    case LossKind::CContrastive:
      return c_contrastive(features, agents, labels, cfg.margin);
    case LossKind::CTriplet:
      return c_triplet(features, agents, labels, cfg.margin);
    case LossKind::CTripletCenter:
      return c_triplet_center(features, agents, labels, cfg.margin);
    case LossKind::Combination: {
      LossConfig c = cfg;
      c.scale = scale;
      return combined_loss(features, agents, labels, c);
    }
  }
  throw std::logic_error("evaluate_loss: unknown loss kind");
}

}  // namespace hsphere

#include "hsphere/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "hsphere/normalize.hpp"

namespace hsphere {

std::string gradcheck_target_name(GradCheckTarget t) {
  switch (t) {
    case GradCheckTarget::BaselineSoftmax: return "baseline_softmax";
    case GradCheckTarget::ScaledCosineFixed: return "scaled_cosine_fixed_s";
    case GradCheckTarget::ScaledCosineLearned: return "scaled_cosine_learned_s";
    case GradCheckTarget::CContrastive: return "c_contrastive";
    case GradCheckTarget::CTriplet: return "c_triplet";
    case GradCheckTarget::CTripletCenter: return "c_triplet_center";
    case GradCheckTarget::Combination: return "combination";
    case GradCheckTarget::NormalizeBackward: return "normalize_backward";
  }
  return "unknown";
}

const std::vector<GradCheckTarget>& all_gradcheck_targets() {
  static const std::vector<GradCheckTarget> targets = {
      GradCheckTarget::BaselineSoftmax,   GradCheckTarget::ScaledCosineFixed,
      GradCheckTarget::ScaledCosineLearned, GradCheckTarget::CContrastive,
      GradCheckTarget::CTriplet,          GradCheckTarget::CTripletCenter,
      GradCheckTarget::Combination,       GradCheckTarget::NormalizeBackward,
  };
  return targets;
}

double gradcheck_rel_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

namespace {

struct Instance {
  Matrix features;  // batch x d
  Matrix weights;   // d x n
  std::vector<double> bias;
  std::vector<int> labels;
  double scale = 1.0;
};

Instance sample_instance(Rng& rng, bool with_bias) {
  Instance inst;
  const std::size_t batch = 3 + rng.index(3);
  const std::size_t d = 3 + rng.index(4);
  const std::size_t n = 3 + rng.index(4);
  inst.features = rng.normal_matrix(batch, d, 0.8);
  inst.weights = rng.normal_matrix(d, n, 0.8);
  inst.labels.resize(batch);
  for (int& y : inst.labels) y = static_cast<int>(rng.index(n));
  if (with_bias) inst.bias = rng.normal_vector(n, 0.3);
  inst.scale = rng.uniform(0.5, 20.0);
  return inst;
}

/// Smallest |hinge argument| across the instance for the given loss, used to
/// resample instances too close to a kink for finite differences.
double min_hinge_margin(const Instance& inst, GradCheckTarget target,
                        double margin) {
  const Matrix ft = normalize_rows(inst.features).normalized;
  const Matrix wt = normalize_cols(inst.weights).normalized;
  Matrix d2 = matmul(ft, wt);
  for (double& v : d2.data()) v = 2.0 - 2.0 * v;

  double min_abs = 1e300;
  const bool contrastive = target == GradCheckTarget::CContrastive ||
                           target == GradCheckTarget::Combination;
  const bool triplet = target == GradCheckTarget::CTriplet ||
                       target == GradCheckTarget::CTripletCenter;
  for (std::size_t i = 0; i < d2.rows(); ++i) {
    const auto yi = static_cast<std::size_t>(inst.labels[i]);
    for (std::size_t j = 0; j < d2.cols(); ++j) {
      if (j == yi) continue;
      if (contrastive) min_abs = std::min(min_abs, std::abs(margin - d2(i, j)));
      if (triplet) {
        min_abs = std::min(min_abs, std::abs(margin + d2(i, yi) - d2(i, j)));
      }
    }
  }
  return min_abs;
}

struct LossProblem {
  // Parameters packed as [features, weights, bias?, scale?].
  std::vector<double> params;
  std::function<double(const std::vector<double>&)> value;
  std::vector<double> analytic;  // same packing as params
};

LossProblem make_loss_problem(const Instance& inst, GradCheckTarget target) {
  const std::size_t nf = inst.features.data().size();
  const std::size_t nw = inst.weights.data().size();
  const bool with_bias = target == GradCheckTarget::BaselineSoftmax;
  const bool with_scale = target == GradCheckTarget::ScaledCosineLearned ||
                          target == GradCheckTarget::Combination;

  LossProblem prob;
  prob.params.insert(prob.params.end(), inst.features.data().begin(),
                     inst.features.data().end());
  prob.params.insert(prob.params.end(), inst.weights.data().begin(),
                     inst.weights.data().end());
  if (with_bias) {
    prob.params.insert(prob.params.end(), inst.bias.begin(), inst.bias.end());
  }
  if (with_scale) prob.params.push_back(inst.scale);

  const std::size_t batch = inst.features.rows();
  const std::size_t d = inst.features.cols();
  const std::size_t n = inst.weights.cols();
  const std::vector<int> labels = inst.labels;
  const double fixed_scale = inst.scale;

  auto unpack = [=](const std::vector<double>& p, Matrix& f, Matrix& w,
                    std::vector<double>& b, double& s) {
    f = Matrix(batch, d,
               std::vector<double>(p.begin(), p.begin() + nf));
    w = Matrix(d, n, std::vector<double>(p.begin() + nf, p.begin() + nf + nw));
    std::size_t off = nf + nw;
    if (with_bias) {
      b.assign(p.begin() + off, p.begin() + off + n);
      off += n;
    }
    s = with_scale ? p[off] : fixed_scale;
  };

  auto evaluate = [=](const std::vector<double>& p) {
    Matrix f, w;
    std::vector<double> b;
    double s;
    unpack(p, f, w, b, s);
    const AgentMatrix agents = AgentMatrix::raw(w);
    switch (target) {
      case GradCheckTarget::BaselineSoftmax:
        return baseline_softmax(f, w, &b, labels);
      case GradCheckTarget::ScaledCosineFixed:
      case GradCheckTarget::ScaledCosineLearned:
        return scaled_cosine_softmax(f, agents, s, labels);
      case GradCheckTarget::CContrastive:
        return c_contrastive(f, agents, labels, 1.0);
      case GradCheckTarget::CTriplet:
        return c_triplet(f, agents, labels, 0.8);
      case GradCheckTarget::CTripletCenter:
        return c_triplet_center(f, agents, labels, 0.8);
      case GradCheckTarget::Combination: {
        LossConfig cfg;
        cfg.kind = LossKind::Combination;
        cfg.second = SecondLoss::CContrastive;
        cfg.combo_weight = 0.01;
        cfg.margin = 1.0;
        cfg.scale = s;
        return combined_loss(f, agents, labels, cfg);
      }
      default:
        throw std::logic_error("make_loss_problem: not a loss target");
    }
  };

  prob.value = [evaluate](const std::vector<double>& p) {
    return evaluate(p).value;
  };

  const LossOutput out = evaluate(prob.params);
  prob.analytic.insert(prob.analytic.end(), out.grad_features.data().begin(),
                       out.grad_features.data().end());
  prob.analytic.insert(prob.analytic.end(), out.grad_weights.data().begin(),
                       out.grad_weights.data().end());
  if (with_bias) {
    prob.analytic.insert(prob.analytic.end(), out.grad_bias.begin(),
                         out.grad_bias.end());
  }
  if (with_scale) prob.analytic.push_back(out.grad_scale);
  return prob;
}

LossProblem make_normalize_problem(Rng& rng) {
  const std::size_t d = 3 + rng.index(6);
  std::vector<double> x = rng.normal_vector(d);
  const double target_norm = rng.uniform(0.3, 3.0);
  const double nrm = l2_norm(x);
  for (double& v : x) v *= target_norm / nrm;
  const std::vector<double> g = rng.normal_vector(d);

  LossProblem prob;
  prob.params = x;
  prob.value = [g](const std::vector<double>& p) {
    return dot(g, normalize_forward(p).output);
  };
  const NormContext ctx = normalize_forward(x);
  prob.analytic = normalize_backward(ctx, g);
  return prob;
}

double margin_for(GradCheckTarget t) {
  switch (t) {
    case GradCheckTarget::CContrastive:
    case GradCheckTarget::Combination:
      return 1.0;
    case GradCheckTarget::CTriplet:
    case GradCheckTarget::CTripletCenter:
      return 0.8;
    default:
      return 0.0;
  }
}

}  // namespace

GradCheckReport run_gradcheck(GradCheckTarget target, const GradCheckOptions& opts) {
  Rng rng(opts.seed);
  GradCheckReport report;
  report.target = target;

  const bool is_hinge = margin_for(target) > 0.0;
  for (int trial = 0; trial < opts.trials; ++trial) {
    LossProblem prob;
    if (target == GradCheckTarget::NormalizeBackward) {
      prob = make_normalize_problem(rng);
    } else {
      Instance inst = sample_instance(rng, target == GradCheckTarget::BaselineSoftmax);
      int resamples = 0;
      while (is_hinge &&
             min_hinge_margin(inst, target, margin_for(target)) <= opts.kink_margin) {
        inst = sample_instance(rng, false);
        if (++resamples > 1000) {
          throw std::runtime_error("gradcheck: cannot find kink-free instance");
        }
      }
      prob = make_loss_problem(inst, target);
    }

    double worst = 0.0;
    std::vector<double> p = prob.params;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + opts.step;
      const double up = prob.value(p);
      p[i] = saved - opts.step;
      const double down = prob.value(p);
      p[i] = saved;
      const double fd = (up - down) / (2.0 * opts.step);
      worst = std::max(worst, gradcheck_rel_error(prob.analytic[i], fd));
    }
    report.max_rel_error = std::max(report.max_rel_error, worst);
    if (worst > opts.tolerance) ++report.failures;
    ++report.trials;
  }
  return report;
}

}  // namespace hsphere

#include "hsphere/theory.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "hsphere/losses.hpp"
#include "hsphere/normalize.hpp"

namespace hsphere {

double prop2_bound(int n, double ell_sq) {
  if (n < 2) throw std::invalid_argument("prop2_bound: n must be >= 2");
  if (ell_sq <= 0.0) throw std::invalid_argument("prop2_bound: ell_sq must be > 0");
  const double nn = static_cast<double>(n);
  return std::log1p((nn - 1.0) * std::exp(-(nn / (nn - 1.0)) * ell_sq));
}

Prop2Bound prop2_bound_info(int n, double ell_sq) {
  return {n, ell_sq, prop2_bound(n, ell_sq)};
}

namespace {

std::vector<double> softmax_stable(std::span<const double> logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace

bool prop1_check(const Matrix& w, std::span<const double> f, double s) {
  if (s <= 1.0) throw std::invalid_argument("prop1_check: requires s > 1");
  if (w.rows() != f.size()) {
    throw std::invalid_argument("prop1_check: dimension mismatch");
  }
  const std::size_t n = w.cols();
  std::vector<double> logits(n), scaled(n);
  std::size_t argmax = 0;
  for (std::size_t j = 0; j < n; ++j) {
    double z = 0.0;
    for (std::size_t k = 0; k < w.rows(); ++k) z += w(k, j) * f[k];
    logits[j] = z;
    scaled[j] = s * z;
    if (z > logits[argmax]) argmax = j;
  }
  const std::vector<double> p = softmax_stable(logits);
  const std::vector<double> ps = softmax_stable(scaled);
  return ps[argmax] >= p[argmax] - 1e-12;
}

Matrix simplex_agents(std::size_t dim, std::size_t n) {
  if (n < 2) throw std::invalid_argument("simplex_agents: n must be >= 2");
  if (n > dim + 1) {
    throw std::invalid_argument("simplex_agents: regular simplex needs n <= dim+1");
  }
  // Coordinates of (e_i - centroid)/scale expressed in the Helmert basis of
  // the hyperplane orthogonal to (1,...,1): row k of the result is the k-th
  // Helmert direction, and the shared scale restores unit norms.
  Matrix w(dim, n);
  const double scale = std::sqrt(1.0 - 1.0 / static_cast<double>(n));
  for (std::size_t k = 1; k < n; ++k) {
    const double denom = std::sqrt(static_cast<double>(k) * (k + 1.0));
    for (std::size_t i = 0; i < n; ++i) {
      double h;
      if (i + 1 <= k) {
        h = 1.0 / denom;
      } else if (i == k) {
        h = -static_cast<double>(k) / denom;
      } else {
        h = 0.0;
      }
      w(k - 1, i) = h / scale;
    }
  }
  return w;
}

Prop2Gap prop2_empirical_gap(std::size_t dim, std::size_t n, double ell_sq,
                             std::uint64_t seed, int max_iters, double grad_tol) {
  if (n < 2) throw std::invalid_argument("prop2_empirical_gap: n must be >= 2");
  Matrix w(dim, n);
  if (n <= dim + 1) {
    w = simplex_agents(dim, n);
  } else {
    Rng rng(seed);
    for (std::size_t j = 0; j < n; ++j) w.set_col(j, rng.unit_vector(dim));
  }

  std::vector<int> labels(n);
  std::iota(labels.begin(), labels.end(), 0);

  // Features are tied to the agents, so the objective is a function of the
  // agent matrix alone and the two gradient blocks add.
  auto loss_of = [&](const Matrix& m) {
    return scaled_cosine_softmax(m.transposed(), AgentMatrix::raw(m), ell_sq,
                                 labels);
  };

  Prop2Gap result;
  result.bound = prop2_bound(static_cast<int>(n), ell_sq);

  double lr = 1.0;
  LossOutput out = loss_of(w);
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    Matrix grad = out.grad_weights;
    const Matrix gf = out.grad_features.transposed();
    double gmax = 0.0;
    for (std::size_t i = 0; i < grad.data().size(); ++i) {
      grad.data()[i] += gf.data()[i];
      gmax = std::max(gmax, std::abs(grad.data()[i]));
    }
    if (gmax < grad_tol) {
      result.converged = true;
      break;
    }
    Matrix next = w;
    for (std::size_t i = 0; i < next.data().size(); ++i) {
      next.data()[i] -= lr * grad.data()[i];
    }
    LossOutput next_out = loss_of(next);
    if (next_out.value <= out.value) {
      w = std::move(next);
      out = std::move(next_out);
      lr *= 1.05;
    } else {
      lr *= 0.5;
      if (lr < 1e-14) {
        result.converged = true;  // no descent direction left at double precision
        break;
      }
    }
  }

  result.achieved = out.value;
  result.gap = result.achieved - result.bound;
  result.iterations = iter;
  return result;
}

Distortion prop3_distortion(std::span<const double> f0, const Matrix& cluster,
                            std::span<const double> agent) {
  if (cluster.rows() == 0) {
    throw std::invalid_argument("prop3_distortion: empty cluster");
  }
  if (cluster.cols() != f0.size() || agent.size() != f0.size()) {
    throw std::invalid_argument("prop3_distortion: dimension mismatch");
  }
  const std::vector<double> f0n = normalize_forward(f0).output;
  const std::vector<double> an = normalize_forward(agent).output;

  auto dist = [](std::span<const double> a, std::span<const double> b) {
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      ss += d * d;
    }
    return std::sqrt(ss);
  };

  const double d_f0_agent = dist(f0n, an);
  Distortion out;
  for (std::size_t j = 0; j < cluster.rows(); ++j) {
    const std::vector<double> fj = normalize_forward(cluster.row(j)).output;
    const double diff = dist(f0n, fj) - d_f0_agent;
    out.distortion += diff * diff;
    const double dja = dist(fj, an);
    out.bound += dja * dja;
  }
  out.distortion /= static_cast<double>(cluster.rows());
  out.bound /= static_cast<double>(cluster.rows());
  return out;
}

void DistortionTracker::update(double value) {
  if (value < 0.0) {
    throw std::invalid_argument("DistortionTracker: value must be >= 0");
  }
  ema = decay * ema + (1.0 - decay) * value;
}

DistortionTracker tracker_update(DistortionTracker t, double value) {
  t.update(value);
  return t;
}

}  // namespace hsphere

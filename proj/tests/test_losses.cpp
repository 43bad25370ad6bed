#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <tuple>

#include "hsphere/gradcheck.hpp"
#include "hsphere/losses.hpp"
#include "hsphere/normalize.hpp"
#include "hsphere/theory.hpp"
#include "oracles.hpp"

using hsphere::AgentMatrix;
using hsphere::LossConfig;
using hsphere::LossKind;
using hsphere::LossOutput;
using hsphere::Matrix;
using hsphere::Rng;

namespace {

/// 2-D unit vector at the angle whose cosine against (1,0) is `c`.
Matrix agents_by_cosine(std::initializer_list<double> cosines) {
  Matrix w(2, cosines.size());
  std::size_t j = 0;
  for (double c : cosines) {
    w(0, j) = c;
    w(1, j) = std::sqrt(std::max(0.0, 1.0 - c * c));
    ++j;
  }
  return w;
}

const Matrix kFeatureE1 = Matrix::from(1, 2, {1, 0});

}  // namespace

TEST_CASE("baseline softmax with equal logits is log(n)") {
  // Orthogonal feature: both logits are zero.
  const Matrix f = Matrix::from(1, 2, {0, 1});
  const Matrix w = Matrix::from(2, 2, {1, -1, 0, 0});
  const LossOutput out = hsphere::baseline_softmax(f, w, nullptr, {0});
  CHECK(out.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("baseline softmax saturates to zero when the true logit dominates") {
  const Matrix f = Matrix::from(1, 2, {30, 0});
  const Matrix w = Matrix::from(2, 2, {1, -1, 0, 0});
  const LossOutput out = hsphere::baseline_softmax(f, w, nullptr, {0});
  CHECK(out.value <= 1e-10);
}

TEST_CASE("baseline softmax matches a direct log-sum-exp oracle") {
  Rng rng(51);
  const Matrix f = rng.normal_matrix(4, 3);
  const Matrix w = rng.normal_matrix(3, 5);
  const std::vector<double> bias = rng.normal_vector(5, 0.2);
  const std::vector<int> labels = {1, 4, 0, 2};
  const LossOutput out = hsphere::baseline_softmax(f, w, &bias, labels);

  double want = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      double z = bias[j];
      for (std::size_t k = 0; k < 3; ++k) z += f(i, k) * w(k, j);
      denom += std::exp(z);
    }
    double zy = bias[static_cast<std::size_t>(labels[i])];
    for (std::size_t k = 0; k < 3; ++k) {
      zy += f(i, k) * w(k, static_cast<std::size_t>(labels[i]));
    }
    want -= std::log(std::exp(zy) / denom);
  }
  want /= 4.0;
  CHECK(out.value == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("baseline softmax rejects out-of-range labels") {
  const Matrix f = Matrix::from(1, 2, {1, 0});
  const Matrix w = Matrix::from(2, 2, {1, 0, 0, 1});
  CHECK_THROWS_AS(hsphere::baseline_softmax(f, w, nullptr, {2}), std::out_of_range);
  CHECK_THROWS_AS(hsphere::baseline_softmax(f, w, nullptr, {-1}), std::out_of_range);
}

TEST_CASE("scaled cosine softmax antipodal two-class value") {
  // f~ = W~_1, W~_2 = -W~_1, s = 1: loss = log(1 + e^-2).
  const Matrix w = Matrix::from(2, 2, {1, -1, 0, 0});
  const LossOutput out = hsphere::scaled_cosine_softmax(
      kFeatureE1, AgentMatrix::raw(w), 1.0, {0});
  CHECK(out.value == doctest::Approx(std::log(1.0 + std::exp(-2.0))).epsilon(1e-9));
  CHECK(out.value == doctest::Approx(0.12693).epsilon(1e-4));
}

TEST_CASE("extreme-case probabilities at s=1 stay far from one") {
  // cos(correct) = 1, every other cosine = -1.
  for (const auto& [n, expected, tol] :
       {std::tuple<int, double, double>{10, 0.45, 0.005},
        std::tuple<int, double, double>{1000, 0.007, 0.0005}}) {
    Matrix w(2, static_cast<std::size_t>(n));
    w(0, 0) = 1.0;
    for (int j = 1; j < n; ++j) w(0, static_cast<std::size_t>(j)) = -1.0;
    const LossOutput out = hsphere::scaled_cosine_softmax(
        kFeatureE1, AgentMatrix::raw(w), 1.0, {0});
    const double prob = std::exp(-out.value);
    CHECK(std::abs(prob - expected) <= tol);
  }
}

TEST_CASE("scaled cosine softmax is invariant to feature rescaling") {
  Rng rng(52);
  const Matrix f = rng.normal_matrix(5, 4);
  const Matrix w = rng.normal_matrix(4, 6);
  const std::vector<int> labels = {0, 3, 5, 1, 2};
  const double base =
      hsphere::scaled_cosine_softmax(f, AgentMatrix::raw(w), 7.0, labels).value;
  for (double c : {0.1, 10.0}) {
    Matrix scaled = f;
    for (double& v : scaled.data()) v *= c;
    const double got =
        hsphere::scaled_cosine_softmax(scaled, AgentMatrix::raw(w), 7.0, labels)
            .value;
    CHECK(std::abs(got - base) <= 1e-9);
  }
}

TEST_CASE("euclidean form equals the cosine form") {
  Rng rng(53);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t batch = 1 + rng.index(5);
    const std::size_t d = 2 + rng.index(5);
    const std::size_t n = 2 + rng.index(6);
    const Matrix f = rng.normal_matrix(batch, d);
    const Matrix w = rng.normal_matrix(d, n);
    std::vector<int> labels(batch);
    for (int& y : labels) y = static_cast<int>(rng.index(n));
    const double s = rng.uniform(0.1, 25.0);

    const double cosine_form =
        hsphere::scaled_cosine_softmax(f, AgentMatrix::raw(w), s, labels).value;
    const double euclid_form =
        hsphere::euclidean_form_equivalence(f, AgentMatrix::raw(w), s, labels);
    CHECK(std::abs(cosine_form - euclid_form) <= 1e-10);
  }
}

TEST_CASE("euclidean form at s=0 is exactly log(n)") {
  Rng rng(54);
  const Matrix f = rng.normal_matrix(3, 4);
  const Matrix w = rng.normal_matrix(4, 7);
  const double v =
      hsphere::euclidean_form_equivalence(f, AgentMatrix::raw(w), 0.0, {0, 6, 3});
  CHECK(v == doctest::Approx(std::log(7.0)).epsilon(1e-14));
}

TEST_CASE("euclidean form reproduces the antipodal hand value") {
  const Matrix w = Matrix::from(2, 2, {1, -1, 0, 0});
  const double v =
      hsphere::euclidean_form_equivalence(kFeatureE1, AgentMatrix::raw(w), 1.0, {0});
  CHECK(v == doctest::Approx(0.12693).epsilon(1e-4));
}

TEST_CASE("c-contrastive is zero when everything is settled") {
  // Feature sits on its agent, the other agent is antipodal (d2 = 4 >= m).
  const Matrix w = Matrix::from(2, 2, {1, -1, 0, 0});
  const LossOutput out =
      hsphere::c_contrastive(kFeatureE1, AgentMatrix::raw(w), {0}, 1.0);
  CHECK(out.value <= 1e-9);
}

TEST_CASE("c-contrastive hand arithmetic") {
  // d2(own) = 0.5 (cos 0.75), d2(other) = 0.3 (cos 0.85), m = 1:
  // loss = 0.5 + (1 - 0.3) = 1.2.
  const Matrix w = agents_by_cosine({0.75, 0.85});
  const LossOutput out =
      hsphere::c_contrastive(kFeatureE1, AgentMatrix::raw(w), {0}, 1.0);
  CHECK(out.value == doctest::Approx(1.2).epsilon(1e-9));
}

TEST_CASE("c-triplet trivial and hand cases") {
  {
    // d2(pos) = 0, nearest negative at d2 = 4 >= m: hinge inactive.
    const Matrix w = Matrix::from(2, 2, {1, -1, 0, 0});
    CHECK(hsphere::c_triplet(kFeatureE1, AgentMatrix::raw(w), {0}, 0.8).value <=
          1e-9);
  }
  {
    // m=0.8, d2(pos)=0.4 (cos 0.8), d2(neg)=0.9 (cos 0.55): 0.8+0.4-0.9 = 0.3.
    const Matrix w = agents_by_cosine({0.8, 0.55});
    const LossOutput out =
        hsphere::c_triplet(kFeatureE1, AgentMatrix::raw(w), {0}, 0.8);
    CHECK(out.value == doctest::Approx(0.3).epsilon(1e-9));
  }
}

TEST_CASE("c-triplet-center adds the pull unconditionally") {
  {
    // Hinge inactive (d2pos=0.2, d2neg=2 > m+d2pos): pure center pull 0.2.
    const Matrix w = agents_by_cosine({0.9, 0.0});
    const LossOutput out =
        hsphere::c_triplet_center(kFeatureE1, AgentMatrix::raw(w), {0}, 0.8);
    CHECK(out.value == doctest::Approx(0.2).epsilon(1e-9));
  }
  {
    // Active case from the c-triplet example plus the 0.4 pull.
    const Matrix w = agents_by_cosine({0.8, 0.55});
    const LossOutput out =
        hsphere::c_triplet_center(kFeatureE1, AgentMatrix::raw(w), {0}, 0.8);
    CHECK(out.value == doctest::Approx(0.7).epsilon(1e-9));
  }
}

TEST_CASE("combination with zero weight equals scaled cosine softmax") {
  Rng rng(55);
  const Matrix f = rng.normal_matrix(4, 3);
  const Matrix w = rng.normal_matrix(3, 5);
  const std::vector<int> labels = {0, 2, 4, 1};
  LossConfig cfg;
  cfg.kind = LossKind::Combination;
  cfg.combo_weight = 0.0;
  cfg.scale = 9.0;
  const LossOutput combo =
      hsphere::combined_loss(f, AgentMatrix::raw(w), labels, cfg);
  const LossOutput soft =
      hsphere::scaled_cosine_softmax(f, AgentMatrix::raw(w), 9.0, labels);
  CHECK(combo.value == soft.value);
  for (std::size_t i = 0; i < combo.grad_features.data().size(); ++i) {
    CHECK(combo.grad_features.data()[i] == soft.grad_features.data()[i]);
  }
}

TEST_CASE("combination is linear in the second loss") {
  Rng rng(56);
  const Matrix f = rng.normal_matrix(4, 3);
  const Matrix w = rng.normal_matrix(3, 5);
  const std::vector<int> labels = {0, 2, 4, 1};
  const double soft =
      hsphere::scaled_cosine_softmax(f, AgentMatrix::raw(w), 11.0, labels).value;
  const double second =
      hsphere::c_contrastive(f, AgentMatrix::raw(w), labels, 1.0).value;
  for (double weight : {0.01, 0.3, 2.0}) {
    LossConfig cfg;
    cfg.kind = LossKind::Combination;
    cfg.combo_weight = weight;
    cfg.scale = 11.0;
    cfg.margin = 1.0;
    const double got = hsphere::combined_loss(f, AgentMatrix::raw(w), labels, cfg).value;
    CHECK(std::abs(got - (soft + weight * second)) <= 1e-10);
  }
}

TEST_CASE("well-separated instances never beat the loss lower bound") {
  Rng rng(57);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2 + rng.index(7);
    const std::size_t n = 2 + rng.index(19);
    Matrix w(d, n);
    for (std::size_t j = 0; j < n; ++j) w.set_col(j, rng.unit_vector(d));
    // Features tied to the agents: one sample per class.
    const Matrix f = w.transposed();
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i);
    const double loss =
        hsphere::scaled_cosine_softmax(f, AgentMatrix::raw(w), 1.0, labels).value;
    CHECK(loss >= hsphere::prop2_bound(static_cast<int>(n), 1.0) - 1e-9);
  }
}

TEST_CASE("the centered simplex attains the loss lower bound") {
  for (const auto& [d, n] : {std::pair<std::size_t, std::size_t>{2, 3},
                             std::pair<std::size_t, std::size_t>{3, 4},
                             std::pair<std::size_t, std::size_t>{7, 8}}) {
    const Matrix w = hsphere::simplex_agents(d, n);
    const Matrix f = w.transposed();
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i);
    const double loss =
        hsphere::scaled_cosine_softmax(f, AgentMatrix::raw(w), 1.0, labels).value;
    CHECK(loss ==
          doctest::Approx(hsphere::prop2_bound(static_cast<int>(n), 1.0))
              .epsilon(1e-9));
  }
}

TEST_CASE("analytic gradients match finite differences for every loss") {
  hsphere::GradCheckOptions opts;
  opts.trials = 20;
  for (hsphere::GradCheckTarget target : hsphere::all_gradcheck_targets()) {
    const hsphere::GradCheckReport report = run_gradcheck(target, opts);
    INFO(hsphere::gradcheck_target_name(target),
         " max_rel_error=", report.max_rel_error);
    CHECK(report.failures == 0);
  }
}

TEST_CASE("feature-only and weight-only normalization ablations") {
  Rng rng(60);
  const Matrix f = rng.normal_matrix(3, 4);
  const Matrix w = rng.normal_matrix(4, 5);
  const std::vector<int> labels = {0, 2, 4};
  const AgentMatrix agents = AgentMatrix::raw(w);

  // Feature-only normalization ignores feature magnitude but not weight
  // magnitude; weight-only is the converse.
  Matrix f2 = f;
  for (double& v : f2.data()) v *= 3.0;
  Matrix w2 = w;
  for (double& v : w2.data()) v *= 3.0;

  const double feat_only =
      hsphere::scaled_cosine_softmax(f, agents, 4.0, labels, true, false).value;
  CHECK(hsphere::scaled_cosine_softmax(f2, agents, 4.0, labels, true, false).value ==
        doctest::Approx(feat_only).epsilon(1e-12));
  CHECK(hsphere::scaled_cosine_softmax(f, AgentMatrix::raw(w2), 4.0, labels, true,
                                       false)
            .value != doctest::Approx(feat_only).epsilon(1e-6));

  const double weight_only =
      hsphere::scaled_cosine_softmax(f, agents, 4.0, labels, false, true).value;
  CHECK(hsphere::scaled_cosine_softmax(f, AgentMatrix::raw(w2), 4.0, labels, false,
                                       true)
            .value == doctest::Approx(weight_only).epsilon(1e-12));

  // Gradients of both ablations agree with finite differences.
  for (const auto& [nf, nw] : {std::pair<bool, bool>{true, false},
                               std::pair<bool, bool>{false, true}}) {
    const hsphere::LossOutput out =
        hsphere::scaled_cosine_softmax(f, agents, 4.0, labels, nf, nw);
    std::vector<double> packed(f.data().begin(), f.data().end());
    packed.insert(packed.end(), w.data().begin(), w.data().end());
    const std::vector<double> fd = oracles::finite_difference(
        [&](const std::vector<double>& p) {
          const Matrix pf(3, 4, std::vector<double>(p.begin(), p.begin() + 12));
          const Matrix pw(4, 5, std::vector<double>(p.begin() + 12, p.end()));
          return hsphere::scaled_cosine_softmax(pf, AgentMatrix::raw(pw), 4.0,
                                                labels, nf, nw)
              .value;
        },
        packed);
    std::vector<double> analytic(out.grad_features.data().begin(),
                                 out.grad_features.data().end());
    analytic.insert(analytic.end(), out.grad_weights.data().begin(),
                    out.grad_weights.data().end());
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-3});
      CHECK(std::abs(analytic[i] - fd[i]) / denom <= 1e-5);
    }
  }
}

TEST_CASE("normalized agent matrix has unit columns") {
  Rng rng(58);
  const AgentMatrix agents = AgentMatrix::normalized(rng.normal_matrix(5, 7));
  CHECK(agents.normalized_columns);
  for (std::size_t j = 0; j < 7; ++j) {
    CHECK(hsphere::l2_norm(agents.w.col(j)) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("loss config validation") {
  LossConfig bad;
  bad.kind = LossKind::ScaledCosineSoftmax;
  bad.learn_scale = false;
  bad.scale = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  LossConfig neg_margin;
  neg_margin.margin = -0.5;
  CHECK_THROWS_AS(neg_margin.validate(), std::invalid_argument);

  LossConfig bias_on_cosine;
  bias_on_cosine.kind = LossKind::ScaledCosineSoftmax;
  bias_on_cosine.use_bias = true;
  CHECK_THROWS_AS(bias_on_cosine.validate(), std::invalid_argument);
}

TEST_CASE("loss gradients are finite and correctly shaped") {
  Rng rng(59);
  const Matrix f = rng.normal_matrix(6, 4);
  const Matrix w = rng.normal_matrix(4, 5);
  const std::vector<int> labels = {0, 1, 2, 3, 4, 0};
  for (const LossOutput& out :
       {hsphere::scaled_cosine_softmax(f, AgentMatrix::raw(w), 5.0, labels),
        hsphere::c_contrastive(f, AgentMatrix::raw(w), labels, 1.0),
        hsphere::c_triplet(f, AgentMatrix::raw(w), labels, 0.8)}) {
    CHECK(out.grad_features.rows() == 6);
    CHECK(out.grad_features.cols() == 4);
    CHECK(out.grad_weights.rows() == 4);
    CHECK(out.grad_weights.cols() == 5);
    CHECK(out.grad_features.all_finite());
    CHECK(out.grad_weights.all_finite());
    CHECK(std::isfinite(out.value));
  }
}

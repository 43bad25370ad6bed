#include "hsphere/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace hsphere {

std::vector<double> mirror_merge(std::span<const double> f_orig,
                                 std::span<const double> f_mirror) {
  if (f_orig.size() != f_mirror.size()) {
    throw std::invalid_argument("mirror_merge: dimension mismatch");
  }
  std::vector<double> out(f_orig.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f_orig[i] + f_mirror[i];
  return out;
}

double cosine_score(std::span<const double> a, std::span<const double> b) {
  return dot(a, b) / (l2_norm(a) * l2_norm(b));
}

PairSet PairSet::build(Matrix a, Matrix b, std::vector<char> same_flags, int k) {
  if (a.rows() != b.rows() || a.rows() != same_flags.size()) {
    throw std::invalid_argument("PairSet: inconsistent pair count");
  }
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("PairSet: feature dimension mismatch");
  }
  if (k < 2) throw std::invalid_argument("PairSet: k must be >= 2");
  if (same_flags.size() < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("PairSet: need at least k pairs");
  }
  PairSet p;
  p.features_a = std::move(a);
  p.features_b = std::move(b);
  p.same = std::move(same_flags);
  p.fold.resize(p.same.size());
  for (std::size_t i = 0; i < p.fold.size(); ++i) {
    p.fold[i] = static_cast<int>(i % static_cast<std::size_t>(k));
  }
  return p;
}

std::vector<double> PairSet::scores() const {
  std::vector<double> s(size());
  for (std::size_t i = 0; i < size(); ++i) {
    s[i] = cosine_score(features_a.row(i), features_b.row(i));
  }
  return s;
}

double threshold_accuracy(const std::vector<double>& scores,
                          const std::vector<char>& same, double threshold) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool accept = scores[i] >= threshold;
    if (accept == static_cast<bool>(same[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

ThresholdChoice best_threshold(const std::vector<double>& scores,
                               const std::vector<char>& same) {
  if (scores.empty() || scores.size() != same.size()) {
    throw std::invalid_argument("best_threshold: empty or mismatched input");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });

  std::size_t total_pos = 0;
  for (char s : same) total_pos += s ? 1 : 0;

  // Cut position c predicts "same" for the n-c highest scores. Walking c
  // upward, correctness changes by +1 for each negative passed and -1 for
  // each positive.
  ThresholdChoice best;
  best.threshold = scores[order[0]] - 1.0;
  std::size_t correct = total_pos;  // c = 0: everything accepted
  best.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  for (std::size_t c = 1; c <= n; ++c) {
    if (same[order[c - 1]]) {
      --correct;
    } else {
      ++correct;
    }
    // Midpoints inside a run of tied scores are not valid cuts.
    if (c < n && scores[order[c]] == scores[order[c - 1]]) continue;
    const double accuracy = static_cast<double>(correct) / static_cast<double>(n);
    if (accuracy > best.accuracy) {
      best.accuracy = accuracy;
      best.threshold = (c == n)
                           ? scores[order[n - 1]] + 1.0
                           : 0.5 * (scores[order[c - 1]] + scores[order[c]]);
    }
  }
  return best;
}

KFoldResult kfold_accuracy_scores(const std::vector<double>& scores,
                                  const std::vector<char>& same,
                                  const std::vector<int>& fold, int k) {
  if (k < 2) throw std::invalid_argument("kfold: k must be >= 2");
  if (scores.size() != same.size() || scores.size() != fold.size()) {
    throw std::invalid_argument("kfold: mismatched inputs");
  }
  KFoldResult result;
  for (int f = 0; f < k; ++f) {
    std::vector<double> train_scores, test_scores;
    std::vector<char> train_same, test_same;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (fold[i] == f) {
        test_scores.push_back(scores[i]);
        test_same.push_back(same[i]);
      } else {
        train_scores.push_back(scores[i]);
        train_same.push_back(same[i]);
      }
    }
    if (test_scores.empty() || train_scores.empty()) {
      throw std::invalid_argument("kfold: empty fold");
    }
    const ThresholdChoice choice = best_threshold(train_scores, train_same);
    result.fold_threshold.push_back(choice.threshold);
    result.fold_accuracy.push_back(
        threshold_accuracy(test_scores, test_same, choice.threshold));
  }
  double sum = 0.0;
  for (double a : result.fold_accuracy) sum += a;
  result.mean_accuracy = sum / static_cast<double>(k);
  double var = 0.0;
  for (double a : result.fold_accuracy) {
    var += (a - result.mean_accuracy) * (a - result.mean_accuracy);
  }
  var /= static_cast<double>(k - 1);
  result.std_error = std::sqrt(var / static_cast<double>(k));
  return result;
}

KFoldResult kfold_accuracy(const PairSet& pairs, int k) {
  return kfold_accuracy_scores(pairs.scores(), pairs.same, pairs.fold, k);
}

TprFarResult tpr_at_far_scores(const std::vector<double>& scores,
                               const std::vector<char>& same, double far) {
  if (far <= 0.0 || far >= 1.0) {
    throw std::invalid_argument("tpr_at_far: far must be in (0, 1)");
  }
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (same[i] ? pos : neg).push_back(scores[i]);
  }
  if (pos.empty() || neg.empty()) {
    throw std::invalid_argument("tpr_at_far: need both positive and negative pairs");
  }
  std::sort(neg.begin(), neg.end());

  TprFarResult result;
  result.min_resolvable_far = 1.0 / static_cast<double>(neg.size());
  result.resolvable = far >= result.min_resolvable_far;

  std::vector<double> candidates = scores;
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());

  auto far_at = [&](double threshold) {
    const auto it = std::lower_bound(neg.begin(), neg.end(), threshold);
    return static_cast<double>(neg.end() - it) / static_cast<double>(neg.size());
  };

  double threshold = std::numeric_limits<double>::infinity();
  for (double c : candidates) {  // ascending: first hit is the smallest score
    if (far_at(c) <= far) {
      threshold = c;
      break;
    }
  }
  result.threshold = threshold;
  if (std::isinf(threshold)) {
    result.tpr = 0.0;
    result.achieved_far = 0.0;
    return result;
  }
  result.achieved_far = far_at(threshold);
  std::size_t tp = 0;
  for (double p : pos) tp += (p >= threshold) ? 1 : 0;
  result.tpr = static_cast<double>(tp) / static_cast<double>(pos.size());
  return result;
}

TprFarResult tpr_at_far(const PairSet& pairs, double far) {
  return tpr_at_far_scores(pairs.scores(), pairs.same, far);
}

double ScoreHistogram::total() const {
  double t = 0.0;
  for (double b : bins) t += b;
  return t;
}

ScoreHistogram ScoreHistogram::l1_normalized() const {
  ScoreHistogram out = *this;
  const double t = total();
  if (t > 0.0) {
    for (double& b : out.bins) b /= t;
  }
  return out;
}

double ScoreHistogram::mean_bin_center() const {
  const double t = total();
  if (t == 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < kBins; ++i) {
    const double center = -1.0 + (static_cast<double>(i) + 0.5) * (2.0 / kBins);
    sum += bins[i] * center;
  }
  return sum / t;
}

namespace {

std::size_t score_bin(double s) {
  const auto idx = static_cast<long>(std::floor((s + 1.0) * 50.0));
  if (idx < 0) return 0;
  if (idx >= static_cast<long>(ScoreHistogram::kBins)) {
    return ScoreHistogram::kBins - 1;  // +1 goes to the top bin
  }
  return static_cast<std::size_t>(idx);
}

}  // namespace

ScoreHistogram video_histogram(const Matrix& frames_a, const Matrix& frames_b) {
  if (frames_a.rows() == 0 || frames_b.rows() == 0) {
    throw std::invalid_argument("video_histogram: empty video");
  }
  if (frames_a.cols() != frames_b.cols()) {
    throw std::invalid_argument("video_histogram: feature dimension mismatch");
  }
  ScoreHistogram h;
  for (std::size_t i = 0; i < frames_a.rows(); ++i) {
    for (std::size_t j = 0; j < frames_b.rows(); ++j) {
      h.bins[score_bin(cosine_score(frames_a.row(i), frames_b.row(j)))] += 1.0;
    }
  }
  return h;
}

double hik_kernel(std::span<const double> h1, std::span<const double> h2) {
  if (h1.size() != h2.size()) {
    throw std::invalid_argument("hik_kernel: bin count mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < h1.size(); ++i) s += std::min(h1[i], h2[i]);
  return s;
}

double hik_kernel(const ScoreHistogram& h1, const ScoreHistogram& h2) {
  return hik_kernel(std::span<const double>(h1.bins),
                    std::span<const double>(h2.bins));
}

HikSvmModel hik_svm_train(const std::vector<ScoreHistogram>& histograms,
                          const std::vector<int>& labels, double C, double tol,
                          int max_iters) {
  const std::size_t n = histograms.size();
  if (n < 2 || labels.size() != n) {
    throw std::invalid_argument("hik_svm_train: need >= 2 labeled histograms");
  }
  for (int y : labels) {
    if (y != 1 && y != -1) {
      throw std::invalid_argument("hik_svm_train: labels must be +1 or -1");
    }
  }
  if (C <= 0.0) throw std::invalid_argument("hik_svm_train: C must be > 0");

  std::vector<ScoreHistogram> normed(n);
  for (std::size_t i = 0; i < n; ++i) normed[i] = histograms[i].l1_normalized();

  Matrix kernel(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      kernel(i, j) = hik_kernel(normed[i], normed[j]);
      kernel(j, i) = kernel(i, j);
    }
  }

  // Dual ascent in beta_i = y_i alpha_i with box [min(0, y_i C), max(0, y_i C)]
  // and sum(beta) = 0. The gradient of the dual objective is
  // g_i = y_i - sum_j beta_j K_ij, and the maximal violating pair is the
  // (can-increase, can-decrease) pair with the largest gradient gap.
  std::vector<double> beta(n, 0.0), g(n);
  std::vector<double> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = static_cast<double>(labels[i]);
    lo[i] = labels[i] > 0 ? 0.0 : -C;
    hi[i] = labels[i] > 0 ? C : 0.0;
  }

  HikSvmModel model;
  model.C = C;
  auto max_violating_pair = [&](std::size_t& up, std::size_t& down) {
    up = n;
    down = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (beta[i] < hi[i] && (up == n || g[i] > g[up])) up = i;
      if (beta[i] > lo[i] && (down == n || g[i] < g[down])) down = i;
    }
    return (up == n || down == n) ? 0.0 : g[up] - g[down];
  };

  double violation = 0.0;
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    std::size_t up, down;
    violation = max_violating_pair(up, down);
    if (violation <= tol) break;

    const double quad =
        std::max(kernel(up, up) + kernel(down, down) - 2.0 * kernel(up, down),
                 1e-12);
    double delta = violation / quad;
    delta = std::min({delta, hi[up] - beta[up], beta[down] - lo[down]});
    beta[up] += delta;
    beta[down] -= delta;
    for (std::size_t t = 0; t < n; ++t) {
      g[t] -= delta * (kernel(t, up) - kernel(t, down));
    }
  }
  if (iter == max_iters) {
    std::size_t up, down;
    violation = max_violating_pair(up, down);
  }
  model.iterations = iter;
  model.kkt_violation = std::max(violation, 0.0);
  model.converged = model.kkt_violation <= tol;

  // Bias from the stationarity condition g_i = b on free vectors; fall back
  // to the midpoint of the active bounds.
  double b_sum = 0.0;
  std::size_t b_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (beta[i] > lo[i] + 1e-12 && beta[i] < hi[i] - 1e-12) {
      b_sum += g[i];
      ++b_count;
    }
  }
  if (b_count > 0) {
    model.bias = b_sum / static_cast<double>(b_count);
  } else {
    double up_max = -1e300, down_min = 1e300;
    for (std::size_t i = 0; i < n; ++i) {
      if (beta[i] < hi[i]) up_max = std::max(up_max, g[i]);
      if (beta[i] > lo[i]) down_min = std::min(down_min, g[i]);
    }
    model.bias = 0.5 * (up_max + down_min);
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(beta[i]) > 1e-12) {
      model.support_vectors.push_back(normed[i]);
      model.dual_coef.push_back(beta[i]);
    }
  }
  return model;
}

double hik_svm_decision(const HikSvmModel& model, const ScoreHistogram& h) {
  const ScoreHistogram hn = h.l1_normalized();
  double f = model.bias;
  for (std::size_t i = 0; i < model.support_vectors.size(); ++i) {
    f += model.dual_coef[i] * hik_kernel(model.support_vectors[i], hn);
  }
  return f;
}

int hik_svm_predict(const HikSvmModel& model, const ScoreHistogram& h) {
  return hik_svm_decision(model, h) >= 0.0 ? 1 : -1;
}

std::vector<VideoPairInstance> make_video_benchmark(const VideoBenchmarkConfig& cfg,
                                                    std::uint64_t seed) {
  Rng rng(seed);
  std::vector<VideoPairInstance> out;
  out.reserve(static_cast<std::size_t>(cfg.pair_count));
  for (int p = 0; p < cfg.pair_count; ++p) {
    VideoPairInstance inst;
    inst.label = (p % 2 == 0) ? 1 : -1;
    const int frames_a =
        cfg.min_frames + static_cast<int>(rng.index(cfg.max_frames - cfg.min_frames + 1));
    const int frames_b =
        cfg.min_frames + static_cast<int>(rng.index(cfg.max_frames - cfg.min_frames + 1));
    const int n_scores = frames_a * frames_b;

    const double base = inst.label > 0 ? cfg.same_center : cfg.diff_center;
    const double center = base + cfg.pair_jitter * rng.normal();
    const double contamination =
        inst.label > 0 ? 0.0 : rng.uniform(0.0, cfg.contamination_max);

    double sum = 0.0;
    for (int s = 0; s < n_scores; ++s) {
      double mu = center;
      if (inst.label < 0 && rng.uniform() < contamination) {
        mu = cfg.same_center;  // lookalike frame pair
      }
      double score = mu + cfg.frame_sigma * rng.normal();
      score = std::clamp(score, -1.0, 1.0);
      sum += score;
      inst.histogram.bins[score_bin(score)] += 1.0;
    }
    inst.mean_score = sum / n_scores;
    out.push_back(std::move(inst));
  }
  return out;
}

VideoBenchmarkResult run_video_benchmark(const std::vector<VideoPairInstance>& pairs,
                                         double C) {
  if (pairs.size() < 4) {
    throw std::invalid_argument("run_video_benchmark: too few pairs");
  }
  const std::size_t split = pairs.size() / 2;

  std::vector<ScoreHistogram> train_hists;
  std::vector<int> train_labels;
  std::vector<double> train_means;
  std::vector<char> train_same;
  for (std::size_t i = 0; i < split; ++i) {
    train_hists.push_back(pairs[i].histogram);
    train_labels.push_back(pairs[i].label);
    train_means.push_back(pairs[i].mean_score);
    train_same.push_back(pairs[i].label > 0 ? 1 : 0);
  }

  const HikSvmModel model = hik_svm_train(train_hists, train_labels, C);
  const ThresholdChoice choice = best_threshold(train_means, train_same);

  std::size_t svm_correct = 0, mean_correct = 0, count = 0;
  for (std::size_t i = split; i < pairs.size(); ++i, ++count) {
    if (hik_svm_predict(model, pairs[i].histogram) == pairs[i].label) ++svm_correct;
    const bool accept = pairs[i].mean_score >= choice.threshold;
    if (accept == (pairs[i].label > 0)) ++mean_correct;
  }
  VideoBenchmarkResult result;
  result.svm_accuracy = static_cast<double>(svm_correct) / count;
  result.mean_score_accuracy = static_cast<double>(mean_correct) / count;
  return result;
}

std::vector<PairLine> load_pair_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("pair list: cannot open " + path);
  std::vector<PairLine> lines;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    PairLine p;
    if (!(ss >> p.a >> p.b >> p.label)) {
      throw std::runtime_error("pair list: malformed line " + std::to_string(lineno) +
                               " in " + path);
    }
    lines.push_back(p);
  }
  return lines;
}

PairSet pair_set_from_store(const Matrix& store, const std::vector<PairLine>& lines,
                            int k) {
  Matrix a(lines.size(), store.cols());
  Matrix b(lines.size(), store.cols());
  std::vector<char> same(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].a >= store.rows() || lines[i].b >= store.rows()) {
      throw std::runtime_error("pair list: feature index out of range");
    }
    for (std::size_t j = 0; j < store.cols(); ++j) {
      a(i, j) = store(lines[i].a, j);
      b(i, j) = store(lines[i].b, j);
    }
    same[i] = lines[i].label != 0 ? 1 : 0;
  }
  return PairSet::build(std::move(a), std::move(b), std::move(same), k);
}

std::vector<VideoPairLine> load_video_pair_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("video pair list: cannot open " + path);
  std::vector<VideoPairLine> lines;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    VideoPairLine v;
    if (!(ss >> v.a_begin >> v.a_end >> v.b_begin >> v.b_end >> v.label) ||
        v.a_end <= v.a_begin || v.b_end <= v.b_begin) {
      throw std::runtime_error("video pair list: malformed line " +
                               std::to_string(lineno) + " in " + path);
    }
    lines.push_back(v);
  }
  return lines;
}

std::vector<double> average_scores(
    const std::vector<std::vector<double>>& per_snapshot) {
  if (per_snapshot.empty()) {
    throw std::invalid_argument("average_scores: no score vectors");
  }
  const std::size_t n = per_snapshot.front().size();
  std::vector<double> mean(n, 0.0);
  for (const auto& scores : per_snapshot) {
    if (scores.size() != n) {
      throw std::invalid_argument("average_scores: length mismatch");
    }
    for (std::size_t i = 0; i < n; ++i) mean[i] += scores[i];
  }
  for (double& m : mean) m /= static_cast<double>(per_snapshot.size());
  return mean;
}

void write_fold_results_csv(const std::string& path, const KFoldResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("fold results: cannot open " + path);
  out << "fold,threshold,accuracy\n";
  for (std::size_t f = 0; f < result.fold_accuracy.size(); ++f) {
    out << f << ',' << result.fold_threshold[f] << ',' << result.fold_accuracy[f]
        << '\n';
  }
}

void write_far_tpr_csv(const std::string& path,
                       const std::vector<std::pair<double, TprFarResult>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("far/tpr: cannot open " + path);
  out << "far,tpr\n";
  for (const auto& [far, r] : rows) out << far << ',' << r.tpr << '\n';
}

}  // namespace hsphere

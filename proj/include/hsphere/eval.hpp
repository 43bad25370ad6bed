#ifndef HSPHERE_EVAL_HPP
#define HSPHERE_EVAL_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hsphere/matrix.hpp"

namespace hsphere {

/// Element-wise sum of the features of an image and its mirror.
std::vector<double> mirror_merge(std::span<const double> f_orig,
                                 std::span<const double> f_mirror);

/// <a, b> / (||a|| ||b||), epsilon-guarded norms.
double cosine_score(std::span<const double> a, std::span<const double> b);

/// Labeled feature pairs with a k-way fold assignment (round robin).
struct PairSet {
  Matrix features_a;       // one row per pair
  Matrix features_b;
  std::vector<char> same;  // 1 = same identity
  std::vector<int> fold;

  static PairSet build(Matrix a, Matrix b, std::vector<char> same, int k);
  std::size_t size() const { return same.size(); }
  std::vector<double> scores() const;  // cosine per pair
};

/// Best accept-if-score>=threshold rule for the given scores. Candidate
/// thresholds are midpoints between consecutive distinct sorted scores plus
/// one candidate below the minimum and one above the maximum; ties prefer
/// the lower threshold.
struct ThresholdChoice {
  double threshold = 0.0;
  double accuracy = 0.0;
};
ThresholdChoice best_threshold(const std::vector<double>& scores,
                               const std::vector<char>& same);

double threshold_accuracy(const std::vector<double>& scores,
                          const std::vector<char>& same, double threshold);

/// k-fold verification: per fold, the threshold is fitted on the other k-1
/// folds and applied to the held-out fold.
struct KFoldResult {
  double mean_accuracy = 0.0;
  double std_error = 0.0;
  std::vector<double> fold_threshold;
  std::vector<double> fold_accuracy;
};
KFoldResult kfold_accuracy(const PairSet& pairs, int k = 10);
KFoldResult kfold_accuracy_scores(const std::vector<double>& scores,
                                  const std::vector<char>& same,
                                  const std::vector<int>& fold, int k);

/// True-positive rate at the smallest score threshold whose false-accept
/// rate on negative pairs is at most `far`. When no threshold among the
/// observed scores meets the target, the threshold is effectively +inf and
/// tpr = 0. `resolvable` is false when far is below 1/#negatives, i.e.
/// finer than the negative set can measure.
struct TprFarResult {
  double tpr = 0.0;
  double threshold = 0.0;
  double achieved_far = 0.0;
  bool resolvable = true;
  double min_resolvable_far = 0.0;
};
TprFarResult tpr_at_far(const PairSet& pairs, double far);
TprFarResult tpr_at_far_scores(const std::vector<double>& scores,
                               const std::vector<char>& same, double far);

/// 100 uniform bins over [-1, 1]; a score of exactly +1 lands in the top
/// bin. Counts are stored as doubles so the same type carries normalized
/// histograms.
struct ScoreHistogram {
  static constexpr std::size_t kBins = 100;
  std::array<double, kBins> bins{};

  double total() const;
  ScoreHistogram l1_normalized() const;
  /// Mean of bin centers weighted by counts.
  double mean_bin_center() const;
};

/// All |a| x |b| pairwise cosine scores between the frame features of two
/// videos, binned. Throws on an empty video.
ScoreHistogram video_histogram(const Matrix& frames_a, const Matrix& frames_b);

/// Histogram intersection kernel sum_i min(h1_i, h2_i) on raw vectors.
double hik_kernel(std::span<const double> h1, std::span<const double> h2);
double hik_kernel(const ScoreHistogram& h1, const ScoreHistogram& h2);

/// Soft-margin SVM with the histogram intersection kernel, trained by
/// two-coordinate ascent on the dual with maximal-violating-pair selection.
/// Histograms are L1-normalized before kernel evaluation so videos of
/// different lengths are comparable.
struct HikSvmModel {
  std::vector<ScoreHistogram> support_vectors;  // stored L1-normalized
  std::vector<double> dual_coef;                // y_i * alpha_i, in [-C, C]
  double bias = 0.0;
  double C = 1.0;
  bool converged = false;
  int iterations = 0;
  double kkt_violation = 0.0;
};

HikSvmModel hik_svm_train(const std::vector<ScoreHistogram>& histograms,
                          const std::vector<int>& labels,  // +1 / -1
                          double C = 1.0, double tol = 1e-5,
                          int max_iters = 200000);
double hik_svm_decision(const HikSvmModel& model, const ScoreHistogram& h);
int hik_svm_predict(const HikSvmModel& model, const ScoreHistogram& h);

/// Synthetic video-pair benchmark. Frame scores of a same-identity pair are
/// drawn around same_center, different pairs around diff_center, both with
/// frame_sigma spread. Each pair carries a latent center shift
/// (pair_jitter) and different pairs get a random fraction (up to
/// contamination_max) of lookalike frames scoring near same_center, so the
/// pair mean alone does not separate the classes cleanly.
struct VideoBenchmarkConfig {
  int pair_count = 500;
  int min_frames = 6;
  int max_frames = 14;
  double same_center = 0.6;
  double diff_center = 0.1;
  double frame_sigma = 0.1;
  double pair_jitter = 0.15;
  double contamination_max = 0.6;
};

struct VideoPairInstance {
  ScoreHistogram histogram;  // raw counts
  double mean_score = 0.0;
  int label = 0;  // +1 same, -1 different
};

std::vector<VideoPairInstance> make_video_benchmark(const VideoBenchmarkConfig& cfg,
                                                    std::uint64_t seed);

/// Train-on-first-half / test-on-second-half comparison of HIK-SVM
/// classification against mean-score thresholding on the same instances.
struct VideoBenchmarkResult {
  double svm_accuracy = 0.0;
  double mean_score_accuracy = 0.0;
};
VideoBenchmarkResult run_video_benchmark(const std::vector<VideoPairInstance>& pairs,
                                         double C = 1.0);

/// Text pair list: one `id_a id_b label` triple per line, indices into a
/// feature store.
struct PairLine {
  std::size_t a = 0;
  std::size_t b = 0;
  int label = 0;
};
std::vector<PairLine> load_pair_list(const std::string& path);
PairSet pair_set_from_store(const Matrix& store, const std::vector<PairLine>& lines,
                            int k);

/// Video pair list: `a_begin a_end b_begin b_end label` half-open frame
/// ranges into a feature store.
struct VideoPairLine {
  std::size_t a_begin = 0, a_end = 0;
  std::size_t b_begin = 0, b_end = 0;
  int label = 0;
};
std::vector<VideoPairLine> load_video_pair_list(const std::string& path);

/// Element-wise mean over per-snapshot score vectors: score every pair with
/// each saved snapshot separately, then average, which damps single-snapshot
/// noise.
std::vector<double> average_scores(
    const std::vector<std::vector<double>>& per_snapshot);

void write_fold_results_csv(const std::string& path, const KFoldResult& result);
void write_far_tpr_csv(const std::string& path,
                       const std::vector<std::pair<double, TprFarResult>>& rows);

}  // namespace hsphere

#endif  // HSPHERE_EVAL_HPP

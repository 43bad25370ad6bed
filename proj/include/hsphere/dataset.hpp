#ifndef HSPHERE_DATASET_HPP
#define HSPHERE_DATASET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "hsphere/matrix.hpp"

namespace hsphere {

enum class DataSource { SyntheticBlobs, MnistIdx };

struct Dataset {
  Matrix samples;           // one row per sample
  std::vector<int> labels;  // in [0, num_classes)
  DataSource source = DataSource::SyntheticBlobs;

  std::size_t size() const { return samples.rows(); }
  int num_classes() const;
};

/// Isotropic Gaussian clusters of width `spread` around class centers drawn
/// uniformly on the unit sphere.
Dataset make_blobs(int n_classes, int per_class, std::size_t dim, double spread,
                   std::uint64_t seed);

/// make_blobs with class 0 recentered at the origin. Such a class cannot be
/// told apart by direction alone, which is what lets a bias-equipped softmax
/// head park its features next to zero.
Dataset make_blobs_with_origin_class(int n_classes, int per_class, std::size_t dim,
                                     double spread, std::uint64_t seed);

/// IDX-format readers (big-endian; magic 2051 for images, 2049 for labels).
/// Pixels are scaled to [0, 1]. Throws std::runtime_error naming the bad
/// field on malformed input.
Dataset load_mnist_idx(const std::string& images_path,
                       const std::string& labels_path);

/// Flat binary feature store: u64 rows, u64 cols, then row-major float64.
void save_feature_store(const std::string& path, const Matrix& features);
Matrix load_feature_store(const std::string& path);

}  // namespace hsphere

#endif  // HSPHERE_DATASET_HPP

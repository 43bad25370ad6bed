#include "hsphere/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace hsphere {

int Dataset::num_classes() const {
  int mx = -1;
  for (int y : labels) mx = std::max(mx, y);
  return mx + 1;
}

Dataset make_blobs(int n_classes, int per_class, std::size_t dim, double spread,
                   std::uint64_t seed) {
  if (n_classes < 2) throw std::invalid_argument("make_blobs: need >= 2 classes");
  if (per_class < 1) throw std::invalid_argument("make_blobs: per_class >= 1");
  Rng rng(seed);
  std::vector<std::vector<double>> centers(n_classes);
  for (auto& c : centers) c = rng.unit_vector(dim);

  Dataset data;
  data.source = DataSource::SyntheticBlobs;
  data.samples = Matrix(static_cast<std::size_t>(n_classes) * per_class, dim);
  data.labels.resize(data.samples.rows());
  std::size_t row = 0;
  for (int c = 0; c < n_classes; ++c) {
    for (int i = 0; i < per_class; ++i, ++row) {
      for (std::size_t j = 0; j < dim; ++j) {
        data.samples(row, j) = centers[c][j] + spread * rng.normal();
      }
      data.labels[row] = c;
    }
  }
  return data;
}

Dataset make_blobs_with_origin_class(int n_classes, int per_class, std::size_t dim,
                                     double spread, std::uint64_t seed) {
  Dataset data = make_blobs(n_classes, per_class, dim, spread, seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t row = 0; row < data.samples.rows(); ++row) {
    if (data.labels[row] != 0) continue;
    for (std::size_t j = 0; j < dim; ++j) {
      data.samples(row, j) = spread * rng.normal();
    }
  }
  return data;
}

namespace {

std::uint32_t read_be_u32(std::istream& in, const char* field) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error(std::string("idx: truncated ") + field);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path,
                       const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("idx: cannot open images file " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("idx: cannot open labels file " + labels_path);

  const std::uint32_t img_magic = read_be_u32(img, "image magic");
  if (img_magic != 2051) {
    throw std::runtime_error("idx: bad image magic " + std::to_string(img_magic) +
                             " (expected 2051)");
  }
  const std::uint32_t n_images = read_be_u32(img, "image count");
  const std::uint32_t rows = read_be_u32(img, "image rows");
  const std::uint32_t cols = read_be_u32(img, "image cols");

  const std::uint32_t lab_magic = read_be_u32(lab, "label magic");
  if (lab_magic != 2049) {
    throw std::runtime_error("idx: bad label magic " + std::to_string(lab_magic) +
                             " (expected 2049)");
  }
  const std::uint32_t n_labels = read_be_u32(lab, "label count");
  if (n_images != n_labels) {
    throw std::runtime_error("idx: image count " + std::to_string(n_images) +
                             " does not match label count " +
                             std::to_string(n_labels));
  }

  const std::size_t pixels = std::size_t(rows) * cols;
  Dataset data;
  data.source = DataSource::MnistIdx;
  data.samples = Matrix(n_images, pixels);
  data.labels.resize(n_images);

  std::vector<unsigned char> buf(pixels);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
    if (!img) throw std::runtime_error("idx: truncated image data");
    for (std::size_t j = 0; j < pixels; ++j) {
      data.samples(i, j) = static_cast<double>(buf[j]) / 255.0;
    }
    char y;
    lab.read(&y, 1);
    if (!lab) throw std::runtime_error("idx: truncated label data");
    data.labels[i] = static_cast<unsigned char>(y);
  }
  return data;
}

void save_feature_store(const std::string& path, const Matrix& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("feature store: cannot open " + path);
  const std::uint64_t rows = features.rows();
  const std::uint64_t cols = features.cols();
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  out.write(reinterpret_cast<const char*>(features.data().data()),
            static_cast<std::streamsize>(features.data().size() * sizeof(double)));
  if (!out) throw std::runtime_error("feature store: write failed for " + path);
}

Matrix load_feature_store(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("feature store: cannot open " + path);
  std::uint64_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!in) throw std::runtime_error("feature store: truncated header in " + path);
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data().data()),
          static_cast<std::streamsize>(m.data().size() * sizeof(double)));
  if (!in) throw std::runtime_error("feature store: truncated data in " + path);
  return m;
}

}  // namespace hsphere

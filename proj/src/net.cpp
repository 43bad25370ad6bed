#include "hsphere/net.hpp"

#include <cmath>
#include <stdexcept>

namespace hsphere {

EmbeddingNet EmbeddingNet::init(const std::vector<std::size_t>& sizes, Rng& rng) {
  if (sizes.size() < 2) {
    throw std::invalid_argument("EmbeddingNet: need at least input and output sizes");
  }
  EmbeddingNet net;
  net.sizes_ = sizes;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(sizes[k]));
    net.weights_.push_back(rng.normal_matrix(sizes[k], sizes[k + 1], stddev));
    const bool final_layer = (k + 2 == sizes.size());
    net.biases_.emplace_back(final_layer ? 0 : sizes[k + 1], 0.0);
  }
  return net;
}

Matrix EmbeddingNet::forward(const Matrix& inputs) const {
  Cache cache;
  return forward(inputs, cache);
}

Matrix EmbeddingNet::forward(const Matrix& inputs, Cache& cache) const {
  if (inputs.cols() != input_dim()) {
    throw std::invalid_argument("EmbeddingNet::forward: input dim mismatch");
  }
  cache.activations.clear();
  cache.activations.push_back(inputs);
  Matrix x = inputs;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    Matrix z = matmul(x, weights_[k]);
    const bool final_layer = (k + 1 == weights_.size());
    if (!final_layer) {
      for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < z.cols(); ++j) {
          z(i, j) += biases_[k][j];
          if (z(i, j) < 0.0) z(i, j) = 0.0;
        }
    }
    cache.activations.push_back(z);
    x = cache.activations.back();
  }
  return cache.activations.back();
}

EmbeddingNet::Gradients EmbeddingNet::backward(const Cache& cache,
                                               const Matrix& grad_features) const {
  if (cache.activations.size() != weights_.size() + 1) {
    throw std::invalid_argument("EmbeddingNet::backward: stale cache");
  }
  Gradients grads;
  grads.weights.resize(weights_.size());
  grads.biases.resize(weights_.size());

  Matrix delta = grad_features;  // dL/d(layer output)
  for (std::size_t k = weights_.size(); k-- > 0;) {
    const bool final_layer = (k + 1 == weights_.size());
    if (!final_layer) {
      // Rectifier gate: the stored activation is already max(0, z).
      const Matrix& act = cache.activations[k + 1];
      for (std::size_t i = 0; i < delta.rows(); ++i)
        for (std::size_t j = 0; j < delta.cols(); ++j)
          if (act(i, j) <= 0.0) delta(i, j) = 0.0;
      grads.biases[k].assign(biases_[k].size(), 0.0);
      for (std::size_t i = 0; i < delta.rows(); ++i)
        for (std::size_t j = 0; j < delta.cols(); ++j)
          grads.biases[k][j] += delta(i, j);
    }
    grads.weights[k] = matmul(cache.activations[k].transposed(), delta);
    if (k > 0) delta = matmul(delta, weights_[k].transposed());
  }
  return grads;
}

}  // namespace hsphere

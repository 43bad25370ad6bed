#ifndef HSPHERE_NET_HPP
#define HSPHERE_NET_HPP

#include <vector>

#include "hsphere/matrix.hpp"

namespace hsphere {

/// Small multi-layer perceptron: rectifier hidden layers, linear final layer
/// with no bias so the emitted d-dimensional features are free to pass
/// through the origin.
class EmbeddingNet {
 public:
  EmbeddingNet() = default;

  /// sizes = {input, hidden..., feature_dim}. He-scaled normal init drawn
  /// from `rng`.
  static EmbeddingNet init(const std::vector<std::size_t>& sizes, Rng& rng);

  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t feature_dim() const { return sizes_.back(); }
  std::size_t layer_count() const { return weights_.size(); }

  Matrix forward(const Matrix& inputs) const;

  struct Cache {
    std::vector<Matrix> activations;  // activations[0] = inputs
  };
  Matrix forward(const Matrix& inputs, Cache& cache) const;

  struct Gradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
  };
  /// Backprop from dL/dfeatures. `cache` must come from the matching forward.
  Gradients backward(const Cache& cache, const Matrix& grad_features) const;

  std::vector<Matrix>& weights() { return weights_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  std::vector<std::vector<double>>& biases() { return biases_; }
  const std::vector<std::vector<double>>& biases() const { return biases_; }
  const std::vector<std::size_t>& sizes() const { return sizes_; }

  bool operator==(const EmbeddingNet& other) const = default;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<Matrix> weights_;               // layer k: sizes[k] x sizes[k+1]
  std::vector<std::vector<double>> biases_;   // final layer entry stays empty
};

}  // namespace hsphere

#endif  // HSPHERE_NET_HPP

#pragma once

#include <cstddef>
#include <random>

#include "csa/grid.hpp"

namespace csa {

// A trainable tensor. Gradients live on the tape, never on the parameter.
struct Param {
  Grid value;
};

// 1D convolution with "same" zero padding and stride 1. Weights are stored
// as an out x (in * k) grid; weight(o, i, j) = value(o, i * k + j).
struct Conv1dLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_size = 0;
  Param weight;
  Param bias;  // 1 x out

  Conv1dLayer() = default;
  Conv1dLayer(std::size_t in, std::size_t out, std::size_t k);

  double w(std::size_t o, std::size_t i, std::size_t j) const {
    return weight.value(o, i * kernel_size + j);
  }
  std::size_t parameter_count() const { return weight.value.size() + bias.value.size(); }
};

struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Param weight;  // out x in
  Param bias;    // 1 x out

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out);

  std::size_t parameter_count() const { return weight.value.size() + bias.value.size(); }
};

// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero bias.
void kaiming_init(Conv1dLayer& layer, std::mt19937_64& rng);
void kaiming_init(DenseLayer& layer, std::mt19937_64& rng);

}  // namespace csa

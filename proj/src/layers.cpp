#include "csa/layers.hpp"

#include <cmath>

#include "csa/errors.hpp"

namespace csa {

Conv1dLayer::Conv1dLayer(std::size_t in, std::size_t out, std::size_t k)
    : in_channels(in), out_channels(out), kernel_size(k) {
  if (k % 2 == 0) throw ConfigError("conv kernel size must be odd, got " + std::to_string(k));
  weight.value = Grid(out, in * k);
  bias.value = Grid(1, out);
}

DenseLayer::DenseLayer(std::size_t in, std::size_t out) : in_dim(in), out_dim(out) {
  weight.value = Grid(out, in);
  bias.value = Grid(1, out);
}

namespace {

void uniform_fill(Grid& g, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : g.values()) v = dist(rng);
}

}  // namespace

void kaiming_init(Conv1dLayer& layer, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(layer.in_channels * layer.kernel_size);
  uniform_fill(layer.weight.value, std::sqrt(6.0 / fan_in), rng);
  layer.bias.value.fill(0.0);
}

void kaiming_init(DenseLayer& layer, std::mt19937_64& rng) {
  uniform_fill(layer.weight.value, std::sqrt(6.0 / static_cast<double>(layer.in_dim)), rng);
  layer.bias.value.fill(0.0);
}

}  // namespace csa

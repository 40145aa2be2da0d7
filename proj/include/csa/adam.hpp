#pragma once

#include <span>
#include <vector>

#include "csa/grid.hpp"
#include "csa/layers.hpp"

namespace csa {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Grid> m;
  std::vector<Grid> v;
  long step = 0;
};

// One Adam update. Weight decay is the classical L2 term: wd * param is
// added to the gradient before the moment updates.
void adam_step(std::span<Param* const> params, std::span<const Grid> grads, AdamState& state,
               double lr, double weight_decay, const AdamOptions& opts = {});

}  // namespace csa

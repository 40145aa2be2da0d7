#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "csa/grid.hpp"
#include "csa/layers.hpp"
#include "csa/tape.hpp"

namespace csa {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error. Central differences at step
  // 1e-5 carry ~1e-11 round-off on O(1) losses, so gradients below the floor
  // are compared absolutely.
  double floor = 1e-6;
  // Largest share of probes that may be excluded for straddling a ReLU kink.
  double max_kink_fraction = 0.02;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  // Probes whose +-step stencil changed a ReLU sign; central differences are
  // not an oracle there, so they are excluded from max_rel_error.
  std::size_t kink_skipped = 0;
  bool passed = true;
};

// Builds a scalar loss from tape inputs (one per entry of `inputs`, in order).
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Compares the tape's gradients for every input element and every parameter
// element against central finite differences of the same loss. Inputs and
// parameters are perturbed in place and restored.
GradCheckResult check_gradients(const std::string& name, const LossBuilder& build,
                                std::vector<Grid>& inputs, const std::vector<Param*>& params,
                                const GradCheckOptions& opts = {});

// Every tensor op and every attention variant (plus the assembled pipeline at
// each insertion point), each over `num_seeds` seeds starting at `seed`.
// One result per case, aggregated over seeds.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, std::size_t num_seeds = 20,
                                                 const GradCheckOptions& opts = {});

}  // namespace csa

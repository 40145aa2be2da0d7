#include "csa/adam.hpp"

#include <cmath>

#include "csa/errors.hpp"

namespace csa {

void adam_step(std::span<Param* const> params, std::span<const Grid> grads, AdamState& state,
               double lr, double weight_decay, const AdamOptions& opts) {
  if (params.size() != grads.size()) throw ShapeError("adam: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const Param* p : params) {
      state.m.emplace_back(p->value.rows(), p->value.cols());
      state.v.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->value.same_shape(grads[i]) || !state.m[i].same_shape(grads[i])) {
      throw ShapeError("adam: shape mismatch for parameter " + std::to_string(i));
    }
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Grid& w = params[i]->value;
    Grid& m = state.m[i];
    Grid& v = state.v[i];
    const Grid& g = grads[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] + weight_decay * w[j];
      m[j] = opts.beta1 * m[j] + (1.0 - opts.beta1) * gj;
      v[j] = opts.beta2 * v[j] + (1.0 - opts.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + opts.eps);
    }
  }
}

}  // namespace csa

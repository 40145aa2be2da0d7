#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "csa/grid.hpp"
#include "csa/layers.hpp"

namespace csa {

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

// Records forward operations and replays them in reverse to accumulate
// gradients. Vectors are stored as 1 x n grids. Parameters are read, never
// written: their gradients are kept on the tape, so several tapes may run
// over the same model concurrently.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var input(Grid value);

  Var conv1d(const Conv1dLayer& layer, Var x);
  Var dense(const DenseLayer& layer, Var v);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var mean_over_rows(Var x);
  Var mean_over_cols(Var x);
  Var broadcast_mul_row(Var a, Var x);
  Var broadcast_mul_col(Var a, Var x);
  Var concat_rows(Var x, Var y);
  Var add(Var x, Var y);
  Var scale(Var x, double factor);
  // Sum of all elements, 1 x 1.
  Var sum(Var x);
  // Sum of weights[i] * x[i], 1 x 1.
  Var weighted_sum(Var x, const Grid& weights);
  // Class-balanced binary cross-entropy of probabilities p against 0/1
  // targets: positives and negatives each contribute half. Falls back to the
  // plain mean BCE when either class is absent. Probabilities are clamped to
  // [1e-7, 1 - 1e-7].
  Var balanced_bce(Var p, std::span<const double> targets);

  const Grid& value(Var v) const;
  const Grid& grad(Var v) const;
  double scalar(Var v) const;

  // Seeds d(loss) = loss_grad and runs every recorded op once, newest first.
  void backward(Var loss, double loss_grad = 1.0);

  // Gradient accumulated for a parameter; zeros if the parameter was never
  // touched by a recorded op.
  Grid param_grad(const Param& p) const;

  std::size_t size() const { return nodes_.size(); }

  // Sign pattern (input > 0) of every ReLU recorded so far, in order. Two
  // evaluations with equal patterns lie on the same smooth piece.
  const std::vector<bool>& relu_pattern() const { return relu_pattern_; }

 private:
  struct Node {
    Grid value;
    Grid grad;
    std::function<void(Tape&, std::size_t)> backward;
  };

  Var push(Grid value, std::function<void(Tape&, std::size_t)> backward);
  Node& node(Var v);
  const Node& node(Var v) const;
  Grid& param_grad_mut(const Param& p);

  std::vector<Node> nodes_;
  std::unordered_map<const Param*, Grid> param_grads_;
  std::vector<bool> relu_pattern_;
  bool consumed_ = false;
};

}  // namespace csa

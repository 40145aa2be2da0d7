#include "csa/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "csa/errors.hpp"
#include "csa/ops.hpp"

namespace csa {

namespace {

constexpr double kProbClamp = 1e-7;

void add_into(Grid& dst, const Grid& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void require_row_vector(const Grid& g, const char* op) {
  if (g.rows() != 1) throw ShapeError(std::string(op) + " expects a 1 x n vector");
}

}  // namespace

Var Tape::push(Grid value, std::function<void(Tape&, std::size_t)> backward) {
  if (consumed_) throw StateError("tape already replayed; record on a fresh tape");
  nodes_.push_back(Node{std::move(value), Grid{}, std::move(backward)});
  return Var{nodes_.size() - 1};
}

Tape::Node& Tape::node(Var v) {
  if (v.id >= nodes_.size()) throw StateError("variable does not belong to this tape");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw StateError("variable does not belong to this tape");
  return nodes_[v.id];
}

Grid& Tape::param_grad_mut(const Param& p) {
  auto [it, inserted] = param_grads_.try_emplace(&p);
  if (inserted) it->second = Grid(p.value.rows(), p.value.cols());
  return it->second;
}

Var Tape::input(Grid value) { return push(std::move(value), nullptr); }

Var Tape::conv1d(const Conv1dLayer& layer, Var xv) {
  Grid out = ops::conv1d_same(layer, value(xv));
  const Conv1dLayer* lp = &layer;
  return push(std::move(out), [lp, xv](Tape& tape, std::size_t self) {
    const Grid& g = tape.nodes_[self].grad;
    const Grid& x = tape.nodes_[xv.id].value;
    Grid& gx = tape.nodes_[xv.id].grad;
    Grid& gw = tape.param_grad_mut(lp->weight);
    Grid& gb = tape.param_grad_mut(lp->bias);
    const std::size_t cols = x.cols();
    const std::size_t k = lp->kernel_size;
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    for (std::size_t o = 0; o < lp->out_channels; ++o) {
      double bsum = 0.0;
      for (std::size_t t = 0; t < cols; ++t) bsum += g(o, t);
      gb[o] += bsum;
      for (std::size_t i = 0; i < lp->in_channels; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
          const auto lo = std::max<std::ptrdiff_t>(0, -shift);
          const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(cols),
                                                   static_cast<std::ptrdiff_t>(cols) - shift);
          const double w = lp->w(o, i, j);
          double wacc = 0.0;
          for (std::ptrdiff_t t = lo; t < hi; ++t) {
            const auto tu = static_cast<std::size_t>(t);
            const auto src = static_cast<std::size_t>(t + shift);
            wacc += g(o, tu) * x(i, src);
            gx(i, src) += g(o, tu) * w;
          }
          gw(o, i * k + j) += wacc;
        }
      }
    }
  });
}

Var Tape::dense(const DenseLayer& layer, Var vv) {
  const Grid& v = value(vv);
  require_row_vector(v, "dense");
  Grid out = Grid::row(ops::dense(layer, v.values()));
  const DenseLayer* lp = &layer;
  return push(std::move(out), [lp, vv](Tape& tape, std::size_t self) {
    const Grid& g = tape.nodes_[self].grad;
    const Grid& v = tape.nodes_[vv.id].value;
    Grid& gv = tape.nodes_[vv.id].grad;
    Grid& gw = tape.param_grad_mut(lp->weight);
    Grid& gb = tape.param_grad_mut(lp->bias);
    for (std::size_t o = 0; o < lp->out_dim; ++o) {
      gb[o] += g[o];
      for (std::size_t i = 0; i < lp->in_dim; ++i) {
        gw(o, i) += g[o] * v[i];
        gv[i] += g[o] * lp->weight.value(o, i);
      }
    }
  });
}

Var Tape::relu(Var xv) {
  for (double v : value(xv).values()) relu_pattern_.push_back(v > 0.0);
  Grid out = ops::relu(value(xv));
  return push(std::move(out), [xv](Tape& tape, std::size_t self) {
    const Grid& g = tape.nodes_[self].grad;
    const Grid& x = tape.nodes_[xv.id].value;
    Grid& gx = tape.nodes_[xv.id].grad;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > 0.0) gx[i] += g[i];
  });
}

Var Tape::sigmoid(Var xv) {
  Grid out = ops::sigmoid(value(xv));
  return push(std::move(out), [xv](Tape& tape, std::size_t self) {
    const Grid& g = tape.nodes_[self].grad;
    const Grid& s = tape.nodes_[self].value;
    Grid& gx = tape.nodes_[xv.id].grad;
    for (std::size_t i = 0; i < s.size(); ++i) gx[i] += g[i] * s[i] * (1.0 - s[i]);
  });
}

Var Tape::mean_over_rows(Var xv) {
  Grid out = Grid::row(ops::mean_over_rows(value(xv)));
  return push(std::move(out), [xv](Tape& tape, std::size_t self) {
    const Grid& g = tape.nodes_[self].grad;
    Grid& gx = tape.nodes_[xv.id].grad;
    const double inv = 1.0 / static_cast<double>(gx.rows());
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t t = 0; t < gx.cols(); ++t) gx(r, t) += g[t] * inv;
  });
}

Var Tape::mean_over_cols(Var xv) {
  Grid out = Grid::row(ops::mean_over_cols(value(xv)));
  return push(std::move(out), [xv](Tape& tape, std::size_t self) {
    const Grid& g = tape.nodes_[self].grad;
    Grid& gx = tape.nodes_[xv.id].grad;
    const double inv = 1.0 / static_cast<double>(gx.cols());
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t t = 0; t < gx.cols(); ++t) gx(r, t) += g[r] * inv;
  });
}

Var Tape::broadcast_mul_row(Var av, Var xv) {
  const Grid& a = value(av);
  require_row_vector(a, "broadcast_mul_row");
  Grid out = ops::broadcast_mul_row(a.values(), value(xv));
  return push(std::move(out), [av, xv](Tape& tape, std::size_t self) {
    const Grid& g = tape.nodes_[self].grad;
    const Grid& a = tape.nodes_[av.id].value;
    const Grid& x = tape.nodes_[xv.id].value;
    Grid& ga = tape.nodes_[av.id].grad;
    Grid& gx = tape.nodes_[xv.id].grad;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t t = 0; t < x.cols(); ++t) {
        ga[t] += g(r, t) * x(r, t);
        gx(r, t) += g(r, t) * a[t];
      }
    }
  });
}

Var Tape::broadcast_mul_col(Var av, Var xv) {
  const Grid& a = value(av);
  require_row_vector(a, "broadcast_mul_col");
  Grid out = ops::broadcast_mul_col(a.values(), value(xv));
  return push(std::move(out), [av, xv](Tape& tape, std::size_t self) {
    const Grid& g = tape.nodes_[self].grad;
    const Grid& a = tape.nodes_[av.id].value;
    const Grid& x = tape.nodes_[xv.id].value;
    Grid& ga = tape.nodes_[av.id].grad;
    Grid& gx = tape.nodes_[xv.id].grad;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t t = 0; t < x.cols(); ++t) {
        ga[r] += g(r, t) * x(r, t);
        gx(r, t) += g(r, t) * a[r];
      }
    }
  });
}

Var Tape::concat_rows(Var xv, Var yv) {
  Grid out = ops::concat_rows(value(xv), value(yv));
  return push(std::move(out), [xv, yv](Tape& tape, std::size_t self) {
    const Grid& g = tape.nodes_[self].grad;
    Grid& gx = tape.nodes_[xv.id].grad;
    Grid& gy = tape.nodes_[yv.id].grad;
    const std::size_t split = gx.size();
    for (std::size_t i = 0; i < split; ++i) gx[i] += g[i];
    for (std::size_t i = 0; i < gy.size(); ++i) gy[i] += g[split + i];
  });
}

Var Tape::add(Var xv, Var yv) {
  Grid out = ops::add(value(xv), value(yv));
  return push(std::move(out), [xv, yv](Tape& tape, std::size_t self) {
    const Grid& g = tape.nodes_[self].grad;
    add_into(tape.nodes_[xv.id].grad, g);
    add_into(tape.nodes_[yv.id].grad, g);
  });
}

Var Tape::scale(Var xv, double factor) {
  Grid out = value(xv);
  for (double& v : out.values()) v *= factor;
  return push(std::move(out), [xv, factor](Tape& tape, std::size_t self) {
    const Grid& g = tape.nodes_[self].grad;
    Grid& gx = tape.nodes_[xv.id].grad;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * factor;
  });
}

Var Tape::sum(Var xv) {
  double acc = 0.0;
  for (double v : value(xv).values()) acc += v;
  return push(Grid(1, 1, acc), [xv](Tape& tape, std::size_t self) {
    const double g = tape.nodes_[self].grad[0];
    for (double& v : tape.nodes_[xv.id].grad.values()) v += g;
  });
}

Var Tape::weighted_sum(Var xv, const Grid& weights) {
  const Grid& x = value(xv);
  if (!x.same_shape(weights)) throw ShapeError("weighted_sum weights must match the input shape");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += weights[i] * x[i];
  return push(Grid(1, 1, acc), [xv, weights](Tape& tape, std::size_t self) {
    const double g = tape.nodes_[self].grad[0];
    Grid& gx = tape.nodes_[xv.id].grad;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * weights[i];
  });
}

Var Tape::balanced_bce(Var pv, std::span<const double> targets) {
  const Grid& p = value(pv);
  if (p.size() != targets.size()) {
    throw ShapeError("balanced_bce: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(p.size()) + " probabilities");
  }
  std::size_t num_pos = 0;
  for (double y : targets) num_pos += y > 0.5 ? 1 : 0;
  const std::size_t n = targets.size();
  const std::size_t num_neg = n - num_pos;
  // Per-element weights so that positives and negatives each carry half.
  double w_pos = 1.0 / static_cast<double>(n);
  double w_neg = w_pos;
  if (num_pos > 0 && num_neg > 0) {
    w_pos = 0.5 / static_cast<double>(num_pos);
    w_neg = 0.5 / static_cast<double>(num_neg);
  }
  Grid weights(p.rows(), p.cols());
  std::vector<double> tgt(targets.begin(), targets.end());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
    if (tgt[i] > 0.5) {
      weights[i] = w_pos;
      loss -= w_pos * std::log(q);
    } else {
      weights[i] = w_neg;
      loss -= w_neg * std::log(1.0 - q);
    }
  }
  return push(Grid(1, 1, loss), [pv, weights, tgt](Tape& tape, std::size_t self) {
    const double g = tape.nodes_[self].grad[0];
    const Grid& p = tape.nodes_[pv.id].value;
    Grid& gp = tape.nodes_[pv.id].grad;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] < kProbClamp || p[i] > 1.0 - kProbClamp) continue;
      if (tgt[i] > 0.5) {
        gp[i] -= g * weights[i] / p[i];
      } else {
        gp[i] += g * weights[i] / (1.0 - p[i]);
      }
    }
  });
}

const Grid& Tape::value(Var v) const { return node(v).value; }

const Grid& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) throw StateError("gradient requested before backward");
  return n.grad;
}

double Tape::scalar(Var v) const {
  const Grid& g = value(v);
  if (g.size() != 1) throw ShapeError("scalar() on a non-scalar value");
  return g[0];
}

void Tape::backward(Var loss, double loss_grad) {
  if (nodes_.empty()) throw StateError("backward called before any forward op was recorded");
  if (consumed_) throw StateError("backward already ran on this tape");
  if (value(loss).size() != 1) throw StateError("backward requires a scalar loss");
  for (Node& n : nodes_) n.grad = Grid(n.value.rows(), n.value.cols());
  nodes_[loss.id].grad[0] = loss_grad;
  consumed_ = true;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this, i);
  }
}

Grid Tape::param_grad(const Param& p) const {
  auto it = param_grads_.find(&p);
  if (it == param_grads_.end()) return Grid(p.value.rows(), p.value.cols());
  return it->second;
}

}  // namespace csa

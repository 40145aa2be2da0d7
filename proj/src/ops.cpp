#include "csa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "csa/errors.hpp"

namespace csa::ops {

namespace {

std::string shape_str(const Grid& g) {
  return std::to_string(g.rows()) + "x" + std::to_string(g.cols());
}

}  // namespace

Grid conv1d_same(const Conv1dLayer& layer, const Grid& x) {
  if (x.rows() != layer.in_channels) {
    throw ShapeError("conv1d expects " + std::to_string(layer.in_channels) +
                     " input channels, got " + shape_str(x));
  }
  const std::size_t cols = x.cols();
  const std::size_t k = layer.kernel_size;
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  Grid out(layer.out_channels, cols);
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    const double b = layer.bias.value[o];
    for (std::size_t t = 0; t < cols; ++t) out(o, t) = b;
    for (std::size_t i = 0; i < layer.in_channels; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const double w = layer.w(o, i, j);
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
        const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
        const std::size_t t1 =
            shift > 0 ? (cols > static_cast<std::size_t>(shift) ? cols - shift : 0) : cols;
        for (std::size_t t = t0; t < t1; ++t) out(o, t) += w * x(i, t + shift);
      }
    }
  }
  return out;
}

Vec1 dense(const DenseLayer& layer, std::span<const double> v) {
  if (v.size() != layer.in_dim) {
    throw ShapeError("dense expects length " + std::to_string(layer.in_dim) + ", got " +
                     std::to_string(v.size()));
  }
  Vec1 out(layer.out_dim);
  for (std::size_t o = 0; o < layer.out_dim; ++o) {
    double acc = layer.bias.value[o];
    const auto row = layer.weight.value.row_span(o);
    for (std::size_t i = 0; i < layer.in_dim; ++i) acc += row[i] * v[i];
    out[o] = acc;
  }
  return out;
}

Grid relu(const Grid& x) {
  Grid out = x;
  for (double& v : out.values()) v = std::max(0.0, v);
  return out;
}

Vec1 relu(std::span<const double> v) {
  Vec1 out(v.begin(), v.end());
  for (double& x : out) x = std::max(0.0, x);
  return out;
}

double sigmoid(double x) {
  // Kept strictly inside (0, 1) even where the exact value rounds to 0 or 1.
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  double s;
  if (x >= 0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return std::clamp(s, lo, hi);
}

Vec1 sigmoid(std::span<const double> v) {
  Vec1 out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return sigmoid(x); });
  return out;
}

Grid sigmoid(const Grid& x) {
  Grid out = x;
  for (double& v : out.values()) v = sigmoid(v);
  return out;
}

Vec1 mean_over_rows(const Grid& x) {
  Vec1 out(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t t = 0; t < x.cols(); ++t) out[t] += x(r, t);
  const double n = static_cast<double>(x.rows());
  for (double& v : out) v /= n;
  return out;
}

Vec1 mean_over_cols(const Grid& x) {
  Vec1 out(x.rows(), 0.0);
  const double n = static_cast<double>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t t = 0; t < x.cols(); ++t) acc += x(r, t);
    out[r] = acc / n;
  }
  return out;
}

Grid broadcast_mul_row(std::span<const double> a, const Grid& x) {
  if (a.size() != x.cols()) {
    throw ShapeError("row broadcast needs length " + std::to_string(x.cols()) + ", got " +
                     std::to_string(a.size()));
  }
  Grid out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t t = 0; t < x.cols(); ++t) out(r, t) = a[t] * x(r, t);
  return out;
}

Grid broadcast_mul_col(std::span<const double> a, const Grid& x) {
  if (a.size() != x.rows()) {
    throw ShapeError("column broadcast needs length " + std::to_string(x.rows()) + ", got " +
                     std::to_string(a.size()));
  }
  Grid out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t t = 0; t < x.cols(); ++t) out(r, t) = a[r] * x(r, t);
  return out;
}

Grid concat_rows(const Grid& x, const Grid& y) {
  if (x.cols() != y.cols()) {
    throw ShapeError("concat_rows column mismatch: " + shape_str(x) + " vs " + shape_str(y));
  }
  std::vector<double> v(x.values().begin(), x.values().end());
  v.insert(v.end(), y.values().begin(), y.values().end());
  return Grid(x.rows() + y.rows(), x.cols(), std::move(v));
}

Grid add(const Grid& x, const Grid& y) {
  if (!x.same_shape(y)) throw ShapeError("add shape mismatch: " + shape_str(x) + " vs " + shape_str(y));
  Grid out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return out;
}

}  // namespace csa::ops

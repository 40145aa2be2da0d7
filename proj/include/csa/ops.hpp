#pragma once

// Forward-only tensor operations. The tape (tape.hpp) records the same
// operations together with their reverse-mode derivatives.

#include <span>

#include "csa/grid.hpp"
#include "csa/layers.hpp"

namespace csa::ops {

// Cross-correlation (no kernel flip), zero padding (k-1)/2 on each side.
Grid conv1d_same(const Conv1dLayer& layer, const Grid& x);

Vec1 dense(const DenseLayer& layer, std::span<const double> v);

Grid relu(const Grid& x);
Vec1 relu(std::span<const double> v);

double sigmoid(double x);
Vec1 sigmoid(std::span<const double> v);
Grid sigmoid(const Grid& x);

// Mean over the channel axis; length cols.
Vec1 mean_over_rows(const Grid& x);
// Mean over the temporal axis; length rows.
Vec1 mean_over_cols(const Grid& x);

// out(c, t) = a[t] * x(c, t)
Grid broadcast_mul_row(std::span<const double> a, const Grid& x);
// out(c, t) = a[c] * x(c, t)
Grid broadcast_mul_col(std::span<const double> a, const Grid& x);

// x stacked above y.
Grid concat_rows(const Grid& x, const Grid& y);

Grid add(const Grid& x, const Grid& y);

}  // namespace csa::ops

#include "csa/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "csa/errors.hpp"

namespace csa {

namespace {

void check_dims(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("grid dimensions must be positive, got " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

}  // namespace

Grid::Grid(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {
  check_dims(rows, cols);
}

Grid::Grid(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  check_dims(rows, cols);
  if (values_.size() != rows * cols) {
    throw ShapeError("grid value count " + std::to_string(values_.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Grid::Grid(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  check_dims(rows_, cols_);
  values_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged grid initializer");
    values_.insert(values_.end(), r.begin(), r.end());
  }
}

Grid Grid::row(std::span<const double> v) {
  return Grid(1, v.size(), std::vector<double>(v.begin(), v.end()));
}

bool Grid::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

void Grid::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

}  // namespace csa

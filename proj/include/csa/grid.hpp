#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace csa {

using Vec1 = std::vector<double>;

// Dense row-major matrix. Rows are channels, columns are timepoints.
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, double fill = 0.0);
  Grid(std::size_t rows, std::size_t cols, std::vector<double> values);
  Grid(std::initializer_list<std::initializer_list<double>> rows);

  static Grid row(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> row_span(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * cols_, cols_);
  }

  bool same_shape(const Grid& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;
  void fill(double v);

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

}  // namespace csa

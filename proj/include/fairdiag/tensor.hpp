#pragma once

#include <cassert>
#include <initializer_list>
#include <string>
#include <vector>

namespace fairdiag {

// Dense row-major matrix of doubles. Row/column vectors are 1xC / Rx1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {
    assert(rows >= 0 && cols >= 0);
  }

  static Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }

  static Tensor full(int rows, int cols, double v) {
    Tensor t(rows, cols);
    for (auto& x : t.data_) x = v;
    return t;
  }

  static Tensor row(std::initializer_list<double> vals) {
    Tensor t(1, static_cast<int>(vals.size()));
    int j = 0;
    for (double v : vals) t(0, j++) = v;
    return t;
  }

  static Tensor column(const std::vector<double>& vals) {
    Tensor t(static_cast<int>(vals.size()), 1);
    for (size_t i = 0; i < vals.size(); ++i) t.data_[i] = vals[i];
    return t;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int r, int c) {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<size_t>(r) * cols_ + c];
  }
  double operator()(int r, int c) const {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<size_t>(r) * cols_ + c];
  }

  double& at(size_t i) { return data_[i]; }
  double at(size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_str() const;

  void fill(double v) {
    for (auto& x : data_) x = v;
  }
  void zero() { fill(0.0); }

  bool all_finite() const;
  // Throws NumericError naming `what` if any entry is NaN/Inf.
  void require_finite(const char* what) const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

}  // namespace fairdiag

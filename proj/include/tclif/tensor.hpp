// Copyright 2026 The tclif-eprop Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dense row-major storage used throughout the library. Every buffer goes
// through TrackedAllocator so that MemoryMeter can report how many reals a
// trainer holds at any instant.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "tclif/errors.hpp"

namespace tclif {

class MemoryMeter {
 public:
  static void on_alloc(std::size_t bytes) {
    const std::size_t now = current_.fetch_add(bytes) + bytes;
    std::size_t peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
  }
  static void on_free(std::size_t bytes) { current_.fetch_sub(bytes); }

  static std::size_t current_bytes() { return current_.load(); }
  static std::size_t peak_bytes() { return peak_.load(); }
  static std::size_t current_reals() { return current_bytes() / sizeof(double); }
  static std::size_t peak_reals() { return peak_bytes() / sizeof(double); }

  // Restarts peak tracking from the current level.
  static void reset_peak() { peak_.store(current_.load()); }

 private:
  inline static std::atomic<std::size_t> current_{0};
  inline static std::atomic<std::size_t> peak_{0};
};

template <typename T>
struct TrackedAllocator {
  using value_type = T;

  TrackedAllocator() noexcept = default;
  template <typename U>
  TrackedAllocator(const TrackedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    T* p = std::allocator<T>{}.allocate(n);
    MemoryMeter::on_alloc(n * sizeof(T));
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    MemoryMeter::on_free(n * sizeof(T));
    std::allocator<T>{}.deallocate(p, n);
  }

  template <typename U>
  bool operator==(const TrackedAllocator<U>&) const noexcept {
    return true;
  }
};

using Vector = std::vector<double, TrackedAllocator<double>>;

inline Vector zeros(std::size_t n) { return Vector(n, 0.0); }

// Row-major matrix. Rows index the post-synaptic (or batch) dimension.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void resize(std::size_t rows, std::size_t cols, double fill = 0.0) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, fill);
  }

  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

// Read-only view of a (rows x cols) row-major block, e.g. one time frame of a
// sequence batch.
struct MatrixView {
  const double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  MatrixView() = default;
  MatrixView(const double* d, std::size_t r, std::size_t c)
      : data(d), rows(r), cols(c) {}
  MatrixView(const Matrix& m)  // NOLINT(google-explicit-constructor)
      : data(m.data()), rows(m.rows()), cols(m.cols()) {}

  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  std::span<const double> row(std::size_t r) const {
    return {data + r * cols, cols};
  }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// out[b][j] += sum_i w[j][i] * x[b][i]
inline void add_matmul_transposed(Matrix& out, MatrixView x, const Matrix& w) {
  check_shape(x.cols == w.cols() && out.rows() == x.rows &&
                  out.cols() == w.rows(),
              "add_matmul_transposed: dimension mismatch");
  for (std::size_t b = 0; b < x.rows; ++b) {
    const auto xb = x.row(b);
    auto ob = out.row(b);
    for (std::size_t j = 0; j < w.rows(); ++j) ob[j] += dot(w.row(j), xb);
  }
}

// out[b][i] += sum_j d[b][j] * w[j][i]
inline void add_matmul(Matrix& out, MatrixView d, const Matrix& w) {
  check_shape(d.cols == w.rows() && out.rows() == d.rows &&
                  out.cols() == w.cols(),
              "add_matmul: dimension mismatch");
  for (std::size_t b = 0; b < d.rows; ++b) {
    const auto db = d.row(b);
    auto ob = out.row(b);
    for (std::size_t j = 0; j < w.rows(); ++j) {
      const double dj = db[j];
      if (dj == 0.0) continue;
      const auto wj = w.row(j);
      for (std::size_t i = 0; i < ob.size(); ++i) ob[i] += dj * wj[i];
    }
  }
}

// g[j][i] += sum_b d[b][j] * x[b][i]
inline void add_outer_batch(Matrix& g, MatrixView d, MatrixView x) {
  check_shape(d.rows == x.rows && g.rows() == d.cols && g.cols() == x.cols,
              "add_outer_batch: dimension mismatch");
  for (std::size_t b = 0; b < d.rows; ++b) {
    const auto db = d.row(b);
    const auto xb = x.row(b);
    for (std::size_t j = 0; j < g.rows(); ++j) {
      const double dj = db[j];
      if (dj == 0.0) continue;
      auto gj = g.row(j);
      for (std::size_t i = 0; i < gj.size(); ++i) gj[i] += dj * xb[i];
    }
  }
}

// Largest |a - b| over |b|'s largest magnitude; the comparison metric used by
// every gradient oracle in the library.
inline double max_rel_error(std::span<const double> a, std::span<const double> b) {
  check_shape(a.size() == b.size(), "max_rel_error: size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  if (den == 0.0) return num;
  return num / den;
}

}  // namespace tclif

#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "facecloak/rng.hpp"

namespace facecloak {

// Dense row-major matrix, just enough for the adapter maps in this project.
template <typename S>
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<S> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, S(0)) {}

  S& at(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  S at(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

  static Matrix random_normal(int r, int c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    rng.fill_normal(std::span<S>(m.a), scale);
    return m;
  }
};

template <typename S>
void matvec(const Matrix<S>& m, std::span<const S> x, std::span<S> y) {
  assert(static_cast<int>(x.size()) == m.cols && static_cast<int>(y.size()) == m.rows);
  for (int i = 0; i < m.rows; ++i) {
    S acc = S(0);
    const S* row = m.a.data() + static_cast<size_t>(i) * m.cols;
    for (int j = 0; j < m.cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

template <typename S>
void matvec_transposed(const Matrix<S>& m, std::span<const S> x, std::span<S> y) {
  assert(static_cast<int>(x.size()) == m.rows && static_cast<int>(y.size()) == m.cols);
  std::fill(y.begin(), y.end(), S(0));
  for (int i = 0; i < m.rows; ++i) {
    const S xi = x[i];
    const S* row = m.a.data() + static_cast<size_t>(i) * m.cols;
    for (int j = 0; j < m.cols; ++j) y[j] += row[j] * xi;
  }
}

template <typename S>
double dot(std::span<const S> a, std::span<const S> b) {
  assert(a.size() == b.size());
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

template <typename S>
double norm2(std::span<const S> a) {
  return std::sqrt(dot(a, a));
}

// In-place modified Gram-Schmidt on the columns. Requires rows >= cols and
// numerically independent columns, which random Gaussian draws provide.
template <typename S>
void orthonormalize_columns(Matrix<S>& m) {
  for (int j = 0; j < m.cols; ++j) {
    for (int k = 0; k < j; ++k) {
      double proj = 0.0;
      for (int i = 0; i < m.rows; ++i) proj += static_cast<double>(m.at(i, k)) * m.at(i, j);
      for (int i = 0; i < m.rows; ++i) m.at(i, j) -= static_cast<S>(proj) * m.at(i, k);
    }
    double n = 0.0;
    for (int i = 0; i < m.rows; ++i) n += static_cast<double>(m.at(i, j)) * m.at(i, j);
    n = std::sqrt(n);
    assert(n > 0.0);
    for (int i = 0; i < m.rows; ++i) m.at(i, j) = static_cast<S>(m.at(i, j) / n);
  }
}

}  // namespace facecloak

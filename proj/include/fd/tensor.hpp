#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fd/error.hpp"

namespace fd {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense row-major tensor. Plain value type: ops produce fresh tensors and
// never alias, which is what makes tape nodes safe to share across reads.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> values;

  Tensor() = default;
  Tensor(Shape s, std::vector<T> v) : shape(std::move(s)), values(std::move(v)) {
    if (shape_numel(shape) != values.size())
      throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
  }

  static Tensor zeros(Shape s) {
    std::vector<T> v(shape_numel(s), T(0));
    return Tensor(std::move(s), std::move(v));
  }

  static Tensor full(Shape s, T fill) {
    std::vector<T> v(shape_numel(s), fill);
    return Tensor(std::move(s), std::move(v));
  }

  static Tensor scalar(T x) { return Tensor({1}, {x}); }

  std::size_t numel() const { return values.size(); }
  bool empty() const { return values.empty(); }

  // 2-D helpers; most of the project lives in matrices.
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  T& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  std::span<const T> row(std::size_t r) const {
    return std::span<const T>(values.data() + r * cols(), cols());
  }
  std::span<T> row(std::size_t r) {
    return std::span<T>(values.data() + r * cols(), cols());
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> v(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) v[i] = static_cast<U>(values[i]);
    return Tensor<U>(shape, std::move(v));
  }
};

// NaN/Inf is an error state, never silent: every op in the numeric core
// funnels its result through this check.
template <typename T>
inline void ensure_finite(const Tensor<T>& t, const char* op) {
  for (const T& x : t.values) {
    if (!std::isfinite(static_cast<double>(x)))
      throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

template <typename T>
inline Tensor<T> make_matrix(std::size_t r, std::size_t c, std::initializer_list<T> v) {
  return Tensor<T>({r, c}, std::vector<T>(v));
}

}  // namespace fd

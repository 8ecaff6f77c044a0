#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "restore/errors.hh"

namespace restore {

using Shape = std::vector<std::size_t>;

/// Numeric mode of a build path. Training defaults to Single; gradient
/// checking always runs Double.
enum class Precision { Single, Double };

template <Precision P>
struct PrecisionScalar;
template <>
struct PrecisionScalar<Precision::Single> {
  using type = float;
};
template <>
struct PrecisionScalar<Precision::Double> {
  using type = double;
};

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

/// Dense n-dimensional array, row-major flat storage. The one value type for
/// images, activations, weights and gradients. Dimensions must be positive;
/// data length always equals the shape product.
template <typename S>
struct Tensor {
  Shape shape;
  std::vector<S> data;

  Tensor() = default;

  explicit Tensor(Shape sh) : shape(std::move(sh)) {
    check_dims(shape);
    data.assign(shape_numel(shape), S(0));
  }

  Tensor(Shape sh, std::vector<S> values) : shape(std::move(sh)), data(std::move(values)) {
    check_dims(shape);
    if (data.size() != shape_numel(shape))
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
  }

  Tensor(Shape sh, std::initializer_list<S> values)
      : Tensor(std::move(sh), std::vector<S>(values)) {}

  static Tensor zeros(Shape sh) { return Tensor(std::move(sh)); }

  static Tensor full(Shape sh, S v) {
    Tensor t(std::move(sh));
    t.data.assign(t.data.size(), v);
    return t;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }

  S& operator()(std::size_t i) { return data[i]; }
  S operator()(std::size_t i) const { return data[i]; }
  S& operator()(std::size_t i, std::size_t j) {
    assert(rank() == 2);
    return data[i * shape[1] + j];
  }
  S operator()(std::size_t i, std::size_t j) const {
    assert(rank() == 2);
    return data[i * shape[1] + j];
  }
  S& operator()(std::size_t i, std::size_t j, std::size_t k) {
    assert(rank() == 3);
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  S operator()(std::size_t i, std::size_t j, std::size_t k) const {
    assert(rank() == 3);
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  S& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    assert(rank() == 4);
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }
  S operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    assert(rank() == 4);
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }

  /// Same data, new shape. Row-major layout makes this a relabeling only.
  Tensor reshaped(Shape sh) const {
    if (shape_numel(sh) != numel())
      throw ShapeError("cannot reshape " + shape_str(shape) + " to " + shape_str(sh));
    Tensor t;
    t.shape = std::move(sh);
    t.data = data;
    return t;
  }

  /// Contiguous row r of the last axis group; for an image [..,H,W] this is
  /// the zero-copy row view the decoder consumes.
  std::span<const S> row_span(std::size_t flat_row) const {
    std::size_t w = shape.back();
    return std::span<const S>(data.data() + flat_row * w, w);
  }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

 private:
  static void check_dims(const Shape& sh) {
    for (std::size_t d : sh)
      if (d == 0) throw ShapeError("zero-size dimension in shape " + shape_str(sh));
  }
};

}  // namespace restore

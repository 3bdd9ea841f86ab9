#pragma once

#include <bitquant/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace bitquant {

using Shape = std::vector<std::uint32_t>;

inline std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

inline std::string shape_to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Named n-dimensional FP32 array, row-major.
struct Tensor {
  std::string name;
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::string name_, Shape shape_, std::vector<float> data_)
      : name(std::move(name_)), shape(std::move(shape_)), data(std::move(data_)) {}

  std::size_t size() const noexcept { return data.size(); }
  std::span<const float> values() const noexcept { return data; }

  // Throws if the data length disagrees with the shape, a dimension is zero,
  // or a value is not finite.
  void validate() const {
    if (shape.empty() && data.size() != 1)
      throw ShapeError("tensor '" + name + "': scalar tensor must hold one value");
    for (auto d : shape)
      if (d == 0) throw ShapeError("tensor '" + name + "': zero dimension in " + shape_to_string(shape));
    if (element_count(shape) != data.size())
      throw ShapeError("tensor '" + name + "': shape " + shape_to_string(shape) + " needs " +
                       std::to_string(element_count(shape)) + " values, got " +
                       std::to_string(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i)
      if (!std::isfinite(data[i]))
        throw ValidationError("tensor '" + name + "': non-finite value at index " + std::to_string(i));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Number of slices along `axis` and the elements in each.
struct AxisLayout {
  std::size_t outer = 1;     // product of dims before axis
  std::size_t channels = 1;  // dim at axis
  std::size_t inner = 1;     // product of dims after axis
};

inline AxisLayout axis_layout(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size())
    throw ArgumentError("axis " + std::to_string(axis) + " out of range for shape " +
                        shape_to_string(shape));
  AxisLayout l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  l.channels = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

// Copies out the elements whose index along `axis` equals `channel`.
inline std::vector<float> channel_slice(const Tensor& t, std::size_t axis, std::size_t channel) {
  const auto l = axis_layout(t.shape, axis);
  std::vector<float> out;
  out.reserve(l.outer * l.inner);
  for (std::size_t o = 0; o < l.outer; ++o) {
    const float* base = t.data.data() + (o * l.channels + channel) * l.inner;
    out.insert(out.end(), base, base + l.inner);
  }
  return out;
}

}  // namespace bitquant

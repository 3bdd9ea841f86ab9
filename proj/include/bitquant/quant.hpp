#pragma once

#include <bitquant/error.hpp>
#include <bitquant/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace bitquant {

enum class QuantScheme : std::uint8_t { UniformAsymm = 0, UniformSymm = 1, PowerOfTwo = 2 };

inline std::string_view to_string(QuantScheme s) {
  switch (s) {
    case QuantScheme::UniformAsymm: return "asymm";
    case QuantScheme::UniformSymm: return "symm";
    case QuantScheme::PowerOfTwo: return "pow2";
  }
  return "?";
}

inline QuantScheme parse_scheme(std::string_view s) {
  if (s == "asymm") return QuantScheme::UniformAsymm;
  if (s == "symm") return QuantScheme::UniformSymm;
  if (s == "pow2") return QuantScheme::PowerOfTwo;
  throw ArgumentError("unknown scheme '" + std::string(s) + "' (expected asymm, symm or pow2)");
}

enum class Granularity : std::uint8_t { PerTensor = 0, PerChannel = 1 };

inline constexpr unsigned kMinBits = 2;
inline constexpr unsigned kMaxBits = 8;
inline constexpr unsigned kDefaultPow2ExponentBits = 4;

inline void check_bit_width(unsigned n) {
  if (n < kMinBits || n > kMaxBits)
    throw ArgumentError("bit width " + std::to_string(n) + " outside [2,8]");
}

// Scheme parameters for one quantization group (the whole tensor, or one slice
// along axis 0 in per-channel mode). Only the fields of the active scheme are
// meaningful.
struct GroupParams {
  float min = 0.0f;  // asymm
  float max = 0.0f;  // asymm
  float max_abs = 0.0f;  // symm
  std::int32_t exponent_min = 0;  // pow2
  std::int32_t exponent_max = 0;  // pow2

  friend bool operator==(const GroupParams&, const GroupParams&) = default;
};

// sign == 0 marks an exact zero; otherwise the value is sign * 2^exponent.
struct Pow2Code {
  std::int8_t sign = 0;
  std::int32_t exponent = 0;

  friend bool operator==(const Pow2Code&, const Pow2Code&) = default;
};

struct QuantizedTensor {
  std::string name;
  Shape shape;
  QuantScheme scheme = QuantScheme::UniformAsymm;
  unsigned bit_width = 8;
  Granularity granularity = Granularity::PerTensor;
  std::vector<GroupParams> params;
  std::vector<std::int32_t> codes;  // uniform schemes
  std::vector<Pow2Code> pow2;       // power-of-two

  std::size_t size() const noexcept { return element_count(shape); }

  std::size_t group_size() const noexcept { return size() / params.size(); }
  const GroupParams& params_for(std::size_t element) const { return params[element / group_size()]; }

  // Exponent field width for power-of-two codes; one bit of the budget is the sign.
  unsigned exponent_bits() const noexcept { return bit_width - 1; }

  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

// ---------------------------------------------------------------------------
// Element-level mappings. All rounding is half away from zero (std::round).

constexpr std::int32_t asymm_max_code(unsigned n) noexcept { return (1 << n) - 1; }
constexpr std::int32_t symm_max_code(unsigned n) noexcept { return (1 << (n - 1)) - 1; }
constexpr std::int32_t pow2_level_count(unsigned exponent_bits) noexcept {
  // code 0 of the exponent field is reserved for zero
  return (1 << exponent_bits) - 1;
}

inline std::int32_t asymm_code(float x, float lo, float hi, unsigned n) {
  if (hi == lo) return 0;
  const auto top = asymm_max_code(n);
  const double v = (double(x) - double(lo)) * top / (double(hi) - double(lo));
  return static_cast<std::int32_t>(std::clamp(std::round(v), 0.0, double(top)));
}

inline std::int32_t symm_code(float x, float max_abs, unsigned n) {
  if (max_abs == 0.0f) return 0;
  const auto top = symm_max_code(n);
  const double v = double(x) * top / double(max_abs);
  return static_cast<std::int32_t>(std::clamp(std::round(v), double(-top), double(top)));
}

// round(log2|x|) for nonzero finite x, computed without calling log2: with
// |x| = m * 2^e and m in [0.5, 1), the result is e when m >= sqrt(1/2) and e-1
// otherwise. m*m is exact in double for float inputs, and sqrt(1/2) is
// irrational, so there are no ties.
inline std::int32_t rounded_log2(float x) {
  int e = 0;
  const double m = std::frexp(std::fabs(double(x)), &e);
  return m * m >= 0.5 ? e : e - 1;
}

inline Pow2Code pow2_code(float x, std::int32_t exponent_min, std::int32_t exponent_max) {
  if (x == 0.0f) return {};
  auto k = rounded_log2(x);
  if (k < exponent_min) {
    if (std::fabs(double(x)) < std::ldexp(1.0, exponent_min - 1)) return {};
    k = exponent_min;
  }
  k = std::min(k, exponent_max);
  return {static_cast<std::int8_t>(x < 0 ? -1 : 1), k};
}

inline double asymm_step(const GroupParams& p, unsigned n) {
  return (double(p.max) - double(p.min)) / asymm_max_code(n);
}

inline double symm_step(const GroupParams& p, unsigned n) { return double(p.max_abs) / symm_max_code(n); }

inline float asymm_value(std::int32_t code, const GroupParams& p, unsigned n) {
  if (p.max == p.min) return p.min;
  return static_cast<float>(code * asymm_step(p, n) + double(p.min));
}

inline float symm_value(std::int32_t code, const GroupParams& p, unsigned n) {
  return static_cast<float>(code * symm_step(p, n));
}

inline float pow2_value(Pow2Code c) {
  if (c.sign == 0) return 0.0f;
  return static_cast<float>(c.sign * std::ldexp(1.0, c.exponent));
}

// Level spacing of a uniform scheme; 0 for degenerate groups.
inline double level_spacing(QuantScheme s, const GroupParams& p, unsigned n) {
  switch (s) {
    case QuantScheme::UniformAsymm: return asymm_step(p, n);
    case QuantScheme::UniformSymm: return symm_step(p, n);
    case QuantScheme::PowerOfTwo: break;
  }
  throw ArgumentError("level spacing is undefined for power-of-two quantization");
}

// ---------------------------------------------------------------------------
// Group parameter derivation.

namespace detail {

inline std::size_t group_count(const Tensor& x, Granularity g) {
  if (g == Granularity::PerChannel && x.shape.size() >= 2) return x.shape[0];
  return 1;
}

inline void check_input(const Tensor& x) {
  if (x.data.empty()) throw ArgumentError("cannot quantize empty tensor '" + x.name + "'");
  x.validate();
}

template <typename Fn>
std::vector<GroupParams> derive_params(const Tensor& x, Granularity g, Fn&& fn) {
  const auto groups = group_count(x, g);
  const auto per = x.size() / groups;
  std::vector<GroupParams> out;
  out.reserve(groups);
  for (std::size_t k = 0; k < groups; ++k)
    out.push_back(fn(std::span<const float>(x.data.data() + k * per, per)));
  return out;
}

inline QuantizedTensor skeleton(const Tensor& x, QuantScheme s, unsigned n, Granularity g) {
  QuantizedTensor q;
  q.name = x.name;
  q.shape = x.shape;
  q.scheme = s;
  q.bit_width = n;
  q.granularity = group_count(x, g) > 1 ? Granularity::PerChannel : Granularity::PerTensor;
  return q;
}

}  // namespace detail

inline GroupParams asymm_params(std::span<const float> v) {
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  GroupParams p;
  p.min = *lo;
  p.max = *hi;
  return p;
}

inline GroupParams symm_params(std::span<const float> v) {
  GroupParams p;
  for (float f : v) p.max_abs = std::max(p.max_abs, std::fabs(f));
  return p;
}

// Exponent window: round(log2) of the largest and smallest nonzero magnitude,
// with the low end raised until the window fits the exponent field.
inline GroupParams pow2_params(std::span<const float> v, unsigned exponent_bits) {
  GroupParams p;
  float lo = std::numeric_limits<float>::infinity();
  float hi = 0.0f;
  for (float f : v) {
    const float a = std::fabs(f);
    if (a == 0.0f) continue;
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  if (hi == 0.0f) return p;
  p.exponent_max = rounded_log2(hi);
  p.exponent_min = std::max(rounded_log2(lo), p.exponent_max - pow2_level_count(exponent_bits) + 1);
  return p;
}

// ---------------------------------------------------------------------------
// Tensor-level quantization.

// Encodes `x` with explicitly supplied parameters, clamping to the code range.
inline QuantizedTensor quantize_with_params(const Tensor& x, QuantScheme s, unsigned n, Granularity g,
                                            std::vector<GroupParams> params) {
  check_bit_width(n);
  detail::check_input(x);
  auto q = detail::skeleton(x, s, n, g);
  if (params.size() != detail::group_count(x, q.granularity))
    throw ArgumentError("tensor '" + x.name + "': " + std::to_string(params.size()) +
                        " parameter groups supplied, expected " +
                        std::to_string(detail::group_count(x, q.granularity)));
  q.params = std::move(params);
  const auto per = q.group_size();
  if (s == QuantScheme::PowerOfTwo) {
    q.pow2.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto& p = q.params[i / per];
      q.pow2[i] = pow2_code(x.data[i], p.exponent_min, p.exponent_max);
    }
  } else {
    q.codes.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto& p = q.params[i / per];
      q.codes[i] = s == QuantScheme::UniformAsymm ? asymm_code(x.data[i], p.min, p.max, n)
                                                  : symm_code(x.data[i], p.max_abs, n);
    }
  }
  return q;
}

inline QuantizedTensor quantize_asymm(const Tensor& x, unsigned n, Granularity g = Granularity::PerTensor) {
  check_bit_width(n);
  detail::check_input(x);
  return quantize_with_params(x, QuantScheme::UniformAsymm, n, g, detail::derive_params(x, g, asymm_params));
}

inline QuantizedTensor quantize_symm(const Tensor& x, unsigned n, Granularity g = Granularity::PerTensor) {
  check_bit_width(n);
  detail::check_input(x);
  return quantize_with_params(x, QuantScheme::UniformSymm, n, g, detail::derive_params(x, g, symm_params));
}

// Total code width is exponent_bits + 1 (the sign bit).
inline QuantizedTensor quantize_pow2(const Tensor& x, unsigned exponent_bits = kDefaultPow2ExponentBits,
                                     Granularity g = Granularity::PerTensor) {
  check_bit_width(exponent_bits + 1);
  detail::check_input(x);
  auto params = detail::derive_params(x, g, [&](std::span<const float> v) { return pow2_params(v, exponent_bits); });
  return quantize_with_params(x, QuantScheme::PowerOfTwo, exponent_bits + 1, g, std::move(params));
}

// Quantizes with an overall code width of `n` bits for every scheme.
inline QuantizedTensor quantize(const Tensor& x, QuantScheme s, unsigned n, Granularity g = Granularity::PerTensor) {
  switch (s) {
    case QuantScheme::UniformAsymm: return quantize_asymm(x, n, g);
    case QuantScheme::UniformSymm: return quantize_symm(x, n, g);
    case QuantScheme::PowerOfTwo:
      check_bit_width(n);
      return quantize_pow2(x, n - 1, g);
  }
  throw ArgumentError("unknown scheme");
}

// Re-encodes `x` using the scheme and parameters of `like`.
inline QuantizedTensor requantize(const Tensor& x, const QuantizedTensor& like) {
  return quantize_with_params(x, like.scheme, like.bit_width, like.granularity, like.params);
}

// Checks code ranges and parameter consistency. Throws InvariantError.
inline void validate(const QuantizedTensor& q) {
  auto fail = [&](const std::string& what) { throw InvariantError("quantized tensor '" + q.name + "': " + what); };
  if (q.bit_width < kMinBits || q.bit_width > kMaxBits) fail("bit width out of range");
  if (q.params.empty() || q.size() % q.params.size() != 0) fail("bad parameter group count");
  if (q.granularity == Granularity::PerTensor && q.params.size() != 1) fail("per-tensor needs one group");
  if (q.granularity == Granularity::PerChannel && (q.shape.empty() || q.params.size() != q.shape[0]))
    fail("per-channel group count must equal shape[0]");
  if (q.scheme == QuantScheme::PowerOfTwo) {
    if (q.pow2.size() != q.size() || !q.codes.empty()) fail("power-of-two code count mismatch");
    for (const auto& p : q.params)
      if (p.exponent_max < p.exponent_min || p.exponent_max - p.exponent_min + 1 > pow2_level_count(q.exponent_bits()))
        fail("exponent window does not fit the exponent field");
    for (std::size_t i = 0; i < q.pow2.size(); ++i) {
      const auto& c = q.pow2[i];
      const auto& p = q.params_for(i);
      if (c.sign == 0) continue;
      if ((c.sign != 1 && c.sign != -1) || c.exponent < p.exponent_min || c.exponent > p.exponent_max)
        fail("power-of-two code " + std::to_string(i) + " outside exponent window");
    }
    return;
  }
  for (const auto& p : q.params) {
    if (!std::isfinite(p.min) || !std::isfinite(p.max) || !std::isfinite(p.max_abs)) fail("non-finite parameter");
    if (q.scheme == QuantScheme::UniformAsymm && p.min > p.max) fail("min exceeds max");
    if (q.scheme == QuantScheme::UniformSymm && p.max_abs < 0.0f) fail("negative max_abs");
  }
  if (q.codes.size() != q.size() || !q.pow2.empty()) fail("code count mismatch");
  const bool asymm = q.scheme == QuantScheme::UniformAsymm;
  const std::int32_t lo = asymm ? 0 : -symm_max_code(q.bit_width);
  const std::int32_t hi = asymm ? asymm_max_code(q.bit_width) : symm_max_code(q.bit_width);
  for (std::size_t i = 0; i < q.codes.size(); ++i)
    if (q.codes[i] < lo || q.codes[i] > hi) fail("code " + std::to_string(i) + " outside [" + std::to_string(lo) + "," + std::to_string(hi) + "]");
}

inline Tensor dequantize(const QuantizedTensor& q) {
  Tensor t;
  t.name = q.name;
  t.shape = q.shape;
  t.data.resize(q.size());
  const auto per = q.group_size();
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    const auto& p = q.params[i / per];
    switch (q.scheme) {
      case QuantScheme::UniformAsymm: t.data[i] = asymm_value(q.codes[i], p, q.bit_width); break;
      case QuantScheme::UniformSymm: t.data[i] = symm_value(q.codes[i], p, q.bit_width); break;
      case QuantScheme::PowerOfTwo: t.data[i] = pow2_value(q.pow2[i]); break;
    }
  }
  return t;
}

}  // namespace bitquant

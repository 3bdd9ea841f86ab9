#pragma once

#include <bitquant/error.hpp>
#include <bitquant/quant.hpp>
#include <bitquant/tensor.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

namespace bitquant {

// Power-of-two weights as (sign, left shift) pairs over a shared exponent:
// w = sign * 2^(shift + global_exponent). sign == 0 flags a zero weight.
struct ShiftWeights {
  Shape shape;
  std::int32_t global_exponent = 0;
  std::vector<std::int8_t> sign;
  std::vector<std::uint8_t> shift;

  std::size_t size() const noexcept { return sign.size(); }

  double value(std::size_t i) const {
    return sign[i] == 0 ? 0.0 : sign[i] * std::ldexp(1.0, int(shift[i]) + global_exponent);
  }

  Tensor reconstruct(std::string name = {}) const {
    Tensor t{std::move(name), shape, std::vector<float>(size())};
    for (std::size_t i = 0; i < size(); ++i) t.data[i] = static_cast<float>(value(i));
    return t;
  }

  friend bool operator==(const ShiftWeights&, const ShiftWeights&) = default;
};

inline ShiftWeights to_shift_weights(const QuantizedTensor& q) {
  if (q.scheme != QuantScheme::PowerOfTwo)
    throw ArgumentError("tensor '" + q.name + "' is " + std::string(to_string(q.scheme)) +
                        "-quantized; shift weights need power-of-two codes");
  validate(q);
  ShiftWeights w;
  w.shape = q.shape;
  w.global_exponent = q.params.front().exponent_min;
  for (const auto& p : q.params) w.global_exponent = std::min(w.global_exponent, p.exponent_min);
  w.sign.resize(q.size());
  w.shift.resize(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto& c = q.pow2[i];
    if (c.sign == 0) continue;
    const auto s = c.exponent - w.global_exponent;
    if (s > 255) throw OverflowError("shift " + std::to_string(s) + " does not fit the shift field");
    w.sign[i] = c.sign;
    w.shift[i] = static_cast<std::uint8_t>(s);
  }
  return w;
}

// value = integer / 2^fractional_bits. fractional_bits may be negative after a
// layer whose global exponent exceeds the input's fractional bits.
struct FixedPointActivations {
  std::vector<std::int64_t> values;
  int fractional_bits = 16;

  double value(std::size_t i) const { return std::ldexp(double(values[i]), -fractional_bits); }

  friend bool operator==(const FixedPointActivations&, const FixedPointActivations&) = default;
};

struct ShiftKernelConfig {
  unsigned activation_bits = 32;   // |activation| <= 2^(activation_bits-1) - 1
  unsigned accumulator_bits = 64;  // signed accumulator width
  int fractional_bits = 16;        // used when converting from float
};

inline std::int64_t activation_limit(const ShiftKernelConfig& cfg) {
  return (std::int64_t{1} << (cfg.activation_bits - 1)) - 1;
}

inline FixedPointActivations to_fixed_point(std::span<const float> x, const ShiftKernelConfig& cfg = {}) {
  FixedPointActivations a;
  a.fractional_bits = cfg.fractional_bits;
  a.values.reserve(x.size());
  const double limit = double(activation_limit(cfg));
  for (float f : x) {
    const double v = std::round(std::ldexp(double(f), cfg.fractional_bits));
    if (!(std::fabs(v) <= limit))
      throw OverflowError("activation " + std::to_string(f) + " exceeds the " + std::to_string(cfg.activation_bits) +
                          "-bit fixed-point range");
    a.values.push_back(static_cast<std::int64_t>(v));
  }
  return a;
}

// Re-expresses activations with a different number of fractional bits,
// rounding half away from zero when bits are dropped.
inline FixedPointActivations rescale(const FixedPointActivations& a, int fractional_bits) {
  FixedPointActivations out{std::vector<std::int64_t>(a.values.size()), fractional_bits};
  const int d = fractional_bits - a.fractional_bits;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const std::int64_t v = a.values[i];
    if (d >= 0) {
      if (d >= 63 || std::llabs(v) > (INT64_MAX >> d)) throw OverflowError("rescale overflows 64 bits");
      out.values[i] = v * (std::int64_t{1} << d);
    } else {
      const auto mag = static_cast<std::uint64_t>(std::llabs(v));
      const int s = -d;
      const std::uint64_t r = s >= 64 ? 0 : (mag + (std::uint64_t{1} << (s - 1))) >> s;
      out.values[i] = v < 0 ? -static_cast<std::int64_t>(r) : static_cast<std::int64_t>(r);
    }
  }
  return out;
}

// Largest accumulator magnitude any output row can reach for activations in
// the declared range: max over rows of sum_j |a|max * 2^shift_j.
inline unsigned __int128 worst_case_accumulator(const ShiftWeights& w, const ShiftKernelConfig& cfg) {
  if (w.shape.size() != 2) throw ShapeError("dense shift weights must be rank 2");
  const std::size_t rows = w.shape[0], cols = w.shape[1];
  const auto amax = static_cast<unsigned __int128>(activation_limit(cfg));
  unsigned __int128 worst = 0;
  constexpr auto saturated = ~static_cast<unsigned __int128>(0);
  for (std::size_t r = 0; r < rows; ++r) {
    unsigned __int128 sum = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const auto i = r * cols + c;
      if (w.sign[i] == 0) continue;
      if (w.shift[i] >= 64) return saturated;
      sum += amax << w.shift[i];
      if (sum >> 126) return saturated;
    }
    worst = std::max(worst, sum);
  }
  return worst;
}

inline void check_accumulator_width(const ShiftWeights& w, const ShiftKernelConfig& cfg) {
  if (cfg.activation_bits < 2 || cfg.activation_bits > 32) throw ArgumentError("activation_bits must be in [2,32]");
  if (cfg.accumulator_bits < 2 || cfg.accumulator_bits > 64) throw ArgumentError("accumulator_bits must be in [2,64]");
  const auto limit = (static_cast<unsigned __int128>(1) << (cfg.accumulator_bits - 1)) - 1;
  if (worst_case_accumulator(w, cfg) > limit)
    throw OverflowError("worst-case accumulator exceeds " + std::to_string(cfg.accumulator_bits) +
                        " bits; reduce activation_bits or the exponent window");
}

namespace detail {

inline void check_dense_inputs(const FixedPointActivations& a, const ShiftWeights& w, const ShiftKernelConfig& cfg) {
  if (w.shape.size() != 2) throw ShapeError("dense shift weights must be rank 2");
  if (a.values.size() != w.shape[1])
    throw ShapeError("dense layer takes " + std::to_string(w.shape[1]) + " inputs, got " +
                     std::to_string(a.values.size()));
  const auto limit = activation_limit(cfg);
  for (auto v : a.values)
    if (v > limit || v < -limit) throw OverflowError("activation outside the declared " +
                                                     std::to_string(cfg.activation_bits) + "-bit range");
  check_accumulator_width(w, cfg);
}

}  // namespace detail

// Multiply-free dense layer: out_r = sum_j sign_j * (a_j << shift_j). The
// result carries fractional_bits - global_exponent fractional bits, so no
// rounding happens inside the kernel.
inline FixedPointActivations shift_dense(const FixedPointActivations& a, const ShiftWeights& w,
                                         const ShiftKernelConfig& cfg = {}) {
  detail::check_dense_inputs(a, w, cfg);
  const std::size_t rows = w.shape[0], cols = w.shape[1];
  FixedPointActivations out{std::vector<std::int64_t>(rows), a.fractional_bits - w.global_exponent};
  for (std::size_t r = 0; r < rows; ++r) {
    std::int64_t acc = 0;
    const auto* sign = w.sign.data() + r * cols;
    const auto* shift = w.shift.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      if (sign[c] == 0) continue;
      // shift the magnitude so negative activations never hit a signed left shift
      const auto mag = static_cast<std::int64_t>(static_cast<std::uint64_t>(std::llabs(a.values[c])) << shift[c]);
      acc += ((a.values[c] < 0) != (sign[c] < 0)) ? -mag : mag;
    }
    out.values[r] = acc;
  }
  return out;
}

// Integer-multiply reference for shift_dense.
inline FixedPointActivations multiply_dense(const FixedPointActivations& a, const ShiftWeights& w,
                                            const ShiftKernelConfig& cfg = {}) {
  detail::check_dense_inputs(a, w, cfg);
  const std::size_t rows = w.shape[0], cols = w.shape[1];
  FixedPointActivations out{std::vector<std::int64_t>(rows), a.fractional_bits - w.global_exponent};
  for (std::size_t r = 0; r < rows; ++r) {
    std::int64_t acc = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const auto i = r * cols + c;
      const std::int64_t wi = w.sign[i] == 0 ? 0 : w.sign[i] * (std::int64_t{1} << w.shift[i]);
      acc += a.values[c] * wi;
    }
    out.values[r] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Latency harness: FP32 multiply-accumulate against the shift kernel on the
// same power-of-two layer. Each repetition pushes `frames` input vectors
// through one dense layer on the calling thread.

struct LayerShape {
  std::uint32_t outputs = 0;
  std::uint32_t inputs = 0;
  std::string to_string() const { return std::to_string(outputs) + "x" + std::to_string(inputs); }
};

struct BenchRow {
  std::string path;
  std::string layer_shape;
  double median_ns = 0;  // per repetition
  double iqr_ns = 0;     // q3 - q1 per repetition
};

struct BenchReport {
  std::size_t repetitions = 0;
  std::size_t frames = 0;
  std::uint64_t seed = 0;
  std::vector<BenchRow> rows;
  std::vector<double> shift_over_fp32;  // median ratio per layer shape, < 1 means the shift path is faster
};

inline constexpr std::size_t kMinBenchRepetitions = 30;

namespace detail {

inline void dense_fp32(std::span<const float> x, std::span<const float> w, std::span<float> y, std::size_t cols) {
  for (std::size_t r = 0; r < y.size(); ++r) {
    float acc = 0.0f;
    const float* wr = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

inline double quantile_of(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (v.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(h);
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

}  // namespace detail

inline BenchReport bench_latency(std::span<const LayerShape> shapes, std::size_t repetitions, std::uint64_t seed,
                                 std::size_t frames = 64) {
  if (repetitions < kMinBenchRepetitions)
    throw ArgumentError("benchmark needs at least " + std::to_string(kMinBenchRepetitions) + " repetitions");
  if (frames == 0) throw ArgumentError("benchmark needs at least one frame");
  BenchReport report{repetitions, frames, seed, {}, {}};
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * (double(rng() >> 11) * 0x1.0p-53); };
  volatile std::int64_t sink_i = 0;
  volatile float sink_f = 0;

  for (const auto& shape : shapes) {
    if (shape.inputs == 0 || shape.outputs == 0) throw ArgumentError("layer shape must be nonzero");
    Tensor w{"bench.w", {shape.outputs, shape.inputs}, std::vector<float>(std::size_t(shape.outputs) * shape.inputs)};
    for (auto& v : w.data) v = static_cast<float>(uniform(-0.5, 0.5));
    const auto q = quantize_pow2(w);
    const auto wq = dequantize(q);
    const auto sw = to_shift_weights(q);

    std::vector<std::vector<float>> xs(frames, std::vector<float>(shape.inputs));
    std::vector<FixedPointActivations> fx;
    for (auto& x : xs) {
      for (auto& v : x) v = static_cast<float>(uniform(-1.0, 1.0));
      fx.push_back(to_fixed_point(x));
    }
    check_accumulator_width(sw, {});

    std::vector<float> y(shape.outputs);
    std::vector<double> t_fp32, t_shift;
    using clock = std::chrono::steady_clock;
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
      auto t0 = clock::now();
      for (const auto& x : xs) {
        detail::dense_fp32(x, wq.data, y, shape.inputs);
        sink_f = sink_f + y[0];
      }
      auto t1 = clock::now();
      for (const auto& a : fx) sink_i = sink_i + shift_dense(a, sw).values[0];
      auto t2 = clock::now();
      t_fp32.push_back(double(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
      t_shift.push_back(double(std::chrono::duration_cast<std::chrono::nanoseconds>(t2 - t1).count()));
    }
    const auto med_f = detail::quantile_of(t_fp32, 0.5), med_s = detail::quantile_of(t_shift, 0.5);
    report.rows.push_back({"fp32_multiply", shape.to_string(), med_f,
                           detail::quantile_of(t_fp32, 0.75) - detail::quantile_of(t_fp32, 0.25)});
    report.rows.push_back({"int_shift", shape.to_string(), med_s,
                           detail::quantile_of(t_shift, 0.75) - detail::quantile_of(t_shift, 0.25)});
    report.shift_over_fp32.push_back(med_f > 0 ? med_s / med_f : 0.0);
  }
  return report;
}

inline std::string bench_csv(const BenchReport& r) {
  std::string out = "# repetitions=" + std::to_string(r.repetitions) + " frames_per_repetition=" +
                    std::to_string(r.frames) + " seed=" + std::to_string(r.seed) + "\npath,layer_shape,median_ns,iqr_ns\n";
  char buf[64];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%.0f,%.0f", row.median_ns, row.iqr_ns);
    out += row.path + "," + row.layer_shape + "," + buf + "\n";
  }
  return out;
}

inline std::string bench_table(const BenchReport& r) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s %-12s %14s %12s\n", "path", "layer", "median_ns", "iqr_ns");
  out += buf;
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%-14s %-12s %14.0f %12.0f\n", row.path.c_str(), row.layer_shape.c_str(),
                  row.median_ns, row.iqr_ns);
    out += buf;
  }
  for (std::size_t i = 0; i < r.shift_over_fp32.size(); ++i) {
    std::snprintf(buf, sizeof buf, "shift/fp32 median ratio %-12s %.3f (%+.1f%% latency)\n",
                  r.rows[2 * i].layer_shape.c_str(), r.shift_over_fp32[i], (r.shift_over_fp32[i] - 1.0) * 100.0);
    out += buf;
  }
  return out;
}

}  // namespace bitquant

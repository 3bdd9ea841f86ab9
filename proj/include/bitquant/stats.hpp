#pragma once

#include <bitquant/error.hpp>
#include <bitquant/quant.hpp>
#include <bitquant/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace bitquant {

struct Quartiles {
  float min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  friend bool operator==(const Quartiles&, const Quartiles&) = default;
};

struct ChannelQuartiles {
  std::string tensor;
  std::size_t axis = 0;
  std::vector<Quartiles> channels;
};

struct WeightHistogram {
  std::vector<double> bin_edges;
  std::vector<std::uint64_t> counts;

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

// Range and density preservation of a quantized tensor against its source.
// The two measures are reported side by side and never combined.
struct BitEfficiencyReport {
  double range_coverage = 1.0;      // in [0,1]
  double density_divergence = 0.0;  // 1 - histogram intersection, in [0,1]
  std::size_t levels_used = 0;
  std::size_t levels_available = 0;
};

inline constexpr std::size_t kBitEfficiencyBins = 64;

// Type-7 sample quantile of sorted data.
inline float sorted_quantile(std::span<const float> sorted, double p) {
  const double h = (sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return static_cast<float>(sorted[lo] + (h - lo) * (double(sorted[hi]) - sorted[lo]));
}

inline Quartiles quartiles(std::vector<float> v) {
  if (v.empty()) throw ArgumentError("quartiles of an empty set");
  std::sort(v.begin(), v.end());
  return {v.front(), sorted_quantile(v, 0.25), sorted_quantile(v, 0.5), sorted_quantile(v, 0.75), v.back()};
}

inline ChannelQuartiles channel_quartiles(const Tensor& x, std::size_t channel_axis) {
  const auto layout = axis_layout(x.shape, channel_axis);
  ChannelQuartiles out{x.name, channel_axis, {}};
  out.channels.reserve(layout.channels);
  for (std::size_t c = 0; c < layout.channels; ++c) out.channels.push_back(quartiles(channel_slice(x, channel_axis, c)));
  return out;
}

namespace detail {

inline std::size_t bin_index(double v, double lo, double width, std::size_t bins) {
  if (width <= 0.0) return 0;
  const auto k = static_cast<std::ptrdiff_t>(std::floor((v - lo) / width));
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(bins) - 1));
}

}  // namespace detail

// Equal-width bins over [lo, hi]; the last bin is closed on the right.
inline WeightHistogram histogram_over(std::span<const float> v, std::size_t bins, double lo, double hi) {
  if (bins < 1) throw ArgumentError("histogram needs at least one bin");
  WeightHistogram h;
  const double width = (hi - lo) / double(bins);
  for (std::size_t i = 0; i <= bins; ++i) h.bin_edges.push_back(i == bins ? hi : lo + width * double(i));
  h.counts.assign(bins, 0);
  for (float f : v) ++h.counts[detail::bin_index(f, lo, width, bins)];
  return h;
}

inline WeightHistogram weight_histogram(const Tensor& x, std::size_t bins) {
  if (x.data.empty()) throw ArgumentError("histogram of an empty tensor");
  auto [lo, hi] = std::minmax_element(x.data.begin(), x.data.end());
  return histogram_over(x.data, bins, *lo, *hi);
}

inline std::size_t distinct_values(std::span<const float> v) {
  return std::set<float>(v.begin(), v.end()).size();
}

inline BitEfficiencyReport bit_efficiency(const Tensor& original, const Tensor& dequantized, unsigned n) {
  if (original.shape != dequantized.shape)
    throw ArgumentError("bit efficiency needs equal shapes, got " + shape_to_string(original.shape) + " and " +
                        shape_to_string(dequantized.shape));
  if (original.data.empty()) throw ArgumentError("bit efficiency of an empty tensor");
  BitEfficiencyReport r;
  auto [omin, omax] = std::minmax_element(original.data.begin(), original.data.end());
  auto [qmin, qmax] = std::minmax_element(dequantized.data.begin(), dequantized.data.end());
  const double orange = double(*omax) - double(*omin);
  r.range_coverage = orange == 0.0 ? 1.0 : std::clamp((double(*qmax) - double(*qmin)) / orange, 0.0, 1.0);

  const double lo = std::min(*omin, *qmin), hi = std::max(*omax, *qmax);
  const auto ho = histogram_over(original.data, kBitEfficiencyBins, lo, hi);
  const auto hq = histogram_over(dequantized.data, kBitEfficiencyBins, lo, hi);
  const double total = double(original.size());
  double overlap = 0.0;
  for (std::size_t i = 0; i < kBitEfficiencyBins; ++i) overlap += double(std::min(ho.counts[i], hq.counts[i]));
  r.density_divergence = 1.0 - overlap / total;

  r.levels_used = distinct_values(dequantized.data);
  r.levels_available = std::size_t{1} << n;
  return r;
}

// Bits needed to index the distinct nonzero exponents a power-of-two tensor
// actually uses: ceil(log2(count)), at least 1.
inline unsigned exponent_index_bits(const QuantizedTensor& q) {
  if (q.scheme != QuantScheme::PowerOfTwo) throw ArgumentError("exponent_index_bits needs a power-of-two tensor");
  std::set<std::int32_t> used;
  for (const auto& c : q.pow2)
    if (c.sign != 0) used.insert(c.exponent);
  unsigned bits = 1;
  while ((std::size_t{1} << bits) < used.size()) ++bits;
  return bits;
}

// Mean of exponent_index_bits over tensors.
inline double average_bit_levels(std::span<const QuantizedTensor> tensors) {
  if (tensors.empty()) return 0.0;
  double sum = 0;
  for (const auto& q : tensors) sum += exponent_index_bits(q);
  return sum / double(tensors.size());
}

// ---------------------------------------------------------------------------
// CSV exports for external plotting.

namespace detail {
inline std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(9) << v;
  return s.str();
}
}  // namespace detail

inline constexpr const char* kQuartileCsvHeader =
    "# per-channel quartiles, type-7 interpolation; one row per (tensor, channel)\n"
    "tensor,channel,min,q1,median,q3,max\n";

inline std::string quartiles_csv_rows(const ChannelQuartiles& cq) {
  std::string out;
  for (std::size_t c = 0; c < cq.channels.size(); ++c) {
    const auto& q = cq.channels[c];
    out += cq.tensor + "," + std::to_string(c) + "," + detail::num(q.min) + "," + detail::num(q.q1) + "," +
           detail::num(q.median) + "," + detail::num(q.q3) + "," + detail::num(q.max) + "\n";
  }
  return out;
}

inline constexpr const char* kHistogramCsvHeader =
    "# equal-width weight histograms; last bin closed on the right; one row per bin\n"
    "tensor,bin,lower,upper,count\n";

inline std::string histogram_csv_rows(const std::string& tensor, const WeightHistogram& h) {
  std::string out;
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    out += tensor + "," + std::to_string(i) + "," + detail::num(h.bin_edges[i]) + "," +
           detail::num(h.bin_edges[i + 1]) + "," + std::to_string(h.counts[i]) + "\n";
  return out;
}

inline constexpr const char* kBitEfficiencyCsvHeader =
    "# bit efficiency per tensor: range_coverage in [0,1], density_divergence = 1 - histogram intersection (64 bins)\n"
    "tensor,scheme,bits,range_coverage,density_divergence,levels_used,levels_available\n";

inline std::string bit_efficiency_csv_row(const std::string& tensor, QuantScheme s, unsigned n,
                                          const BitEfficiencyReport& r) {
  return tensor + "," + std::string(to_string(s)) + "," + std::to_string(n) + "," + detail::num(r.range_coverage) +
         "," + detail::num(r.density_divergence) + "," + std::to_string(r.levels_used) + "," +
         std::to_string(r.levels_available) + "\n";
}

}  // namespace bitquant

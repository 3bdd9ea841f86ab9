#pragma once

#include <bitquant/dataset.hpp>
#include <bitquant/infer.hpp>
#include <bitquant/model_file.hpp>
#include <bitquant/quantize_model.hpp>

#include <cstdio>
#include <string>
#include <vector>

namespace bitquant {

struct SweepRow {
  unsigned bits = kPassthroughBits;  // 32 marks the FP32 reference row
  EvalResult result;
  std::size_t packed_bytes = 0;  // payload bytes; FP32 bytes for the reference row
};

// Evaluates the FP32 model, then the simulated-quantized model at each width.
inline std::vector<SweepRow> bit_sweep(const ModelFile& model, const Dataset& data, QuantizeOptions opts,
                                       std::span<const unsigned> bit_widths) {
  for (auto n : bit_widths) check_bit_width(n);
  std::vector<SweepRow> rows;
  {
    opts.bits = kPassthroughBits;
    const auto base = quantize_model(model, opts);
    std::size_t fp32_bytes = 0;
    for (const auto& name : quantizable_tensors(base.simulated, opts)) fp32_bytes += base.simulated.at(name).size() * 4;
    rows.push_back({kPassthroughBits, evaluate(base.simulated, data), fp32_bytes});
  }
  for (auto n : bit_widths) {
    opts.bits = n;
    const auto q = quantize_model(model, opts);
    rows.push_back({n, evaluate(q.simulated, data), q.packed->payload_bytes()});
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows, QuantScheme s) {
  std::string out = "scheme,bits,accuracy,correct,samples,packed_bytes\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.result.accuracy);
    out += std::string(r.bits == kPassthroughBits ? "fp32" : to_string(s)) + "," + std::to_string(r.bits) + "," + buf +
           "," + std::to_string(r.result.confusion.trace()) + "," + std::to_string(r.result.sample_count) + "," +
           std::to_string(r.packed_bytes) + "\n";
  }
  return out;
}

inline std::string sweep_table(const std::vector<SweepRow>& rows, QuantScheme s) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-6s %5s %9s %12s\n", "scheme", "bits", "acc%", "size_bytes");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-6s %5u %9.2f %12zu\n",
                  std::string(r.bits == kPassthroughBits ? "fp32" : to_string(s)).c_str(), r.bits,
                  100.0 * r.result.accuracy, r.packed_bytes);
    out += buf;
  }
  return out;
}

}  // namespace bitquant

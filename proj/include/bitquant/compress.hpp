#pragma once

#include <bitquant/error.hpp>
#include <bitquant/model_file.hpp>
#include <bitquant/packed_model.hpp>
#include <bitquant/quantize_model.hpp>

#include <zlib.h>

#include <cstdio>
#include <set>
#include <string>
#include <vector>

namespace bitquant {

// Deflate settings used for every size measurement.
struct CodecSettings {
  int level = 9;
  int mem_level = 9;
  int window_bits = 15;
};

// Raw deflate stream (no zlib/gzip wrapper).
inline Bytes deflate_bytes(std::span<const std::uint8_t> input, const CodecSettings& cs = {}) {
  z_stream zs{};
  if (deflateInit2(&zs, cs.level, Z_DEFLATED, -cs.window_bits, cs.mem_level, Z_DEFAULT_STRATEGY) != Z_OK)
    throw Error("deflateInit2 failed");
  Bytes out(deflateBound(&zs, static_cast<uLong>(input.size())));
  zs.next_in = const_cast<Bytef*>(input.data());
  zs.avail_in = static_cast<uInt>(input.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error("deflate did not finish");
  out.resize(zs.total_out);
  return out;
}

inline Bytes inflate_bytes(std::span<const std::uint8_t> input, std::size_t expected_size, int window_bits = 15) {
  z_stream zs{};
  if (inflateInit2(&zs, -window_bits) != Z_OK) throw Error("inflateInit2 failed");
  Bytes out(expected_size);
  zs.next_in = const_cast<Bytef*>(input.data());
  zs.avail_in = static_cast<uInt>(input.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || zs.total_out != expected_size) throw CorruptionError("inflate failed");
  return out;
}

// Frame: one mode byte, then either the deflate stream (mode 1) or the input
// verbatim (mode 0) when deflate would not shrink it. The frame is therefore
// never more than one byte larger than its input.
inline Bytes compress_frame(std::span<const std::uint8_t> input, const CodecSettings& cs = {}) {
  auto body = deflate_bytes(input, cs);
  Bytes out;
  out.reserve(1 + std::min(body.size(), input.size()));
  if (body.size() < input.size()) {
    out.push_back(1);
    out.insert(out.end(), body.begin(), body.end());
  } else {
    out.push_back(0);
    out.insert(out.end(), input.begin(), input.end());
  }
  return out;
}

inline Bytes decompress_frame(std::span<const std::uint8_t> frame, std::size_t expected_size) {
  if (frame.empty()) throw CorruptionError("empty compression frame");
  if (frame[0] == 0) return Bytes(frame.begin() + 1, frame.end());
  if (frame[0] == 1) return inflate_bytes(frame.subspan(1), expected_size);
  throw FormatError("unknown compression frame mode " + std::to_string(frame[0]));
}

struct SizeRow {
  QuantScheme scheme = QuantScheme::UniformAsymm;
  unsigned bits = 8;
  std::size_t raw_fp32_bytes = 0;
  std::size_t packed_bytes = 0;
  std::size_t compressed_bytes = 0;
  std::size_t alphabet_size = 0;  // distinct packed field values over all tensors
  double compression_ratio = 0;   // raw / compressed

  friend bool operator==(const SizeRow&, const SizeRow&) = default;
};

struct SizeReport {
  std::vector<SizeRow> rows;
  friend bool operator==(const SizeReport&, const SizeReport&) = default;
};

// Payloads of the quantized tensors concatenated, headers excluded.
inline Bytes payload_stream(const PackedQuantModel& m) {
  Bytes out;
  for (const auto& t : m.tensors) out.insert(out.end(), t.payload.begin(), t.payload.end());
  return out;
}

inline Bytes fp32_stream(const ModelFile& model, const std::vector<std::string>& names) {
  ByteWriter w;
  for (const auto& n : names) w.put_array(std::span<const float>(model.at(n).data));
  return w.take();
}

inline std::size_t alphabet_size(const PackedQuantModel& m) {
  std::set<std::uint32_t> symbols;
  for (const auto& t : m.tensors) {
    const auto fields = unpack_bits(t.payload, element_count(t.shape), m.bit_width);
    symbols.insert(fields.begin(), fields.end());
  }
  return symbols.size();
}

inline SizeRow measure_size(const ModelFile& model, QuantScheme scheme, unsigned bits,
                            Granularity granularity = Granularity::PerTensor, const CodecSettings& cs = {}) {
  QuantizeOptions opts;
  opts.scheme = scheme;
  opts.bits = bits;
  opts.granularity = granularity;
  const auto names = quantizable_tensors(model, opts);
  const auto raw = fp32_stream(model, names);

  SizeRow row;
  row.scheme = scheme;
  row.bits = bits;
  row.raw_fp32_bytes = raw.size();
  if (bits == kPassthroughBits) {
    row.packed_bytes = raw.size();
    row.compressed_bytes = compress_frame(raw, cs).size();
    std::set<float> distinct;
    for (const auto& n : names) distinct.insert(model.at(n).data.begin(), model.at(n).data.end());
    row.alphabet_size = distinct.size();
  } else {
    const auto q = quantize_model(model, opts);
    const auto stream = payload_stream(*q.packed);
    row.packed_bytes = stream.size();
    row.compressed_bytes = compress_frame(stream, cs).size();
    row.alphabet_size = alphabet_size(*q.packed);
  }
  row.compression_ratio = row.compressed_bytes ? double(row.raw_fp32_bytes) / double(row.compressed_bytes) : 0.0;
  return row;
}

inline SizeReport measure_sizes(const ModelFile& model, std::span<const QuantScheme> schemes,
                                std::span<const unsigned> bit_widths, Granularity granularity = Granularity::PerTensor,
                                const CodecSettings& cs = {}) {
  model.validate();
  SizeReport r;
  r.rows.resize(schemes.size() * bit_widths.size());
  parallel_for(r.rows.size(), [&](std::size_t i) {
    r.rows[i] = measure_size(model, schemes[i / bit_widths.size()], bit_widths[i % bit_widths.size()], granularity, cs);
  });
  return r;
}

inline constexpr const char* kSizeCsvHeader =
    "scheme,bits,raw_fp32_bytes,packed_bytes,compressed_bytes,alphabet_size,compression_ratio\n";

inline std::string size_report_csv(const SizeReport& r) {
  std::string out = kSizeCsvHeader;
  char buf[64];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%.4f", row.compression_ratio);
    out += std::string(to_string(row.scheme)) + "," + std::to_string(row.bits) + "," +
           std::to_string(row.raw_fp32_bytes) + "," + std::to_string(row.packed_bytes) + "," +
           std::to_string(row.compressed_bytes) + "," + std::to_string(row.alphabet_size) + "," + buf + "\n";
  }
  return out;
}

inline std::string size_report_table(const SizeReport& r) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-6s %4s %12s %12s %12s %9s %8s\n", "scheme", "bits", "raw_fp32", "packed",
                "deflate", "alphabet", "ratio");
  out += buf;
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%-6s %4u %12zu %12zu %12zu %9zu %7.2fx\n", std::string(to_string(row.scheme)).c_str(),
                  row.bits, row.raw_fp32_bytes, row.packed_bytes, row.compressed_bytes, row.alphabet_size,
                  row.compression_ratio);
    out += buf;
  }
  return out;
}

}  // namespace bitquant

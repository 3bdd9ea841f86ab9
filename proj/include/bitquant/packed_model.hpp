#pragma once

#include <bitquant/binary_io.hpp>
#include <bitquant/bit_packing.hpp>
#include <bitquant/error.hpp>
#include <bitquant/quant.hpp>

#include <array>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace bitquant {

inline constexpr std::array<char, 4> kPackedMagic = {'B', 'Q', 'P', 'K'};

struct PackedTensor {
  std::string name;
  Shape shape;
  Granularity granularity = Granularity::PerTensor;
  std::vector<GroupParams> params;
  Bytes payload;  // ceil(bit_width * element_count / 8) bytes, zero padded

  friend bool operator==(const PackedTensor&, const PackedTensor&) = default;
};

struct PackedQuantModel {
  QuantScheme scheme = QuantScheme::UniformAsymm;
  unsigned bit_width = 8;
  std::vector<PackedTensor> tensors;

  std::size_t payload_bytes() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.payload.size();
    return n;
  }

  std::size_t element_count() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tensors) n += bitquant::element_count(t.shape);
    return n;
  }

  friend bool operator==(const PackedQuantModel&, const PackedQuantModel&) = default;
};

// ---------------------------------------------------------------------------
// Field codecs. Uniform asymmetric codes are stored as-is, symmetric codes as
// n-bit two's complement, power-of-two codes as a sign bit above an
// (n-1)-bit exponent field whose value 0 means zero.

namespace detail {

inline std::uint32_t field_mask(unsigned n) { return (1u << n) - 1u; }

inline std::uint32_t encode_field(const QuantizedTensor& q, std::size_t i) {
  const unsigned n = q.bit_width;
  switch (q.scheme) {
    case QuantScheme::UniformAsymm: return static_cast<std::uint32_t>(q.codes[i]);
    case QuantScheme::UniformSymm: return static_cast<std::uint32_t>(q.codes[i]) & field_mask(n);
    case QuantScheme::PowerOfTwo: {
      const auto& c = q.pow2[i];
      if (c.sign == 0) return 0;
      const auto ecode = static_cast<std::uint32_t>(c.exponent - q.params_for(i).exponent_min + 1);
      return (c.sign < 0 ? 1u << (n - 1) : 0u) | ecode;
    }
  }
  return 0;
}

inline void decode_fields(QuantizedTensor& q, std::span<const std::uint32_t> fields) {
  const unsigned n = q.bit_width;
  const auto per = q.group_size();
  auto corrupt = [&](std::size_t i, const std::string& why) {
    throw CorruptionError("packed tensor '" + q.name + "' element " + std::to_string(i) + ": " + why);
  };
  if (q.scheme == QuantScheme::PowerOfTwo) {
    q.pow2.resize(fields.size());
    const std::uint32_t emask = field_mask(n - 1);
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const auto ecode = fields[i] & emask;
      const bool negative = (fields[i] >> (n - 1)) & 1u;
      if (ecode == 0) {
        if (negative) corrupt(i, "sign bit set on a zero code");
        continue;
      }
      const auto& p = q.params[i / per];
      const auto exponent = p.exponent_min + static_cast<std::int32_t>(ecode) - 1;
      if (exponent > p.exponent_max) corrupt(i, "exponent code past the tensor's exponent window");
      q.pow2[i] = {static_cast<std::int8_t>(negative ? -1 : 1), exponent};
    }
    return;
  }
  q.codes.resize(fields.size());
  for (std::size_t i = 0; i < fields.size(); ++i) {
    std::int32_t v = static_cast<std::int32_t>(fields[i]);
    if (q.scheme == QuantScheme::UniformSymm) {
      if (fields[i] >> (n - 1)) v -= static_cast<std::int32_t>(1u << n);
      if (v < -symm_max_code(n)) corrupt(i, "symmetric code -2^(n-1) is not a valid level");
    }
    q.codes[i] = v;
  }
}

}  // namespace detail

// Bit-packs a set of tensors that share one scheme and bit width.
inline PackedQuantModel pack_quantized(std::span<const QuantizedTensor> tensors, QuantScheme scheme,
                                       unsigned bit_width) {
  check_bit_width(bit_width);
  PackedQuantModel m;
  m.scheme = scheme;
  m.bit_width = bit_width;
  std::set<std::string> names;
  for (const auto& q : tensors) {
    if (q.scheme != scheme || q.bit_width != bit_width)
      throw ArgumentError("tensor '" + q.name + "' is " + std::string(to_string(q.scheme)) + "/" +
                          std::to_string(q.bit_width) + " bits, model is " + std::string(to_string(scheme)) +
                          "/" + std::to_string(bit_width) + " bits");
    if (!names.insert(q.name).second) throw ArgumentError("duplicate tensor name '" + q.name + "'");
    validate(q);
    PackedTensor t;
    t.name = q.name;
    t.shape = q.shape;
    t.granularity = q.granularity;
    t.params = q.params;
    std::vector<std::uint32_t> fields(q.size());
    for (std::size_t i = 0; i < fields.size(); ++i) fields[i] = detail::encode_field(q, i);
    t.payload = pack_bits(std::span<const std::uint32_t>(fields), bit_width);
    if (t.payload.size() != packed_byte_count(fields.size(), bit_width))
      throw InvariantError("packed payload size mismatch for '" + q.name + "'");
    m.tensors.push_back(std::move(t));
  }
  return m;
}

inline QuantizedTensor unpack_tensor(const PackedTensor& t, QuantScheme scheme, unsigned bit_width) {
  QuantizedTensor q;
  q.name = t.name;
  q.shape = t.shape;
  q.scheme = scheme;
  q.bit_width = bit_width;
  q.granularity = t.granularity;
  q.params = t.params;
  const auto fields = unpack_bits(t.payload, element_count(t.shape), bit_width);
  if (q.params.empty() || q.size() % q.params.size() != 0)
    throw CorruptionError("packed tensor '" + t.name + "': bad parameter group count");
  detail::decode_fields(q, fields);
  try {
    validate(q);
  } catch (const InvariantError& e) {
    throw CorruptionError(e.what());
  }
  return q;
}

inline std::vector<QuantizedTensor> unpack_quantized(const PackedQuantModel& m) {
  std::vector<QuantizedTensor> out;
  out.reserve(m.tensors.size());
  for (const auto& t : m.tensors) out.push_back(unpack_tensor(t, m.scheme, m.bit_width));
  return out;
}

// ---------------------------------------------------------------------------
// BQPK container: magic, u8 scheme, u8 bit width, u32 tensor count, then per
// tensor {u32 name length, name, u8 rank, u32 dims, u8 granularity,
// u32 group count, params, u64 payload length, payload}. Params are f32 min/max
// (asymm), f32 max_abs (symm) or i32 exponent_min/exponent_max (pow2).

inline std::size_t packed_header_bytes(const PackedTensor& t, QuantScheme s) {
  const std::size_t param_bytes = s == QuantScheme::UniformSymm ? 4 : 8;
  return 4 + t.name.size() + 1 + 4 * t.shape.size() + 1 + 4 + param_bytes * t.params.size() + 8;
}

inline Bytes encode_packed(const PackedQuantModel& m) {
  ByteWriter w;
  w.put_string({kPackedMagic.data(), kPackedMagic.size()});
  w.put(static_cast<std::uint8_t>(m.scheme));
  w.put(static_cast<std::uint8_t>(m.bit_width));
  w.put(static_cast<std::uint32_t>(m.tensors.size()));
  for (const auto& t : m.tensors) {
    w.put(static_cast<std::uint32_t>(t.name.size()));
    w.put_string(t.name);
    w.put(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) w.put(d);
    w.put(static_cast<std::uint8_t>(t.granularity));
    w.put(static_cast<std::uint32_t>(t.params.size()));
    for (const auto& p : t.params) {
      switch (m.scheme) {
        case QuantScheme::UniformAsymm: w.put(p.min), w.put(p.max); break;
        case QuantScheme::UniformSymm: w.put(p.max_abs); break;
        case QuantScheme::PowerOfTwo: w.put(p.exponent_min), w.put(p.exponent_max); break;
      }
    }
    w.put(static_cast<std::uint64_t>(t.payload.size()));
    w.put_bytes(t.payload);
  }
  return w.take();
}

inline PackedQuantModel decode_packed(std::span<const std::uint8_t> bytes, const std::string& context = "packed model") {
  ByteReader r(bytes, context);
  if (r.get_string(4) != std::string(kPackedMagic.data(), 4))
    throw FormatError(context + ": bad magic, not a BQPK packed model");
  PackedQuantModel m;
  const auto scheme = r.get<std::uint8_t>();
  if (scheme > static_cast<std::uint8_t>(QuantScheme::PowerOfTwo))
    throw FormatError(context + ": unknown scheme tag " + std::to_string(scheme));
  m.scheme = static_cast<QuantScheme>(scheme);
  m.bit_width = r.get<std::uint8_t>();
  if (m.bit_width < kMinBits || m.bit_width > kMaxBits)
    throw FormatError(context + ": bit width " + std::to_string(m.bit_width) + " outside [2,8]");
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    PackedTensor t;
    t.name = r.get_string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint8_t>();
    for (std::uint8_t k = 0; k < rank; ++k) t.shape.push_back(r.get<std::uint32_t>());
    const auto gran = r.get<std::uint8_t>();
    if (gran > 1) throw FormatError(context + ": unknown granularity tag " + std::to_string(gran));
    t.granularity = static_cast<Granularity>(gran);
    const auto groups = r.get<std::uint32_t>();
    if (groups > r.remaining()) throw CorruptionError(context + ": implausible group count");
    t.params.resize(groups);
    for (auto& p : t.params) {
      switch (m.scheme) {
        case QuantScheme::UniformAsymm: p.min = r.get<float>(), p.max = r.get<float>(); break;
        case QuantScheme::UniformSymm: p.max_abs = r.get<float>(); break;
        case QuantScheme::PowerOfTwo:
          p.exponent_min = r.get<std::int32_t>();
          p.exponent_max = r.get<std::int32_t>();
          break;
      }
    }
    const auto len = r.get<std::uint64_t>();
    if (len != packed_byte_count(element_count(t.shape), m.bit_width))
      throw CorruptionError(context + ": tensor '" + t.name + "' payload length " + std::to_string(len) +
                            " does not match its shape");
    auto payload = r.get_bytes(len);
    t.payload.assign(payload.begin(), payload.end());
    // decoding validates codes, padding and parameters
    (void)unpack_tensor(t, m.scheme, m.bit_width);
    m.tensors.push_back(std::move(t));
  }
  if (!r.at_end()) throw CorruptionError(context + ": trailing bytes after last tensor");
  return m;
}

inline void save_packed(const PackedQuantModel& m, const std::filesystem::path& path) {
  write_file(path, encode_packed(m));
}

inline PackedQuantModel load_packed(const std::filesystem::path& path) {
  return decode_packed(read_file(path), path.string());
}

}  // namespace bitquant

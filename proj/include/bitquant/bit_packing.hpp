#pragma once

#include <bitquant/error.hpp>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bitquant {

// Bytes needed to hold `count` fields of `bits` bits each.
constexpr std::size_t packed_byte_count(std::size_t count, unsigned bits) noexcept {
  return (count * bits + 7) / 8;
}

// LSB-first bit stream: field i occupies bits [i*w, (i+1)*w) where bit k of
// the stream is bit (k % 8) of byte k / 8.
class BitWriter {
public:
  explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  void write(std::uint32_t value, unsigned bits) {
    if (bits < 32 && (value >> bits) != 0)
      throw InvariantError("value " + std::to_string(value) + " does not fit in " +
                           std::to_string(bits) + " bits");
    for (unsigned i = 0; i < bits; ++i, ++cursor_) {
      if (cursor_ % 8 == 0) out_.push_back(0);
      out_.back() |= static_cast<std::uint8_t>(((value >> i) & 1u) << (cursor_ % 8));
    }
  }

  std::size_t bits_written() const noexcept { return cursor_; }

private:
  std::vector<std::uint8_t>& out_;
  std::size_t cursor_ = 0;
};

class BitReader {
public:
  explicit BitReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint32_t read(unsigned bits) {
    if (cursor_ + bits > data_.size() * 8) throw CorruptionError("bit stream exhausted");
    std::uint32_t v = 0;
    for (unsigned i = 0; i < bits; ++i, ++cursor_)
      v |= static_cast<std::uint32_t>((data_[cursor_ / 8] >> (cursor_ % 8)) & 1u) << i;
    return v;
  }

  // True when every bit after the cursor is zero.
  bool padding_is_zero() const noexcept {
    for (std::size_t k = cursor_; k < data_.size() * 8; ++k)
      if ((data_[k / 8] >> (k % 8)) & 1u) return false;
    return true;
  }

  std::size_t bits_read() const noexcept { return cursor_; }

private:
  std::span<const std::uint8_t> data_;
  std::size_t cursor_ = 0;
};

template <typename Int>
std::vector<std::uint8_t> pack_bits(std::span<const Int> fields, unsigned bits) {
  std::vector<std::uint8_t> out;
  out.reserve(packed_byte_count(fields.size(), bits));
  BitWriter w(out);
  for (auto f : fields) w.write(static_cast<std::uint32_t>(f), bits);
  return out;
}

inline std::vector<std::uint32_t> unpack_bits(std::span<const std::uint8_t> data, std::size_t count,
                                              unsigned bits) {
  if (data.size() != packed_byte_count(count, bits))
    throw CorruptionError("packed payload is " + std::to_string(data.size()) + " bytes, expected " +
                          std::to_string(packed_byte_count(count, bits)));
  BitReader r(data);
  std::vector<std::uint32_t> out(count);
  for (auto& v : out) v = r.read(bits);
  if (!r.padding_is_zero()) throw CorruptionError("nonzero padding bits in packed payload");
  return out;
}

}  // namespace bitquant

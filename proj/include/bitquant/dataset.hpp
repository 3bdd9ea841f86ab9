#pragma once

#include <bitquant/binary_io.hpp>
#include <bitquant/error.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <span>
#include <vector>

namespace bitquant {

inline constexpr std::array<char, 4> kDatasetMagic = {'B', 'Q', 'D', 'S'};

// Labeled evaluation samples. Features are stored flat, one row per sample.
struct Dataset {
  std::uint32_t feature_length = 0;
  std::uint32_t class_count = 0;
  std::vector<float> features;
  std::vector<std::uint32_t> labels;

  std::size_t size() const noexcept { return labels.size(); }

  std::span<const float> sample(std::size_t i) const {
    return {features.data() + i * feature_length, feature_length};
  }

  void validate() const {
    if (features.size() != labels.size() * feature_length)
      throw ValidationError("dataset feature block size disagrees with sample count");
    for (auto l : labels)
      if (l >= class_count)
        throw ValidationError("dataset label " + std::to_string(l) + " outside [0," +
                              std::to_string(class_count) + ")");
    for (float f : features)
      if (!std::isfinite(f)) throw ValidationError("dataset contains a non-finite feature");
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// BQDS: magic, u32 sample count, u32 feature length, u32 class count, then per
// sample {f32 features[feature length], u32 label}.
inline Bytes encode_dataset(const Dataset& d) {
  d.validate();
  ByteWriter w;
  w.put_string({kDatasetMagic.data(), kDatasetMagic.size()});
  w.put(static_cast<std::uint32_t>(d.size()));
  w.put(d.feature_length);
  w.put(d.class_count);
  for (std::size_t i = 0; i < d.size(); ++i) {
    w.put_array(d.sample(i));
    w.put(d.labels[i]);
  }
  return w.take();
}

inline Dataset decode_dataset(std::span<const std::uint8_t> bytes, const std::string& context = "dataset") {
  ByteReader r(bytes, context);
  if (r.get_string(4) != std::string(kDatasetMagic.data(), 4))
    throw FormatError(context + ": bad magic, not a BQDS dataset");
  Dataset d;
  const auto count = r.get<std::uint32_t>();
  d.feature_length = r.get<std::uint32_t>();
  d.class_count = r.get<std::uint32_t>();
  const std::uint64_t record = std::uint64_t(d.feature_length) * 4 + 4;
  if (record * count != r.remaining())
    throw CorruptionError(context + ": expected " + std::to_string(record * count) + " sample bytes, found " +
                          std::to_string(r.remaining()));
  d.features.reserve(std::size_t(count) * d.feature_length);
  d.labels.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto f = r.get_array<float>(d.feature_length);
    d.features.insert(d.features.end(), f.begin(), f.end());
    d.labels.push_back(r.get<std::uint32_t>());
  }
  d.validate();
  return d;
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(read_file(path), path.string());
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  write_file(path, encode_dataset(d));
}

}  // namespace bitquant

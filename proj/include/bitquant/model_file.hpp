#pragma once

#include <bitquant/binary_io.hpp>
#include <bitquant/error.hpp>
#include <bitquant/graph.hpp>
#include <bitquant/tensor.hpp>

#include <array>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace bitquant {

inline constexpr std::array<char, 4> kModelMagic = {'B', 'Q', 'N', 'T'};
inline constexpr std::uint32_t kModelVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;

// In-memory form of a .bqnt container. The graph is kept as text so a load/save
// cycle reproduces the file byte for byte.
struct ModelFile {
  std::uint32_t version = kModelVersion;
  std::vector<Tensor> tensors;
  std::string graph_text;

  ModelGraph graph() const { return parse_graph(graph_text); }

  const Tensor* find(std::string_view name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
  Tensor* find(std::string_view name) {
    for (auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }

  const Tensor& at(std::string_view name) const {
    if (const auto* t = find(name)) return *t;
    throw ValidationError("model has no tensor named '" + std::string(name) + "'");
  }

  void validate() const {
    std::set<std::string> names;
    for (const auto& t : tensors) {
      if (t.name.empty()) throw ValidationError("tensor with empty name");
      if (!names.insert(t.name).second) throw ValidationError("duplicate tensor name '" + t.name + "'");
      if (t.shape.size() > 255) throw ValidationError("tensor '" + t.name + "' rank exceeds 255");
      t.validate();
    }
    for (const auto& name : referenced_tensors(graph()))
      if (!names.count(name)) throw ValidationError("graph references missing tensor '" + name + "'");
  }

  friend bool operator==(const ModelFile&, const ModelFile&) = default;
};

inline Bytes encode_model(const ModelFile& model) {
  model.validate();
  ByteWriter w;
  w.put_string({kModelMagic.data(), kModelMagic.size()});
  w.put(model.version);
  w.put(static_cast<std::uint32_t>(model.tensors.size()));

  std::size_t header_size = w.size();
  for (const auto& t : model.tensors)
    header_size += 4 + t.name.size() + 1 + 1 + 4 * t.shape.size() + 8;

  std::uint64_t offset = header_size;
  for (const auto& t : model.tensors) {
    w.put(static_cast<std::uint32_t>(t.name.size()));
    w.put_string(t.name);
    w.put(kDtypeF32);
    w.put(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) w.put(d);
    w.put(offset);
    offset += t.data.size() * sizeof(float);
  }
  for (const auto& t : model.tensors) w.put_array(std::span<const float>(t.data));
  w.put(static_cast<std::uint64_t>(model.graph_text.size()));
  w.put_string(model.graph_text);
  return w.take();
}

inline ModelFile decode_model(std::span<const std::uint8_t> bytes, const std::string& context = "model") {
  ByteReader r(bytes, context);
  if (r.get_string(4) != std::string(kModelMagic.data(), 4))
    throw FormatError(context + ": bad magic, not a BQNT model");
  ModelFile m;
  m.version = r.get<std::uint32_t>();
  if (m.version != kModelVersion)
    throw FormatError(context + ": unsupported version " + std::to_string(m.version));
  const auto count = r.get<std::uint32_t>();

  struct Entry {
    Tensor tensor;
    std::uint64_t offset;
  };
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const auto name_len = r.get<std::uint32_t>();
    e.tensor.name = r.get_string(name_len);
    const auto dtype = r.get<std::uint8_t>();
    if (dtype != kDtypeF32)
      throw FormatError(context + ": tensor '" + e.tensor.name + "' has unsupported dtype tag " +
                        std::to_string(dtype));
    const auto rank = r.get<std::uint8_t>();
    for (std::uint8_t k = 0; k < rank; ++k) e.tensor.shape.push_back(r.get<std::uint32_t>());
    e.offset = r.get<std::uint64_t>();
    entries.push_back(std::move(e));
  }

  for (auto& e : entries) {
    if (e.offset != r.position())
      throw CorruptionError(context + ": tensor '" + e.tensor.name + "' offset " +
                            std::to_string(e.offset) + " does not follow the previous payload (expected " +
                            std::to_string(r.position()) + ")");
    for (auto d : e.tensor.shape)
      if (d == 0) throw CorruptionError(context + ": tensor '" + e.tensor.name + "' has a zero dimension");
    e.tensor.data = r.get_array<float>(element_count(e.tensor.shape));
    m.tensors.push_back(std::move(e.tensor));
  }
  const auto graph_len = r.get<std::uint64_t>();
  if (graph_len != r.remaining())
    throw CorruptionError(context + ": graph block length " + std::to_string(graph_len) +
                          " disagrees with " + std::to_string(r.remaining()) + " remaining bytes");
  m.graph_text = r.get_string(graph_len);
  m.validate();
  return m;
}

inline ModelFile load_model(const std::filesystem::path& path) {
  return decode_model(read_file(path), path.string());
}

inline void save_model(const ModelFile& model, const std::filesystem::path& path) {
  const auto bytes = encode_model(model);
  write_file(path, bytes);
}

}  // namespace bitquant

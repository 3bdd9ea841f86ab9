#pragma once

#include <bitquant/error.hpp>
#include <bitquant/tensor.hpp>

#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace bitquant {

enum class LayerKind { Dense, Conv2d, BatchNorm, Relu, MaxPool, AvgPool, Softmax, Flatten, Unknown };

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Softmax: return "softmax";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Unknown: break;
  }
  return "unknown";
}

inline LayerKind layer_kind_from_string(std::string_view s) {
  for (auto k : {LayerKind::Dense, LayerKind::Conv2d, LayerKind::BatchNorm, LayerKind::Relu,
                 LayerKind::MaxPool, LayerKind::AvgPool, LayerKind::Softmax, LayerKind::Flatten})
    if (to_string(k) == s) return k;
  return LayerKind::Unknown;
}

// Keys whose values name parameter tensors, per layer kind.
inline std::vector<std::string_view> tensor_keys(LayerKind k) {
  switch (k) {
    case LayerKind::Dense:
    case LayerKind::Conv2d: return {"weight", "bias"};
    case LayerKind::BatchNorm: return {"scale", "shift", "mean", "var"};
    default: return {};
  }
}

struct Layer {
  LayerKind kind = LayerKind::Unknown;
  std::string kind_name;  // as written; differs from to_string(kind) only for unknown kinds
  std::vector<std::pair<std::string, std::string>> attrs;

  const std::string* find(std::string_view key) const {
    for (const auto& [k, v] : attrs)
      if (k == key) return &v;
    return nullptr;
  }
  bool has(std::string_view key) const { return find(key) != nullptr; }

  void set(std::string key, std::string value) {
    for (auto& [k, v] : attrs)
      if (k == key) {
        v = std::move(value);
        return;
      }
    attrs.emplace_back(std::move(key), std::move(value));
  }

  void erase(std::string_view key) {
    std::erase_if(attrs, [&](const auto& kv) { return kv.first == key; });
  }

  std::string label(std::size_t index) const {
    if (const auto* n = find("name")) return *n;
    return kind_name + "#" + std::to_string(index);
  }

  std::string get(std::string_view key) const {
    if (const auto* v = find(key)) return *v;
    throw ValidationError(kind_name + " layer missing required key '" + std::string(key) + "'");
  }

  std::int64_t get_int(std::string_view key, std::optional<std::int64_t> fallback = {}) const {
    const auto* v = find(key);
    if (!v) {
      if (fallback) return *fallback;
      throw ValidationError(kind_name + " layer missing required key '" + std::string(key) + "'");
    }
    std::int64_t out = 0;
    auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || p != v->data() + v->size())
      throw ValidationError(kind_name + " layer: '" + std::string(key) + "=" + *v + "' is not an integer");
    return out;
  }

  double get_double(std::string_view key, double fallback) const {
    const auto* v = find(key);
    if (!v) return fallback;
    std::size_t used = 0;
    double out = 0;
    try {
      out = std::stod(*v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v->size() || v->empty())
      throw ValidationError(kind_name + " layer: '" + std::string(key) + "=" + *v + "' is not a number");
    return out;
  }

  friend bool operator==(const Layer&, const Layer&) = default;
};

// Ordered layer list plus the declared input shape and optional class labels.
//
// Text form, one entry per line, '#' starts a comment:
//   input shape=1,12,12
//   classes names=cat,dog,...
//   conv2d name=c1 weight=c1.w bias=c1.b stride=1 pad=1
//   batchnorm scale=bn.g shift=bn.b mean=bn.m var=bn.v eps=1e-5
//   relu
//   maxpool size=2 stride=2
//   flatten
//   dense weight=fc.w bias=fc.b
//   softmax
struct ModelGraph {
  Shape input_shape;
  std::vector<std::string> class_names;
  std::vector<Layer> layers;

  friend bool operator==(const ModelGraph&, const ModelGraph&) = default;
};

struct GraphParseOptions {
  // Accept pad=same / pad=valid and resolve them to explicit sizes.
  bool allow_padding_shorthand = false;
};

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline Shape parse_shape(const std::string& text, std::size_t line_no) {
  Shape shape;
  for (const auto& part : split(text, ',')) {
    std::uint32_t d = 0;
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), d);
    if (ec != std::errc{} || p != part.data() + part.size() || d == 0)
      throw ValidationError("graph line " + std::to_string(line_no) + ": bad shape '" + text + "'");
    shape.push_back(d);
  }
  return shape;
}

}  // namespace detail

inline ModelGraph parse_graph(std::string_view text, const GraphParseOptions& opts = {}) {
  ModelGraph g;
  bool have_input = false;
  std::size_t line_no = 0;
  for (auto& raw : detail::split(text, '\n')) {
    ++line_no;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream words(line);
    std::string kind;
    if (!(words >> kind)) continue;
    Layer layer;
    layer.kind_name = kind;
    std::string word;
    while (words >> word) {
      auto eq = word.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ValidationError("graph line " + std::to_string(line_no) + ": expected key=value, got '" +
                              word + "'");
      auto key = word.substr(0, eq);
      if (layer.has(key))
        throw ValidationError("graph line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
      layer.attrs.emplace_back(key, word.substr(eq + 1));
    }
    if (kind == "input") {
      if (have_input) throw ValidationError("graph line " + std::to_string(line_no) + ": second input line");
      g.input_shape = detail::parse_shape(layer.get("shape"), line_no);
      have_input = true;
      continue;
    }
    if (kind == "classes") {
      g.class_names = detail::split(layer.get("names"), ',');
      continue;
    }
    layer.kind = layer_kind_from_string(kind);
    if (const auto* pad = layer.find("pad"); pad && (*pad == "same" || *pad == "valid")) {
      if (!opts.allow_padding_shorthand)
        throw ValidationError("graph line " + std::to_string(line_no) +
                              ": padding shorthand not allowed here, use an explicit size");
      std::string resolved = "0";
      if (*pad == "same") {
        // same-size output at stride 1 for odd kernels; kernel size read from attrs
        const auto k = layer.get_int("kernel");
        if (k % 2 == 0)
          throw ValidationError("graph line " + std::to_string(line_no) + ": pad=same needs an odd kernel");
        resolved = std::to_string((k - 1) / 2);
      }
      layer.set("pad", resolved);
    }
    g.layers.push_back(std::move(layer));
  }
  if (!have_input) throw ValidationError("graph has no input line");
  return g;
}

inline std::string serialize_graph(const ModelGraph& g) {
  std::string out = "input shape=";
  for (std::size_t i = 0; i < g.input_shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(g.input_shape[i]);
  }
  out += "\n";
  if (!g.class_names.empty()) {
    out += "classes names=";
    for (std::size_t i = 0; i < g.class_names.size(); ++i) {
      if (i) out += ",";
      out += g.class_names[i];
    }
    out += "\n";
  }
  for (const auto& l : g.layers) {
    out += l.kind_name;
    for (const auto& [k, v] : l.attrs) out += " " + k + "=" + v;
    out += "\n";
  }
  return out;
}

// Every tensor name the graph binds, in layer order. Unknown kinds contribute
// nothing here; see quantize_model for how they are reported.
inline std::vector<std::string> referenced_tensors(const ModelGraph& g) {
  std::vector<std::string> out;
  for (const auto& l : g.layers)
    for (auto key : tensor_keys(l.kind))
      if (const auto* v = l.find(key)) out.push_back(*v);
  return out;
}

}  // namespace bitquant

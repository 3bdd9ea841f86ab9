#pragma once

#include <bitquant/error.hpp>
#include <bitquant/graph.hpp>
#include <bitquant/model_file.hpp>
#include <bitquant/packed_model.hpp>
#include <bitquant/parallel.hpp>
#include <bitquant/quant.hpp>

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace bitquant {

// Bit width that leaves the model untouched (FP32 reference).
inline constexpr unsigned kPassthroughBits = 32;

struct QuantizeOptions {
  QuantScheme scheme = QuantScheme::UniformAsymm;
  unsigned bits = 8;
  Granularity granularity = Granularity::PerTensor;
  bool quantize_bias = false;
  bool quantize_bn_stats = true;  // moving mean/var alongside scale/shift
  bool fold_bn = false;
};

struct QuantizeWarning {
  std::string layer;
  std::string tensor;
  std::string message;
};

struct QuantizedModel {
  ModelFile simulated;                   // parameters replaced by quantize->dequantize images
  std::vector<QuantizedTensor> tensors;  // in first-reference order
  std::optional<PackedQuantModel> packed;
  std::vector<QuantizeWarning> warnings;
};

// Parameter tensors subject to quantization, in first-reference order, plus
// warnings for tensors bound by layer kinds the toolkit does not know.
inline std::vector<std::string> quantizable_tensors(const ModelFile& model, const QuantizeOptions& opts,
                                                    std::vector<QuantizeWarning>* warnings = nullptr) {
  const auto g = model.graph();
  std::vector<std::string> out;
  std::set<std::string> seen;
  auto add = [&](const Layer& l, std::string_view key) {
    if (const auto* v = l.find(key); v && seen.insert(*v).second) out.push_back(*v);
  };
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const auto& l = g.layers[i];
    switch (l.kind) {
      case LayerKind::Dense:
      case LayerKind::Conv2d:
        add(l, "weight");
        if (opts.quantize_bias) add(l, "bias");
        break;
      case LayerKind::BatchNorm:
        add(l, "scale");
        add(l, "shift");
        if (opts.quantize_bn_stats) {
          add(l, "mean");
          add(l, "var");
        }
        break;
      case LayerKind::Unknown:
        if (warnings)
          for (const auto& [k, v] : l.attrs)
            if (model.find(v))
              warnings->push_back({l.label(i), v, "unknown layer kind '" + l.kind_name + "', tensor left unquantized"});
        break;
      default: break;
    }
  }
  return out;
}

// Folds every batchnorm that directly follows a conv2d or dense layer into that
// layer's weight and bias, then drops the batchnorm from the graph.
inline ModelFile fold_batchnorm(const ModelFile& model) {
  auto g = model.graph();
  ModelFile out = model;
  std::map<std::string, int> refs;
  for (const auto& name : referenced_tensors(g)) ++refs[name];

  std::vector<Layer> layers;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const auto& l = g.layers[i];
    const bool foldable = (l.kind == LayerKind::Conv2d || l.kind == LayerKind::Dense) && i + 1 < g.layers.size() &&
                          g.layers[i + 1].kind == LayerKind::BatchNorm;
    if (!foldable) {
      layers.push_back(l);
      continue;
    }
    const auto& bn = g.layers[i + 1];
    Layer fused = l;
    const auto wname = l.get("weight");
    if (refs[wname] != 1) throw ValidationError("cannot fold batchnorm into shared weight '" + wname + "'");
    auto* w = out.find(wname);
    const auto& scale = model.at(bn.get("scale")).data;
    const auto& shift = model.at(bn.get("shift")).data;
    const auto& mean = model.at(bn.get("mean")).data;
    const auto& var = model.at(bn.get("var")).data;
    const double eps = bn.get_double("eps", 1e-5);
    const std::size_t oc = w->shape.at(0);
    if (scale.size() != oc) throw ShapeError("batchnorm after '" + wname + "' has mismatched channel count");
    const std::size_t per = w->size() / oc;

    std::vector<float> bias(oc, 0.0f);
    std::string bname;
    if (const auto* b = l.find("bias")) {
      bname = *b;
      if (refs[bname] != 1) throw ValidationError("cannot fold batchnorm into shared bias '" + bname + "'");
      bias = model.at(bname).data;
    } else {
      bname = wname + ".folded_bias";
      if (out.find(bname)) throw ValidationError("tensor name '" + bname + "' already taken");
      out.tensors.push_back({bname, {static_cast<std::uint32_t>(oc)}, {}});
      fused.set("bias", bname);
    }
    for (std::size_t c = 0; c < oc; ++c) {
      const double k = double(scale[c]) / std::sqrt(double(var[c]) + eps);
      for (std::size_t j = 0; j < per; ++j) w->data[c * per + j] = static_cast<float>(w->data[c * per + j] * k);
      bias[c] = static_cast<float>((double(bias[c]) - mean[c]) * k + shift[c]);
    }
    out.find(bname)->data = bias;
    layers.push_back(std::move(fused));
    ++i;  // skip the batchnorm
  }
  g.layers = std::move(layers);
  out.graph_text = serialize_graph(g);
  std::set<std::string> live;
  for (const auto& n : referenced_tensors(g)) live.insert(n);
  for (const auto& [name, count] : refs)
    if (!live.count(name)) std::erase_if(out.tensors, [&](const Tensor& t) { return t.name == name; });
  out.validate();
  return out;
}

inline QuantizedModel quantize_model(const ModelFile& model, const QuantizeOptions& opts) {
  if (opts.bits != kPassthroughBits) check_bit_width(opts.bits);
  model.validate();
  QuantizedModel result;
  result.simulated = opts.fold_bn ? fold_batchnorm(model) : model;
  const auto names = quantizable_tensors(result.simulated, opts, &result.warnings);
  if (opts.bits == kPassthroughBits) return result;

  result.tensors.resize(names.size());
  parallel_for(names.size(), [&](std::size_t i) {
    result.tensors[i] = quantize(result.simulated.at(names[i]), opts.scheme, opts.bits, opts.granularity);
  });
  for (const auto& q : result.tensors) result.simulated.find(q.name)->data = dequantize(q).data;
  result.packed = pack_quantized(result.tensors, opts.scheme, opts.bits);
  return result;
}

}  // namespace bitquant

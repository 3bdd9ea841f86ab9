#pragma once

#include <bitquant/confusion.hpp>
#include <bitquant/dataset.hpp>
#include <bitquant/error.hpp>
#include <bitquant/graph.hpp>
#include <bitquant/model_file.hpp>
#include <bitquant/parallel.hpp>
#include <bitquant/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace bitquant {

// A graph bound to its parameter tensors with every layer's shapes resolved.
// Immutable after construction, so one instance may serve many threads.
class Network {
public:
  struct Step {
    LayerKind kind;
    std::string label;
    Shape in_shape;
    Shape out_shape;
    std::vector<float> weight, bias, scale, shift, mean, var;
    std::size_t kernel_h = 0, kernel_w = 0, stride = 1, pad = 0;
    double eps = 1e-5;
  };

  Network(const ModelGraph& graph, const ModelFile& model) : graph_(graph) {
    if (graph.input_shape.empty()) throw ShapeError("graph declares no input shape");
    Shape shape = graph.input_shape;
    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
      steps_.push_back(compile(graph.layers[i], i, shape, model));
      shape = steps_.back().out_shape;
    }
    output_shape_ = shape;
  }

  explicit Network(const ModelFile& model) : Network(model.graph(), model) {}

  const ModelGraph& graph() const noexcept { return graph_; }
  const Shape& input_shape() const noexcept { return graph_.input_shape; }
  const Shape& output_shape() const noexcept { return output_shape_; }
  const std::vector<Step>& steps() const noexcept { return steps_; }

  std::vector<float> forward(std::span<const float> input) const {
    if (input.size() != element_count(graph_.input_shape))
      throw ShapeError("input has " + std::to_string(input.size()) + " values, graph expects shape " +
                       shape_to_string(graph_.input_shape));
    std::vector<float> cur(input.begin(), input.end());
    std::vector<float> next;
    for (const auto& s : steps_) {
      run(s, cur, next);
      cur.swap(next);
    }
    return cur;
  }

private:
  static std::vector<float> bind(const Layer& l, std::string_view key, const ModelFile& model,
                                 const std::string& label, const Shape& expected, bool optional = false) {
    const auto* name = l.find(key);
    if (!name) {
      if (optional) return {};
      throw ValidationError("layer " + label + ": missing '" + std::string(key) + "' binding");
    }
    const auto* t = model.find(*name);
    if (!t) throw ValidationError("layer " + label + ": tensor '" + *name + "' not found");
    if (t->shape != expected)
      throw ShapeError("layer " + label + ": tensor '" + *name + "' has shape " + shape_to_string(t->shape) +
                       ", expected " + shape_to_string(expected));
    return t->data;
  }

  static Step compile(const Layer& l, std::size_t index, const Shape& in, const ModelFile& model) {
    Step s;
    s.kind = l.kind;
    s.label = "'" + l.label(index) + "'";
    s.in_shape = in;
    auto need_rank = [&](std::size_t r) {
      if (in.size() != r)
        throw ShapeError("layer " + s.label + ": expects rank-" + std::to_string(r) + " input, got " +
                         shape_to_string(in));
    };
    auto positive = [&](std::string_view key, std::int64_t fallback) -> std::size_t {
      const auto v = l.get_int(key, fallback);
      if (v < 1) throw ValidationError("layer " + s.label + ": " + std::string(key) + " must be >= 1");
      return static_cast<std::size_t>(v);
    };
    switch (l.kind) {
      case LayerKind::Dense: {
        need_rank(1);
        const auto* wname = l.find("weight");
        if (!wname) throw ValidationError("layer " + s.label + ": missing 'weight' binding");
        const auto& w = model.at(*wname);
        if (w.shape.size() != 2 || w.shape[1] != in[0])
          throw ShapeError("layer " + s.label + ": weight shape " + shape_to_string(w.shape) +
                           " does not accept input " + shape_to_string(in));
        s.weight = w.data;
        s.bias = bind(l, "bias", model, s.label, {w.shape[0]}, true);
        s.out_shape = {w.shape[0]};
        break;
      }
      case LayerKind::Conv2d: {
        need_rank(3);
        const auto* wname = l.find("weight");
        if (!wname) throw ValidationError("layer " + s.label + ": missing 'weight' binding");
        const auto& w = model.at(*wname);
        if (w.shape.size() != 4 || w.shape[1] != in[0])
          throw ShapeError("layer " + s.label + ": kernel shape " + shape_to_string(w.shape) +
                           " does not accept input " + shape_to_string(in));
        s.weight = w.data;
        s.bias = bind(l, "bias", model, s.label, {w.shape[0]}, true);
        s.kernel_h = w.shape[2];
        s.kernel_w = w.shape[3];
        s.stride = positive("stride", 1);
        const auto pad = l.get_int("pad", 0);
        if (pad < 0) throw ValidationError("layer " + s.label + ": pad must be >= 0");
        s.pad = static_cast<std::size_t>(pad);
        const auto ph = in[1] + 2 * s.pad, pw = in[2] + 2 * s.pad;
        if (ph < s.kernel_h || pw < s.kernel_w)
          throw ShapeError("layer " + s.label + ": kernel larger than padded input " + shape_to_string(in));
        s.out_shape = {w.shape[0], static_cast<std::uint32_t>((ph - s.kernel_h) / s.stride + 1),
                       static_cast<std::uint32_t>((pw - s.kernel_w) / s.stride + 1)};
        break;
      }
      case LayerKind::BatchNorm: {
        if (in.size() != 1 && in.size() != 3)
          throw ShapeError("layer " + s.label + ": batchnorm needs rank-1 or rank-3 input");
        const Shape c{in[0]};
        s.scale = bind(l, "scale", model, s.label, c);
        s.shift = bind(l, "shift", model, s.label, c);
        s.mean = bind(l, "mean", model, s.label, c);
        s.var = bind(l, "var", model, s.label, c);
        s.eps = l.get_double("eps", 1e-5);
        if (!(s.eps >= 0.0)) throw ValidationError("layer " + s.label + ": eps must be >= 0");
        for (float v : s.var)
          if (v + s.eps <= 0.0) throw ValidationError("layer " + s.label + ": variance + eps must be positive");
        s.out_shape = in;
        break;
      }
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        need_rank(3);
        s.kernel_h = s.kernel_w = positive("size", 2);
        s.stride = positive("stride", static_cast<std::int64_t>(s.kernel_h));
        if (in[1] < s.kernel_h || in[2] < s.kernel_w)
          throw ShapeError("layer " + s.label + ": pool window larger than input " + shape_to_string(in));
        s.out_shape = {in[0], static_cast<std::uint32_t>((in[1] - s.kernel_h) / s.stride + 1),
                       static_cast<std::uint32_t>((in[2] - s.kernel_w) / s.stride + 1)};
        break;
      }
      case LayerKind::Relu:
      case LayerKind::Softmax: s.out_shape = in; break;
      case LayerKind::Flatten: s.out_shape = {static_cast<std::uint32_t>(element_count(in))}; break;
      case LayerKind::Unknown:
        throw ValidationError("layer " + s.label + ": unsupported layer kind '" + l.kind_name + "'");
    }
    return s;
  }

  static void run(const Step& s, const std::vector<float>& in, std::vector<float>& out) {
    out.assign(element_count(s.out_shape), 0.0f);
    switch (s.kind) {
      case LayerKind::Dense: {
        const std::size_t n_in = s.in_shape[0], n_out = s.out_shape[0];
        for (std::size_t o = 0; o < n_out; ++o) {
          float acc = s.bias.empty() ? 0.0f : s.bias[o];
          const float* w = s.weight.data() + o * n_in;
          for (std::size_t i = 0; i < n_in; ++i) acc += w[i] * in[i];
          out[o] = acc;
        }
        break;
      }
      case LayerKind::Conv2d: {
        const std::size_t ic = s.in_shape[0], ih = s.in_shape[1], iw = s.in_shape[2];
        const std::size_t oc = s.out_shape[0], oh = s.out_shape[1], ow = s.out_shape[2];
        const std::size_t kh = s.kernel_h, kw = s.kernel_w;
        for (std::size_t m = 0; m < oc; ++m)
          for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
              float acc = s.bias.empty() ? 0.0f : s.bias[m];
              for (std::size_t c = 0; c < ic; ++c)
                for (std::size_t p = 0; p < kh; ++p) {
                  const auto row = static_cast<std::ptrdiff_t>(y * s.stride + p) - static_cast<std::ptrdiff_t>(s.pad);
                  if (row < 0 || row >= static_cast<std::ptrdiff_t>(ih)) continue;
                  for (std::size_t q = 0; q < kw; ++q) {
                    const auto col = static_cast<std::ptrdiff_t>(x * s.stride + q) - static_cast<std::ptrdiff_t>(s.pad);
                    if (col < 0 || col >= static_cast<std::ptrdiff_t>(iw)) continue;
                    acc += s.weight[((m * ic + c) * kh + p) * kw + q] * in[(c * ih + row) * iw + col];
                  }
                }
              out[(m * oh + y) * ow + x] = acc;
            }
        break;
      }
      case LayerKind::BatchNorm: {
        const std::size_t c = s.in_shape[0];
        const std::size_t inner = in.size() / c;
        for (std::size_t k = 0; k < c; ++k) {
          const float inv = 1.0f / std::sqrt(s.var[k] + static_cast<float>(s.eps));
          for (std::size_t i = 0; i < inner; ++i)
            out[k * inner + i] = (in[k * inner + i] - s.mean[k]) * inv * s.scale[k] + s.shift[k];
        }
        break;
      }
      case LayerKind::Relu:
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        const bool is_max = s.kind == LayerKind::MaxPool;
        const std::size_t ih = s.in_shape[1], iw = s.in_shape[2];
        const std::size_t oh = s.out_shape[1], ow = s.out_shape[2];
        for (std::size_t c = 0; c < s.out_shape[0]; ++c)
          for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
              float acc = is_max ? -std::numeric_limits<float>::infinity() : 0.0f;
              for (std::size_t p = 0; p < s.kernel_h; ++p)
                for (std::size_t q = 0; q < s.kernel_w; ++q) {
                  const float v = in[(c * ih + y * s.stride + p) * iw + x * s.stride + q];
                  acc = is_max ? std::max(acc, v) : acc + v;
                }
              out[(c * oh + y) * ow + x] = is_max ? acc : acc / float(s.kernel_h * s.kernel_w);
            }
        break;
      }
      case LayerKind::Softmax: {
        const float top = *std::max_element(in.begin(), in.end());
        float sum = 0.0f;
        for (std::size_t i = 0; i < in.size(); ++i) sum += out[i] = std::exp(in[i] - top);
        for (auto& v : out) v /= sum;
        break;
      }
      case LayerKind::Flatten: out = in; break;
      case LayerKind::Unknown: break;
    }
  }

  ModelGraph graph_;
  std::vector<Step> steps_;
  Shape output_shape_;
};

inline std::vector<float> forward(const ModelFile& model, std::span<const float> input) {
  return Network(model).forward(input);
}

// Index of the largest value; the lowest index wins ties.
inline std::uint32_t argmax(std::span<const float> v) {
  std::uint32_t best = 0;
  for (std::uint32_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// Output rows for every sample, flattened in dataset order.
inline std::vector<float> forward_all(const Network& net, const Dataset& data) {
  if (data.feature_length != element_count(net.input_shape()))
    throw ShapeError("dataset feature length " + std::to_string(data.feature_length) +
                     " does not match graph input " + shape_to_string(net.input_shape()));
  const std::size_t width = element_count(net.output_shape());
  std::vector<float> out(data.size() * width);
  parallel_for(data.size(), [&](std::size_t i) {
    const auto y = net.forward(data.sample(i));
    std::copy(y.begin(), y.end(), out.begin() + i * width);
  });
  return out;
}

inline std::vector<std::string> class_names_for(const ModelGraph& g, std::size_t k) {
  if (g.class_names.size() == k) return g.class_names;
  return default_class_names(k);
}

inline EvalResult evaluate(const Network& net, const Dataset& data) {
  if (data.size() == 0) throw ArgumentError("cannot evaluate on an empty dataset");
  const std::size_t width = element_count(net.output_shape());
  if (width != data.class_count)
    throw ShapeError("graph produces " + std::to_string(width) + " outputs for " +
                     std::to_string(data.class_count) + " classes");
  const auto outputs = forward_all(net, data);
  ConfusionMatrix cm(class_names_for(net.graph(), data.class_count));
  std::vector<std::uint32_t> preds(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    preds[i] = argmax(std::span<const float>(outputs.data() + i * width, width));
    ++cm.at(data.labels[i], preds[i]);
  }
  return make_result(std::move(cm), std::move(preds));
}

inline EvalResult evaluate(const ModelFile& model, const Dataset& data) { return evaluate(Network(model), data); }

}  // namespace bitquant

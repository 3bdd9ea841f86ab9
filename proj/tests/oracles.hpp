#pragma once

// Reference implementations used only by tests. None of these call into the
// code paths they check: level selection is exhaustive search in exact
// arithmetic, and the forward pass is a separate double-precision loop nest.

#include <bitquant/graph.hpp>
#include <bitquant/model_file.hpp>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <vector>

namespace oracle {

// Values on the dyadic grid k * 2^-kGridBits are exact floats for |k| < 2^24
// and exact integers after scaling, which makes exhaustive level search exact.
inline constexpr int kGridBits = 20;

inline std::int64_t to_grid(float x) {
  const double scaled = std::ldexp(double(x), kGridBits);
  if (scaled != std::floor(scaled)) throw std::logic_error("value not on the test grid");
  return static_cast<std::int64_t>(scaled);
}

// Nearest of the 2^n - 1 + 1 asymmetric levels min + j (max - min) / (2^n - 1).
// Distances are compared as |(x - min)(2^n - 1) - j (max - min)| in integers.
// Equidistant levels resolve to the larger j (half away from zero).
inline std::int32_t nearest_asymm_level(std::int64_t x, std::int64_t lo, std::int64_t hi, unsigned n) {
  if (hi == lo) return 0;
  const std::int64_t top = (std::int64_t{1} << n) - 1;
  std::int32_t best = 0;
  std::int64_t best_d = -1;
  for (std::int64_t j = 0; j <= top; ++j) {
    const std::int64_t d = std::llabs((x - lo) * top - j * (hi - lo));
    if (best_d < 0 || d < best_d || (d == best_d && j > best)) best = static_cast<std::int32_t>(j), best_d = d;
  }
  return best;
}

// Nearest of the symmetric levels j * max_abs / (2^(n-1) - 1), j in [-L, L].
// Ties resolve to the level with the larger |j|.
inline std::int32_t nearest_symm_level(std::int64_t x, std::int64_t max_abs, unsigned n) {
  if (max_abs == 0) return 0;
  const std::int64_t top = (std::int64_t{1} << (n - 1)) - 1;
  std::int32_t best = 0;
  std::int64_t best_d = -1;
  for (std::int64_t j = -top; j <= top; ++j) {
    const std::int64_t d = std::llabs(x * top - j * max_abs);
    if (best_d < 0 || d < best_d || (d == best_d && std::llabs(j) > std::llabs(best)))
      best = static_cast<std::int32_t>(j), best_d = d;
  }
  return best;
}

// Straightforward double-precision interpretation of a graph.
inline std::vector<double> naive_forward(const bitquant::ModelFile& model, const std::vector<float>& input) {
  using bitquant::LayerKind;
  const auto g = model.graph();
  std::vector<std::size_t> shape(g.input_shape.begin(), g.input_shape.end());
  std::vector<double> x(input.begin(), input.end());
  auto tensor = [&](const bitquant::Layer& l, const char* key) -> const std::vector<float>* {
    const auto* name = l.find(key);
    return name ? &model.at(*name).data : nullptr;
  };
  for (const auto& l : g.layers) {
    switch (l.kind) {
      case LayerKind::Dense: {
        const auto& w = *tensor(l, "weight");
        const auto* b = tensor(l, "bias");
        const std::size_t in = x.size(), out = w.size() / in;
        std::vector<double> y(out, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
          double acc = b ? (*b)[o] : 0.0;
          for (std::size_t i = 0; i < in; ++i) acc += double(w[o * in + i]) * x[i];
          y[o] = acc;
        }
        x = std::move(y);
        shape = {out};
        break;
      }
      case LayerKind::Conv2d: {
        const auto& wt = model.at(l.get("weight"));
        const auto* b = tensor(l, "bias");
        const std::size_t oc = wt.shape[0], ic = wt.shape[1], kh = wt.shape[2], kw = wt.shape[3];
        const std::size_t stride = static_cast<std::size_t>(l.get_int("stride", 1));
        const std::size_t pad = static_cast<std::size_t>(l.get_int("pad", 0));
        const std::size_t h = shape[1], w = shape[2];
        // explicit zero-padded copy of the input
        const std::size_t ph = h + 2 * pad, pw = w + 2 * pad;
        std::vector<double> padded(ic * ph * pw, 0.0);
        for (std::size_t c = 0; c < ic; ++c)
          for (std::size_t r = 0; r < h; ++r)
            for (std::size_t s = 0; s < w; ++s) padded[(c * ph + r + pad) * pw + s + pad] = x[(c * h + r) * w + s];
        const std::size_t oh = (ph - kh) / stride + 1, ow = (pw - kw) / stride + 1;
        std::vector<double> y(oc * oh * ow, 0.0);
        for (std::size_t m = 0; m < oc; ++m)
          for (std::size_t r = 0; r < oh; ++r)
            for (std::size_t s = 0; s < ow; ++s) {
              double acc = b ? (*b)[m] : 0.0;
              for (std::size_t c = 0; c < ic; ++c)
                for (std::size_t i = 0; i < kh; ++i)
                  for (std::size_t j = 0; j < kw; ++j)
                    acc += double(wt.data[((m * ic + c) * kh + i) * kw + j]) *
                           padded[(c * ph + r * stride + i) * pw + s * stride + j];
              y[(m * oh + r) * ow + s] = acc;
            }
        x = std::move(y);
        shape = {oc, oh, ow};
        break;
      }
      case LayerKind::BatchNorm: {
        const auto& sc = *tensor(l, "scale");
        const auto& sh = *tensor(l, "shift");
        const auto& mu = *tensor(l, "mean");
        const auto& var = *tensor(l, "var");
        const double eps = l.get_double("eps", 1e-5);
        const std::size_t c = shape[0], inner = x.size() / c;
        for (std::size_t k = 0; k < c; ++k)
          for (std::size_t i = 0; i < inner; ++i) {
            auto& v = x[k * inner + i];
            v = (v - mu[k]) / std::sqrt(double(var[k]) + eps) * sc[k] + sh[k];
          }
        break;
      }
      case LayerKind::Relu:
        for (auto& v : x) v = std::max(v, 0.0);
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        const std::size_t k = static_cast<std::size_t>(l.get_int("size", 2));
        const std::size_t stride = static_cast<std::size_t>(l.get_int("stride", static_cast<std::int64_t>(k)));
        const std::size_t c = shape[0], h = shape[1], w = shape[2];
        const std::size_t oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
        std::vector<double> y(c * oh * ow);
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t r = 0; r < oh; ++r)
            for (std::size_t s = 0; s < ow; ++s) {
              std::vector<double> window;
              for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < k; ++j) window.push_back(x[(ch * h + r * stride + i) * w + s * stride + j]);
              double v = 0;
              if (l.kind == LayerKind::MaxPool) {
                v = window[0];
                for (double e : window) v = std::max(v, e);
              } else {
                for (double e : window) v += e;
                v /= double(window.size());
              }
              y[(ch * oh + r) * ow + s] = v;
            }
        x = std::move(y);
        shape = {c, oh, ow};
        break;
      }
      case LayerKind::Softmax: {
        double top = x[0], sum = 0;
        for (double v : x) top = std::max(top, v);
        for (auto& v : x) sum += v = std::exp(v - top);
        for (auto& v : x) v /= sum;
        break;
      }
      case LayerKind::Flatten: shape = {x.size()}; break;
      case LayerKind::Unknown: throw std::logic_error("naive_forward: unknown layer");
    }
  }
  return x;
}

}  // namespace oracle

#pragma once

#include <bitquant/dataset.hpp>
#include <bitquant/infer.hpp>
#include <bitquant/model_file.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace bitquant {

// Deterministic across platforms: mt19937_64 output is fully specified, and the
// distributions below use only exact arithmetic (no <random> distributions, no
// transcendental functions).
class SeededRng {
public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n ? engine_() % n : 0; }

  // Approximately standard normal: Irwin-Hall sum of 12 uniforms.
  double normal() {
    double s = 0;
    for (int i = 0; i < 12; ++i) s += uniform();
    return s - 6.0;
  }
  double normal(double mean, double sd) { return mean + sd * normal(); }

private:
  std::mt19937_64 engine_;
};

inline constexpr std::uint64_t kFixtureSeed = 20191209;

struct FixtureTask {
  ModelFile model;
  Dataset data;
};

namespace detail {

inline Tensor random_tensor(SeededRng& rng, std::string name, Shape shape, double sd, double mean = 0.0) {
  Tensor t{std::move(name), std::move(shape), {}};
  t.data.resize(element_count(t.shape));
  for (auto& v : t.data) v = static_cast<float>(rng.normal(mean, sd));
  return t;
}

// Per-channel mean and variance of a layer's input over a batch of samples.
inline void channel_moments(const std::vector<std::vector<float>>& acts, std::size_t channels, std::vector<float>& mean,
                            std::vector<float>& var) {
  const std::size_t inner = acts.front().size() / channels;
  mean.assign(channels, 0.0f);
  var.assign(channels, 0.0f);
  for (std::size_t c = 0; c < channels; ++c) {
    double s = 0, s2 = 0;
    for (const auto& a : acts)
      for (std::size_t i = 0; i < inner; ++i) {
        const double v = a[c * inner + i];
        s += v;
        s2 += v * v;
      }
    const double n = double(acts.size() * inner);
    mean[c] = static_cast<float>(s / n);
    var[c] = static_cast<float>(std::max(s2 / n - (s / n) * (s / n), 1e-6));
  }
}

inline std::vector<std::vector<float>> run_prefix(const ModelFile& m, const std::vector<std::vector<float>>& inputs) {
  Network net(m);
  std::vector<std::vector<float>> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) out.push_back(net.forward(x));
  return out;
}

}  // namespace detail

// Seeded teacher-student image classification task. A random CNN teacher
// (conv-bn-relu-pool x2, dense-relu-dense-softmax) labels random 12x12 inputs;
// batchnorm statistics are measured on those inputs and the output bias is
// set so the ten classes are roughly balanced. The shipped "student" is the
// teacher with seeded multiplicative weight noise, standing in for an
// imperfectly trained network.
inline constexpr double kStudentNoise = 0.08;
inline FixtureTask make_teacher_task(std::uint64_t seed = kFixtureSeed, std::size_t samples = 2000) {
  SeededRng rng(seed);
  constexpr std::uint32_t kClasses = 10;
  std::vector<std::vector<float>> inputs(4 * samples, std::vector<float>(144));
  for (auto& x : inputs)
    for (auto& v : x) v = static_cast<float>(rng.normal());

  ModelFile m;
  auto add = [&](Tensor t) { m.tensors.push_back(std::move(t)); };
  add(detail::random_tensor(rng, "conv1.weight", {8, 1, 3, 3}, std::sqrt(2.0 / 9)));
  add(detail::random_tensor(rng, "conv1.bias", {8}, 0.05));
  add(detail::random_tensor(rng, "bn1.scale", {8}, 0.1, 1.0));
  add(detail::random_tensor(rng, "bn1.shift", {8}, 0.1));
  add({"bn1.mean", {8}, std::vector<float>(8, 0.0f)});
  add({"bn1.var", {8}, std::vector<float>(8, 1.0f)});
  add(detail::random_tensor(rng, "conv2.weight", {16, 8, 3, 3}, std::sqrt(2.0 / 72)));
  add(detail::random_tensor(rng, "conv2.bias", {16}, 0.05));
  add(detail::random_tensor(rng, "bn2.scale", {16}, 0.1, 1.0));
  add(detail::random_tensor(rng, "bn2.shift", {16}, 0.1));
  add({"bn2.mean", {16}, std::vector<float>(16, 0.0f)});
  add({"bn2.var", {16}, std::vector<float>(16, 1.0f)});
  add(detail::random_tensor(rng, "fc1.weight", {64, 144}, std::sqrt(2.0 / 144)));
  add(detail::random_tensor(rng, "fc1.bias", {64}, 0.05));
  add(detail::random_tensor(rng, "fc2.weight", {kClasses, 64}, std::sqrt(1.0 / 64)));
  add({"fc2.bias", {kClasses}, std::vector<float>(kClasses, 0.0f)});

  const std::string head =
      "input shape=1,12,12\n"
      "classes names=airplane,automobile,bird,cat,deer,dog,frog,horse,ship,truck\n"
      "conv2d name=conv1 weight=conv1.weight bias=conv1.bias stride=1 pad=1\n";
  const std::string bn1 = "batchnorm name=bn1 scale=bn1.scale shift=bn1.shift mean=bn1.mean var=bn1.var eps=1e-5\n";
  const std::string mid = "relu\nmaxpool size=2 stride=2\nconv2d name=conv2 weight=conv2.weight bias=conv2.bias stride=1 pad=1\n";
  const std::string bn2 = "batchnorm name=bn2 scale=bn2.scale shift=bn2.shift mean=bn2.mean var=bn2.var eps=1e-5\n";
  const std::string tail =
      "relu\nmaxpool size=2 stride=2\nflatten\n"
      "dense name=fc1 weight=fc1.weight bias=fc1.bias\nrelu\n"
      "dense name=fc2 weight=fc2.weight bias=fc2.bias\nsoftmax\n";

  // Measure batchnorm statistics layer by layer on the inputs.
  std::vector<float> mean, var;
  m.graph_text = head;
  detail::channel_moments(detail::run_prefix(m, inputs), 8, mean, var);
  m.find("bn1.mean")->data = mean;
  m.find("bn1.var")->data = var;
  m.graph_text = head + bn1 + mid;
  detail::channel_moments(detail::run_prefix(m, inputs), 16, mean, var);
  m.find("bn2.mean")->data = mean;
  m.find("bn2.var")->data = var;

  // Balance the classes: centre each logit on its mean over the inputs.
  m.graph_text = head + bn1 + mid + bn2 + tail;
  std::string no_softmax = head + bn1 + mid + bn2 + tail;
  no_softmax.resize(no_softmax.size() - std::string("softmax\n").size());
  {
    ModelFile logits_model = m;
    logits_model.graph_text = no_softmax;
    const auto logits = detail::run_prefix(logits_model, inputs);
    auto& bias = m.find("fc2.bias")->data;
    for (std::size_t c = 0; c < kClasses; ++c) {
      double s = 0;
      for (const auto& l : logits) s += l[c];
      bias[c] = static_cast<float>(-s / double(logits.size()));
    }
  }

  // Keep the inputs the teacher labels with a clear top-1 margin: the upper
  // quartile of logit gaps among all candidates.
  FixtureTask task;
  task.data.feature_length = 144;
  task.data.class_count = kClasses;
  {
    ModelFile logits_model = m;
    logits_model.graph_text = no_softmax;
    const auto logits = detail::run_prefix(logits_model, inputs);
    std::vector<float> gaps;
    for (const auto& l : logits) {
      auto sorted = l;
      std::partial_sort(sorted.begin(), sorted.begin() + 2, sorted.end(), std::greater<>());
      gaps.push_back(sorted[0] - sorted[1]);
    }
    auto by_gap = gaps;
    std::sort(by_gap.begin(), by_gap.end());
    const float threshold = by_gap[by_gap.size() * 3 / 4];
    for (std::size_t i = 0; i < inputs.size() && task.data.size() < samples; ++i) {
      if (gaps[i] < threshold) continue;
      task.data.features.insert(task.data.features.end(), inputs[i].begin(), inputs[i].end());
      task.data.labels.push_back(argmax(logits[i]));
    }
  }

  // Student: perturb learnable weights, keep the measured batchnorm statistics.
  for (auto& t : m.tensors) {
    if (t.name.ends_with(".mean") || t.name.ends_with(".var")) continue;
    for (auto& v : t.data) v = static_cast<float>(v * (1.0 + kStudentNoise * rng.normal()));
  }
  task.model = std::move(m);
  task.model.validate();
  task.data.validate();
  return task;
}

// Seeded six-class task whose 'cat' and 'dog' class-conditional distributions
// overlap. Samples are isotropic Gaussians around class means; the model is
// the nearest-mean classifier written as dense-relu-dense: the hidden layer
// computes relu(+Qx) and relu(-Qx) for a random orthonormal Q, and the output
// layer recombines them, so the FP32 network is exactly linear in x.
inline FixtureTask make_overlap_task(std::uint64_t seed = kFixtureSeed + 1, std::size_t samples_per_class = 200) {
  SeededRng rng(seed);
  constexpr std::uint32_t kDim = 32, kClasses = 6, kCat = 3, kDog = 4;
  std::vector<std::vector<double>> means(kClasses, std::vector<double>(kDim));
  for (auto& mu : means)
    for (auto& v : mu) v = rng.normal(0.0, 0.7);
  for (std::uint32_t d = 0; d < kDim; ++d) means[kDog][d] = means[kCat][d] + rng.normal(0.0, 0.45);

  // Gram-Schmidt orthonormal basis.
  std::vector<std::vector<double>> q(kDim, std::vector<double>(kDim));
  for (std::uint32_t i = 0; i < kDim; ++i) {
    auto& v = q[i];
    for (auto& x : v) x = rng.normal();
    for (std::uint32_t j = 0; j < i; ++j) {
      double dot = 0;
      for (std::uint32_t k = 0; k < kDim; ++k) dot += v[k] * q[j][k];
      for (std::uint32_t k = 0; k < kDim; ++k) v[k] -= dot * q[j][k];
    }
    double norm = 0;
    for (auto x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
  }

  ModelFile m;
  Tensor w1{"hidden.weight", {2 * kDim, kDim}, std::vector<float>(2 * kDim * kDim)};
  for (std::uint32_t i = 0; i < kDim; ++i)
    for (std::uint32_t k = 0; k < kDim; ++k) {
      w1.data[i * kDim + k] = static_cast<float>(q[i][k]);
      w1.data[(kDim + i) * kDim + k] = static_cast<float>(-q[i][k]);
    }
  // logit_c = mu_c . x - |mu_c|^2 / 2 and x = Q^T (relu(Qx) - relu(-Qx)).
  Tensor w2{"out.weight", {kClasses, 2 * kDim}, std::vector<float>(kClasses * 2 * kDim)};
  Tensor b2{"out.bias", {kClasses}, std::vector<float>(kClasses)};
  for (std::uint32_t c = 0; c < kClasses; ++c) {
    double norm2 = 0;
    for (auto v : means[c]) norm2 += v * v;
    b2.data[c] = static_cast<float>(-norm2 / 2);
    for (std::uint32_t i = 0; i < kDim; ++i) {
      double proj = 0;
      for (std::uint32_t k = 0; k < kDim; ++k) proj += means[c][k] * q[i][k];
      w2.data[c * 2 * kDim + i] = static_cast<float>(proj);
      w2.data[c * 2 * kDim + kDim + i] = static_cast<float>(-proj);
    }
  }
  m.tensors = {w1, {"hidden.bias", {2 * kDim}, std::vector<float>(2 * kDim, 0.0f)}, w2, b2};
  m.graph_text =
      "input shape=32\n"
      "classes names=airplane,automobile,bird,cat,dog,frog\n"
      "dense name=hidden weight=hidden.weight bias=hidden.bias\nrelu\n"
      "dense name=out weight=out.weight bias=out.bias\nsoftmax\n";

  FixtureTask task;
  task.data.feature_length = kDim;
  task.data.class_count = kClasses;
  for (std::size_t s = 0; s < samples_per_class * kClasses; ++s) {
    const auto c = static_cast<std::uint32_t>(s % kClasses);
    for (std::uint32_t d = 0; d < kDim; ++d)
      task.data.features.push_back(static_cast<float>(means[c][d] + rng.normal()));
    task.data.labels.push_back(c);
  }
  task.model = std::move(m);
  task.model.validate();
  task.data.validate();
  return task;
}

}  // namespace bitquant

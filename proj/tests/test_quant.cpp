#include "test_support.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <gtest/gtest.h>

using namespace bitquant;
using namespace testing_support;
using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

namespace {

Tensor vec(std::vector<float> v, std::string name = "t") {
  const auto n = static_cast<std::uint32_t>(v.size());
  return {std::move(name), {n}, std::move(v)};
}

Rational exact(float f) {
  int e = 0;
  const double m = std::frexp(double(f), &e);
  const auto mant = static_cast<std::int64_t>(std::ldexp(m, 53));
  Rational r(mant);
  const int shift = e - 53;
  const BigInt p = BigInt(1) << std::abs(shift);
  return shift >= 0 ? Rational(r * p) : Rational(r / p);
}

// Round half away from zero of an exact rational.
std::int64_t round_exact(const Rational& t) {
  const Rational half(1, 2);
  const Rational a = t < 0 ? Rational(-t) + half : t + half;
  const BigInt floored = boost::multiprecision::numerator(a) / boost::multiprecision::denominator(a);
  const auto mag = floored.convert_to<std::int64_t>();
  return t < 0 ? -mag : mag;
}

std::vector<Tensor> random_suite(std::uint64_t seed, int count) {
  SeededRng rng(seed);
  std::vector<Tensor> out;
  for (int i = 0; i < count; ++i) out.push_back(grid_tensor(rng, 1 + rng.below(512)));
  return out;
}

constexpr QuantScheme kSchemes[] = {QuantScheme::UniformAsymm, QuantScheme::UniformSymm, QuantScheme::PowerOfTwo};

}  // namespace

TEST(QuantExamples, AsymmetricMidpointRoundsUp) {
  const auto q = quantize_asymm(vec({-1, 0, 1}), 8);
  EXPECT_EQ(q.codes, (std::vector<std::int32_t>{0, 128, 255}));
}

TEST(QuantExamples, SymmetricEndpointsAreFullScale) {
  const auto q = quantize_symm(vec({-2, 0, 2}), 8);
  EXPECT_EQ(q.codes, (std::vector<std::int32_t>{-127, 0, 127}));
}

TEST(QuantExamples, SymmetricFourBitHalfwayCase) {
  EXPECT_EQ(symm_code(1.0f, 2.0f, 4), 4);
  const auto q = quantize_symm(vec({1.0f, 2.0f}), 4);
  EXPECT_EQ(q.codes[0], 4);
  EXPECT_NEAR(dequantize(q).data[0], 8.0 / 7.0, 1e-6);
  EXPECT_NEAR(dequantize(q).data[0], 1.142857, 1e-6);
}

TEST(QuantExamples, PowerOfTwoRounding) {
  const auto q = quantize_pow2(vec({3.0f, 0.7f, 0.0f}));
  const auto d = dequantize(q);
  EXPECT_EQ(d.data, (std::vector<float>{4.0f, 0.5f, 0.0f}));
  EXPECT_EQ(rounded_log2(3.0f), 2);
  EXPECT_EQ(rounded_log2(0.7f), -1);
  EXPECT_EQ(rounded_log2(-0.7f), -1);
  EXPECT_EQ(rounded_log2(1.0f), 0);
}

TEST(QuantExamples, RoundedLog2MatchesSqrtTwoBoundary) {
  // sqrt(2) is the boundary between exponents 0 and 1
  EXPECT_EQ(rounded_log2(1.4142135f), 0);
  EXPECT_EQ(rounded_log2(1.4142137f), 1);
  SeededRng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const auto x = static_cast<float>(std::exp(rng.uniform(-40, 40)));
    const auto k = rounded_log2(x);
    EXPECT_LE(std::ldexp(1.0, k) / std::sqrt(2.0), double(x));
    EXPECT_GE(std::ldexp(1.0, k) * std::sqrt(2.0), double(x));
  }
}

TEST(QuantOracle, GridValuesMatchExhaustiveSearch) {
  for (const auto& x : random_suite(21, 200))
    for (unsigned n = 2; n <= 8; ++n) {
      const auto qa = quantize_asymm(x, n);
      const auto qs = quantize_symm(x, n);
      const auto lo = oracle::to_grid(qa.params[0].min), hi = oracle::to_grid(qa.params[0].max);
      const auto ma = oracle::to_grid(qs.params[0].max_abs);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const auto g = oracle::to_grid(x.data[i]);
        ASSERT_EQ(qa.codes[i], oracle::nearest_asymm_level(g, lo, hi, n));
        ASSERT_EQ(qs.codes[i], oracle::nearest_symm_level(g, ma, n));
      }
    }
}

TEST(QuantOracle, ArbitraryFloatsMatchExactRationalRounding) {
  SeededRng rng(22);
  for (int trial = 0; trial < 60; ++trial) {
    Tensor x = normal_tensor(rng, "t", {static_cast<std::uint32_t>(1 + rng.below(64))}, rng.uniform(1e-3, 50.0));
    for (unsigned n = 2; n <= 8; ++n) {
      const auto qa = quantize_asymm(x, n);
      const auto qs = quantize_symm(x, n);
      const Rational lo = exact(qa.params[0].min), hi = exact(qa.params[0].max), ma = exact(qs.params[0].max_abs);
      const std::int64_t ta = asymm_max_code(n), ts = symm_max_code(n);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const Rational v = exact(x.data[i]);
        const auto ea = hi == lo ? 0 : round_exact((v - lo) * ta / (hi - lo));
        const auto es = ma == 0 ? 0 : round_exact(v * ts / ma);
        ASSERT_EQ(qa.codes[i], ea) << x.data[i];
        ASSERT_EQ(qs.codes[i], es) << x.data[i];
      }
    }
  }
}

TEST(QuantProperties, UniformErrorWithinHalfStep) {
  for (const auto& x : random_suite(23, 100))
    for (unsigned n = 2; n <= 8; ++n)
      for (auto s : {QuantScheme::UniformAsymm, QuantScheme::UniformSymm}) {
        const auto q = quantize(x, s, n);
        const auto d = dequantize(q);
        const double step = level_spacing(s, q.params[0], n);
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double ulp = std::nextafter(std::fabs(d.data[i]), INFINITY) - std::fabs(d.data[i]);
          ASSERT_LE(std::fabs(double(d.data[i]) - x.data[i]), step / 2 + 4 * ulp);
        }
      }
}

TEST(QuantProperties, PowerOfTwoRatioAndSign) {
  for (const auto& x : random_suite(24, 100))
    for (unsigned n = 2; n <= 8; ++n) {
      const auto q = quantize(x, QuantScheme::PowerOfTwo, n);
      const auto d = dequantize(q);
      const auto& p = q.params[0];
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x.data[i] == 0.0f) {
          ASSERT_EQ(d.data[i], 0.0f);
          continue;
        }
        const auto k = rounded_log2(x.data[i]);
        if (k < p.exponent_min || k > p.exponent_max) continue;
        const double r = double(d.data[i]) / x.data[i];
        ASSERT_GE(r, std::sqrt(0.5));
        ASSERT_LE(r, std::sqrt(2.0));
      }
    }
}

TEST(QuantProperties, CodesStayInRange) {
  for (const auto& x : random_suite(25, 50))
    for (auto s : kSchemes)
      for (unsigned n = 2; n <= 8; ++n) EXPECT_NO_THROW(validate(quantize(x, s, n)));
}

TEST(QuantProperties, IdempotentUnderRequantization) {
  for (const auto& x : random_suite(26, 100))
    for (auto s : kSchemes)
      for (unsigned n = 2; n <= 8; ++n) {
        const auto q = quantize(x, s, n);
        const auto d = dequantize(q);
        const auto again = quantize(d, s, n);
        ASSERT_EQ(again.codes, q.codes);
        ASSERT_EQ(again.pow2, q.pow2);
        ASSERT_EQ(requantize(d, q), q);
      }
}

TEST(QuantProperties, ErrorShrinksWithWidth) {
  SeededRng rng(27);
  const auto x = normal_tensor(rng, "w", {4096});
  for (auto s : {QuantScheme::UniformAsymm, QuantScheme::UniformSymm}) {
    double prev = INFINITY;
    for (unsigned n = 2; n <= 8; ++n) {
      const auto d = dequantize(quantize(x, s, n));
      double mse = 0;
      for (std::size_t i = 0; i < x.size(); ++i) mse += std::pow(d.data[i] - x.data[i], 2);
      EXPECT_LT(mse, prev);
      prev = mse;
    }
  }
}

TEST(QuantProperties, MeanPreservedWithinHalfStep) {
  SeededRng rng(28);
  const auto x = normal_tensor(rng, "w", {10000});
  for (unsigned n = 2; n <= 8; ++n) {
    const auto q = quantize_asymm(x, n);
    const auto d = dequantize(q);
    double m0 = 0, m1 = 0;
    for (std::size_t i = 0; i < x.size(); ++i) m0 += x.data[i], m1 += d.data[i];
    EXPECT_LE(std::fabs(m0 - m1) / x.size(), asymm_step(q.params[0], n) / 2);
  }
}

TEST(QuantGranularity, PerChannelUsesAxisZero) {
  Tensor w{"w", {2, 3}, {0, 1, 2, 100, 200, 300}};
  const auto q = quantize_asymm(w, 8, Granularity::PerChannel);
  ASSERT_EQ(q.params.size(), 2u);
  EXPECT_EQ(q.params[0].min, 0.0f);
  EXPECT_EQ(q.params[0].max, 2.0f);
  EXPECT_EQ(q.params[1].min, 100.0f);
  EXPECT_EQ(q.codes, (std::vector<std::int32_t>{0, 128, 255, 0, 128, 255}));
  const auto flat = quantize_asymm(vec({1, 2, 3}), 8, Granularity::PerChannel);
  EXPECT_EQ(flat.granularity, Granularity::PerTensor);
  EXPECT_EQ(flat.params.size(), 1u);
}

TEST(QuantGranularity, PerChannelErrorBoundedByChannelStep) {
  SeededRng rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor w = normal_tensor(rng, "w", {8, 16});
    for (std::size_t c = 0; c < 8; ++c)
      for (std::size_t i = 0; i < 16; ++i) w.data[c * 16 + i] *= float(1 + c * 3);
    for (unsigned n = 2; n <= 8; ++n) {
      const auto qt = quantize_asymm(w, n);
      const auto qc = quantize_asymm(w, n, Granularity::PerChannel);
      const auto dc = dequantize(qc);
      for (std::size_t c = 0; c < 8; ++c) {
        const double half = asymm_step(qc.params[c], n) / 2;
        EXPECT_LE(half, asymm_step(qt.params[0], n) / 2);
        for (std::size_t i = 0; i < 16; ++i)
          EXPECT_LE(std::fabs(dc.data[c * 16 + i] - w.data[c * 16 + i]), half + 1e-5);
      }
    }
  }
}

TEST(QuantDegenerate, ConstantAndZeroTensors) {
  for (auto s : kSchemes) {
    const auto zero = dequantize(quantize(vec({0, 0, 0}), s, 4));
    EXPECT_EQ(zero.data, (std::vector<float>{0, 0, 0}));
  }
  const auto c = dequantize(quantize_asymm(vec({2.5f, 2.5f}), 3));
  EXPECT_EQ(c.data, (std::vector<float>{2.5f, 2.5f}));
  const auto one = dequantize(quantize_symm(vec({-3.0f}), 2));
  EXPECT_EQ(one.data, (std::vector<float>{-3.0f}));
}

TEST(QuantDegenerate, InvalidInputsAreRejected) {
  EXPECT_THROW(quantize_asymm(vec({1}), 1), ArgumentError);
  EXPECT_THROW(quantize_asymm(vec({1}), 9), ArgumentError);
  EXPECT_THROW(quantize_asymm(Tensor{"e", {0}, {}}, 4), ArgumentError);
  EXPECT_THROW(quantize_symm(vec({1, NAN}), 4), ValidationError);
  EXPECT_THROW(parse_scheme("int4"), ArgumentError);
  EXPECT_EQ(parse_scheme("pow2"), QuantScheme::PowerOfTwo);
}

TEST(QuantPow2, WindowClampsAndFlushesToZero) {
  // 4 exponent bits -> 15 usable exponents; max 2^10 gives window [-4, 10]
  const auto q = quantize_pow2(vec({1024.0f, 0.0625f, 0.04f, 0.03f, 0.001f, -2.0f}));
  EXPECT_EQ(q.params[0].exponent_max, 10);
  EXPECT_EQ(q.params[0].exponent_min, -4);
  const auto d = dequantize(q);
  EXPECT_EQ(d.data[1], 0.0625f);
  EXPECT_EQ(d.data[2], 0.0625f);  // clamped up to the window floor
  EXPECT_EQ(d.data[3], 0.0f);     // below 2^-5
  EXPECT_EQ(d.data[4], 0.0f);
  EXPECT_EQ(d.data[5], -2.0f);
}

TEST(QuantPow2, NarrowWindowFromSmallestMagnitude) {
  const auto q = quantize_pow2(vec({4.0f, 1.0f}), 4);
  EXPECT_EQ(q.params[0].exponent_min, 0);
  EXPECT_EQ(q.params[0].exponent_max, 2);
  EXPECT_EQ(q.exponent_bits(), 4u);
  EXPECT_EQ(quantize(vec({1.0f}), QuantScheme::PowerOfTwo, 5).exponent_bits(), 4u);
}

TEST(QuantValidate, DetectsBrokenInvariants) {
  auto q = quantize_asymm(vec({0, 1}), 3);
  q.codes[1] = 8;
  EXPECT_THROW(validate(q), InvariantError);
  auto s = quantize_symm(vec({0, 1}), 3);
  s.codes[0] = -4;
  EXPECT_THROW(validate(s), InvariantError);
  auto p = quantize_pow2(vec({1, 2}), 2);
  p.params[0].exponent_min = -10;
  EXPECT_THROW(validate(p), InvariantError);
}

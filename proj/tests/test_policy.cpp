#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "macforge/error.hpp"
#include "macforge/policy.hpp"

using namespace macforge;
using namespace macforge::policy;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

std::vector<double> random_dist(Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  for (auto& v : p) v = 0.05 + uniform01(rng);
  const double s = sum(p);
  for (auto& v : p) v /= s;
  return p;
}

}  // namespace

TEST(Softmax, Examples) {
  const auto u = softmax(std::vector<double>(6, -3.7));
  for (double p : u) EXPECT_NEAR(p, 1.0 / 6.0, 1e-15);
  const auto lim = softmax(std::vector<double>{0.0, -kInf});
  EXPECT_EQ(lim[0], 1.0);
  EXPECT_EQ(lim[1], 0.0);
  const auto d = softmax(std::vector<double>{std::log(2.0), 0.0, 0.0});
  EXPECT_NEAR(d[0], 0.5, 1e-15);
  EXPECT_NEAR(d[1], 0.25, 1e-15);
  EXPECT_NEAR(d[2], 0.25, 1e-15);
}

TEST(Softmax, DegenerateInputsThrow) {
  EXPECT_THROW(softmax(std::vector<double>{-kInf, -kInf}), ContractError);
  EXPECT_THROW(softmax(std::vector<double>{}), ContractError);
  EXPECT_THROW(softmax(std::vector<double>{0.0, std::nan("")}), ContractError);
}

TEST(Softmax, NormalizedAndShiftInvariant) {
  Rng rng(4);
  for (int t = 0; t < 2000; ++t) {
    std::vector<double> l(1 + uniform_index(rng, 8));
    for (auto& v : l) v = -30.0 * uniform01(rng);
    const auto p = softmax(l);
    ASSERT_NEAR(sum(p), 1.0, 1e-9);
    const double shift = 200.0 * (uniform01(rng) - 0.5);
    auto ls = l;
    for (auto& v : ls) v += shift;
    const auto q = softmax(ls);
    for (std::size_t i = 0; i < p.size(); ++i) ASSERT_NEAR(p[i], q[i], 1e-9);
  }
}

TEST(Distribution, LogprobsConsistent) {
  const std::vector<double> l{-1.0, -2.0, -0.5};
  const auto d = action_distribution(l);
  for (std::size_t i = 0; i < l.size(); ++i) EXPECT_NEAR(std::exp(d.logprobs[i]), d.probs[i], 1e-15);
}

TEST(Divergence, NonnegativeAndBounded) {
  Rng rng(8);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + uniform_index(rng, 6);
    const auto p = random_dist(rng, n), q = random_dist(rng, n);
    ASSERT_GE(kl_divergence(p, q), 0.0);
    ASSERT_GE(entropy(p), 0.0);
    ASSERT_LE(entropy(p), std::log(static_cast<double>(n)) + 1e-12);
  }
  EXPECT_NEAR(entropy(std::vector<double>(6, 1.0 / 6.0)), std::log(6.0), 1e-15);
  EXPECT_EQ(kl_divergence(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}), std::log(2.0));
}

TEST(Fusion, IdenticalInputsFixedPoint) {
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    const auto p = random_dist(rng, 6);
    const std::vector<std::vector<double>> in(1 + uniform_index(rng, 5), p);
    const auto f = fuse(in, 1.0);
    for (double w : f.weights) EXPECT_NEAR(w, 1.0, 1e-12);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(f.probs[i], p[i], 4 * std::numeric_limits<double>::epsilon());
  }
}

TEST(Fusion, ZeroEpsilonIsPlainMean) {
  const std::vector<std::vector<double>> in{{0.7, 0.2, 0.1}, {0.1, 0.1, 0.8}, {0.3, 0.3, 0.4}};
  const auto f = fuse(in, 0.0);
  const double expect[3] = {(0.7 + 0.1 + 0.3) / 3.0, (0.2 + 0.1 + 0.3) / 3.0, (0.1 + 0.8 + 0.4) / 3.0};
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(f.probs[i], expect[i], 1e-12);
  for (double w : f.weights) EXPECT_EQ(w, 1.0);
}

TEST(Fusion, TwoDistributionHandEvaluation) {
  const std::vector<std::vector<double>> in{{0.9, 0.1}, {0.5, 0.5}};
  const double a0 = 0.7, a1 = 0.3;
  const double kl1 = 0.9 * std::log(0.9 / a0) + 0.1 * std::log(0.1 / a1);
  const double kl2 = 0.5 * std::log(0.5 / a0) + 0.5 * std::log(0.5 / a1);
  const double w1 = std::exp(-kl1), w2 = std::exp(-kl2);
  const auto f = fuse(in, 1.0);
  EXPECT_NEAR(f.weights[0], w1, 1e-14);
  EXPECT_NEAR(f.weights[1], w2, 1e-14);
  EXPECT_NEAR(f.probs[0], (w1 * 0.9 + w2 * 0.5) / (w1 + w2), 1e-14);
  EXPECT_NEAR(f.probs[1], (w1 * 0.1 + w2 * 0.5) / (w1 + w2), 1e-14);
  EXPECT_GT(kl1, kl2);
  EXPECT_LT(f.weights[0], f.weights[1]);
}

TEST(Fusion, WeightMonotoneInKl) {
  Rng rng(21);
  for (int t = 0; t < 1000; ++t) {
    std::vector<std::vector<double>> in;
    for (std::size_t e = 0; e < 2 + uniform_index(rng, 4); ++e) in.push_back(random_dist(rng, 3));
    const double eps = 0.1 + 3.0 * uniform01(rng);
    const auto f = fuse(in, eps);
    ASSERT_NEAR(sum(f.probs), 1.0, 1e-9);
    for (std::size_t a = 0; a < in.size(); ++a) {
      for (std::size_t b = 0; b < in.size(); ++b) {
        if (f.kl[a] < f.kl[b]) ASSERT_GT(f.weights[a], f.weights[b]);
      }
    }
  }
}

TEST(Fusion, MismatchedSupportsThrow) {
  EXPECT_THROW(fuse({{0.5, 0.5}, {1.0}}, 1.0), ContractError);
  EXPECT_THROW(fuse({}, 1.0), ContractError);
  ActionDistribution a, b;
  a.probs = b.probs = {0.5, 0.5};
  a.candidates.resize(2);
  b.candidates.resize(2);
  b.candidates[1].dcm = 3;
  EXPECT_THROW(fuse_policies({a, b}, FusionConfig{true, 1.0}), ContractError);
}

TEST(Fusion, BackwardMatchesFiniteDifferences) {
  Rng rng(5);
  for (int t = 0; t < 30; ++t) {
    std::vector<std::vector<double>> in;
    for (int e = 0; e < 3; ++e) in.push_back(random_dist(rng, 4));
    std::vector<double> g(4);
    for (auto& v : g) v = uniform01(rng) - 0.5;
    const double eps = 1.3;
    auto loss = [&](const std::vector<std::vector<double>>& x) {
      const auto f = fuse(x, eps);
      double l = 0.0;
      for (std::size_t i = 0; i < 4; ++i) l += g[i] * f.probs[i];
      return l;
    };
    const auto d = fuse_backward(in, eps, g);
    for (std::size_t e = 0; e < in.size(); ++e) {
      for (std::size_t i = 0; i < 4; ++i) {
        auto up = in, dn = in;
        const double h = 1e-6;
        up[e][i] += h;
        dn[e][i] -= h;
        const double fd = (loss(up) - loss(dn)) / (2 * h);
        ASSERT_NEAR(d[e][i], fd, 1e-7 + 1e-5 * std::abs(fd));
      }
    }
  }
}

TEST(SoftmaxBackward, MatchesFiniteDifferences) {
  Rng rng(6);
  std::vector<double> l(5), g(5);
  for (auto& v : l) v = uniform01(rng) * 3;
  for (auto& v : g) v = uniform01(rng) - 0.5;
  auto loss = [&](const std::vector<double>& x) {
    const auto p = softmax(x);
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += g[i] * p[i];
    return s;
  };
  const auto d = softmax_backward(softmax(l), g);
  for (std::size_t i = 0; i < l.size(); ++i) {
    auto up = l, dn = l;
    up[i] += 1e-6;
    dn[i] -= 1e-6;
    EXPECT_NEAR(d[i], (loss(up) - loss(dn)) / 2e-6, 1e-8);
  }
}

TEST(Sampling, OneHotAndGreedy) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(sample_index(std::vector<double>{0, 0, 1, 0}, rng, false).index, 2u);
  EXPECT_EQ(sample_index(std::vector<double>{0.5, 0.25, 0.25}, rng, true).index, 0u);
  EXPECT_EQ(sample_index(std::vector<double>{0.25, 0.5, 0.25, 0.5}, rng, true).index, 1u);
}

TEST(Sampling, UniformFrequencies) {
  Rng rng(77);
  std::vector<int> hits(6, 0);
  const int n = 100000;
  const std::vector<double> p(6, 1.0 / 6.0);
  for (int i = 0; i < n; ++i) ++hits[sample_index(p, rng, false).index];
  for (int h : hits) EXPECT_NEAR(h / static_cast<double>(n), 1.0 / 6.0, 0.01);
}

TEST(Sampling, ReturnsActionAndLogprob) {
  ActionDistribution d;
  d.candidates.resize(2);
  d.candidates[1].dcm = 2;
  d.probs = {0.0, 1.0};
  Rng rng(3);
  const auto [a, lp] = sample_action(d, rng);
  EXPECT_EQ(a.dcm, 2);
  EXPECT_EQ(lp, 0.0);
}

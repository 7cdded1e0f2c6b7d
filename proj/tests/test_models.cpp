#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "macforge/critic.hpp"
#include "macforge/policy.hpp"
#include "macforge/scorer.hpp"
#include "macforge/semantics.hpp"

using namespace macforge;
using semantics::TokenId;

namespace {

EnvConfig small_env() {
  EnvConfig c;
  c.ue_count_range = {2};
  c.buffer_capacity = 3;
  return c;
}

ModelConfig tiny_model(int layers = 1) {
  ModelConfig m;
  m.embed_dim = 4;
  m.hidden_dim = 4;
  m.layers = layers;
  return m;
}

CriticConfig tiny_critic() {
  CriticConfig c;
  c.embed_dim = 4;
  c.hidden_dim = 4;
  c.layers = 1;
  c.mlp_hidden = 4;
  return c;
}

void randomize(std::span<double> p, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  for (auto& v : p) v = scale * (2.0 * uniform01(rng) - 1.0);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-5}); }

}  // namespace

TEST(Scorer, NextTokenDistributionsNormalized) {
  semantics::SemanticMapper m(small_env());
  const int v = static_cast<int>(m.vocabulary().size());
  model::SequenceScorer s(ModelConfig{}, v);
  s.init(3);
  const auto prompt = m.ue_prompt({1, 2, {}, 0}, true).token_ids;
  for (std::size_t len = 0; len <= prompt.size(); len += 5) {
    const std::vector<TokenId> prefix(prompt.begin(), prompt.begin() + static_cast<std::ptrdiff_t>(len));
    const auto lp = s.next_token_logprobs(prefix);
    double total = 0.0;
    for (double l : lp) total += std::exp(l);
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Scorer, ChainRuleMatchesPerTokenEvaluation) {
  semantics::SemanticMapper m(small_env());
  const int v = static_cast<int>(m.vocabulary().size());
  model::SequenceScorer s(tiny_model(2), v);
  s.init(9);
  randomize(s.params(), 10, 0.8);
  const auto prompt = m.bs_prompt({0, 2, {{1, 0, 0}, {2, 0, 0}}}, 2, true).token_ids;
  std::vector<std::vector<TokenId>> cands;
  for (const auto& a : m.enumerate_actions(semantics::AgentKind::kUe)) cands.push_back(a.surface);
  cands.push_back({3, 4, 5});
  cands.push_back({3, 4});
  const auto scores = s.score(prompt, cands);
  for (std::size_t c = 0; c < cands.size(); ++c) {
    auto prefix = prompt;
    double expect = 0.0;
    for (TokenId t : cands[c]) {
      expect += s.next_token_logprobs(prefix)[static_cast<std::size_t>(t)];
      prefix.push_back(t);
    }
    EXPECT_NEAR(scores[c], expect, 1e-12);
  }
}

TEST(Scorer, AllTwoTokenPathsSumToOne) {
  semantics::SemanticMapper m(small_env());
  const int v = static_cast<int>(m.vocabulary().size());
  model::SequenceScorer s(tiny_model(), v);
  s.init(1);
  randomize(s.params(), 2, 1.0);
  std::vector<std::vector<TokenId>> all;
  for (int a = 0; a < v; ++a) {
    for (int b = 0; b < v; ++b) all.push_back({a, b});
  }
  const auto scores = s.score({0, 1, 2}, all);
  double total = 0.0;
  for (double l : scores) total += std::exp(l);
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(Scorer, SingleTokenEqualsConditional) {
  semantics::SemanticMapper m(small_env());
  model::SequenceScorer s(tiny_model(), static_cast<int>(m.vocabulary().size()));
  s.init(4);
  const std::vector<TokenId> prompt{1, 2, 3};
  const auto lp = s.next_token_logprobs(prompt);
  const auto sc = s.score(prompt, {{7}, {8}});
  EXPECT_NEAR(sc[0], lp[7], 1e-15);
  EXPECT_NEAR(sc[1], lp[8], 1e-15);
}

TEST(Scorer, UnknownTokenThrows) {
  model::SequenceScorer s(tiny_model(), 10);
  s.init(1);
  EXPECT_ANY_THROW(s.score({1, 2}, {{11}}));
  EXPECT_ANY_THROW(s.score({1, 99}, {{1}}));
}

TEST(Scorer, GradientMatchesFiniteDifferences) {
  semantics::SemanticMapper m(small_env());
  const int v = static_cast<int>(m.vocabulary().size());
  for (int layers : {1, 2}) {
    model::SequenceScorer s(tiny_model(layers), v);
    ASSERT_LE(s.param_count(), 1000u);
    s.init(5);
    randomize(s.params(), 6 + static_cast<std::uint64_t>(layers), 0.6);
    const auto prompt = m.ue_prompt({2, 1, {env::PhyAction::kTransmit, 2}, 3}, true).token_ids;
    std::vector<std::vector<TokenId>> cands;
    for (const auto& a : m.enumerate_actions(semantics::AgentKind::kUe)) cands.push_back(a.surface);
    std::vector<double> w(cands.size());
    randomize(w, 8, 1.0);
    auto loss = [&] {
      const auto sc = s.score(prompt, cands);
      return std::inner_product(sc.begin(), sc.end(), w.begin(), 0.0);
    };
    model::ScoreTape tape;
    s.score(prompt, cands, &tape);
    std::vector<double> grad(s.param_count(), 0.0);
    s.backward(tape, w, grad);
    double worst = 0.0;
    for (std::size_t i = 0; i < s.param_count(); ++i) {
      const double keep = s.params()[i];
      const double h = 1e-5;
      s.params()[i] = keep + h;
      const double up = loss();
      s.params()[i] = keep - h;
      const double dn = loss();
      s.params()[i] = keep;
      worst = std::max(worst, rel_err(grad[i], (up - dn) / (2 * h)));
    }
    EXPECT_LE(worst, 1e-4) << "layers=" << layers;
  }
}

TEST(Scorer, BackwardAccumulates) {
  model::SequenceScorer s(tiny_model(), 12);
  s.init(2);
  model::ScoreTape tape;
  s.score({1, 2, 3}, {{4}, {5, 6}}, &tape);
  std::vector<double> once(s.param_count(), 0.0), twice(s.param_count(), 0.0);
  const std::vector<double> d{1.0, -0.5};
  s.backward(tape, d, once);
  s.backward(tape, d, twice);
  s.backward(tape, d, twice);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(twice[i], 2 * once[i], 1e-14);
}

TEST(Critic, ZeroInitializedHead) {
  semantics::SemanticMapper m(small_env());
  model::Critic c(CriticConfig{}, static_cast<int>(m.vocabulary().size()));
  c.init(11);
  const auto jp = m.joint_prompt({{1, 0, {}, 0}, {2, 0, {}, 0}}, {0, 2, {{1, 0, 0}, {2, 0, 0}}}, true);
  EXPECT_EQ(c.value(jp), 0.0);
  EXPECT_EQ(c.value(jp), c.value(jp));
}

TEST(Critic, GradientMatchesFiniteDifferences) {
  semantics::SemanticMapper m(small_env());
  model::Critic c(tiny_critic(), static_cast<int>(m.vocabulary().size()));
  ASSERT_LE(c.param_count(), 1000u);
  c.init(1);
  randomize(c.params(), 12, 0.6);
  const auto jp = m.joint_prompt({{1, 2, {}, 1}, {2, 0, {}, 3}}, {3, 2, {{1, 1, 1}, {2, 2, 3}}}, true);
  model::CriticTape tape;
  const double v = c.value(jp, &tape);
  EXPECT_TRUE(std::isfinite(v));
  std::vector<double> grad(c.param_count(), 0.0);
  c.backward(tape, 1.0, grad);
  double worst = 0.0;
  for (std::size_t i = 0; i < c.param_count(); ++i) {
    const double keep = c.params()[i];
    const double h = 1e-5;
    c.params()[i] = keep + h;
    const double up = c.value(jp);
    c.params()[i] = keep - h;
    const double dn = c.value(jp);
    c.params()[i] = keep;
    worst = std::max(worst, rel_err(grad[i], (up - dn) / (2 * h)));
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(ScoreCandidates, UsesPromptAndSurfaces) {
  semantics::SemanticMapper m(small_env());
  model::SequenceScorer s(tiny_model(), static_cast<int>(m.vocabulary().size()));
  s.init(3);
  const auto p = m.ue_prompt({1, 0, {}, 0}, true);
  const auto& cands = m.enumerate_actions(semantics::AgentKind::kUe);
  const auto a = policy::score_candidates(s, p, cands);
  std::vector<std::vector<TokenId>> surfaces;
  for (const auto& c : cands) surfaces.push_back(c.surface);
  EXPECT_EQ(a, s.score(p.token_ids, surfaces));
  const auto d = policy::action_distribution(a, cands);
  EXPECT_NEAR(std::accumulate(d.probs.begin(), d.probs.end(), 0.0), 1.0, 1e-9);
}

#include "macforge/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "macforge/error.hpp"

namespace macforge::policy {

namespace {

constexpr double kTiny = 1e-300;

}  // namespace

std::vector<double> score_candidates(const model::SequenceScorer& scorer,
                                     const semantics::Prompt& prompt,
                                     const std::vector<LinguisticAction>& candidates) {
  std::vector<std::vector<semantics::TokenId>> surfaces;
  surfaces.reserve(candidates.size());
  for (const auto& c : candidates) surfaces.push_back(c.surface);
  return scorer.score(prompt.token_ids, surfaces);
}

std::vector<double> softmax(std::span<const double> seq_logprobs) {
  if (seq_logprobs.empty()) throw ContractError("softmax over an empty candidate list");
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : seq_logprobs) {
    if (std::isnan(l) || l == std::numeric_limits<double>::infinity()) {
      throw ContractError("candidate log-probability is not finite");
    }
    mx = std::max(mx, l);
  }
  if (!std::isfinite(mx)) throw ContractError("degenerate distribution: every log-probability is -inf");
  std::vector<double> p(seq_logprobs.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(seq_logprobs[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

ActionDistribution action_distribution(std::span<const double> seq_logprobs,
                                       std::vector<LinguisticAction> candidates) {
  if (!candidates.empty() && candidates.size() != seq_logprobs.size()) {
    throw ContractError("candidate count != log-probability count");
  }
  ActionDistribution d;
  d.candidates = std::move(candidates);
  d.probs = softmax(seq_logprobs);
  double mx = *std::max_element(seq_logprobs.begin(), seq_logprobs.end());
  double z = 0.0;
  for (double l : seq_logprobs) z += std::exp(l - mx);
  const double lse = mx + std::log(z);
  d.logprobs.reserve(seq_logprobs.size());
  for (double l : seq_logprobs) d.logprobs.push_back(l - lse);
  return d;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ContractError("KL over mismatched supports");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    kl += p[i] * (std::log(p[i]) - std::log(std::max(q[i], kTiny)));
  }
  return std::max(kl, 0.0);
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

FusionResult fuse(const std::vector<std::vector<double>>& inputs, double epsilon) {
  if (inputs.empty()) throw ContractError("fusion needs at least one distribution");
  const std::size_t a = inputs.front().size();
  for (const auto& p : inputs) {
    if (p.size() != a) throw ContractError("fusion inputs have mismatched candidate lists");
  }
  const double k = static_cast<double>(inputs.size());
  std::vector<double> avg(a, 0.0);
  for (const auto& p : inputs) {
    for (std::size_t i = 0; i < a; ++i) avg[i] += p[i] / k;
  }
  FusionResult out;
  out.probs.assign(a, 0.0);
  double z = 0.0;
  for (const auto& p : inputs) {
    const double kl = kl_divergence(p, avg);
    const double w = std::exp(-epsilon * kl);
    out.kl.push_back(kl);
    out.weights.push_back(w);
    z += w;
    for (std::size_t i = 0; i < a; ++i) out.probs[i] += w * p[i];
  }
  for (double& v : out.probs) v /= z;
  return out;
}

ActionDistribution fuse_policies(const std::vector<ActionDistribution>& inputs,
                                 const FusionConfig& config) {
  config.validate();
  if (inputs.empty()) throw ContractError("fusion needs at least one distribution");
  std::vector<std::vector<double>> probs;
  for (const auto& d : inputs) {
    if (d.candidates != inputs.front().candidates) {
      throw ContractError("fusion inputs have mismatched candidate lists");
    }
    probs.push_back(d.probs);
  }
  const auto fused = fuse(probs, config.epsilon);
  ActionDistribution out;
  out.candidates = inputs.front().candidates;
  out.probs = fused.probs;
  for (double p : out.probs) out.logprobs.push_back(std::log(std::max(p, kTiny)));
  return out;
}

std::vector<std::vector<double>> fuse_backward(const std::vector<std::vector<double>>& inputs,
                                               double epsilon, std::span<const double> d_fused) {
  const auto fused = fuse(inputs, epsilon);
  const std::size_t a = d_fused.size();
  const std::size_t k = inputs.size();
  std::vector<double> avg(a, 0.0);
  for (const auto& p : inputs) {
    for (std::size_t i = 0; i < a; ++i) avg[i] += p[i] / static_cast<double>(k);
  }
  double z = 0.0;
  for (double w : fused.weights) z += w;
  double g_dot_f = 0.0;
  for (std::size_t i = 0; i < a; ++i) g_dot_f += d_fused[i] * fused.probs[i];

  // c_k = dL/dKL_k through the consensus factor.
  std::vector<double> c(k, 0.0);
  for (std::size_t e = 0; e < k; ++e) {
    double g_dot_p = 0.0;
    for (std::size_t i = 0; i < a; ++i) g_dot_p += d_fused[i] * inputs[e][i];
    const double d_w = (g_dot_p - g_dot_f) / z;
    c[e] = -epsilon * fused.weights[e] * d_w;
  }
  std::vector<double> shared(a, 0.0);  // sum_k c_k p_k(a) / avg(a), over K
  for (std::size_t e = 0; e < k; ++e) {
    for (std::size_t i = 0; i < a; ++i) {
      shared[i] += c[e] * inputs[e][i] / std::max(avg[i], kTiny) / static_cast<double>(k);
    }
  }
  std::vector<std::vector<double>> out(k, std::vector<double>(a, 0.0));
  for (std::size_t e = 0; e < k; ++e) {
    for (std::size_t i = 0; i < a; ++i) {
      const double p = std::max(inputs[e][i], kTiny);
      out[e][i] = fused.weights[e] / z * d_fused[i] +
                  c[e] * (std::log(p) - std::log(std::max(avg[i], kTiny)) + 1.0) - shared[i];
    }
  }
  return out;
}

std::vector<double> softmax_backward(std::span<const double> probs, std::span<const double> d_probs) {
  double dot = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * d_probs[i];
  std::vector<double> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] * (d_probs[i] - dot);
  return out;
}

Sample sample_index(std::span<const double> probs, Rng& rng, bool greedy) {
  if (probs.empty()) throw ContractError("cannot sample from an empty distribution");
  std::size_t idx = 0;
  if (greedy) {
    for (std::size_t i = 1; i < probs.size(); ++i) {
      if (probs[i] > probs[idx]) idx = i;
    }
  } else {
    const double u = uniform01(rng);
    double acc = 0.0;
    idx = probs.size();
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) {
        idx = i;
        break;
      }
    }
    if (idx == probs.size()) {
      // Rounding left u above the running sum; take the last positive entry.
      idx = probs.size() - 1;
      while (idx > 0 && probs[idx] <= 0.0) --idx;
    }
  }
  return {idx, std::log(std::max(probs[idx], kTiny))};
}

std::pair<LinguisticAction, double> sample_action(const ActionDistribution& dist, Rng& rng,
                                                  bool greedy) {
  if (dist.candidates.size() != dist.probs.size()) {
    throw ContractError("distribution has no candidate list attached");
  }
  const auto s = sample_index(dist.probs, rng, greedy);
  return {dist.candidates[s.index], s.logprob};
}

}  // namespace macforge::policy

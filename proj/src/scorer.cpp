#include "macforge/scorer.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "macforge/error.hpp"

namespace macforge::model {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMat = Eigen::Map<const RowMat>;
using MMat = Eigen::Map<RowMat>;
using CVec = Eigen::Map<const Eigen::VectorXd>;
using MVec = Eigen::Map<Eigen::VectorXd>;

}  // namespace

SequenceScorer::SequenceScorer(const ModelConfig& config, int vocab_size)
    : config_(config), vocab_(vocab_size) {
  config.validate();
  gru_ = GruStack({vocab_size, config.embed_dim, config.hidden_dim, config.layers}, 0);
  head_offset_ = gru_.param_count();
  params_.assign(head_offset_ + static_cast<std::size_t>(vocab_) * (config.hidden_dim + 1), 0.0);
}

void SequenceScorer::init(std::uint64_t seed) {
  Rng rng(seed);
  gru_.init(params_, rng);
  const int h = config_.hidden_dim;
  const double a = config_.init_scale / std::sqrt(static_cast<double>(h));
  double* w = params_.data() + head_offset_;
  for (std::size_t i = 0; i < static_cast<std::size_t>(vocab_) * h; ++i) {
    w[i] = (2.0 * uniform01(rng) - 1.0) * a;
  }
  std::fill(w + static_cast<std::size_t>(vocab_) * h, params_.data() + params_.size(), 0.0);
}

void SequenceScorer::head_logprobs(const double* top_state, double* out) const {
  const int h = config_.hidden_dim;
  CMat w(params_.data() + head_offset_, vocab_, h);
  CVec b(params_.data() + head_offset_ + static_cast<std::size_t>(vocab_) * h, vocab_);
  MVec logits(out, vocab_);
  logits.noalias() = w * CVec(top_state, h) + b;
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  logits.array() -= lse;
}

void SequenceScorer::head_backward(const double* top_state, const double* /*logp*/,
                                   const double* dlogits, double* dtop,
                                   std::span<double> grad) const {
  const int h = config_.hidden_dim;
  CMat w(params_.data() + head_offset_, vocab_, h);
  MMat gw(grad.data() + head_offset_, vocab_, h);
  MVec gb(grad.data() + head_offset_ + static_cast<std::size_t>(vocab_) * h, vocab_);
  CVec dl(dlogits, vocab_);
  gw.noalias() += dl * CVec(top_state, h).transpose();
  gb += dl;
  MVec(dtop, h).noalias() += w.transpose() * dl;
}

std::vector<double> SequenceScorer::next_token_logprobs(const std::vector<TokenId>& prefix) const {
  const std::size_t s = gru_.state_size();
  std::vector<double> a(s, 0.0), b(s, 0.0);
  for (TokenId t : prefix) {
    gru_.step(params_, t, a.data(), b.data(), nullptr);
    std::swap(a, b);
  }
  std::vector<double> out(static_cast<std::size_t>(vocab_));
  head_logprobs(gru_.top(a.data()), out.data());
  return out;
}

std::vector<double> SequenceScorer::score(const std::vector<TokenId>& prompt,
                                          const std::vector<std::vector<TokenId>>& candidates,
                                          ScoreTape* tape) const {
  if (candidates.empty()) throw ContractError("score needs at least one candidate");
  for (const auto& c : candidates) {
    if (c.empty()) throw ContractError("candidate token sequence is empty");
    for (TokenId t : c) {
      if (t < 0 || t >= vocab_) throw EncodingError("candidate token outside vocabulary");
    }
  }
  ScoreTape local;
  ScoreTape& tp = tape != nullptr ? *tape : local;
  const bool keep = tape != nullptr;
  const std::size_t s = gru_.state_size();
  const std::size_t cs = gru_.cache_size();
  const auto v = static_cast<std::size_t>(vocab_);

  tp.prompt = prompt;
  tp.prompt_caches.assign(keep ? prompt.size() * cs : 0, 0.0);
  tp.nodes.clear();
  tp.step_caches.clear();
  tp.paths.assign(candidates.size(), {});

  std::vector<double> a(s, 0.0), b(s, 0.0);
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    gru_.step(params_, prompt[i], a.data(), b.data(), keep ? tp.prompt_caches.data() + i * cs : nullptr);
    std::swap(a, b);
  }

  tp.nodes.push_back({});
  tp.node_states.assign(a.begin(), a.end());
  tp.node_logprobs.assign(v, 0.0);
  head_logprobs(gru_.top(tp.node_states.data()), tp.node_logprobs.data());

  std::vector<double> out(candidates.size(), 0.0);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto& cand = candidates[c];
    int node = 0;
    for (std::size_t j = 0; j < cand.size(); ++j) {
      if (j > 0) {
        const TokenId prev = cand[j - 1];
        int child = -1;
        for (std::size_t k = 1; k < tp.nodes.size(); ++k) {
          if (tp.nodes[k].parent == node && tp.nodes[k].token == prev) {
            child = static_cast<int>(k);
            break;
          }
        }
        if (child < 0) {
          ScoreTape::Node nd;
          nd.parent = node;
          nd.token = prev;
          nd.cache = tp.step_caches.size();
          tp.step_caches.resize(tp.step_caches.size() + cs);
          tp.node_states.resize(tp.node_states.size() + s);
          tp.node_logprobs.resize(tp.node_logprobs.size() + v);
          child = static_cast<int>(tp.nodes.size());
          tp.nodes.push_back(nd);
          const double* parent_state = tp.node_states.data() + static_cast<std::size_t>(node) * s;
          double* state = tp.node_states.data() + static_cast<std::size_t>(child) * s;
          gru_.step(params_, prev, parent_state, state, tp.step_caches.data() + nd.cache);
          head_logprobs(gru_.top(state), tp.node_logprobs.data() + static_cast<std::size_t>(child) * v);
        }
        node = child;
      }
      out[c] += tp.node_logprobs[static_cast<std::size_t>(node) * v + static_cast<std::size_t>(cand[j])];
      tp.paths[c].emplace_back(node, cand[j]);
    }
  }
  return out;
}

void SequenceScorer::backward(const ScoreTape& tape, std::span<const double> d_seq,
                              std::span<double> grad) const {
  if (d_seq.size() != tape.paths.size()) throw ContractError("gradient count != candidate count");
  if (grad.size() != params_.size()) throw ContractError("gradient buffer has wrong size");
  if (tape.prompt_caches.size() != tape.prompt.size() * gru_.cache_size()) {
    throw ContractError("score tape was recorded without caches");
  }
  const std::size_t s = gru_.state_size();
  const std::size_t cs = gru_.cache_size();
  const auto v = static_cast<std::size_t>(vocab_);
  const std::size_t n_nodes = tape.nodes.size();

  // dlogits per node: sum over uses of g * (onehot(token) - p).
  std::vector<double> dlogits(n_nodes * v, 0.0);
  std::vector<double> weight(n_nodes, 0.0);
  for (std::size_t c = 0; c < tape.paths.size(); ++c) {
    for (const auto& [node, tok] : tape.paths[c]) {
      dlogits[static_cast<std::size_t>(node) * v + static_cast<std::size_t>(tok)] += d_seq[c];
      weight[static_cast<std::size_t>(node)] += d_seq[c];
    }
  }
  std::vector<double> dstate(n_nodes * s, 0.0);
  for (std::size_t k = 0; k < n_nodes; ++k) {
    if (weight[k] == 0.0) {
      bool any = false;
      for (std::size_t i = 0; i < v && !any; ++i) any = dlogits[k * v + i] != 0.0;
      if (!any) continue;
    }
    const double* logp = tape.node_logprobs.data() + k * v;
    for (std::size_t i = 0; i < v; ++i) dlogits[k * v + i] -= weight[k] * std::exp(logp[i]);
    const double* state = tape.node_states.data() + k * s;
    head_backward(gru_.top(state), logp, dlogits.data() + k * v,
                  dstate.data() + k * s + (s - static_cast<std::size_t>(config_.hidden_dim)), grad);
  }
  // Children were created after their parents.
  for (std::size_t k = n_nodes; k-- > 1;) {
    const auto& nd = tape.nodes[k];
    double* dh = dstate.data() + k * s;
    gru_.step_backward(params_, grad, nd.token, tape.step_caches.data() + nd.cache, dh);
    double* dp = dstate.data() + static_cast<std::size_t>(nd.parent) * s;
    for (std::size_t i = 0; i < s; ++i) dp[i] += dh[i];
  }
  std::vector<double> dh(dstate.begin(), dstate.begin() + static_cast<std::ptrdiff_t>(s));
  for (std::size_t i = tape.prompt.size(); i-- > 0;) {
    gru_.step_backward(params_, grad, tape.prompt[i], tape.prompt_caches.data() + i * cs, dh.data());
  }
}

}  // namespace macforge::model

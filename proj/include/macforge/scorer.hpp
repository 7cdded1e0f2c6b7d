#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "macforge/config.hpp"
#include "macforge/gru.hpp"
#include "macforge/semantics.hpp"

namespace macforge::model {

using semantics::TokenId;

// Everything the backward pass of one scoring call needs. Candidates sharing
// a prefix share the recurrent steps over it (a prefix trie rooted at the end
// of the prompt).
struct ScoreTape {
  struct Node {
    int parent = -1;
    TokenId token = 0;
    std::size_t cache = 0;  // offset into step_caches; root has none
  };
  std::vector<TokenId> prompt;
  std::vector<double> prompt_caches;
  std::vector<Node> nodes;
  std::vector<double> node_states;   // state_size per node
  std::vector<double> node_logprobs; // vocab per node
  std::vector<double> step_caches;
  // (node, token) pairs along each candidate
  std::vector<std::vector<std::pair<int, TokenId>>> paths;
};

// Causal next-token model over the closed vocabulary: embedding, GRU stack,
// linear head, log-softmax. Sequence log-probabilities of candidate
// continuations follow the chain rule over their tokens.
class SequenceScorer {
 public:
  SequenceScorer() = default;
  SequenceScorer(const ModelConfig& config, int vocab_size);

  const ModelConfig& config() const { return config_; }
  int vocab_size() const { return vocab_; }
  std::size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  void init(std::uint64_t seed);

  // log Pr(w | prefix) for every w in the vocabulary.
  std::vector<double> next_token_logprobs(const std::vector<TokenId>& prefix) const;

  // Sum over each candidate's tokens of log Pr(w_j | prompt, w_<j).
  std::vector<double> score(const std::vector<TokenId>& prompt,
                            const std::vector<std::vector<TokenId>>& candidates,
                            ScoreTape* tape = nullptr) const;

  // Accumulates dL/dtheta given dL/d(sequence log-prob) per candidate.
  void backward(const ScoreTape& tape, std::span<const double> d_seq,
                std::span<double> grad) const;

 private:
  void head_logprobs(const double* top_state, double* out) const;
  void head_backward(const double* top_state, const double* logp, const double* dlogits,
                     double* dtop, std::span<double> grad) const;

  ModelConfig config_;
  int vocab_ = 0;
  GruStack gru_;
  std::size_t head_offset_ = 0;
  std::vector<double> params_;
};

}  // namespace macforge::model

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "macforge/config.hpp"
#include "macforge/gru.hpp"
#include "macforge/semantics.hpp"

namespace macforge::model {

struct CriticTape {
  std::vector<semantics::TokenId> tokens;
  std::vector<double> caches;
  std::vector<double> final_state;
  std::vector<double> hidden;  // tanh layer activations
};

// Value network over the joint prompt: GRU encoder, one tanh hidden layer and
// a single linear output unit. The output unit starts at zero.
class Critic {
 public:
  Critic() = default;
  Critic(const CriticConfig& config, int vocab_size);

  const CriticConfig& config() const { return config_; }
  std::size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  void init(std::uint64_t seed);

  double value(const std::vector<semantics::TokenId>& joint_prompt,
               CriticTape* tape = nullptr) const;
  void backward(const CriticTape& tape, double d_value, std::span<double> grad) const;

 private:
  CriticConfig config_;
  GruStack gru_;
  std::size_t head_offset_ = 0;
  std::vector<double> params_;
};

}  // namespace macforge::model

#include "macforge/critic.hpp"

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

// Head layout after the encoder: W1 (m x h), b1 (m), w2 (m), b2 (1).
Critic::Critic(const CriticConfig& config, int vocab_size) : config_(config) {
  config.validate();
  gru_ = GruStack({vocab_size, config.embed_dim, config.hidden_dim, config.layers}, 0);
  head_offset_ = gru_.param_count();
  const auto m = static_cast<std::size_t>(config.mlp_hidden);
  const auto h = static_cast<std::size_t>(config.hidden_dim);
  params_.assign(head_offset_ + m * h + 2 * m + 1, 0.0);
}

void Critic::init(std::uint64_t seed) {
  Rng rng(seed);
  gru_.init(params_, rng);
  const int h = config_.hidden_dim;
  const int m = config_.mlp_hidden;
  const double a = 1.0 / std::sqrt(static_cast<double>(h));
  double* w1 = params_.data() + head_offset_;
  for (std::size_t i = 0; i < static_cast<std::size_t>(m) * h; ++i) {
    w1[i] = (2.0 * uniform01(rng) - 1.0) * a;
  }
  std::fill(w1 + static_cast<std::size_t>(m) * h, params_.data() + params_.size(), 0.0);
}

double Critic::value(const std::vector<semantics::TokenId>& joint_prompt, CriticTape* tape) const {
  if (joint_prompt.empty()) throw ContractError("critic input is empty");
  const std::size_t s = gru_.state_size();
  const std::size_t cs = gru_.cache_size();
  const int h = config_.hidden_dim;
  const int m = config_.mlp_hidden;
  std::vector<double> a(s, 0.0), b(s, 0.0);
  if (tape != nullptr) {
    tape->tokens = joint_prompt;
    tape->caches.assign(joint_prompt.size() * cs, 0.0);
  }
  for (std::size_t i = 0; i < joint_prompt.size(); ++i) {
    gru_.step(params_, joint_prompt[i], a.data(), b.data(),
              tape != nullptr ? tape->caches.data() + i * cs : nullptr);
    std::swap(a, b);
  }
  const double* p = params_.data() + head_offset_;
  CMat w1(p, m, h);
  CVec b1(p + static_cast<std::size_t>(m) * h, m);
  CVec w2(p + static_cast<std::size_t>(m) * h + m, m);
  const double b2 = p[static_cast<std::size_t>(m) * h + 2 * m];
  Eigen::VectorXd hid = (w1 * CVec(gru_.top(a.data()), h) + b1).array().tanh();
  const double v = w2.dot(hid) + b2;
  if (tape != nullptr) {
    tape->final_state = a;
    tape->hidden.assign(hid.data(), hid.data() + m);
  }
  return v;
}

void Critic::backward(const CriticTape& tape, double d_value, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw ContractError("gradient buffer has wrong size");
  const std::size_t s = gru_.state_size();
  const std::size_t cs = gru_.cache_size();
  const int h = config_.hidden_dim;
  const int m = config_.mlp_hidden;
  const double* p = params_.data() + head_offset_;
  double* g = grad.data() + head_offset_;
  CMat w1(p, m, h);
  CVec w2(p + static_cast<std::size_t>(m) * h + m, m);
  CVec hid(tape.hidden.data(), m);
  const double* top = gru_.top(tape.final_state.data());

  MVec(g + static_cast<std::size_t>(m) * h + m, m) += d_value * hid;
  g[static_cast<std::size_t>(m) * h + 2 * m] += d_value;
  Eigen::VectorXd dpre = (d_value * w2).array() * (1.0 - hid.array().square());
  MMat(g, m, h).noalias() += dpre * CVec(top, h).transpose();
  MVec(g + static_cast<std::size_t>(m) * h, m) += dpre;

  std::vector<double> dh(s, 0.0);
  MVec(dh.data() + (s - static_cast<std::size_t>(h)), h).noalias() = w1.transpose() * dpre;
  for (std::size_t i = tape.tokens.size(); i-- > 0;) {
    gru_.step_backward(params_, grad, tape.tokens[i], tape.caches.data() + i * cs, dh.data());
  }
}

}  // namespace macforge::model

#include "macforge/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "macforge/error.hpp"
#include "macforge/policy.hpp"

namespace macforge::ppo {

std::vector<double> reward_to_go(std::span<const double> rewards, double gamma) {
  std::vector<double> out(rewards.size(), 0.0);
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    out[t] = acc;
  }
  return out;
}

std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values,
                                double gamma, double lambda) {
  if (values.size() != rewards.size() + 1) {
    throw ContractError("GAE needs one value per reward plus a bootstrap value");
  }
  std::vector<double> adv(rewards.size(), 0.0);
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    const double delta = rewards[t] + gamma * values[t + 1] - values[t];
    acc = delta + gamma * lambda * acc;
    adv[t] = acc;
  }
  return adv;
}

void normalize(std::vector<double>& xs) {
  if (xs.empty()) return;
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  for (double& x : xs) x = sd > 1e-12 ? (x - mean) / sd : 0.0;
}

CriticTerm critic_term(double value, double value_old, double ret, double clip_eps) {
  const double clipped = std::clamp(value, value_old - clip_eps, value_old + clip_eps);
  const double a = value - ret;
  const double b = clipped - ret;
  CriticTerm out;
  if (a * a >= b * b) {
    out.loss = a * a;
    out.d_value = 2.0 * a;
  } else {
    out.loss = b * b;
    const bool inside = value > value_old - clip_eps && value < value_old + clip_eps;
    out.d_value = inside ? 2.0 * b : 0.0;
  }
  return out;
}

double critic_loss(std::span<const double> values, std::span<const double> values_old,
                   std::span<const double> returns, double clip_eps) {
  if (values.size() != values_old.size() || values.size() != returns.size()) {
    throw ContractError("critic loss inputs differ in length");
  }
  if (values.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    total += critic_term(values[i], values_old[i], returns[i], clip_eps).loss;
  }
  return total / static_cast<double>(values.size());
}

ActorTerm actor_term(std::span<const double> probs, std::span<const double> old_probs,
                     std::size_t chosen, double advantage, const PpoConfig& config) {
  if (probs.size() != old_probs.size() || chosen >= probs.size()) {
    throw ContractError("actor term inputs are inconsistent");
  }
  constexpr double kTiny = 1e-300;
  ActorTerm t;
  const double p = std::max(probs[chosen], kTiny);
  const double p_old = std::max(old_probs[chosen], kTiny);
  t.ratio = p / p_old;
  const double lo = 1.0 - config.clip_eps;
  const double hi = 1.0 + config.clip_eps;
  const double unclipped = t.ratio * advantage;
  const double clipped = std::clamp(t.ratio, lo, hi) * advantage;
  t.surrogate = std::min(unclipped, clipped);
  t.clipped = clipped < unclipped;
  t.kl = policy::kl_divergence(old_probs, probs);
  t.entropy = policy::entropy(probs);
  t.objective = t.surrogate - config.kl_coef * t.kl + config.entropy_coef * t.entropy;

  t.d_probs.assign(probs.size(), 0.0);
  if (!t.clipped) t.d_probs[chosen] += advantage / p_old;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const double pk = std::max(probs[k], kTiny);
    t.d_probs[k] += config.kl_coef * old_probs[k] / pk;
    t.d_probs[k] -= config.entropy_coef * (std::log(pk) + 1.0);
  }
  return t;
}

double actor_objective(std::span<const ActorSample> samples, const PpoConfig& config) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    total += actor_term(s.probs, s.old_probs, s.chosen, s.advantage, config).objective;
  }
  return total / static_cast<double>(samples.size());
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw ContractError("optimizer size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

double clip_grad_norm(std::vector<double>& grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (double& g : grad) g *= s;
  }
  return norm;
}

PpoTrainer::PpoTrainer(const ExperimentConfig& config, model::SequenceScorer& actor,
                       model::Critic& critic, const semantics::SemanticMapper& mapper)
    : config_(config),
      actor_(actor),
      critic_(critic),
      mapper_(mapper),
      source_(actor, true),
      actor_opt_(actor.param_count(), config.ppo.actor_lr),
      critic_opt_(critic.param_count(), config.ppo.critic_lr) {
  config_.validate();
}

Episode PpoTrainer::collect_rollout(env::UdtsEnv& env, Rng& rng) {
  if (env.slot() != 0) throw StateError("rollouts start from a freshly reset environment");
  Episode ep;
  ep.ue_count = static_cast<int>(env.active_ue_ids().size());
  const bool sie = config_.prompt.sie_enabled;
  while (!env.done()) {
    const auto ue_obs = env.ue_observations();
    const auto& bs_obs = env.bs_observation();
    auto slot = agents::decide_slot(source_, mapper_, ue_obs, bs_obs, config_.prompt,
                                    config_.fusion, rng, false);
    TransitionRecord rec;
    rec.joint_prompt = mapper_.joint_prompt(ue_obs, bs_obs, sie);
    rec.value = critic_.value(rec.joint_prompt);
    const auto out = env.step(slot.action);
    rec.reward = out.reward;
    auto convert = [](std::vector<agents::AgentDecision>& in, std::vector<AgentRecord>& dst) {
      for (auto& d : in) dst.push_back({std::move(d.prompt), d.chosen, d.logprob, std::move(d.probs)});
    };
    convert(slot.ue, rec.ue);
    convert(slot.bs, rec.bs);
    ep.records.push_back(std::move(rec));
  }
  ep.events = env.event_log();
  std::vector<double> rewards;
  for (const auto& r : ep.records) rewards.push_back(r.reward);
  ep.episode_return = env::episode_return(rewards, config_.ppo.gamma);
  ep.throughput = env::throughput(ep.events, config_.env.episode_length);
  return ep;
}

void PpoTrainer::finalize(std::vector<Episode>& batch) const {
  std::vector<double*> adv_slots;
  std::vector<double> all_adv;
  for (auto& ep : batch) {
    std::vector<double> rewards, values;
    for (const auto& r : ep.records) {
      rewards.push_back(r.reward);
      values.push_back(r.value);
    }
    values.push_back(0.0);  // terminal bootstrap
    const auto ret = reward_to_go(rewards, config_.ppo.gamma);
    const auto adv = compute_gae(rewards, values, config_.ppo.gamma, config_.ppo.gae_lambda);
    for (std::size_t t = 0; t < ep.records.size(); ++t) {
      ep.records[t].ret = ret[t];
      ep.records[t].advantage = adv[t];
      adv_slots.push_back(&ep.records[t].advantage);
      all_adv.push_back(adv[t]);
    }
  }
  if (config_.ppo.normalize_advantages) {
    normalize(all_adv);
    for (std::size_t i = 0; i < adv_slots.size(); ++i) *adv_slots[i] = all_adv[i];
  }
}

EpochStats PpoTrainer::loss_gradients(const std::vector<const TransitionRecord*>& minibatch,
                                      std::vector<double>& actor_grad,
                                      std::vector<double>& critic_grad, double* total_loss) const {
  using agents::TokenVectorHash;
  actor_grad.assign(actor_.param_count(), 0.0);
  critic_grad.assign(critic_.param_count(), 0.0);
  EpochStats stats;
  if (minibatch.empty()) return stats;

  // Actor: forward every distinct prompt once.
  std::unordered_map<std::vector<semantics::TokenId>, std::size_t, TokenVectorHash> index;
  std::vector<model::ScoreTape> tapes;
  std::vector<std::vector<double>> probs;
  std::vector<std::vector<double>> d_seq;
  std::vector<std::vector<std::vector<semantics::TokenId>>> surfaces(2);
  for (const auto& c : mapper_.enumerate_actions(semantics::AgentKind::kUe)) surfaces[0].push_back(c.surface);
  for (const auto& c : mapper_.enumerate_actions(semantics::AgentKind::kBs)) surfaces[1].push_back(c.surface);

  auto lookup = [&](const AgentRecord& r) -> std::size_t {
    auto [it, inserted] = index.emplace(r.prompt.token_ids, tapes.size());
    if (inserted) {
      tapes.emplace_back();
      const auto& cand = surfaces[r.prompt.agent_kind == semantics::AgentKind::kUe ? 0 : 1];
      const auto seq = actor_.score(r.prompt.token_ids, cand, &tapes.back());
      probs.push_back(policy::softmax(seq));
      d_seq.emplace_back(cand.size(), 0.0);
    }
    return it->second;
  };

  std::size_t n_decisions = 0;
  for (const auto* tr : minibatch) n_decisions += tr->ue.size() + tr->bs.size();
  const double scale = -1.0 / static_cast<double>(n_decisions);
  double objective = 0.0;
  std::size_t clipped = 0;

  for (const auto* tr : minibatch) {
    for (const auto* group : {&tr->ue, &tr->bs}) {
      if (group->empty()) continue;
      std::vector<std::size_t> ids;
      for (const auto& r : *group) ids.push_back(lookup(r));
      if (config_.fusion.enabled && group->size() > 1) {
        std::vector<std::vector<double>> inputs;
        for (auto id : ids) inputs.push_back(probs[id]);
        const auto fused = policy::fuse(inputs, config_.fusion.epsilon);
        std::vector<double> g(fused.probs.size(), 0.0);
        for (const auto& r : *group) {
          const auto t = actor_term(fused.probs, r.probs, r.chosen, tr->advantage, config_.ppo);
          objective += t.objective;
          stats.mean_kl += t.kl;
          stats.mean_entropy += t.entropy;
          clipped += t.clipped ? 1 : 0;
          for (std::size_t k = 0; k < g.size(); ++k) g[k] += t.d_probs[k];
        }
        const auto d_inputs = policy::fuse_backward(inputs, config_.fusion.epsilon, g);
        for (std::size_t e = 0; e < ids.size(); ++e) {
          const auto dl = policy::softmax_backward(probs[ids[e]], d_inputs[e]);
          for (std::size_t k = 0; k < dl.size(); ++k) d_seq[ids[e]][k] += scale * dl[k];
        }
      } else {
        for (std::size_t e = 0; e < group->size(); ++e) {
          const auto& r = (*group)[e];
          const auto& p = probs[ids[e]];
          const auto t = actor_term(p, r.probs, r.chosen, tr->advantage, config_.ppo);
          objective += t.objective;
          stats.mean_kl += t.kl;
          stats.mean_entropy += t.entropy;
          clipped += t.clipped ? 1 : 0;
          const auto dl = policy::softmax_backward(p, t.d_probs);
          for (std::size_t k = 0; k < dl.size(); ++k) d_seq[ids[e]][k] += scale * dl[k];
        }
      }
    }
  }
  for (std::size_t i = 0; i < tapes.size(); ++i) actor_.backward(tapes[i], d_seq[i], actor_grad);

  // Critic: distinct joint prompts.
  std::unordered_map<std::vector<semantics::TokenId>, std::size_t, TokenVectorHash> cindex;
  std::vector<model::CriticTape> ctapes;
  std::vector<double> cvalues, cgrad;
  double closs = 0.0;
  const double cscale = 1.0 / static_cast<double>(minibatch.size());
  for (const auto* tr : minibatch) {
    auto [it, inserted] = cindex.emplace(tr->joint_prompt, ctapes.size());
    if (inserted) {
      ctapes.emplace_back();
      cvalues.push_back(critic_.value(tr->joint_prompt, &ctapes.back()));
      cgrad.push_back(0.0);
    }
    const auto term = critic_term(cvalues[it->second], tr->value, tr->ret, config_.ppo.value_clip_eps);
    closs += term.loss;
    cgrad[it->second] += cscale * term.d_value;
  }
  for (std::size_t i = 0; i < ctapes.size(); ++i) critic_.backward(ctapes[i], cgrad[i], critic_grad);

  const double nd = static_cast<double>(n_decisions);
  stats.actor_objective = objective / nd;
  stats.mean_kl /= nd;
  stats.mean_entropy /= nd;
  stats.clip_fraction = static_cast<double>(clipped) / nd;
  stats.critic_loss = closs * cscale;
  if (total_loss != nullptr) *total_loss = -stats.actor_objective + stats.critic_loss;
  return stats;
}

UpdateStats PpoTrainer::update(std::vector<Episode>& batch, Rng& rng) {
  const auto start = std::chrono::steady_clock::now();
  UpdateStats stats;
  std::vector<const TransitionRecord*> all;
  for (const auto& ep : batch) {
    stats.mean_return += ep.episode_return;
    stats.mean_throughput += ep.throughput;
    for (const auto& r : ep.records) all.push_back(&r);
  }
  if (!batch.empty()) {
    stats.mean_return /= static_cast<double>(batch.size());
    stats.mean_throughput /= static_cast<double>(batch.size());
  }
  std::vector<double> ga, gc;
  const auto mb = static_cast<std::size_t>(config_.ppo.minibatch_size);
  for (int epoch = 0; epoch < config_.ppo.epochs_per_batch; ++epoch) {
    for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[uniform_index(rng, i)]);
    EpochStats acc;
    int chunks = 0;
    for (std::size_t begin = 0; begin < all.size(); begin += mb) {
      const std::vector<const TransitionRecord*> minibatch(
          all.begin() + static_cast<std::ptrdiff_t>(begin),
          all.begin() + static_cast<std::ptrdiff_t>(std::min(all.size(), begin + mb)));
      const auto s = loss_gradients(minibatch, ga, gc);
      if (!std::isfinite(s.actor_objective) || !std::isfinite(s.critic_loss)) {
        throw RuntimeFault("non-finite PPO loss; aborting update");
      }
      clip_grad_norm(ga, config_.ppo.max_grad_norm);
      clip_grad_norm(gc, config_.ppo.max_grad_norm);
      actor_opt_.step(actor_.params(), ga);
      critic_opt_.step(critic_.params(), gc);
      acc.actor_objective += s.actor_objective;
      acc.critic_loss += s.critic_loss;
      acc.mean_kl += s.mean_kl;
      acc.mean_entropy += s.mean_entropy;
      acc.clip_fraction += s.clip_fraction;
      ++chunks;
    }
    if (chunks > 0) {
      const double c = chunks;
      acc.actor_objective /= c;
      acc.critic_loss /= c;
      acc.mean_kl /= c;
      acc.mean_entropy /= c;
      acc.clip_fraction /= c;
    }
    stats.epochs.push_back(acc);
  }
  source_.clear_cache();
  stats.wallclock_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

void PpoTrainer::train(int updates, std::int64_t first_update,
                       const std::function<void(const UpdateStats&)>& on_update) {
  Rng rng(mix_seed(config_.seed, 0x7ea1ULL + static_cast<std::uint64_t>(first_update)));
  env::UdtsEnv env(config_.env);
  for (int u = 0; u < updates; ++u) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<Episode> batch;
    for (int e = 0; e < config_.ppo.rollout_episodes_per_update; ++e) {
      const auto episode_index =
          (first_update + u) * config_.ppo.rollout_episodes_per_update + e;
      env.reset(mix_seed(config_.seed, static_cast<std::uint64_t>(episode_index)));
      batch.push_back(collect_rollout(env, rng));
      ++episodes_;
    }
    finalize(batch);
    auto stats = update(batch, rng);
    stats.update = first_update + u + 1;
    stats.wallclock_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (on_update) on_update(stats);
  }
}

}  // namespace macforge::ppo

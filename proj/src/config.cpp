#include "macforge/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "macforge/error.hpp"

namespace macforge {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("bad integer for " + key + ": '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("bad unsigned integer for " + key + ": '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("bad real for " + key + ": '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

// Shortest text that reads back to the same double.
std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string fmt_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

struct Field {
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename Section>
using SectionOf = Section ExperimentConfig::*;

template <typename Section>
Field int_field(std::string name, SectionOf<Section> sec, int Section::*m) {
  return {name,
          [=](ExperimentConfig& c, const std::string& v) { (c.*sec).*m = to_int(name, v); },
          [=](const ExperimentConfig& c) { return std::to_string((c.*sec).*m); }};
}

template <typename Section>
Field real_field(std::string name, SectionOf<Section> sec, double Section::*m) {
  return {name,
          [=](ExperimentConfig& c, const std::string& v) { (c.*sec).*m = to_double(name, v); },
          [=](const ExperimentConfig& c) { return fmt_double((c.*sec).*m); }};
}

template <typename Section>
Field bool_field(std::string name, SectionOf<Section> sec, bool Section::*m) {
  return {name,
          [=](ExperimentConfig& c, const std::string& v) { (c.*sec).*m = to_bool(name, v); },
          [=](const ExperimentConfig& c) { return std::string((c.*sec).*m ? "true" : "false"); }};
}

template <typename Section>
Field list_field(std::string name, SectionOf<Section> sec, std::vector<int> Section::*m) {
  return {name,
          [=](ExperimentConfig& c, const std::string& v) { (c.*sec).*m = parse_int_list(v); },
          [=](const ExperimentConfig& c) { return fmt_list((c.*sec).*m); }};
}

template <typename Section>
Field string_field(std::string name, SectionOf<Section> sec, std::string Section::*m) {
  return {name,
          [=](ExperimentConfig& c, const std::string& v) { (c.*sec).*m = v; },
          [=](const ExperimentConfig& c) { return (c.*sec).*m; }};
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> table = {
      list_field("env.ue_count_range", &C::env, &EnvConfig::ue_count_range),
      int_field("env.buffer_capacity", &C::env, &EnvConfig::buffer_capacity),
      int_field("env.episode_length", &C::env, &EnvConfig::episode_length),
      real_field("env.arrival_prob", &C::env, &EnvConfig::arrival_prob),
      real_field("env.reward_const", &C::env, &EnvConfig::reward_const),
      int_field("env.ucm_vocab_size", &C::env, &EnvConfig::ucm_vocab_size),
      int_field("env.dcm_vocab_size", &C::env, &EnvConfig::dcm_vocab_size),
      real_field("env.tbler", &C::env, &EnvConfig::tbler),
      real_field("env.discount", &C::env, &EnvConfig::discount),
      bool_field("env.mid_episode_dynamics", &C::env, &EnvConfig::mid_episode_dynamics),
      real_field("env.churn_prob", &C::env, &EnvConfig::churn_prob),

      int_field("model.embed_dim", &C::model, &ModelConfig::embed_dim),
      int_field("model.hidden_dim", &C::model, &ModelConfig::hidden_dim),
      int_field("model.layers", &C::model, &ModelConfig::layers),
      real_field("model.init_scale", &C::model, &ModelConfig::init_scale),

      int_field("critic.embed_dim", &C::critic, &CriticConfig::embed_dim),
      int_field("critic.hidden_dim", &C::critic, &CriticConfig::hidden_dim),
      int_field("critic.layers", &C::critic, &CriticConfig::layers),
      int_field("critic.mlp_hidden", &C::critic, &CriticConfig::mlp_hidden),
      real_field("critic.init_scale", &C::critic, &CriticConfig::init_scale),

      real_field("ppo.clip_eps", &C::ppo, &PpoConfig::clip_eps),
      real_field("ppo.value_clip_eps", &C::ppo, &PpoConfig::value_clip_eps),
      real_field("ppo.gamma", &C::ppo, &PpoConfig::gamma),
      real_field("ppo.gae_lambda", &C::ppo, &PpoConfig::gae_lambda),
      real_field("ppo.kl_coef", &C::ppo, &PpoConfig::kl_coef),
      real_field("ppo.entropy_coef", &C::ppo, &PpoConfig::entropy_coef),
      int_field("ppo.epochs_per_batch", &C::ppo, &PpoConfig::epochs_per_batch),
      int_field("ppo.minibatch_size", &C::ppo, &PpoConfig::minibatch_size),
      real_field("ppo.actor_lr", &C::ppo, &PpoConfig::actor_lr),
      real_field("ppo.critic_lr", &C::ppo, &PpoConfig::critic_lr),
      real_field("ppo.max_grad_norm", &C::ppo, &PpoConfig::max_grad_norm),
      int_field("ppo.rollout_episodes_per_update", &C::ppo, &PpoConfig::rollout_episodes_per_update),
      int_field("ppo.total_updates", &C::ppo, &PpoConfig::total_updates),
      bool_field("ppo.normalize_advantages", &C::ppo, &PpoConfig::normalize_advantages),

      bool_field("fusion.enabled", &C::fusion, &FusionConfig::enabled),
      real_field("fusion.epsilon", &C::fusion, &FusionConfig::epsilon),

      bool_field("prompt.sie_enabled", &C::prompt, &PromptConfig::sie_enabled),

      real_field("baseline.nocomm_transmit_prob", &C::baseline, &BaselineConfig::nocomm_transmit_prob),
      int_field("baseline.nocomm_delete_threshold", &C::baseline, &BaselineConfig::nocomm_delete_threshold),

      int_field("harness.eval_every", &C::harness, &HarnessConfig::eval_every),
      int_field("harness.eval_episodes", &C::harness, &HarnessConfig::eval_episodes),
      int_field("harness.checkpoint_every", &C::harness, &HarnessConfig::checkpoint_every),
      bool_field("harness.greedy_eval", &C::harness, &HarnessConfig::greedy_eval),
      list_field("harness.eval_ue_counts", &C::harness, &HarnessConfig::eval_ue_counts),
      int_field("harness.latency_samples", &C::harness, &HarnessConfig::latency_samples),
      int_field("harness.latency_warmup", &C::harness, &HarnessConfig::latency_warmup),
      string_field("harness.bridge_command", &C::harness, &HarnessConfig::bridge_command),

      {"seed", [](C& c, const std::string& v) { c.seed = to_u64("seed", v); },
       [](const C& c) { return std::to_string(c.seed); }},
  };
  return table;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(to_int("list", item));
  }
  return out;
}

void EnvConfig::validate() const {
  require(!ue_count_range.empty(), "env.ue_count_range must be nonempty");
  for (int n : ue_count_range) require(n >= 1, "env.ue_count_range entries must be >= 1");
  require(max_ue_count() <= 64, "env.ue_count_range entries must be <= 64");
  require(buffer_capacity >= 1, "env.buffer_capacity must be >= 1");
  require(episode_length >= 1, "env.episode_length must be >= 1");
  require(arrival_prob >= 0.0 && arrival_prob <= 1.0, "env.arrival_prob must lie in [0,1]");
  require(tbler >= 0.0 && tbler <= 1.0, "env.tbler must lie in [0,1]");
  require(reward_const > 0.0, "env.reward_const must be > 0");
  require(discount > 0.0 && discount <= 1.0, "env.discount must lie in (0,1]");
  require(ucm_vocab_size >= 1, "env.ucm_vocab_size must be >= 1");
  require(dcm_vocab_size >= 1, "env.dcm_vocab_size must be >= 1");
  require(churn_prob >= 0.0 && churn_prob <= 1.0, "env.churn_prob must lie in [0,1]");
}

int EnvConfig::min_ue_count() const {
  return *std::min_element(ue_count_range.begin(), ue_count_range.end());
}

int EnvConfig::max_ue_count() const {
  return *std::max_element(ue_count_range.begin(), ue_count_range.end());
}

void ModelConfig::validate() const {
  require(embed_dim >= 1 && hidden_dim >= 1 && layers >= 1, "model dimensions must be >= 1");
  require(init_scale > 0.0, "model.init_scale must be > 0");
}

void CriticConfig::validate() const {
  require(embed_dim >= 1 && hidden_dim >= 1 && layers >= 1 && mlp_hidden >= 1,
          "critic dimensions must be >= 1");
  require(init_scale > 0.0, "critic.init_scale must be > 0");
}

void PpoConfig::validate() const {
  require(clip_eps > 0.0 && clip_eps < 1.0, "ppo.clip_eps must lie in (0,1)");
  require(value_clip_eps > 0.0, "ppo.value_clip_eps must be > 0");
  require(gamma > 0.0 && gamma <= 1.0, "ppo.gamma must lie in (0,1]");
  require(gae_lambda >= 0.0 && gae_lambda <= 1.0, "ppo.gae_lambda must lie in [0,1]");
  require(kl_coef >= 0.0 && entropy_coef >= 0.0, "ppo coefficients must be >= 0");
  require(epochs_per_batch >= 1 && minibatch_size >= 1, "ppo batch sizes must be >= 1");
  require(actor_lr >= 0.0 && critic_lr >= 0.0, "ppo learning rates must be >= 0");
  require(max_grad_norm > 0.0, "ppo.max_grad_norm must be > 0");
  require(rollout_episodes_per_update >= 1, "ppo.rollout_episodes_per_update must be >= 1");
  require(total_updates >= 0, "ppo.total_updates must be >= 0");
}

void FusionConfig::validate() const {
  require(epsilon >= 0.0, "fusion.epsilon must be >= 0");
}

void BaselineConfig::validate() const {
  require(nocomm_transmit_prob >= 0.0 && nocomm_transmit_prob <= 1.0,
          "baseline.nocomm_transmit_prob must lie in [0,1]");
  require(nocomm_delete_threshold >= 0, "baseline.nocomm_delete_threshold must be >= 0");
}

void HarnessConfig::validate() const {
  require(eval_every >= 1, "harness.eval_every must be >= 1");
  require(eval_episodes >= 0, "harness.eval_episodes must be >= 0");
  require(checkpoint_every >= 1, "harness.checkpoint_every must be >= 1");
  require(latency_samples >= 0 && latency_warmup >= 0, "latency sample counts must be >= 0");
}

void ExperimentConfig::validate() const {
  env.validate();
  model.validate();
  critic.validate();
  ppo.validate();
  fusion.validate();
  baseline.validate();
  harness.validate();
  for (int n : harness.eval_ue_counts) {
    require(std::find(env.ue_count_range.begin(), env.ue_count_range.end(), n) !=
                env.ue_count_range.end(),
            "harness.eval_ue_counts entries must belong to env.ue_count_range");
  }
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.name == key) {
      f.set(*this, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> ExperimentConfig::to_key_values() const {
  std::map<std::string, std::string> out;
  for (const auto& f : fields()) out[f.name] = f.get(*this);
  return out;
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_key_values()) out += k + " = " + v + "\n";
  return out;
}

ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace macforge

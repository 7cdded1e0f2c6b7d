#include "macforge/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "macforge/baselines.hpp"
#include "macforge/bridge.hpp"
#include "macforge/error.hpp"
#include "macforge/event_log.hpp"
#include "macforge/policy.hpp"

#ifndef MACFORGE_VERSION
#define MACFORGE_VERSION "dev"
#endif

namespace macforge::harness {
namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("csv column '" + name + "' missing");
    return static_cast<std::size_t>(it - header.begin());
  }
};

Csv read_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("missing input " + path.string());
  Csv csv;
  std::string line;
  if (std::getline(is, line)) csv.header = split(line, ',');
  while (std::getline(is, line)) {
    if (!line.empty()) csv.rows.push_back(split(line, ','));
  }
  return csv;
}

std::ofstream open_out(const std::filesystem::path& path, bool append = false) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
  if (!os) throw RuntimeFault("cannot write " + path.string());
  return os;
}

std::string utc_stamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

std::vector<int> eval_counts(const ExperimentConfig& c) {
  auto v = c.harness.eval_ue_counts.empty() ? c.env.ue_count_range : c.harness.eval_ue_counts;
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

const char* kEvalHeader =
    "update,seed,ue_count,episodes,throughput_mean,throughput_std,collision_rate,"
    "buffer_occupancy,reward_mean,valid_answer_pct";

void write_eval_rows(std::ostream& os, std::int64_t update, std::uint64_t seed, const EvalReport& r) {
  for (const auto& n : r.per_n) {
    os << update << ',' << seed << ',' << n.ue_count << ',' << n.episodes << ','
       << fmt(n.throughput_mean) << ',' << fmt(n.throughput_std) << ',' << fmt(n.collision_rate)
       << ',' << fmt(n.buffer_occupancy) << ',' << fmt(n.reward_mean) << ','
       << fmt(r.valid_answer_pct) << '\n';
  }
}

}  // namespace

std::string version() { return MACFORGE_VERSION; }

PolicySpec parse_policy_spec(const std::string& text) {
  PolicySpec s;
  s.text = text;
  if (text == "human") {
    s.kind = PolicySpec::Kind::kHuman;
  } else if (text == "nocomm") {
    s.kind = PolicySpec::Kind::kNoComm;
  } else if (text == "bridge") {
    s.kind = PolicySpec::Kind::kBridge;
  } else if (text.rfind("learned:", 0) == 0 && text.size() > 8) {
    s.kind = PolicySpec::Kind::kLearned;
    s.checkpoint = text.substr(8);
  } else {
    throw ConfigError("unknown policy '" + text + "' (human, nocomm, learned:<ckpt>, bridge)");
  }
  return s;
}

PolicyHandle make_policy(const PolicySpec& spec, const ExperimentConfig& config, bool greedy) {
  PolicyHandle h;
  h.config = config;
  switch (spec.kind) {
    case PolicySpec::Kind::kHuman:
      h.policy = std::make_unique<baselines::HumanCrafted>(config.env);
      break;
    case PolicySpec::Kind::kNoComm:
      h.policy = std::make_unique<baselines::NoComm>(config.env, config.baseline);
      break;
    case PolicySpec::Kind::kLearned: {
      h.loaded = std::make_unique<checkpoint::LoadedPolicy>(checkpoint::load_policy(spec.checkpoint));
      h.config = h.loaded->config;
      h.source = std::make_shared<agents::ScratchSource>(h.loaded->actor, true);
      h.policy = std::make_unique<agents::TokenPolicy>(h.source, h.loaded->mapper, h.config.prompt,
                                                       h.config.fusion, greedy, spec.text);
      break;
    }
    case PolicySpec::Kind::kBridge: {
      if (config.harness.bridge_command.empty()) throw ConfigError("harness.bridge_command is empty");
      h.mapper = std::make_unique<semantics::SemanticMapper>(config.env);
      h.source = std::make_shared<bridge::BridgeSource>(
          bridge::BridgeOptions{config.harness.bridge_command, 10000}, h.mapper->vocabulary());
      h.policy = std::make_unique<agents::TokenPolicy>(h.source, *h.mapper, config.prompt,
                                                       config.fusion, greedy, "bridge");
      break;
    }
  }
  return h;
}

LatencyStats summarize_latency(std::vector<double> samples_us) {
  LatencyStats s;
  s.samples = static_cast<std::int64_t>(samples_us.size());
  if (samples_us.empty()) return s;
  std::sort(samples_us.begin(), samples_us.end());
  s.mean_us = std::accumulate(samples_us.begin(), samples_us.end(), 0.0) / static_cast<double>(s.samples);
  // Nearest-rank percentiles.
  auto rank = [&](double q) {
    const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples_us.size())));
    return samples_us[std::clamp<std::size_t>(k, 1, samples_us.size()) - 1];
  };
  s.p50_us = rank(0.50);
  s.p95_us = rank(0.95);
  return s;
}

EvalReport run_eval(agents::DecisionMaker& policy, const EnvConfig& env_config,
                    const std::vector<int>& ue_counts, int episodes, std::uint64_t seed,
                    const std::optional<std::filesystem::path>& archive_dir) {
  if (episodes <= 0) throw ContractError("evaluation needs at least one episode");
  if (ue_counts.empty()) throw ContractError("evaluation needs at least one N");
  EvalReport report;
  report.policy = policy.name();
  std::ofstream index;
  if (archive_dir) {
    index = open_out(*archive_dir / "episodes.csv");
    index << "ue_count,episode,seed,file,throughput\n";
  }
  const auto before = policy.stats();
  std::vector<double> latency;
  for (int n : ue_counts) {
    EnvConfig cfg = env_config;
    cfg.ue_count_range = {n};
    cfg.mid_episode_dynamics = false;
    cfg.validate();
    env::UdtsEnv env(cfg);
    PerNReport r;
    r.ue_count = n;
    r.episodes = episodes;
    double collided = 0.0, occupancy = 0.0, reward = 0.0;
    for (int k = 0; k < episodes; ++k) {
      const auto ep_seed = mix_seed(mix_seed(seed, static_cast<std::uint64_t>(n)), static_cast<std::uint64_t>(k));
      env.reset(ep_seed);
      policy.reset(mix_seed(ep_seed, 0xacULL));
      double occ = 0.0;
      while (!env.done()) {
        const auto obs = env.ue_observations();
        const auto t0 = Clock::now();
        const auto action = policy.act(obs, env.bs_observation());
        const auto t1 = Clock::now();
        const double agents_here = 2.0 * static_cast<double>(obs.size());
        latency.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count() / agents_here);
        const auto out = env.step(action);
        if (out.channel.x == env.state().slot_count + 1) collided += 1.0;
        double buffered = 0.0;
        int active = 0;
        for (const auto& ue : env.state().ues) {
          if (!ue.active) continue;
          buffered += static_cast<double>(ue.buffer.size());
          ++active;
        }
        occ += active > 0 ? buffered / active : 0.0;
      }
      const double T = static_cast<double>(cfg.episode_length);
      const double s = env::throughput(env.event_log(), cfg.episode_length);
      r.throughputs.push_back(s);
      occupancy += occ / T;
      reward += std::accumulate(env.rewards().begin(), env.rewards().end(), 0.0);
      if (archive_dir) {
        const std::string file = "n" + std::to_string(n) + "_ep" + std::to_string(k) + ".jsonl";
        auto os = open_out(*archive_dir / file);
        write_jsonl(os, env.event_log());
        index << n << ',' << k << ',' << ep_seed << ',' << file << ',' << fmt(s) << '\n';
      }
    }
    const double E = static_cast<double>(episodes);
    r.throughput_mean = std::accumulate(r.throughputs.begin(), r.throughputs.end(), 0.0) / E;
    double var = 0.0;
    for (double s : r.throughputs) var += (s - r.throughput_mean) * (s - r.throughput_mean);
    r.throughput_std = std::sqrt(var / E);
    r.collision_rate = collided / (E * cfg.episode_length);
    r.buffer_occupancy = occupancy / E;
    r.reward_mean = reward / E;
    report.per_n.push_back(std::move(r));
  }
  const auto after = policy.stats();
  report.decisions = after.decisions - before.decisions;
  report.invalid = after.invalid - before.invalid;
  if (report.decisions > 0) {
    report.valid_answer_pct =
        100.0 * static_cast<double>(report.decisions - report.invalid) / static_cast<double>(report.decisions);
  }
  report.latency = summarize_latency(std::move(latency));
  return report;
}

LatencyStats measure_latency(agents::CandidateSource& source, const semantics::SemanticMapper& mapper,
                             const ExperimentConfig& config, int samples, int warmup,
                             std::uint64_t seed) {
  if (samples <= 0 || warmup < 0) throw ContractError("latency needs samples > 0 and warmup >= 0");
  env::UdtsEnv env(config.env);
  Rng rng(mix_seed(seed, 0x1a7ULL));
  const bool sie = config.prompt.sie_enabled;
  const auto& ue_cands = mapper.enumerate_actions(semantics::AgentKind::kUe);
  const auto& bs_cands = mapper.enumerate_actions(semantics::AgentKind::kBs);
  std::vector<double> measured;
  measured.reserve(static_cast<std::size_t>(samples));
  int seen = 0;
  std::uint64_t episode = 0;
  auto decide = [&](const semantics::Prompt& prompt,
                    const std::vector<semantics::LinguisticAction>& cands) -> std::size_t {
    auto scores = source.score(prompt, cands);
    std::vector<double> probs = scores ? policy::softmax(*scores)
                                       : std::vector<double>(cands.size(), 1.0 / static_cast<double>(cands.size()));
    return policy::sample_index(probs, rng, false).index;
  };
  while (static_cast<int>(measured.size()) < samples) {
    env.reset(mix_seed(seed, episode++));
    while (!env.done() && static_cast<int>(measured.size()) < samples) {
      const auto obs = env.ue_observations();
      const auto& bs = env.bs_observation();
      env::JointAction action;
      auto timed = [&](auto&& fn) {
        const auto t0 = Clock::now();
        const auto idx = fn();
        const auto t1 = Clock::now();
        if (seen++ >= warmup && static_cast<int>(measured.size()) < samples) {
          measured.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
        }
        return idx;
      };
      for (const auto& o : obs) {
        const auto idx = timed([&] { return decide(mapper.ue_prompt(o, sie), ue_cands); });
        action.ue_actions.push_back(ue_cands[idx].ue_action);
      }
      for (const auto& o : obs) {
        const auto idx = timed([&] { return decide(mapper.bs_prompt(bs, o.ue_id, sie), bs_cands); });
        action.bs_dcms.push_back(bs_cands[idx].dcm);
      }
      env.step(action);
    }
  }
  return summarize_latency(std::move(measured));
}

void write_latency_csv(const std::filesystem::path& path, const std::string& policy,
                       const LatencyStats& s) {
  auto os = open_out(path);
  os << "policy,samples,mean_us,p50_us,p95_us\n"
     << policy << ',' << s.samples << ',' << fmt(s.mean_us) << ',' << fmt(s.p50_us) << ','
     << fmt(s.p95_us) << '\n';
}

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report) {
  auto os = open_out(path);
  os << "policy,ue_count,episodes,throughput_mean,throughput_std,collision_rate,buffer_occupancy,"
        "reward_mean,latency_mean_us,latency_p50_us,latency_p95_us,valid_answer_pct\n";
  for (const auto& n : report.per_n) {
    os << report.policy << ',' << n.ue_count << ',' << n.episodes << ',' << fmt(n.throughput_mean)
       << ',' << fmt(n.throughput_std) << ',' << fmt(n.collision_rate) << ','
       << fmt(n.buffer_occupancy) << ',' << fmt(n.reward_mean) << ',' << fmt(report.latency.mean_us)
       << ',' << fmt(report.latency.p50_us) << ',' << fmt(report.latency.p95_us) << ','
       << fmt(report.valid_answer_pct) << '\n';
  }
}

TrainResult run_train(const ExperimentConfig& config_in, const TrainOptions& options) {
  ExperimentConfig config = config_in;
  config.validate();
  TrainResult result;
  const std::string name =
      options.run_name.empty() ? utc_stamp() + "_seed" + std::to_string(config.seed) : options.run_name;
  result.run_dir = options.out_dir / name;
  std::filesystem::create_directories(result.run_dir);

  semantics::SemanticMapper mapper(config.env);
  const auto& vocab = mapper.vocabulary();
  const int vsize = static_cast<int>(vocab.size());
  model::SequenceScorer actor(config.model, vsize);
  model::Critic critic(config.critic, vsize);
  actor.init(mix_seed(config.seed, 0xac7ULL));
  critic.init(mix_seed(config.seed, 0xc71ULL));
  std::int64_t first_update = 0;
  if (options.resume) {
    const auto c = checkpoint::load(*options.resume, vocab.hash());
    if (c.actor_params.size() != actor.param_count() || c.critic_params.size() != critic.param_count()) {
      throw CheckpointError("checkpoint does not match the configured model sizes");
    }
    std::copy(c.actor_params.begin(), c.actor_params.end(), actor.params().begin());
    std::copy(c.critic_params.begin(), c.critic_params.end(), critic.params().begin());
    first_update = c.update;
  }

  {
    nlohmann::ordered_json m;
    m["version"] = version();
    m["seed"] = config.seed;
    m["start_time"] = utc_stamp();
    m["resumed_from"] = options.resume ? options.resume->string() : "";
    m["first_update"] = first_update;
    nlohmann::ordered_json cfg;
    for (const auto& [k, v] : config.to_key_values()) cfg[k] = v;
    m["config"] = cfg;
    m["vocab_hash"] = vocab.hash();
    m["artifacts"] = {{"train_csv", "train.csv"},
                      {"eval_csv", "eval.csv"},
                      {"checkpoints", "checkpoints/"},
                      {"config", "config.txt"}};
    auto os = open_out(result.run_dir / "manifest.json");
    os << m.dump(2) << '\n';
    open_out(result.run_dir / "config.txt") << config.to_text();
  }
  vocab.save(result.run_dir / "vocab.txt");

  auto train_csv = open_out(result.run_dir / "train.csv");
  train_csv << "update,epoch,mean_return,mean_throughput,throughput_eval_per_N,actor_loss,"
               "critic_loss,mean_KL,mean_entropy,clip_fraction,wallclock_ms\n";
  auto eval_csv = open_out(result.run_dir / "eval.csv");
  eval_csv << kEvalHeader << '\n';

  ppo::PpoTrainer trainer(config, actor, critic, mapper);
  const auto counts = eval_counts(config);
  const std::uint64_t eval_seed = mix_seed(config.seed, 0xe7a1ULL);
  auto save_ckpt = [&](std::int64_t update) {
    const auto c = checkpoint::capture(config, vocab, actor, critic, update);
    checkpoint::save(result.run_dir / "checkpoints" / ("update_" + std::to_string(update) + ".bin"), c);
    checkpoint::save(result.run_dir / "checkpoints" / "latest.bin", c);
  };

  const int remaining = static_cast<int>(std::max<std::int64_t>(0, config.ppo.total_updates - first_update));
  try {
    trainer.train(remaining, first_update, [&](const ppo::UpdateStats& s) {
      std::string eval_field;
      const bool last = s.update == config.ppo.total_updates;
      if (s.update % config.harness.eval_every == 0 || last) {
        auto source = std::make_shared<agents::ScratchSource>(actor, true);
        agents::TokenPolicy pol(source, mapper, config.prompt, config.fusion,
                                config.harness.greedy_eval, "learned");
        auto report = run_eval(pol, config.env, counts, config.harness.eval_episodes, eval_seed);
        write_eval_rows(eval_csv, s.update, config.seed, report);
        eval_csv.flush();
        for (const auto& n : report.per_n) {
          if (!eval_field.empty()) eval_field += ';';
          eval_field += std::to_string(n.ue_count) + "=" + fmt(n.throughput_mean);
        }
        if (!options.quiet) {
          std::fprintf(stderr, "update %lld eval %s return %.3f\n", static_cast<long long>(s.update),
                       eval_field.c_str(), s.mean_return);
        }
        result.evals.emplace_back(s.update, std::move(report));
      }
      for (std::size_t e = 0; e < s.epochs.size(); ++e) {
        const auto& ep = s.epochs[e];
        train_csv << s.update << ',' << e + 1 << ',' << fmt(s.mean_return) << ','
                  << fmt(s.mean_throughput) << ',' << eval_field << ',' << fmt(-ep.actor_objective)
                  << ',' << fmt(ep.critic_loss) << ',' << fmt(ep.mean_kl) << ','
                  << fmt(ep.mean_entropy) << ',' << fmt(ep.clip_fraction) << ','
                  << fmt6(s.wallclock_ms) << '\n';
      }
      train_csv.flush();
      if (s.update % config.harness.checkpoint_every == 0 || last) save_ckpt(s.update);
      result.final_update = s.update;
      result.updates.push_back(s);
    });
  } catch (const RuntimeFault& e) {
    auto os = open_out(result.run_dir / "diagnostic.txt");
    os << "error: " << e.what() << "\nlast_completed_update: " << result.final_update << '\n';
    double na = 0.0, nc = 0.0;
    for (double v : actor.params()) na += v * v;
    for (double v : critic.params()) nc += v * v;
    os << "actor_param_norm: " << fmt(std::sqrt(na)) << "\ncritic_param_norm: " << fmt(std::sqrt(nc)) << '\n';
    if (!result.updates.empty()) {
      const auto& s = result.updates.back();
      os << "last_mean_return: " << fmt(s.mean_return) << '\n';
    }
    throw;
  }
  if (remaining == 0) result.final_update = first_update;
  return result;
}

void emit_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir) {
  if (run_dirs.empty()) throw ConfigError("report needs at least one run directory");
  struct Row {
    std::string run;
    std::string seed;
    bool sie = true;
    std::int64_t update;
    int n;
    double thr, thr_std, reward;
  };
  std::vector<Row> rows;
  std::vector<std::string> latency_lines;
  for (const auto& dir : run_dirs) {
    std::ifstream ms(dir / "manifest.json");
    if (!ms) throw ConfigError("missing input " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(ms);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("unreadable manifest in " + dir.string());
    }
    const bool sie = manifest["config"].value("prompt.sie_enabled", std::string("true")) == "true";
    const auto csv = read_csv(dir / "eval.csv");
    const auto cu = csv.col("update"), cs = csv.col("seed"), cn = csv.col("ue_count"),
               ct = csv.col("throughput_mean"), cd = csv.col("throughput_std"), cr = csv.col("reward_mean");
    const std::string run = dir.filename().string();
    for (const auto& r : csv.rows) {
      rows.push_back({run, r.at(cs), sie, std::stoll(r.at(cu)), std::stoi(r.at(cn)), std::stod(r.at(ct)),
                      std::stod(r.at(cd)), std::stod(r.at(cr))});
    }
    if (std::filesystem::exists(dir / "latency.csv")) {
      const auto lat = read_csv(dir / "latency.csv");
      for (const auto& r : lat.rows) {
        std::string line = run;
        for (const auto& f : r) line += "," + f;
        latency_lines.push_back(line);
      }
    }
  }
  if (rows.empty()) throw ConfigError("runs contain no evaluation rows");

  std::map<std::string, std::int64_t> final_update;
  for (const auto& r : rows) final_update[r.run] = std::max(final_update[r.run], r.update);

  {
    auto os = open_out(out_dir / "throughput_by_n.csv");
    os << "run,seed,sie_enabled,update,ue_count,throughput_mean,throughput_std\n";
    for (const auto& r : rows) {
      if (r.update != final_update[r.run]) continue;
      os << r.run << ',' << r.seed << ',' << (r.sie ? "true" : "false") << ',' << r.update << ','
         << r.n << ',' << fmt6(r.thr) << ',' << fmt6(r.thr_std) << '\n';
    }
  }
  {
    auto os = open_out(out_dir / "reward_curve.csv");
    os << "run,seed,update,ue_count,reward_mean,throughput_mean\n";
    for (const auto& r : rows) {
      os << r.run << ',' << r.seed << ',' << r.update << ',' << r.n << ',' << fmt6(r.reward) << ','
         << fmt6(r.thr) << '\n';
    }
  }
  if (!latency_lines.empty()) {
    auto os = open_out(out_dir / "latency.csv");
    os << "run,policy,samples,mean_us,p50_us,p95_us\n";
    for (const auto& l : latency_lines) os << l << '\n';
  }

  auto os = open_out(out_dir / "summary.txt");
  os << "runs: " << run_dirs.size() << "\n\nfinal throughput per run\n";
  std::map<std::pair<bool, int>, std::vector<double>> groups;
  for (const auto& r : rows) {
    if (r.update != final_update[r.run]) continue;
    os << "  " << r.run << " seed=" << r.seed << " sie=" << (r.sie ? "on" : "off") << " N=" << r.n
       << " update=" << r.update << " S=" << fmt6(r.thr) << " +- " << fmt6(r.thr_std) << '\n';
    groups[{r.sie, r.n}].push_back(r.thr);
  }
  std::set<int> ns;
  for (const auto& [k, v] : groups) ns.insert(k.second);
  bool header = false;
  for (int n : ns) {
    const auto on = groups.find({true, n});
    const auto off = groups.find({false, n});
    if (on == groups.end() || off == groups.end()) continue;
    if (!header) {
      os << "\nSIE ablation (mean final throughput over runs)\n";
      header = true;
    }
    auto mean = [](const std::vector<double>& v) {
      return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    const double a = mean(on->second), b = mean(off->second);
    os << "  N=" << n << " with=" << fmt6(a) << " without=" << fmt6(b) << " delta=" << fmt6(a - b);
    if (a > 0.0) os << " relative_reduction=" << fmt6(100.0 * (a - b) / a) << "%";
    os << '\n';
  }
}

}  // namespace macforge::harness

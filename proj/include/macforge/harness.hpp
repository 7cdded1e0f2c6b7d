#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "macforge/agents.hpp"
#include "macforge/checkpoint.hpp"
#include "macforge/config.hpp"
#include "macforge/ppo.hpp"

namespace macforge::harness {

// "human", "nocomm", "learned:<checkpoint>", or "bridge" (uses
// harness.bridge_command with the configured vocabulary).
struct PolicySpec {
  enum class Kind { kHuman, kNoComm, kLearned, kBridge };
  Kind kind = Kind::kHuman;
  std::filesystem::path checkpoint;
  std::string text;
};
PolicySpec parse_policy_spec(const std::string& text);  // throws ConfigError

// Owns everything a policy needs to stay alive.
struct PolicyHandle {
  std::unique_ptr<checkpoint::LoadedPolicy> loaded;
  std::unique_ptr<semantics::SemanticMapper> mapper;
  std::shared_ptr<agents::CandidateSource> source;
  std::unique_ptr<agents::DecisionMaker> policy;
  ExperimentConfig config;  // checkpoint config for learned policies
};
PolicyHandle make_policy(const PolicySpec& spec, const ExperimentConfig& config, bool greedy);

struct LatencyStats {
  std::int64_t samples = 0;
  double mean_us = 0.0;
  double p50_us = 0.0;
  double p95_us = 0.0;
};
LatencyStats summarize_latency(std::vector<double> samples_us);

struct PerNReport {
  int ue_count = 0;
  int episodes = 0;
  double throughput_mean = 0.0;
  double throughput_std = 0.0;
  double collision_rate = 0.0;    // collided slots / T
  double buffer_occupancy = 0.0;  // mean dPDUs per active UE after each slot
  double reward_mean = 0.0;       // undiscounted episode sum
  std::vector<double> throughputs;
};

struct EvalReport {
  std::string policy;
  std::vector<PerNReport> per_n;
  LatencyStats latency;  // per agent decision, amortized over act() calls
  std::int64_t decisions = 0;
  std::int64_t invalid = 0;
  double valid_answer_pct = 100.0;
};

// Runs `episodes` episodes at each fixed N. Episode k at N is seeded from
// (seed, N, k), so the report is a function of its inputs. With
// `archive_dir`, each episode's event log is written as
// n<N>_ep<k>.jsonl next to episodes.csv listing the reported throughput.
EvalReport run_eval(agents::DecisionMaker& policy, const EnvConfig& env,
                    const std::vector<int>& ue_counts, int episodes, std::uint64_t seed,
                    const std::optional<std::filesystem::path>& archive_dir = std::nullopt);

// Single-agent decision latency: prompt build, scoring, softmax and sampling,
// timed per decision while the policy drives an environment. The scoring
// cache is bypassed.
LatencyStats measure_latency(agents::CandidateSource& source, const semantics::SemanticMapper& mapper,
                             const ExperimentConfig& config, int samples, int warmup,
                             std::uint64_t seed);

struct TrainOptions {
  std::filesystem::path out_dir = "runs";
  std::string run_name;  // default: <UTC timestamp>_seed<seed>
  std::optional<std::filesystem::path> resume;
  bool quiet = true;
};

struct TrainResult {
  std::filesystem::path run_dir;
  std::int64_t final_update = 0;
  std::vector<ppo::UpdateStats> updates;
  std::vector<std::pair<std::int64_t, EvalReport>> evals;
};

// Writes manifest.json, train.csv (one row per update and PPO epoch),
// eval.csv (one row per evaluation update and N) and checkpoints under
// <out_dir>/<run_name>.
TrainResult run_train(const ExperimentConfig& config, const TrainOptions& options);

// Reads eval.csv and manifest.json from each run and writes
// throughput_by_n.csv, reward_curve.csv, latency.csv (when runs have one)
// and summary.txt into `out_dir`. Output depends only on the run contents.
void emit_report(const std::vector<std::filesystem::path>& run_dirs,
                 const std::filesystem::path& out_dir);

void write_latency_csv(const std::filesystem::path& path, const std::string& policy,
                       const LatencyStats& stats);
void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);

std::string version();

}  // namespace macforge::harness

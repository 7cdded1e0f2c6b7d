// macforge command line: train, eval, baseline, latency, report, sweep.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "macforge/error.hpp"
#include "macforge/harness.hpp"

namespace fs = std::filesystem;
using namespace macforge;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
  std::string out_dir = "runs";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value config file");
  cmd->add_option("--set", c.overrides, "override one entry, e.g. --set env.tbler=0");
  cmd->add_option("--seed", c.seed, "experiment seed");
  cmd->add_option("--out-dir", c.out_dir, "output directory");
}

ExperimentConfig build_config(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config_file(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed >= 0) cfg.seed = static_cast<std::uint64_t>(c.seed);
  cfg.validate();
  return cfg;
}

void print_report(const harness::EvalReport& r) {
  std::printf("policy %s  valid answers %.2f%%  latency mean %.2f us p95 %.2f us\n", r.policy.c_str(),
              r.valid_answer_pct, r.latency.mean_us, r.latency.p95_us);
  std::printf("%4s %8s %10s %10s %10s %10s %10s\n", "N", "episodes", "S_mean", "S_std", "coll", "buffer",
              "reward");
  for (const auto& n : r.per_n) {
    std::printf("%4d %8d %10.4f %10.4f %10.4f %10.4f %10.4f\n", n.ue_count, n.episodes, n.throughput_mean,
                n.throughput_std, n.collision_rate, n.buffer_occupancy, n.reward_mean);
  }
}

std::vector<int> counts_or_default(const std::string& text, const ExperimentConfig& cfg) {
  if (!text.empty()) return parse_int_list(text);
  return cfg.harness.eval_ue_counts.empty() ? cfg.env.ue_count_range : cfg.harness.eval_ue_counts;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"macforge: emergent MAC signaling with token-scored policies"};
  app.set_version_flag("--version", harness::version());
  app.require_subcommand(1);

  Common train_c, eval_c, base_c, lat_c, sweep_c;
  std::string run_name, resume;
  bool verbose = false;
  auto* train = app.add_subcommand("train", "train a policy with PPO");
  add_common(train, train_c);
  train->add_option("--run-name", run_name, "run directory name (default: timestamp + seed)");
  train->add_option("--resume", resume, "checkpoint to continue from");
  train->add_flag("--verbose", verbose, "print evaluation progress");

  std::string eval_policy = "human", eval_counts, archive;
  int eval_episodes = -1;
  bool stochastic = false;
  auto* eval = app.add_subcommand("eval", "evaluate a policy at fixed N");
  add_common(eval, eval_c);
  eval->add_option("--policy", eval_policy, "human | nocomm | learned:<ckpt> | bridge");
  eval->add_option("--episodes", eval_episodes, "episodes per N");
  eval->add_option("--ue-counts", eval_counts, "comma-separated N values");
  eval->add_option("--archive", archive, "directory for per-episode event logs");
  eval->add_flag("--stochastic", stochastic, "sample instead of argmax");

  std::string base_counts;
  int base_episodes = -1;
  auto* baseline = app.add_subcommand("baseline", "evaluate both hand-written baselines");
  add_common(baseline, base_c);
  baseline->add_option("--episodes", base_episodes, "episodes per N");
  baseline->add_option("--ue-counts", base_counts, "comma-separated N values");

  std::string lat_policy = "scratch";
  int lat_samples = -1, lat_warmup = -1;
  auto* latency = app.add_subcommand("latency", "per-decision latency of a token policy");
  add_common(latency, lat_c);
  latency->add_option("--policy", lat_policy, "scratch (untrained) | learned:<ckpt> | bridge");
  latency->add_option("--samples", lat_samples, "measured decisions");
  latency->add_option("--warmup", lat_warmup, "discarded decisions");

  std::vector<std::string> report_runs;
  std::string report_out = "report";
  auto* report = app.add_subcommand("report", "tables and curves from run directories");
  report->add_option("runs", report_runs, "run directories")->required();
  report->add_option("--out-dir", report_out, "output directory");

  std::string sweep_seeds = "1,2,3,4,5", sweep_counts, sweep_sie = "both";
  auto* sweep = app.add_subcommand("sweep", "train over seeds, N values and the SIE switch");
  add_common(sweep, sweep_c);
  sweep->add_option("--seeds", sweep_seeds, "comma-separated seeds");
  sweep->add_option("--ue-counts", sweep_counts, "train one run per N (default: the configured range)");
  sweep->add_option("--sie", sweep_sie, "on | off | both")->check(CLI::IsMember({"on", "off", "both"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) {
      const auto cfg = build_config(train_c);
      harness::TrainOptions opt;
      opt.out_dir = train_c.out_dir;
      opt.run_name = run_name;
      if (!resume.empty()) opt.resume = fs::path(resume);
      opt.quiet = !verbose;
      const auto r = harness::run_train(cfg, opt);
      std::printf("run %s finished at update %lld\n", r.run_dir.c_str(), static_cast<long long>(r.final_update));
      if (!r.evals.empty()) print_report(r.evals.back().second);
    } else if (*eval) {
      const auto cfg = build_config(eval_c);
      auto h = harness::make_policy(harness::parse_policy_spec(eval_policy), cfg, !stochastic);
      const int episodes = eval_episodes >= 0 ? eval_episodes : cfg.harness.eval_episodes;
      std::optional<fs::path> arch;
      if (!archive.empty()) arch = fs::path(archive);
      // Learned policies evaluate in the environment they were trained for.
      auto env = h.config.env;
      if (h.loaded) env.tbler = cfg.env.tbler;
      const auto r = harness::run_eval(*h.policy, env, counts_or_default(eval_counts, h.config), episodes,
                                       cfg.seed, arch);
      harness::write_eval_csv(fs::path(eval_c.out_dir) / "eval.csv", r);
      print_report(r);
    } else if (*baseline) {
      const auto cfg = build_config(base_c);
      const int episodes = base_episodes >= 0 ? base_episodes : cfg.harness.eval_episodes;
      for (const char* name : {"human", "nocomm"}) {
        auto h = harness::make_policy(harness::parse_policy_spec(name), cfg, true);
        const auto r = harness::run_eval(*h.policy, cfg.env, counts_or_default(base_counts, cfg), episodes,
                                         cfg.seed);
        harness::write_eval_csv(fs::path(base_c.out_dir) / (std::string("baseline_") + name + ".csv"), r);
        print_report(r);
      }
    } else if (*latency) {
      const auto cfg = build_config(lat_c);
      const int samples = lat_samples >= 0 ? lat_samples : cfg.harness.latency_samples;
      const int warmup = lat_warmup >= 0 ? lat_warmup : cfg.harness.latency_warmup;
      harness::LatencyStats s;
      if (lat_policy == "scratch") {
        semantics::SemanticMapper mapper(cfg.env);
        model::SequenceScorer actor(cfg.model, static_cast<int>(mapper.vocabulary().size()));
        actor.init(cfg.seed);
        agents::ScratchSource src(actor, false);
        s = harness::measure_latency(src, mapper, cfg, samples, warmup, cfg.seed);
      } else {
        const auto spec = harness::parse_policy_spec(lat_policy);
        if (spec.kind == harness::PolicySpec::Kind::kLearned) {
          auto loaded = checkpoint::load_policy(spec.checkpoint);
          agents::ScratchSource src(loaded.actor, false);
          s = harness::measure_latency(src, loaded.mapper, loaded.config, samples, warmup, cfg.seed);
        } else if (spec.kind == harness::PolicySpec::Kind::kBridge) {
          auto h = harness::make_policy(spec, cfg, true);
          s = harness::measure_latency(*h.source, *h.mapper, cfg, samples, warmup, cfg.seed);
        } else {
          throw ConfigError("latency applies to token policies (scratch, learned:<ckpt>, bridge)");
        }
      }
      harness::write_latency_csv(fs::path(lat_c.out_dir) / "latency.csv", lat_policy, s);
      std::printf("policy %s samples %lld mean %.2f us p50 %.2f us p95 %.2f us\n", lat_policy.c_str(),
                  static_cast<long long>(s.samples), s.mean_us, s.p50_us, s.p95_us);
    } else if (*report) {
      std::vector<fs::path> dirs(report_runs.begin(), report_runs.end());
      harness::emit_report(dirs, report_out);
      std::printf("report written to %s\n", report_out.c_str());
    } else if (*sweep) {
      const auto base = build_config(sweep_c);
      std::vector<std::vector<int>> ranges;
      if (sweep_counts.empty()) {
        ranges.push_back(base.env.ue_count_range);
      } else {
        for (int n : parse_int_list(sweep_counts)) ranges.push_back({n});
      }
      std::vector<bool> sies;
      if (sweep_sie != "off") sies.push_back(true);
      if (sweep_sie != "on") sies.push_back(false);
      std::vector<fs::path> dirs;
      for (const auto& range : ranges) {
        for (bool sie : sies) {
          for (int seed : parse_int_list(sweep_seeds)) {
            auto cfg = base;
            cfg.env.ue_count_range = range;
            cfg.prompt.sie_enabled = sie;
            cfg.seed = static_cast<std::uint64_t>(seed);
            std::string name = "n";
            for (int n : range) name += std::to_string(n);
            name += std::string(sie ? "_sie" : "_nosie") + "_seed" + std::to_string(seed);
            harness::TrainOptions opt;
            opt.out_dir = sweep_c.out_dir;
            opt.run_name = name;
            const auto r = harness::run_train(cfg, opt);
            std::printf("run %s done\n", r.run_dir.c_str());
            dirs.push_back(r.run_dir);
          }
        }
      }
      harness::emit_report(dirs, fs::path(sweep_c.out_dir) / "report");
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(ErrorCategory::kRuntime);
  }
  return 0;
}

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "macforge/baselines.hpp"
#include "macforge/error.hpp"
#include "macforge/event_log.hpp"
#include "macforge/harness.hpp"

using namespace macforge;
using namespace macforge::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("macforge_harness_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> out;
  std::ifstream f(p);
  std::string line;
  while (std::getline(f, line)) {
    std::vector<std::string> row;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) row.push_back(cell);
    out.push_back(row);
  }
  return out;
}

// Distinct slots holding a first-time reception, over the episode length.
double oracle_throughput(const std::vector<env::Event>& events, int T) {
  std::set<int> slots;
  std::set<std::uint64_t> seen;
  for (const auto& e : events) {
    if (e.type == env::EventType::kDeliver && seen.insert(e.pdu).second) slots.insert(e.slot);
  }
  return static_cast<double>(slots.size()) / T;
}

ExperimentConfig tiny_train() {
  ExperimentConfig c;
  c.env.ue_count_range = {2};
  c.model = {8, 8, 1, 0.2};
  c.critic = {8, 8, 1, 8, 0.2};
  c.ppo.rollout_episodes_per_update = 2;
  c.ppo.minibatch_size = 32;
  c.ppo.epochs_per_batch = 1;
  c.ppo.total_updates = 20;
  c.harness.eval_every = 10;
  c.harness.eval_episodes = 3;
  c.harness.checkpoint_every = 10;
  c.seed = 4;
  return c;
}

}  // namespace

TEST(Throughput, HandComputedEpisodes) {
  using env::Event;
  using env::EventType;
  // Two first receptions in four slots; the redelivery does not count.
  const std::vector<Event> ev = {{0, EventType::kDeliver, 1, 1, false},
                                 {1, EventType::kRedeliver, 1, 1, true},
                                 {3, EventType::kDeliver, 2, 2, false}};
  EXPECT_DOUBLE_EQ(env::throughput(ev, 4), 0.5);
  EXPECT_DOUBLE_EQ(env::throughput({}, 24), 0.0);
  std::vector<Event> full;
  for (int t = 0; t < 24; ++t) full.push_back({t, EventType::kDeliver, 1, static_cast<std::uint64_t>(t + 1), false});
  EXPECT_DOUBLE_EQ(env::throughput(full, 24), 1.0);
}

TEST(Eval, RejectsEmptyRequests) {
  baselines::HumanCrafted h(EnvConfig{});
  EXPECT_THROW(run_eval(h, EnvConfig{}, {2}, 0, 1), ContractError);
  EXPECT_THROW(run_eval(h, EnvConfig{}, {}, 5, 1), ContractError);
}

TEST(Eval, ReportIsAFunctionOfItsInputs) {
  ExperimentConfig c;
  auto a = make_policy(parse_policy_spec("nocomm"), c, true);
  auto b = make_policy(parse_policy_spec("nocomm"), c, true);
  const auto ra = run_eval(*a.policy, c.env, {2, 4}, 20, 11);
  const auto rb = run_eval(*b.policy, c.env, {2, 4}, 20, 11);
  ASSERT_EQ(ra.per_n.size(), 2u);
  for (std::size_t i = 0; i < ra.per_n.size(); ++i) {
    EXPECT_EQ(ra.per_n[i].throughputs, rb.per_n[i].throughputs);
    EXPECT_EQ(ra.per_n[i].reward_mean, rb.per_n[i].reward_mean);
  }
  const auto rc = run_eval(*a.policy, c.env, {2, 4}, 20, 12);
  EXPECT_NE(ra.per_n[0].throughputs, rc.per_n[0].throughputs);
}

TEST(Eval, HumanCraftedNeverCollidesOnCleanChannel) {
  EnvConfig env;
  env.tbler = 0.0;
  baselines::HumanCrafted h(env);
  const auto r = run_eval(h, env, {2}, 200, 3);
  EXPECT_EQ(r.per_n[0].collision_rate, 0.0);
  EXPECT_GT(r.per_n[0].throughput_mean, 0.0);
}

TEST(Eval, HumanCraftedBeatsNoCommAtFourUes) {
  ExperimentConfig c;
  auto h = make_policy(parse_policy_spec("human"), c, true);
  auto n = make_policy(parse_policy_spec("nocomm"), c, true);
  EXPECT_GT(run_eval(*h.policy, c.env, {4}, 300, 5).per_n[0].throughput_mean,
            run_eval(*n.policy, c.env, {4}, 300, 5).per_n[0].throughput_mean);
}

TEST(Eval, ArchivedEpisodesRecomputeToReportedThroughput) {
  const auto dir = scratch_dir("archive");
  ExperimentConfig c;
  auto h = make_policy(parse_policy_spec("nocomm"), c, true);
  const auto r = run_eval(*h.policy, c.env, {2, 5}, 50, 21, dir);
  const auto rows = csv_rows(dir / "episodes.csv");
  ASSERT_EQ(rows.size(), 101u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"ue_count", "episode", "seed", "file", "throughput"}));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::ifstream f(dir / rows[i][3]);
    const auto events = env::read_jsonl(f);
    EXPECT_NEAR(oracle_throughput(events, c.env.episode_length), std::stod(rows[i][4]), 1e-12) << rows[i][3];
  }
  EXPECT_DOUBLE_EQ(std::stod(rows[1][4]), r.per_n[0].throughputs[0]);
}

TEST(Latency, ExactSampleCountAndOrderedPercentiles) {
  ExperimentConfig c;
  c.model = {8, 8, 1, 0.2};
  semantics::SemanticMapper m(c.env);
  model::SequenceScorer actor(c.model, static_cast<int>(m.vocabulary().size()));
  actor.init(1);
  agents::ScratchSource src(actor, false);
  const auto s = measure_latency(src, m, c, 1000, 50, 1);
  EXPECT_EQ(s.samples, 1000);
  EXPECT_GT(s.mean_us, 0.0);
  EXPECT_LE(s.p50_us, s.p95_us);
  EXPECT_THROW(measure_latency(src, m, c, 0, 0, 1), ContractError);
}

TEST(Latency, NearestRankPercentiles) {
  std::vector<double> v;
  for (int i = 100; i >= 1; --i) v.push_back(i);
  const auto s = summarize_latency(v);
  EXPECT_EQ(s.samples, 100);
  EXPECT_DOUBLE_EQ(s.p50_us, 50.0);
  EXPECT_DOUBLE_EQ(s.p95_us, 95.0);
  EXPECT_DOUBLE_EQ(s.mean_us, 50.5);
}

TEST(PolicySpecs, Parse) {
  EXPECT_EQ(parse_policy_spec("human").kind, PolicySpec::Kind::kHuman);
  EXPECT_EQ(parse_policy_spec("nocomm").kind, PolicySpec::Kind::kNoComm);
  const auto l = parse_policy_spec("learned:/x/y.bin");
  EXPECT_EQ(l.kind, PolicySpec::Kind::kLearned);
  EXPECT_EQ(l.checkpoint, fs::path("/x/y.bin"));
  EXPECT_THROW(parse_policy_spec("learned:"), ConfigError);
  EXPECT_THROW(parse_policy_spec("oracle"), ConfigError);
  EXPECT_THROW(make_policy(parse_policy_spec("bridge"), ExperimentConfig{}, true), ConfigError);
}

class TrainRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = scratch_dir("train");
    TrainOptions o;
    o.out_dir = root_;
    o.run_name = "a";
    first_ = new TrainResult(run_train(tiny_train(), o));
  }
  static void TearDownTestSuite() {
    delete first_;
    first_ = nullptr;
  }
  static fs::path root_;
  static TrainResult* first_;
};
fs::path TrainRun::root_;
TrainResult* TrainRun::first_ = nullptr;

TEST_F(TrainRun, WritesArtifacts) {
  const auto d = first_->run_dir;
  EXPECT_EQ(first_->final_update, 20);
  for (const char* f : {"manifest.json", "config.txt", "vocab.txt", "train.csv", "eval.csv",
                        "checkpoints/update_10.bin", "checkpoints/update_20.bin", "checkpoints/latest.bin"}) {
    EXPECT_TRUE(fs::exists(d / f)) << f;
  }
  const auto eval = csv_rows(d / "eval.csv");
  ASSERT_EQ(eval.size(), 3u);
  EXPECT_EQ(eval[1][0], "10");
  EXPECT_EQ(eval[2][0], "20");
  EXPECT_EQ(eval[1][1], "4");
  const auto train = csv_rows(d / "train.csv");
  EXPECT_EQ(train.size(), 21u);
  EXPECT_EQ(train[0].size(), 11u);
  EXPECT_EQ(parse_config_text(slurp(d / "config.txt")).to_text(), tiny_train().to_text());
}

TEST_F(TrainRun, FixedSeedReproducesEverythingButWallclock) {
  TrainOptions o;
  o.out_dir = root_;
  o.run_name = "b";
  const auto second = run_train(tiny_train(), o);
  auto strip = [](const fs::path& p) {
    auto rows = csv_rows(p);
    for (auto& r : rows) r.pop_back();
    return rows;
  };
  EXPECT_EQ(strip(first_->run_dir / "train.csv"), strip(second.run_dir / "train.csv"));
  EXPECT_EQ(slurp(first_->run_dir / "eval.csv"), slurp(second.run_dir / "eval.csv"));
}

TEST_F(TrainRun, ResumeContinuesNumbering) {
  auto cfg = tiny_train();
  cfg.ppo.total_updates = 30;
  TrainOptions o;
  o.out_dir = root_;
  o.run_name = "resumed";
  o.resume = first_->run_dir / "checkpoints" / "latest.bin";
  const auto r = run_train(cfg, o);
  EXPECT_EQ(r.final_update, 30);
  ASSERT_EQ(r.updates.size(), 10u);
  EXPECT_EQ(r.updates.front().update, 21);
  const auto eval = csv_rows(r.run_dir / "eval.csv");
  ASSERT_EQ(eval.size(), 2u);
  EXPECT_EQ(eval[1][0], "30");
}

TEST_F(TrainRun, ResumeRejectsOtherVocabulary) {
  auto cfg = tiny_train();
  cfg.env.buffer_capacity = 7;
  TrainOptions o;
  o.out_dir = root_;
  o.run_name = "bad";
  o.resume = first_->run_dir / "checkpoints" / "latest.bin";
  EXPECT_THROW(run_train(cfg, o), CheckpointError);
}

TEST_F(TrainRun, ReportIsIdempotentAndSeedTagged) {
  auto off = tiny_train();
  off.prompt.sie_enabled = false;
  off.ppo.total_updates = 10;
  TrainOptions o;
  o.out_dir = root_;
  o.run_name = "nosie";
  const auto r2 = run_train(off, o);
  const auto out1 = root_ / "rep1", out2 = root_ / "rep2";
  emit_report({first_->run_dir, r2.run_dir}, out1);
  emit_report({first_->run_dir, r2.run_dir}, out2);
  for (const char* f : {"throughput_by_n.csv", "reward_curve.csv", "summary.txt"}) {
    EXPECT_EQ(slurp(out1 / f), slurp(out2 / f)) << f;
  }
  const auto t = csv_rows(out1 / "throughput_by_n.csv");
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t[1][0], "a");
  EXPECT_EQ(t[1][1], "4");
  EXPECT_EQ(t[1][3], "20");
  EXPECT_EQ(t[2][2], "false");
  EXPECT_NE(slurp(out1 / "summary.txt").find("delta="), std::string::npos);
  EXPECT_THROW(emit_report({root_ / "missing"}, root_ / "rep3"), ConfigError);
  EXPECT_THROW(emit_report({}, root_ / "rep3"), ConfigError);
}

TEST_F(TrainRun, LearnedPolicyLoadsFromCheckpoint) {
  auto h = make_policy(parse_policy_spec("learned:" + (first_->run_dir / "checkpoints" / "latest.bin").string()),
                       ExperimentConfig{}, true);
  ASSERT_TRUE(h.loaded);
  EXPECT_EQ(h.config.env.ue_count_range, std::vector<int>{2});
  const auto r = run_eval(*h.policy, h.config.env, {2}, 3, mix_seed(4, 0xe7a1ULL));
  // Same greedy policy, same evaluation seed as the in-run evaluation at update 20.
  EXPECT_DOUBLE_EQ(r.per_n[0].throughput_mean, first_->evals.back().second.per_n[0].throughput_mean);
}

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MACFORGE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

}  // namespace

TEST(Cli, ExitCodesFollowErrorCategories) {
  const auto d = scratch_dir("cli");
  EXPECT_EQ(run_cli("--version"), 0);
  EXPECT_EQ(run_cli("baseline --episodes 5 --out-dir " + d.string()), 0);
  EXPECT_TRUE(fs::exists(d / "baseline_human.csv"));
  EXPECT_TRUE(fs::exists(d / "baseline_nocomm.csv"));
  EXPECT_EQ(run_cli("eval --policy human --set env.nope=1 --out-dir " + d.string()), 2);
  EXPECT_EQ(run_cli("eval --policy human --episodes 0 --out-dir " + d.string()), 4);
  EXPECT_EQ(run_cli("eval --policy learned:" + (d / "none.bin").string() + " --out-dir " + d.string()), 6);
  EXPECT_EQ(run_cli("report " + (d / "none").string() + " --out-dir " + d.string()), 2);
  EXPECT_EQ(run_cli("latency --policy scratch --samples 50 --warmup 5 --out-dir " + d.string()), 0);
  EXPECT_TRUE(fs::exists(d / "latency.csv"));
  EXPECT_EQ(run_cli("eval --policy bridge --set \"harness.bridge_command=" + std::string(FAKE_BRIDGE_PATH) +
                    " badproto\" --episodes 1 --out-dir " + d.string()),
            7);
}

#include "macforge/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "macforge/error.hpp"

namespace macforge::checkpoint {
namespace {

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw CheckpointError("checkpoint truncated");
  return v;
}

void put_doubles(std::ostream& os, const std::vector<double>& xs) {
  put<std::uint64_t>(os, xs.size());
  os.write(reinterpret_cast<const char*>(xs.data()),
           static_cast<std::streamsize>(xs.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  if (n > (std::uint64_t{1} << 32)) throw CheckpointError("implausible parameter count");
  std::vector<double> xs(n);
  if (!is.read(reinterpret_cast<char*>(xs.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
    throw CheckpointError("checkpoint truncated");
  }
  return xs;
}

}  // namespace

void save(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot write " + tmp);
    os.write(kMagic, sizeof(kMagic));
    put(os, kVersion);
    put(os, ckpt.vocab_hash);
    put(os, ckpt.update);
    put<std::uint64_t>(os, ckpt.config_text.size());
    os.write(ckpt.config_text.data(), static_cast<std::streamsize>(ckpt.config_text.size()));
    put_doubles(os, ckpt.actor_params);
    put_doubles(os, ckpt.critic_params);
    if (!os) throw CheckpointError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load(const std::filesystem::path& path, std::optional<std::uint64_t> expected_vocab_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint: " + path.string());
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.vocab_hash = get<std::uint64_t>(is);
  if (expected_vocab_hash && *expected_vocab_hash != c.vocab_hash) {
    throw CheckpointError("vocabulary hash mismatch");
  }
  c.update = get<std::int64_t>(is);
  const auto len = get<std::uint64_t>(is);
  if (len > (std::uint64_t{1} << 24)) throw CheckpointError("implausible config length");
  c.config_text.resize(len);
  if (!is.read(c.config_text.data(), static_cast<std::streamsize>(len))) {
    throw CheckpointError("checkpoint truncated");
  }
  c.actor_params = get_doubles(is);
  c.critic_params = get_doubles(is);
  return c;
}

LoadedPolicy load_policy(const std::filesystem::path& path) {
  auto c = load(path);
  ExperimentConfig config;
  try {
    config = parse_config_text(c.config_text);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("stored config unreadable: ") + e.what());
  }
  auto vocab = semantics::Vocabulary::for_config(config.env);
  if (vocab.hash() != c.vocab_hash) throw CheckpointError("vocabulary hash mismatch");
  const int vsize = static_cast<int>(vocab.size());
  LoadedPolicy p{config, semantics::SemanticMapper(config.env, vocab),
                 model::SequenceScorer(config.model, vsize), model::Critic(config.critic, vsize),
                 c.update};
  if (p.actor.param_count() != c.actor_params.size() ||
      p.critic.param_count() != c.critic_params.size()) {
    throw CheckpointError("parameter count does not match the stored model config");
  }
  std::copy(c.actor_params.begin(), c.actor_params.end(), p.actor.params().begin());
  std::copy(c.critic_params.begin(), c.critic_params.end(), p.critic.params().begin());
  return p;
}

Checkpoint capture(const ExperimentConfig& config, const semantics::Vocabulary& vocab,
                   const model::SequenceScorer& actor, const model::Critic& critic,
                   std::int64_t update) {
  Checkpoint c;
  c.config_text = config.to_text();
  c.vocab_hash = vocab.hash();
  c.update = update;
  c.actor_params.assign(actor.params().begin(), actor.params().end());
  c.critic_params.assign(critic.params().begin(), critic.params().end());
  return c;
}

}  // namespace macforge::checkpoint

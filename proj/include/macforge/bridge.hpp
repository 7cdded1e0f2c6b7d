#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <sys/types.h>

#include "macforge/agents.hpp"
#include "macforge/semantics.hpp"

namespace macforge::bridge {

inline constexpr const char* kProtocol = "macforge-bridge/1";

// Wire format: one JSON object per line in each direction. The bridge speaks
// first with {"protocol": ..., "model": ...}. Requests carry
// {"id", "mode": "score"|"value", "prompt", "candidates"}; replies echo the id
// with either "logprobs" (score) or "value", plus "model" and "elapsed_us",
// or carry "error".
struct Handshake {
  std::string protocol;
  std::string model;
};

struct Request {
  std::int64_t id = 0;
  std::string mode = "score";
  std::string prompt;
  std::vector<std::string> candidates;
};

struct Response {
  std::int64_t id = 0;
  std::vector<double> logprobs;
  std::optional<double> value;
  std::string model;
  std::int64_t elapsed_us = 0;
  std::optional<std::string> error;
};

std::string encode_handshake(const Handshake& h);
Handshake decode_handshake(const std::string& line);  // throws BridgeError
std::string encode_request(const Request& r);
Request decode_request(const std::string& line);
std::string encode_response(const Response& r);
Response decode_response(const std::string& line);

struct BridgeOptions {
  std::string command;  // run through /bin/sh -c
  int timeout_ms = 10000;
};

// Child process speaking the line protocol over its stdin/stdout. Transport
// failures (spawn, timeout, exit, bad handshake, id mismatch) throw
// BridgeError; an "error" reply is returned to the caller.
class BridgeClient {
 public:
  explicit BridgeClient(BridgeOptions options);
  ~BridgeClient();
  BridgeClient(const BridgeClient&) = delete;
  BridgeClient& operator=(const BridgeClient&) = delete;

  const std::string& model() const { return handshake_.model; }
  Response call(Request request);
  Response score(const std::string& prompt, const std::vector<std::string>& candidates);
  Response value(const std::string& prompt);
  void close();

 private:
  void send_line(const std::string& line);
  std::string read_line();

  BridgeOptions options_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  Handshake handshake_;
  std::int64_t next_id_ = 1;
};

// CandidateSource backed by a bridge. Error replies and malformed answers
// (wrong length, non-finite entries) yield nullopt and count as invalid.
class BridgeSource : public agents::CandidateSource {
 public:
  BridgeSource(BridgeOptions options, const semantics::Vocabulary& vocab);

  std::optional<std::vector<double>> score(
      const semantics::Prompt& prompt,
      const std::vector<semantics::LinguisticAction>& candidates) override;

  BridgeClient& client() { return client_; }
  std::int64_t invalid_answers() const { return invalid_; }

 private:
  BridgeClient client_;
  const semantics::Vocabulary& vocab_;
  std::int64_t invalid_ = 0;
};

}  // namespace macforge::bridge

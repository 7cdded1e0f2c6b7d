#include "macforge/bridge.hpp"

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "macforge/error.hpp"

namespace macforge::bridge {

using nlohmann::json;

namespace {

json parse_object(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw BridgeError(std::string("malformed bridge line: ") + e.what());
  }
  if (!j.is_object()) throw BridgeError("bridge line is not a JSON object");
  return j;
}

}  // namespace

std::string encode_handshake(const Handshake& h) {
  return nlohmann::ordered_json{{"protocol", h.protocol}, {"model", h.model}}.dump();
}

Handshake decode_handshake(const std::string& line) {
  const auto j = parse_object(line);
  if (!j.contains("protocol") || !j["protocol"].is_string()) throw BridgeError("handshake without protocol");
  Handshake h;
  h.protocol = j["protocol"].get<std::string>();
  if (h.protocol != kProtocol) throw BridgeError("unsupported bridge protocol '" + h.protocol + "'");
  h.model = j.value("model", std::string("unknown"));
  return h;
}

std::string encode_request(const Request& r) {
  nlohmann::ordered_json j{{"id", r.id}, {"mode", r.mode}, {"prompt", r.prompt}};
  if (r.mode == "score") j["candidates"] = r.candidates;
  return j.dump();
}

Request decode_request(const std::string& line) {
  const auto j = parse_object(line);
  try {
    Request r;
    r.id = j.at("id").get<std::int64_t>();
    r.mode = j.at("mode").get<std::string>();
    r.prompt = j.at("prompt").get<std::string>();
    if (r.mode == "score") r.candidates = j.at("candidates").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw BridgeError(std::string("malformed request: ") + e.what());
  }
}

std::string encode_response(const Response& r) {
  nlohmann::ordered_json j{{"id", r.id}};
  if (r.error) {
    j["error"] = *r.error;
  } else {
    if (r.value) j["value"] = *r.value;
    else j["logprobs"] = r.logprobs;
    j["model"] = r.model;
    j["elapsed_us"] = r.elapsed_us;
  }
  return j.dump();
}

Response decode_response(const std::string& line) {
  const auto j = parse_object(line);
  Response r;
  try {
    r.id = j.at("id").get<std::int64_t>();
    if (j.contains("error")) {
      r.error = j["error"].is_string() ? j["error"].get<std::string>() : j["error"].dump();
      return r;
    }
    if (j.contains("logprobs")) {
      for (const auto& v : j["logprobs"]) {
        // JSON has no infinities; null stands for -inf.
        r.logprobs.push_back(v.is_null() ? -INFINITY : v.get<double>());
      }
    } else if (j.contains("value")) {
      r.value = j["value"].get<double>();
    } else {
      throw BridgeError("response carries neither logprobs nor value");
    }
    r.model = j.value("model", std::string());
    r.elapsed_us = j.value("elapsed_us", std::int64_t{0});
  } catch (const json::exception& e) {
    throw BridgeError(std::string("malformed response: ") + e.what());
  }
  return r;
}

BridgeClient::BridgeClient(BridgeOptions options) : options_(std::move(options)) {
  if (options_.command.empty()) throw BridgeError("empty bridge command");
  std::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0) throw BridgeError("pipe failed");
  if (pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw BridgeError("pipe failed");
  }
  pid_ = fork();
  if (pid_ < 0) throw BridgeError("fork failed");
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", options_.command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  fcntl(to_child_, F_SETFD, FD_CLOEXEC);
  fcntl(from_child_, F_SETFD, FD_CLOEXEC);
  try {
    handshake_ = decode_handshake(read_line());
  } catch (...) {
    close();
    throw;
  }
}

BridgeClient::~BridgeClient() { close(); }

void BridgeClient::close() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    // Closing stdin asks the bridge to exit; give it a moment.
    for (int i = 0; i < 50; ++i) {
      if (waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      usleep(10000);
    }
    kill(pid_, SIGKILL);
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

void BridgeClient::send_line(const std::string& line) {
  if (to_child_ < 0) throw BridgeError("bridge is closed");
  std::string data = line + "\n";
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = ::write(to_child_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw BridgeError(std::string("bridge write failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::string BridgeClient::read_line() {
  if (from_child_ < 0) throw BridgeError("bridge is closed");
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      auto line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    pollfd p{from_child_, POLLIN, 0};
    const int rc = poll(&p, 1, options_.timeout_ms);
    if (rc == 0) throw BridgeError("bridge timed out");
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw BridgeError("poll failed");
    }
    char chunk[4096];
    const auto n = ::read(from_child_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw BridgeError("bridge read failed");
    }
    if (n == 0) throw BridgeError("bridge exited");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

Response BridgeClient::call(Request request) {
  request.id = next_id_++;
  send_line(encode_request(request));
  auto r = decode_response(read_line());
  if (r.id != request.id) throw BridgeError("bridge answered the wrong request id");
  return r;
}

Response BridgeClient::score(const std::string& prompt, const std::vector<std::string>& candidates) {
  return call({0, "score", prompt, candidates});
}

Response BridgeClient::value(const std::string& prompt) { return call({0, "value", prompt, {}}); }

BridgeSource::BridgeSource(BridgeOptions options, const semantics::Vocabulary& vocab)
    : client_(std::move(options)), vocab_(vocab) {}

std::optional<std::vector<double>> BridgeSource::score(
    const semantics::Prompt& prompt, const std::vector<semantics::LinguisticAction>& candidates) {
  std::vector<std::string> cands;
  cands.reserve(candidates.size());
  for (const auto& c : candidates) cands.push_back(vocab_.render(c.surface));
  const auto r = client_.score(vocab_.render(prompt.token_ids), cands);
  bool ok = !r.error && r.logprobs.size() == candidates.size();
  bool any_finite = false;
  if (ok) {
    for (double v : r.logprobs) {
      if (std::isnan(v) || v > 1e-9) ok = false;
      if (std::isfinite(v)) any_finite = true;
    }
  }
  if (!ok || !any_finite) {
    ++invalid_;
    return std::nullopt;
  }
  return r.logprobs;
}

}  // namespace macforge::bridge

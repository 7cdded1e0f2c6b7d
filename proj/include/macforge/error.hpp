#pragma once

#include <stdexcept>
#include <string>

namespace macforge {

// Exit-code category reported by the CLI for each error family.
enum class ErrorCategory : int {
  kConfig = 2,
  kState = 3,
  kContract = 4,
  kEncoding = 5,
  kCheckpoint = 6,
  kBridge = 7,
  kRuntime = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::kConfig, what) {}
};

// Acting on a finished episode, loading into the wrong state, etc.
class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(ErrorCategory::kState, what) {}
};

// Caller broke a precondition (malformed joint action, mismatched lengths).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorCategory::kContract, what) {}
};

// Observation/action/token cannot be mapped to or from the vocabulary.
class EncodingError : public Error {
 public:
  explicit EncodingError(const std::string& what) : Error(ErrorCategory::kEncoding, what) {}
};

class CheckpointError : public Error {
 public:
  explicit CheckpointError(const std::string& what) : Error(ErrorCategory::kCheckpoint, what) {}
};

class BridgeError : public Error {
 public:
  explicit BridgeError(const std::string& what) : Error(ErrorCategory::kBridge, what) {}
};

class RuntimeFault : public Error {
 public:
  explicit RuntimeFault(const std::string& what) : Error(ErrorCategory::kRuntime, what) {}
};

}  // namespace macforge

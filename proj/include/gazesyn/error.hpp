#pragma once

#include <stdexcept>
#include <string>

namespace gazesyn {

/// Single exception type for the library. `code` is a short stable token
/// (e.g. "sequence_too_short") so callers and the CLI can report failures
/// in a machine-parsable way; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

inline void require(bool condition, const char* code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace gazesyn

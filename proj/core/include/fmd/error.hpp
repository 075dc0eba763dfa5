#pragma once

#include <stdexcept>
#include <string>

namespace fmd {

/// Library error carrying a machine-parsable category string.
/// The CLI prints `error [<category>] <message>` on a single line and
/// exits with status 1; categories are stable and listed in the README.
class Error : public std::runtime_error {
public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const { return category_; }

private:
  std::string category_;
};

[[noreturn]] inline void fail(const std::string& category, const std::string& message) {
  throw Error(category, message);
}

inline void require(bool cond, const std::string& category, const std::string& message) {
  if (!cond) fail(category, message);
}

}  // namespace fmd

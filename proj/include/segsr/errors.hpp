#pragma once

#include <stdexcept>
#include <string>

namespace segsr {

// Two failure classes, matching the CLI exit-code contract:
// validation (bad input/config/preconditions) = 1, runtime = 2.
enum class errc { validation = 1, runtime = 2 };

class error : public std::runtime_error {
 public:
  error(errc kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  errc kind() const { return kind_; }

 private:
  errc kind_;
};

[[noreturn]] inline void fail_validation(const std::string& msg) {
  throw error(errc::validation, msg);
}

[[noreturn]] inline void fail_runtime(const std::string& msg) {
  throw error(errc::runtime, msg);
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail_validation(msg);
}

}  // namespace segsr

#pragma once

#include <stdexcept>
#include <string>

namespace zsar {

// Families map onto CLI exit codes (see exit_code()).
enum class ErrorKind { config, data, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

// Rethrows `e` as the same family with `prefix` prepended to the message.
[[noreturn]] inline void rethrow_with_context(const Error& e, const std::string& prefix) {
  const std::string msg = prefix + e.what();
  switch (e.kind()) {
    case ErrorKind::config: throw ConfigError(msg);
    case ErrorKind::data: throw DataError(msg);
    case ErrorKind::numeric: throw NumericError(msg);
  }
  throw Error(e.kind(), msg);
}

inline int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numeric: return 4;
  }
  return 1;
}

}  // namespace zsar

#pragma once
#include <stdexcept>
#include <string>

namespace sace {

enum class ErrorKind { InvalidArgument, Io, Parse, Validation, Runtime, Mismatch };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }
[[noreturn]] inline void fail(const std::string& msg) { throw Error(ErrorKind::Runtime, msg); }

}  // namespace sace

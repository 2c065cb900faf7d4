#pragma once

#include <stdexcept>
#include <string>

namespace imsvd {

// Error taxonomy used across the library. The CLI maps these to exit code 1;
// anything else escaping main is a bug.
enum class ErrorKind {
  kShape,      // operand dimensions incompatible
  kContract,   // precondition or invariant violated by the caller
  kNumeric,    // non-finite values or numerically invalid input
  kCapacity,   // request exceeds a hard built-in limit
  kFormat,     // malformed file or byte stream
  kIo,         // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

}  // namespace imsvd

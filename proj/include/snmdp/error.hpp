#pragma once

#include <stdexcept>
#include <string>

namespace snmdp {

// Exception hierarchy used throughout the core. The C API maps each kind onto
// an snmdp_status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid input: dimension mismatch, malformed config, out-of-range parameter.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A mathematical precondition of an analysis does not hold (reducible chain,
// singular system).
class AnalysisError : public Error {
 public:
  using Error::Error;
};

// Iterative procedure hit its iteration cap.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// Non-finite or otherwise invalid numeric state.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A verified property or acceptance check did not hold.
class PropertyFailure : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ConfigError(what);
}

}  // namespace snmdp

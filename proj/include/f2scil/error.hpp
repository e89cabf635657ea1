#pragma once

#include <stdexcept>
#include <string>

namespace f2scil {

// Caller broke a documented precondition (shape mismatch, bad index, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid user-facing configuration. The message names the offending key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Batch normalization asked to estimate statistics from a single row.
class DegenerateBatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyBufferError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Replay buffer does not cover a class that should have been learned already.
class BufferGapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace f2scil

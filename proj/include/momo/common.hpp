#pragma once

#include <stdexcept>
#include <string>

namespace momo {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;

/// Broken caller contract: dimension mismatch, out-of-range argument,
/// use-after-invalidate. These are bugs at the call site, not recoverable
/// runtime conditions.
class ContractViolation : public std::logic_error {
public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

/// Numerical failure during optimization (non-finite loss or gradient).
/// Carries the step index and, when known, the offending parameter name.
class TrainingError : public std::runtime_error {
public:
  explicit TrainingError(const std::string& what, long step = -1,
                         std::string param = {})
      : std::runtime_error(format(what, step, param)),
        step_(step),
        param_(std::move(param)) {}

  long step() const { return step_; }
  const std::string& param() const { return param_; }

private:
  static std::string format(const std::string& what, long step,
                            const std::string& param) {
    std::string msg = what;
    if (step >= 0) msg += " (step " + std::to_string(step) + ")";
    if (!param.empty()) msg += " [param " + param + "]";
    return msg;
  }

  long step_;
  std::string param_;
};

/// Operation not defined for the given configuration (e.g. density grids
/// over non-2D action spaces).
class UnsupportedOperation : public std::runtime_error {
public:
  explicit UnsupportedOperation(const std::string& what)
      : std::runtime_error(what) {}
};

/// File load failure. The kind distinguishes version mismatches from
/// truncation and from dimension inconsistencies so callers (and tests)
/// can tell them apart.
class LoadError : public std::runtime_error {
public:
  enum class Kind { VersionMismatch, Truncated, DimMismatch, BadFormat, Io };

  LoadError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace momo

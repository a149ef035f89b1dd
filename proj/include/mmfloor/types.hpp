#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mmfloor {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Numerical tolerances shared across the library. Desk scale, IEEE double.
struct Tolerances {
  double feas = 1e-9;   // feasibility residuals, validation comparisons
  double dual = 1e-7;   // duality gaps, cross-method agreement
  double gauge = 1e-6;  // iterative solver target for the p = 2 paths
  double rank = 1e-10;  // relative singular-value cutoff for spans
};

inline const Tolerances& default_tolerances() {
  static const Tolerances t{};
  return t;
}

/// Invalid or inconsistent input: bad file, dimension mismatch, bad flag.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Validation failure carrying every violation found, not just the first.
class ValidationError : public InputError {
 public:
  ValidationError(const std::string& summary, std::vector<std::string> violations)
      : InputError(join(summary, violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const { return violations_; }

 private:
  static std::string join(const std::string& summary, const std::vector<std::string>& v) {
    std::string out = summary;
    for (const auto& line : v) {
      out += "\n  - " + line;
    }
    return out;
  }

  std::vector<std::string> violations_;
};

/// The no-arbitrage condition failed. Carries the offending location (node id
/// or atom index, -1 if not applicable) and a separating direction h with
/// (h, x_i) >= 0 for all support points and > 0 for at least one.
class NaViolation : public std::runtime_error {
 public:
  NaViolation(const std::string& what, int location, Vector separator)
      : std::runtime_error(what), location_(location), separator_(std::move(separator)) {}

  int location() const { return location_; }
  const Vector& separator() const { return separator_; }

 private:
  int location_;
  Vector separator_;
};

/// An iterative solver ran out of budget. Never a silent wrong answer.
class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Conjugate exponent: 1 <-> inf, 2 <-> 2, generally 1/p + 1/q = 1.
inline double conjugate_exponent(double p) {
  if (p == kInf) return 1.0;
  if (p <= 1.0) return kInf;
  return p / (p - 1.0);
}

}  // namespace mmfloor

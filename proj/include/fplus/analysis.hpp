#pragma once

// Numerical certification of the six properties an activation must satisfy
// to admit the first-power derivation:
//
//   I   defined on all of R          IV  differentiable at the seam
//   II  passes through the origin    V   monotone increasing
//   III continuous at the seam       VI  convex down
//
// plus the coefficient case analysis that reduces a valid coefficient tuple
// to (lambda, mu), the geometric-series tail of the negative branch, and
// output-distribution statistics.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fplus/activations.hpp"

namespace fplus {

struct ConditionResult {
  bool pass = false;
  double residual = 0.0;  // worst-case measured violation
  double witness = 0.0;   // where it occurred
};

struct PropertyReport {
  std::array<ConditionResult, 6> conditions;  // I..VI
  bool overall = false;

  static const char* condition_name(std::size_t index) {
    static const char* names[6] = {"I",  "II", "III", "IV", "V", "VI"};
    return names[index];
  }

  // Flat key-value lines: condition, pass, residual, witness.
  std::string to_kv_text() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < 6; ++i) {
      const ConditionResult& c = conditions[i];
      os << "condition=" << condition_name(i) << " pass=" << (c.pass ? 1 : 0)
         << " residual=" << c.residual << " witness=" << c.witness << '\n';
    }
    os << "overall=" << (overall ? 1 : 0) << '\n';
    return os.str();
  }
};

// Residual floor for the monotonicity/convexity checks: strict >= 0 fails
// spuriously in finite precision.
inline constexpr double kDifferenceFloor = 1e-9;
// Probe width for the second central difference; wide enough that genuine
// curvature dominates rounding of the differenced values.
inline constexpr double kConvexityProbeH = 1e-2;
// Condition I is pole-freeness in practice; probe the far ends of the
// double range as well as the sample grid.
inline constexpr double kExtremeProbe = 1e300;

// Uniform grid on [-50, 50] plus the seam neighborhood {+-10^-k, k=1..9}.
inline std::vector<double> default_domain_samples(std::size_t count = 10000) {
  std::vector<double> samples;
  samples.reserve(count + 18);
  for (std::size_t i = 0; i < count; ++i) {
    samples.push_back(-50.0 + 100.0 * static_cast<double>(i) /
                                  static_cast<double>(count - 1));
  }
  for (int k = 1; k <= 9; ++k) {
    samples.push_back(std::pow(10.0, -k));
    samples.push_back(-std::pow(10.0, -k));
  }
  return samples;
}

inline std::vector<double> default_epsilons() {
  return {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9};
}

inline PropertyReport verify_conditions(const std::function<double(double)>& f,
                                        std::span<const double> domain_samples,
                                        std::span<const double> epsilons,
                                        double tol = 1e-6) {
  if (domain_samples.empty()) {
    throw std::invalid_argument("verify_conditions: empty domain sample list");
  }
  if (epsilons.empty()) {
    throw std::invalid_argument("verify_conditions: empty epsilon list");
  }
  for (std::size_t i = 0; i + 1 < epsilons.size(); ++i) {
    if (!(epsilons[i] > epsilons[i + 1]) || !(epsilons[i + 1] > 0.0)) {
      throw std::invalid_argument("verify_conditions: epsilons must be positive and decreasing");
    }
  }

  std::vector<double> xs(domain_samples.begin(), domain_samples.end());
  std::sort(xs.begin(), xs.end());

  PropertyReport report;

  // I: finite everywhere on the grid and at the extreme probes.
  {
    ConditionResult& c = report.conditions[0];
    c.pass = true;
    auto probe = [&](double x) {
      if (!std::isfinite(f(x))) {
        c.pass = false;
        c.residual = 1.0;
        c.witness = x;
      }
    };
    for (double x : xs) {
      probe(x);
      if (!c.pass) break;
    }
    if (c.pass) probe(-kExtremeProbe);
    if (c.pass) probe(kExtremeProbe);
  }

  // II: f(0) = 0.
  {
    ConditionResult& c = report.conditions[1];
    c.residual = std::abs(f(0.0));
    c.witness = 0.0;
    c.pass = c.residual <= tol;
  }

  // III: the seam gap |f(eps) - f(-eps)| vanishes as eps does.
  {
    ConditionResult& c = report.conditions[2];
    const double eps = epsilons.back();
    c.residual = std::abs(f(eps) - f(-eps));
    c.witness = eps;
    c.pass = c.residual <= tol;
  }

  // IV: one-sided difference quotients at 0 agree at the smallest epsilon.
  {
    ConditionResult& c = report.conditions[3];
    const double eps = epsilons.back();
    const double f0 = f(0.0);
    const double right = (f(eps) - f0) / eps;
    const double left = (f0 - f(-eps)) / eps;
    c.residual = std::abs(right - left);
    c.witness = 0.0;
    c.pass = c.residual <= tol;
  }

  // V: forward differences over the sorted grid never drop below the floor.
  {
    ConditionResult& c = report.conditions[4];
    c.pass = true;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
      const double d = f(xs[i + 1]) - f(xs[i]);
      if (d < -c.residual) {
        c.residual = -d;
        c.witness = xs[i];
      }
    }
    c.pass = c.residual <= kDifferenceFloor;
  }

  // VI: second central differences never drop below the floor.
  {
    ConditionResult& c = report.conditions[5];
    c.pass = true;
    const double h = kConvexityProbeH;
    for (double x : xs) {
      const double d2 = f(x + h) - 2.0 * f(x) + f(x - h);
      if (d2 < -c.residual) {
        c.residual = -d2;
        c.witness = x;
      }
    }
    c.pass = c.residual <= kDifferenceFloor;
  }

  report.overall = true;
  for (const ConditionResult& c : report.conditions) report.overall &= c.pass;
  return report;
}

inline PropertyReport verify_conditions(const ActivationKind& kind,
                                        double tol = 1e-6) {
  const std::vector<double> xs = default_domain_samples();
  const std::vector<double> eps = default_epsilons();
  return verify_conditions([kind](double x) { return activation_eval(kind, x); },
                           xs, eps, tol);
}

// ---------------------------------------------------------------------------
// Coefficient case analysis

// A coefficient tuple for f(x) = alpha*omega1*x + alpha*beta + theta (x >= 0),
// alpha/(omega2*x + beta) + theta (x < 0). Valid tuples split into
//   case 1: beta = 1,  omega2 < 0, omega1 = -omega2 > 0, alpha > 0, theta = -alpha
//   case 2: beta = -1, omega2 > 0, omega1 = -omega2 < 0, alpha < 0, theta = alpha
struct DerivationCoefficients {
  double alpha = 0.0;
  double beta = 0.0;
  double omega1 = 0.0;
  double omega2 = 0.0;
  double theta = 0.0;

  double eval(double x) const {
    return x >= 0.0 ? alpha * omega1 * x + alpha * beta + theta
                    : alpha / (omega2 * x + beta) + theta;
  }
};

// Raised when a coefficient tuple violates one of the derivation's numbered
// constraints; `formula` is the 1..7 index of the violated one.
class CoefficientError : public std::invalid_argument {
 public:
  CoefficientError(int formula, const std::string& what)
      : std::invalid_argument("invalid coefficients: violates formula (" +
                              std::to_string(formula) + "): " + what),
        formula_(formula) {}
  int formula() const { return formula_; }

 private:
  int formula_;
};

inline void validate(const DerivationCoefficients& c) {
  const double scale = std::max({1.0, std::abs(c.alpha), std::abs(c.omega1)});
  const double tol = 1e-12 * scale;
  // (3) beta = +-1
  if (c.beta != 1.0 && c.beta != -1.0) {
    throw CoefficientError(3, "beta must be +1 or -1");
  }
  // (2) alpha*beta + theta = 0, i.e. f(0) = 0
  if (std::abs(c.alpha * c.beta + c.theta) > tol) {
    throw CoefficientError(2, "alpha*beta + theta must be 0");
  }
  // (5) omega1 = -omega2
  if (std::abs(c.omega1 + c.omega2) > tol) {
    throw CoefficientError(5, "omega1 must equal -omega2");
  }
  // (1) pole exclusion: beta/omega2 < 0
  if (c.omega2 == 0.0 || !(c.beta / c.omega2 < 0.0)) {
    throw CoefficientError(1, "beta/omega2 must be negative");
  }
  // (6) omega2 sign per case
  if ((c.beta == 1.0 && !(c.omega2 < 0.0)) ||
      (c.beta == -1.0 && !(c.omega2 > 0.0))) {
    throw CoefficientError(6, "omega2 sign inconsistent with beta case");
  }
  // (7) alpha*omega1 > 0
  if (!(c.alpha * c.omega1 > 0.0)) {
    throw CoefficientError(7, "alpha*omega1 must be positive");
  }
  // (4) theta = -alpha (case 1) / theta = alpha (case 2); implied by (2)+(3)
  if (std::abs(c.theta - (c.beta == 1.0 ? -c.alpha : c.alpha)) > tol) {
    throw CoefficientError(4, "theta inconsistent with alpha for this case");
  }
}

// Both cases collapse to lambda = alpha*omega1, mu = |omega1|.
inline PfplusParams coefficients_to_pfplus(const DerivationCoefficients& c) {
  validate(c);
  return PfplusParams{c.alpha * c.omega1, std::abs(c.omega1)};
}

// ---------------------------------------------------------------------------
// Taylor tail of the negative branch

struct TaylorResult {
  double partial_sum = 0.0;
  double residual = 0.0;
};

inline double taylor_tail_bound(double x, int n) {
  const double ax = std::abs(x);
  return std::pow(ax, n + 1) / (1.0 - ax);
}

// partial_sum = sum_{k=1..n} x^k; residual = |x/(1-x) - partial_sum|, which
// telescopes to |x^{n+1}/(1-x)| exactly. The telescoped form is used because
// the naive difference collapses into cancellation noise once the sum has
// converged to double precision.
inline TaylorResult taylor_residual(double x, int n) {
  if (!(std::abs(x) < 1.0)) {
    throw std::domain_error("taylor_residual: requires |x| < 1, got " +
                            std::to_string(x));
  }
  if (n < 1) throw std::invalid_argument("taylor_residual: requires n >= 1");
  TaylorResult r;
  double term = 1.0;
  for (int k = 1; k <= n; ++k) {
    term *= x;
    r.partial_sum += term;
  }
  r.residual = std::abs(std::pow(x, n + 1) / (1.0 - x));
  return r;
}

// ---------------------------------------------------------------------------
// Output statistics

// Monte-Carlo estimate of E[act(Z)], Z ~ N(0,1); deterministic per seed.
inline double output_mean_stat(const ActivationKind& kind,
                               std::size_t sample_count, std::uint64_t seed) {
  if (sample_count < 100000) {
    throw std::invalid_argument("output_mean_stat: needs at least 1e5 samples");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < sample_count; ++i) {
    acc += activation_eval(kind, normal(rng));
  }
  return acc / static_cast<double>(sample_count);
}

// The infimum -lambda/mu of the negative branch.
inline double saturation_limit(const PfplusParams& p) {
  validate(p);
  return -p.lambda / p.mu;
}

}  // namespace fplus

#pragma once

// Scalar loss families with exact derivatives of orders 0..5 and the
// product-stability functional alpha(z) = 3 l'''(z)^2 - l''''(z) l''(z).

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace eos {

enum class LossFamily { kBCE, kMLSq, kDegReg, kQuadratic };

inline constexpr int kMaxDerivativeOrder = 5;

// Values l(z), l'(z), ..., l^(5)(z) at a single point.
struct DerivativeLadder {
  std::array<double, kMaxDerivativeOrder + 1> d{};

  double operator[](int order) const { return d[static_cast<std::size_t>(order)]; }
  double& operator[](int order) { return d[static_cast<std::size_t>(order)]; }
};

struct Interval {
  double lo;
  double hi;

  bool contains(double z) const { return z >= lo && z <= hi; }
};

class ScalarLoss {
 public:
  // BCE_q(z) = -[q log sigma(z) + (1-q) log(1 - sigma(z))], q in [0, 1].
  static ScalarLoss bce(double q);
  // MLSq_{a,n}(z) = (z^n - a)^2, a > 0, n >= 1.
  static ScalarLoss mlsq(double a, int n);
  // l_a(z) = (log(e^{z-1} + 1) + log(e^{1-z} + 1))^a, a in (0, 1], C_a = 1.
  static ScalarLoss degreg(double a);
  // (z - a)^2.
  static ScalarLoss quadratic(double a);

  // Parses `bce:q=0.6667`, `mlsq:a=1,n=2`, `degreg:a=1`, `quad:a=1`.
  // Values may also be written as fractions, e.g. `bce:q=2/3`.
  // Parameters are separated by `,` or `;`.
  static ScalarLoss parse(std::string_view text);

  LossFamily family() const { return family_; }
  double param_a() const { return a_; }
  int param_n() const { return n_; }
  double param_q() const { return q_; }

  // Minimizer; empty for BCE with q in {0, 1}.
  std::optional<double> z_star() const { return z_star_; }
  Interval valid_domain() const { return domain_; }

  double derivative(double z, int order) const;
  DerivativeLadder ladder(double z) const;

  double value(double z) const { return derivative(z, 0); }
  double d1(double z) const;
  double d2(double z) const { return derivative(z, 2); }

  // Canonical loss string, parseable by parse().
  std::string to_string() const;

 private:
  ScalarLoss(LossFamily family, double a, int n, double q);
  void check_domain(double z) const;

  LossFamily family_;
  double a_ = 0.0;
  int n_ = 1;
  double q_ = 0.0;
  std::optional<double> z_star_;
  Interval domain_;
};

struct StabilityValue {
  double alpha = 0.0;
  bool is_stable = false;
};

inline StabilityValue make_stability(double alpha) { return {alpha, alpha > 0.0}; }

// alpha from l'', l''' and l'''' directly.
inline double alpha_from_derivatives(double d2, double d3, double d4) {
  return 3.0 * d3 * d3 - d4 * d2;
}

StabilityValue product_stability(const ScalarLoss& loss, double z);

// Throws NumericError(kUndefined) when the family has no finite minimum.
double minimum(const ScalarLoss& loss);

struct DerivativeCheck {
  int order;
  double z;
  double analytic;
  double finite_difference;
  double rel_error;
};

struct ValidationReport {
  std::vector<DerivativeCheck> checks;
  double max_rel_error = 0.0;
};

// Compares order k against a central difference of analytic order k-1 for
// k = 1..5. rel_error = |analytic - fd| / (1 + |analytic|).
ValidationReport validate_derivatives(const ScalarLoss& loss, const std::vector<double>& z_grid,
                                      double step);

// Numerically stable logistic function.
double sigmoid(double z);
double softplus(double z);

}  // namespace eos

#pragma once

// Period-2 structure of gradient descent on a scalar loss: the two-step map
// D(a) = l'(a) + l'(a - eta l'(a)), its fixed points Z-(eta) < z* < Z+(eta),
// the inverse map Zhat, the function Phi and the limiting-sharpness estimate.

#include <cstdint>
#include <optional>
#include <vector>

#include "eos/loss_zoo.hpp"

namespace eos {

struct BifurcationOptions {
  double tau_search = 0.5;   // eta * l''(z*) <= 2 + tau_search
  double rho = 0.5;          // Zhat brackets eta from (2 - rho) / l''(z*)
  double scan_cap = 1.0;     // outward root scan stops at |z - z*| = scan_cap
  double bracket_tol = 1e-13;
  double residual_tol = 1e-10;
};

double two_step_residual(const ScalarLoss& loss, double eta, double a);

// Derivative of the two-step map in a.
double two_step_slope(const ScalarLoss& loss, double eta, double a);

struct TwoStepTaylor {
  double c1;
  double c2;
  double c3;
};

TwoStepTaylor taylor_coefficients(const ScalarLoss& loss, double eta);

struct FixedPoints {
  double z_minus;
  double z_plus;
  double residual_minus;
  double residual_plus;
};

FixedPoints find_fixed_points(const ScalarLoss& loss, double eta,
                              const BifurcationOptions& options = {});

struct BifurcationDiagram {
  ScalarLoss loss;
  double z_star = 0.0;
  double curvature = 0.0;  // l''(z*)
  std::vector<double> eta;
  std::vector<double> z_minus;
  std::vector<double> z_plus;
  std::vector<double> residual_minus;
  std::vector<double> residual_plus;
  bool monotone = false;
  bool shrinks_at_lower_end = false;

  std::size_t size() const { return eta.size(); }
};

// Grid points are solved concurrently and assembled in grid order.
BifurcationDiagram diagram(const ScalarLoss& loss, double eta_lo, double eta_hi, int count,
                           const BifurcationOptions& options = {});

// Single-threaded reference for diagram().
BifurcationDiagram diagram_serial(const ScalarLoss& loss, double eta_lo, double eta_hi, int count,
                                  const BifurcationOptions& options = {});

// Inverse of the diagram: the eta at which z is a two-step fixed point.
class InverseDiagram {
 public:
  explicit InverseDiagram(const ScalarLoss& loss, const BifurcationOptions& options = {});

  // Empty when no eta in the bracket makes z a fixed point.
  std::optional<double> operator()(double z) const;

  double z_star() const { return z_star_; }
  double curvature() const { return curvature_; }
  double threshold() const { return 2.0 / curvature_; }

 private:
  ScalarLoss loss_;
  double z_star_;
  double curvature_;
  double eta_lo_;
  double eta_hi_;
};

// Throws DomainError when z is outside the diagram's range.
double zhat(const ScalarLoss& loss, double z, const BifurcationOptions& options = {});

struct ZhatDerivatives {
  double first;            // Zhat'(z)
  double second_at_zstar;  // Zhat''(z*)
};

ZhatDerivatives zhat_derivatives(const ScalarLoss& loss, double z,
                                 const BifurcationOptions& options = {});

double phi(const ScalarLoss& loss, double z, const BifurcationOptions& options = {});

// 2/eta - 3 l''(z*)^4 / alpha(z*) * eta. Throws NumericError(kUndefined) when
// alpha(z*) <= 0.
double predict_final_sharpness(const ScalarLoss& loss, double eta);

struct TwoStepLimits {
  double even_limit;
  double odd_limit;
  std::int64_t steps;
  bool matches_fixed_points;
};

TwoStepLimits two_step_converge(const ScalarLoss& loss, double eta, double a0,
                                std::int64_t max_steps, const BifurcationOptions& options = {});

}  // namespace eos

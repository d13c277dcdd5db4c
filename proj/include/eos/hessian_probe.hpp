#pragma once

// Multivariate product-stability of a differentiable model:
//   alpha = 3 g3^T H^+ g3 - d4,  g3 = grad(v^T H v),  d4 = D^4 f[v]^4,
// with v the top Hessian eigenvector. Higher-order derivatives are finite
// differences of the exact gradient.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "eos/models.hpp"

namespace eos {

struct ProbeConfig {
  int power_iters = 30;
  int cg_iters = 50;
  double cg_tol = 1e-8;
  double hvp_step = 1e-5;
  double d3_step = 1e-4;
  double d4_step = 2e-3;
  std::uint64_t seed = 0;
};

// Throws UsageError on non-positive steps or iteration counts.
void validate(const ProbeConfig& config);

Vector hvp(DifferentiableModel& model, std::span<const double> v, const ProbeConfig& config = {});

struct Eigenpair {
  double lambda = 0.0;
  Vector v;
  double last_rayleigh_change = 0.0;  // |r_k - r_{k-1}| at the final round
  bool negative = false;
};

Eigenpair top_eigenpair(DifferentiableModel& model, const ProbeConfig& config = {});

Vector third_directional(DifferentiableModel& model, std::span<const double> v,
                         const ProbeConfig& config = {});

double fourth_directional(DifferentiableModel& model, std::span<const double> v,
                          const ProbeConfig& config = {});

struct PinvResult {
  Vector x;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

using LinearOperator = std::function<Vector(std::span<const double>)>;

// CGLS for a symmetric operator, started from zero (minimum-norm solution).
PinvResult cgls_symmetric(const LinearOperator& apply, std::span<const double> b, int max_iters,
                          double tol);

PinvResult pinv_solve(DifferentiableModel& model, std::span<const double> b,
                      const ProbeConfig& config = {});

struct ProbeReport {
  double lambda_max = 0.0;
  Vector v_max;
  Vector g3;
  double q_term = 0.0;
  double d4 = 0.0;
  double alpha = 0.0;
  bool negative_curvature = false;
  PinvResult solve;
};

ProbeReport multivariate_stability(DifferentiableModel& model, const ProbeConfig& config = {});

struct ProbeRow {
  std::int64_t step;
  double loss;
  double lambda_max;
  double alpha;
  double grad_norm;
};

// Full-batch gradient descent; probes at every step divisible by probe_every.
std::vector<ProbeRow> train_and_probe(DifferentiableModel& model, double eta, std::int64_t steps,
                                      std::int64_t probe_every, const ProbeConfig& config = {});

double norm(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);

}  // namespace eos

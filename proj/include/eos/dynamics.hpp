#pragma once

// Gradient descent on the factored objective L(x, y) = l(xy) and on l itself.

#include <cstdint>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "eos/loss_zoo.hpp"

namespace eos {

struct FactoredState {
  double x = 0.0;
  double y = 0.0;

  double z() const { return x * y; }
  double s() const { return x * x + y * y; }
};

// Solves xy = z0, x^2 + y^2 = s0 with the convention x >= |y|, x > 0.
// Throws UsageError when s0 < 2|z0|.
FactoredState init_from_zs(double z0, double s0);

// Simultaneous update x' = x - eta l'(z) y, y' = y - eta l'(z) x.
// Throws NumericError(kDiverged) when the result is not finite.
FactoredState gd_step(const FactoredState& state, const ScalarLoss& loss, double eta);

double scalar_gd_step(double a, const ScalarLoss& loss, double eta);

struct TwoStepDeltas {
  double delta_z;
  double delta_s;
};

// Closed forms for z_{t+2} - z_t and s_{t+2} - s_t in terms of g_t = l'(z_t)
// and g_{t+1} = l'(z_{t+1}).
TwoStepDeltas two_step_deltas(const FactoredState& state, const ScalarLoss& loss, double eta);

struct Sharpness {
  double lambda_max;
  double trace;
};

// Largest eigenvalue and trace of the 2x2 Hessian of L at state.
Sharpness sharpness(const FactoredState& state, const ScalarLoss& loss);

enum class Phase { kI, kII, kIII, kUnclassified };

std::string_view phase_tag(Phase phase);  // "I" | "II" | "III" | "U"

struct TrajectoryRecord {
  std::int64_t t = 0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double s = 0.0;
  double gamma = 0.0;
  double loss = 0.0;
  double sharpness = 0.0;
  double grad_z = 0.0;
  Phase phase = Phase::kUnclassified;
  // max(|z_t - z*|, |z_{t-1} - z*|), used by the Phase III test.
  double envelope = 0.0;
};

struct PhaseOptions {
  bool enabled = true;
  double k_threshold = 10.0;  // Phase II when |Zhat(z) - gamma| <= K eta^2
  int window = 50;            // records
  double tau_search = 0.5;
  double rho = 0.5;
};

struct XYInit {
  double x0;
  double y0;
};

struct ZSInit {
  double z0;
  double s0;
};

struct RunConfig {
  ScalarLoss loss = ScalarLoss::mlsq(1.0, 2);
  double eta = 0.01;
  std::variant<XYInit, ZSInit> init = XYInit{1.0, 1.0};
  std::int64_t max_steps = 1'000'000;
  double convergence_tol = 1e-13;
  int convergence_window = 10;
  int record_stride = 1;
  std::uint64_t seed = 0;  // reserved; runs are deterministic
  double divergence_bound = 1e8;
  PhaseOptions phase;
};

enum class RunStatus { kConverged, kMaxSteps, kDiverged, kDomainExit };

std::string_view status_tag(RunStatus status);

struct Trajectory {
  RunConfig config;
  std::vector<TrajectoryRecord> records;
  RunStatus status = RunStatus::kMaxSteps;
  std::int64_t steps = 0;
  FactoredState final_state;
  // Per-step conservation residuals, maximized over the run.
  double max_balance_residual = 0.0;
  double max_conservation_residual = 0.0;
  double max_z_update_residual = 0.0;

  bool converged() const { return status == RunStatus::kConverged; }
  const TrajectoryRecord& final_record() const { return records.back(); }
};

// Per-step residuals of the exact single-step identities, normalized by the
// largest term: x^2 - y^2 scales by (1 - eta^2 g^2) and s^2 - 4z^2 by its
// square; z_{t+1} - z_t = -eta s g + eta^2 z g^2 (absolute).
struct StepResiduals {
  double balance;
  double conservation;
  double z_update;
};

StepResiduals step_residuals(const FactoredState& before, const FactoredState& after, double g,
                             double eta);

Trajectory run(const RunConfig& config);

}  // namespace eos

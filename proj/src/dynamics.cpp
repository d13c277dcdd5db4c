#include "eos/dynamics.hpp"

#include <cmath>

#include <fmt/format.h>

#include "eos/bifurcation.hpp"
#include "eos/errors.hpp"
#include "eos/phase.hpp"

namespace eos {

FactoredState init_from_zs(double z0, double s0) {
  const double disc = s0 * s0 - 4.0 * z0 * z0;
  if (!(s0 >= 2.0 * std::abs(z0)) || !std::isfinite(s0) || !std::isfinite(z0)) {
    throw UsageError(fmt::format("infeasible initialization: s0={} < 2|z0|={}", s0, 2 * std::abs(z0)));
  }
  const double x = std::sqrt(0.5 * (s0 + std::sqrt(std::max(disc, 0.0))));
  if (x == 0.0) return {0.0, 0.0};
  return {x, z0 / x};
}

FactoredState gd_step(const FactoredState& state, const ScalarLoss& loss, double eta) {
  const double g = loss.d1(state.z());
  const FactoredState next{state.x - eta * g * state.y, state.y - eta * g * state.x};
  if (!std::isfinite(next.x) || !std::isfinite(next.y)) {
    throw NumericError(NumericError::Kind::kDiverged, "gradient step produced a non-finite state");
  }
  return next;
}

double scalar_gd_step(double a, const ScalarLoss& loss, double eta) { return a - eta * loss.d1(a); }

TwoStepDeltas two_step_deltas(const FactoredState& state, const ScalarLoss& loss, double eta) {
  const double z = state.z();
  const double s = state.s();
  const double g0 = loss.d1(z);
  const double z1 = z - eta * s * g0 + eta * eta * z * g0 * g0;
  const double g1 = loss.d1(z1);
  const double h = g1 * g1 + 4.0 * g1 * g0 + g0 * g0;
  const double cross = eta * (g1 + g0) * (1.0 + eta * eta * g1 * g0);
  const double quartic = eta * eta * eta * eta * g1 * g1 * g0 * g0;
  return {eta * eta * h * z - cross * s + quartic * z, eta * eta * h * s - 4.0 * cross * z + quartic * s};
}

Sharpness sharpness(const FactoredState& state, const ScalarLoss& loss) {
  const double z = state.z();
  const DerivativeLadder l = loss.ladder(z);
  const double trace = l[2] * state.s();
  const double off = l[2] * z + l[1];
  const double split = l[2] * (state.x * state.x - state.y * state.y);
  // (H11 - H22)^2 + 4 H12^2 is the discriminant of the characteristic polynomial.
  const double disc = split * split + 4.0 * off * off;
  return {0.5 * (trace + std::sqrt(disc)), trace};
}

std::string_view phase_tag(Phase phase) {
  switch (phase) {
    case Phase::kI:
      return "I";
    case Phase::kII:
      return "II";
    case Phase::kIII:
      return "III";
    case Phase::kUnclassified:
      return "U";
  }
  return "U";
}

std::string_view status_tag(RunStatus status) {
  switch (status) {
    case RunStatus::kConverged:
      return "converged";
    case RunStatus::kMaxSteps:
      return "max_steps";
    case RunStatus::kDiverged:
      return "diverged";
    case RunStatus::kDomainExit:
      return "domain_exit";
  }
  return "unknown";
}

StepResiduals step_residuals(const FactoredState& before, const FactoredState& after, double g,
                             double eta) {
  const double shrink = 1.0 - eta * eta * g * g;

  const double diff0 = before.x * before.x - before.y * before.y;
  const double diff1 = after.x * after.x - after.y * after.y;
  const double s0 = before.s();
  const double s1 = after.s();
  const double balance = std::abs(diff1 - diff0 * shrink) / std::max({s0, s1, 1e-300});

  const double z0 = before.z();
  const double z1 = after.z();
  const double gap0 = s0 * s0 - 4.0 * z0 * z0;
  const double gap1 = s1 * s1 - 4.0 * z1 * z1;
  const double conservation =
      std::abs(gap1 - gap0 * shrink * shrink) / std::max({s0 * s0, s1 * s1, 1e-300});

  const double z_update = std::abs((z1 - z0) - (-eta * s0 * g + eta * eta * z0 * g * g));
  return {balance, conservation, z_update};
}

namespace {

TrajectoryRecord make_record(std::int64_t t, const FactoredState& st, const ScalarLoss& loss,
                             double eta, double envelope) {
  TrajectoryRecord r;
  r.t = t;
  r.x = st.x;
  r.y = st.y;
  r.z = st.z();
  r.s = st.s();
  r.gamma = eta * r.s;
  const DerivativeLadder l = loss.ladder(r.z);
  r.loss = l[0];
  r.grad_z = l[1];
  r.sharpness = sharpness(st, loss).lambda_max;
  r.envelope = envelope;
  return r;
}

class OnlineClassifier {
 public:
  OnlineClassifier(const RunConfig& config) : config_(config) {
    const auto zs = config.loss.z_star();
    if (!config.phase.enabled || !zs || !(config.loss.d2(*zs) > 0.0)) return;
    BifurcationOptions opts;
    opts.tau_search = config.phase.tau_search;
    opts.rho = config.phase.rho;
    inverse_.emplace(config.loss, opts);
  }

  void label(TrajectoryRecord& record) {
    if (!inverse_) return;
    std::optional<double> trailing;
    const auto w = static_cast<std::size_t>(std::max(config_.phase.window, 1));
    if (envelopes_.size() >= w) trailing = envelopes_[envelopes_.size() - w];
    envelopes_.push_back(record.envelope);
    record.phase =
        classify_phase(record, config_.eta, *inverse_, trailing, config_.phase.k_threshold);
  }

  double z_star() const { return inverse_ ? inverse_->z_star() : 0.0; }
  bool active() const { return inverse_.has_value(); }

 private:
  const RunConfig& config_;
  std::optional<InverseDiagram> inverse_;
  std::vector<double> envelopes_;
};

}  // namespace

Trajectory run(const RunConfig& config) {
  if (!(config.eta > 0.0)) throw UsageError("eta must be positive");
  if (config.record_stride < 1) throw UsageError("record_stride must be >= 1");
  if (config.max_steps < 0) throw UsageError("max_steps must be non-negative");

  Trajectory traj;
  traj.config = config;

  FactoredState state;
  if (const auto* xy = std::get_if<XYInit>(&config.init)) {
    state = {xy->x0, xy->y0};
  } else {
    const auto& zs = std::get<ZSInit>(config.init);
    state = init_from_zs(zs.z0, zs.s0);
  }

  const ScalarLoss& loss = config.loss;
  const double eta = config.eta;
  OnlineClassifier classifier(config);
  const double z_star = classifier.active() ? classifier.z_star() : loss.z_star().value_or(0.0);

  double prev_dev = std::abs(state.z() - z_star);
  auto envelope_of = [&](const FactoredState& st) {
    const double dev = std::abs(st.z() - z_star);
    return std::max(dev, prev_dev);
  };
  auto push = [&](std::int64_t t, const FactoredState& st) {
    TrajectoryRecord rec = make_record(t, st, loss, eta, envelope_of(st));
    classifier.label(rec);
    traj.records.push_back(rec);
  };

  push(0, state);
  int calm_steps = 0;
  double carry_x = 0.0, carry_y = 0.0;
  std::int64_t t = 0;
  bool last_recorded = true;
  try {
    for (; t < config.max_steps;) {
      const double z = state.z();
      const double g = loss.d1(z);
      // Kahan carries keep increments below half an ulp of x or y from being
      // dropped; without them s freezes late in long runs and the iterate
      // locks into a spurious floating-point 2-cycle.
      const double dx = -eta * g * state.y - carry_x;
      const double dy = -eta * g * state.x - carry_y;
      const FactoredState next{state.x + dx, state.y + dy};
      if (!std::isfinite(next.x) || !std::isfinite(next.y) ||
          std::abs(next.x) > config.divergence_bound || std::abs(next.y) > config.divergence_bound) {
        traj.status = RunStatus::kDiverged;
        break;
      }

      const StepResiduals res = step_residuals(state, next, g, eta);
      traj.max_balance_residual = std::max(traj.max_balance_residual, res.balance);
      traj.max_conservation_residual = std::max(traj.max_conservation_residual, res.conservation);
      traj.max_z_update_residual = std::max(traj.max_z_update_residual, res.z_update);

      const double scale = config.convergence_tol * (1.0 + std::abs(state.x) + std::abs(state.y));
      const bool calm = std::abs(dx) <= scale && std::abs(dy) <= scale;
      carry_x = (next.x - state.x) - dx;
      carry_y = (next.y - state.y) - dy;
      calm_steps = calm ? calm_steps + 1 : 0;

      prev_dev = std::abs(z - z_star);
      state = next;
      ++t;
      last_recorded = (t % config.record_stride == 0);
      if (last_recorded) push(t, state);

      if (calm_steps >= config.convergence_window) {
        traj.status = RunStatus::kConverged;
        break;
      }
    }
  } catch (const DomainError&) {
    traj.status = RunStatus::kDomainExit;
  }
  if (!last_recorded) push(t, state);

  traj.steps = t;
  traj.final_state = state;
  return traj;
}

}  // namespace eos

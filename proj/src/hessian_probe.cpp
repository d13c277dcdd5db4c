#include "eos/hessian_probe.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "eos/errors.hpp"

namespace eos {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

void validate(const ProbeConfig& c) {
  if (c.power_iters < 1 || c.cg_iters < 1) throw UsageError("probe: iteration counts must be positive");
  if (!(c.cg_tol > 0.0 && c.hvp_step > 0.0 && c.d3_step > 0.0 && c.d4_step > 0.0)) {
    throw UsageError("probe: steps and tolerances must be positive");
  }
}

namespace {

// Evaluates fn at theta + t * dir for each t, restoring theta afterwards.
template <class Fn>
void at_offsets(DifferentiableModel& model, std::span<const double> dir, std::initializer_list<double> ts,
                Fn&& fn) {
  ParamGuard guard(model);
  const Vector& base = guard.saved();
  Vector shifted(base.size());
  for (const double t : ts) {
    for (std::size_t i = 0; i < base.size(); ++i) shifted[i] = base[i] + t * dir[i];
    model.set_params(shifted);
    fn(t);
  }
  guard.restore();
}

}  // namespace

Vector hvp(DifferentiableModel& model, std::span<const double> v, const ProbeConfig& config) {
  const std::size_t d = model.dim();
  if (v.size() != d) throw UsageError("hvp: vector dimension mismatch");
  const double vn = norm(v);
  Vector out(d, 0.0);
  if (vn == 0.0) return out;
  const double h = config.hvp_step * (1.0 + norm(model.params())) / std::max(vn, 1e-12);
  Vector g_plus(d), g_minus(d);
  at_offsets(model, v, {h, -h}, [&](double t) { model.gradient(t > 0 ? g_plus : g_minus); });
  for (std::size_t i = 0; i < d; ++i) out[i] = (g_plus[i] - g_minus[i]) / (2.0 * h);
  return out;
}

Eigenpair top_eigenpair(DifferentiableModel& model, const ProbeConfig& config) {
  validate(config);
  const std::size_t d = model.dim();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(d);
  for (auto& x : v) x = normal(rng);
  double n0 = norm(v);
  if (n0 == 0.0) {
    v[0] = 1.0;
    n0 = 1.0;
  }
  for (auto& x : v) x /= n0;

  Eigenpair out;
  double rayleigh_prev = 0.0;
  for (int k = 0; k < config.power_iters; ++k) {
    Vector hv = hvp(model, v, config);
    const double rayleigh = dot(v, hv);
    if (k > 0) out.last_rayleigh_change = std::abs(rayleigh - rayleigh_prev);
    rayleigh_prev = rayleigh;
    const double n = norm(hv);
    if (n < 1e-12) {
      throw NumericError(NumericError::Kind::kBreakdown,
                         fmt::format("power iteration breakdown: |Hv| = {} at round {}", n, k));
    }
    for (std::size_t i = 0; i < d; ++i) v[i] = hv[i] / n;
  }
  const Vector hv = hvp(model, v, config);
  out.lambda = dot(v, hv);
  out.last_rayleigh_change = std::abs(out.lambda - rayleigh_prev);
  out.v = std::move(v);
  out.negative = out.lambda < 0.0;
  return out;
}

Vector third_directional(DifferentiableModel& model, std::span<const double> v, const ProbeConfig& config) {
  const std::size_t d = model.dim();
  const double h = config.d3_step * (1.0 + norm(model.params()));
  Vector g_plus(d), g_mid(d), g_minus(d);
  at_offsets(model, v, {h, 0.0, -h}, [&](double t) {
    model.gradient(t > 0 ? g_plus : (t < 0 ? g_minus : g_mid));
  });
  Vector out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = (g_plus[i] - 2.0 * g_mid[i] + g_minus[i]) / (h * h);
  return out;
}

double fourth_directional(DifferentiableModel& model, std::span<const double> v, const ProbeConfig& config) {
  const double h = config.d4_step * (1.0 + norm(model.params()));
  double f[5] = {0, 0, 0, 0, 0};
  at_offsets(model, v, {-2 * h, -h, 0.0, h, 2 * h}, [&](double t) {
    const int idx = static_cast<int>(std::lround(t / h)) + 2;
    f[idx] = model.value();
  });
  const double h4 = h * h * h * h;
  return (f[0] - 4.0 * f[1] + 6.0 * f[2] - 4.0 * f[3] + f[4]) / h4;
}

PinvResult cgls_symmetric(const LinearOperator& apply, std::span<const double> b, int max_iters, double tol) {
  constexpr double kDamp = 1e-12;
  const std::size_t d = b.size();
  PinvResult out;
  out.x.assign(d, 0.0);
  Vector r(b.begin(), b.end());
  Vector s = apply(r);
  Vector p = s;
  double norm_s_old = dot(s, s);
  out.residual = norm(r);
  for (int k = 0; k < max_iters; ++k) {
    const Vector hp = apply(p);
    const double step = norm_s_old / (dot(hp, hp) + kDamp);
    for (std::size_t i = 0; i < d; ++i) {
      out.x[i] += step * p[i];
      r[i] -= step * hp[i];
    }
    out.iterations = k + 1;
    out.residual = norm(r);
    if (out.residual < tol) {
      out.converged = true;
      break;
    }
    s = apply(r);
    const double norm_s_new = dot(s, s);
    const double beta = norm_s_new / (norm_s_old + kDamp);
    for (std::size_t i = 0; i < d; ++i) p[i] = s[i] + beta * p[i];
    norm_s_old = norm_s_new;
  }
  return out;
}

PinvResult pinv_solve(DifferentiableModel& model, std::span<const double> b, const ProbeConfig& config) {
  if (b.size() != model.dim()) throw UsageError("pinv_solve: vector dimension mismatch");
  for (double v : b) {
    if (!std::isfinite(v)) throw DomainError("pinv_solve: right-hand side is not finite");
  }
  return cgls_symmetric([&](std::span<const double> v) { return hvp(model, v, config); }, b,
                        config.cg_iters, config.cg_tol);
}

ProbeReport multivariate_stability(DifferentiableModel& model, const ProbeConfig& config) {
  validate(config);
  ProbeReport rep;
  Eigenpair top = top_eigenpair(model, config);
  rep.lambda_max = top.lambda;
  rep.negative_curvature = top.negative;
  rep.v_max = std::move(top.v);
  rep.g3 = third_directional(model, rep.v_max, config);
  rep.solve = pinv_solve(model, rep.g3, config);
  rep.q_term = 3.0 * dot(rep.g3, rep.solve.x);
  rep.d4 = fourth_directional(model, rep.v_max, config);
  rep.alpha = rep.q_term - rep.d4;
  return rep;
}

std::vector<ProbeRow> train_and_probe(DifferentiableModel& model, double eta, std::int64_t steps,
                                      std::int64_t probe_every, const ProbeConfig& config) {
  if (!(eta > 0.0)) throw UsageError("train_and_probe: eta must be positive");
  if (probe_every < 1) throw UsageError("train_and_probe: probe_every must be >= 1");
  std::vector<ProbeRow> rows;
  Vector grad(model.dim());
  Vector theta(model.params().begin(), model.params().end());
  for (std::int64_t t = 0; t < std::max<std::int64_t>(steps, 1); ++t) {
    model.gradient(grad);
    if (t % probe_every == 0) {
      const double loss = model.value();
      const ProbeReport rep = multivariate_stability(model, config);
      rows.push_back({t, loss, rep.lambda_max, rep.alpha, norm(grad)});
    }
    if (t >= steps) break;
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= eta * grad[i];
    for (double v : theta) {
      if (!std::isfinite(v)) {
        throw NumericError(NumericError::Kind::kDiverged,
                           fmt::format("training diverged at step {}", t + 1));
      }
    }
    model.set_params(theta);
  }
  return rows;
}

}  // namespace eos

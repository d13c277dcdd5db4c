#include "eos/bifurcation.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "eos/dynamics.hpp"
#include "eos/errors.hpp"

namespace eos {

namespace {

struct MinimumInfo {
  double z_star;
  double curvature;
};

MinimumInfo minimum_info(const ScalarLoss& loss) {
  const double zs = minimum(loss);
  const double lpp = loss.d2(zs);
  if (!(lpp > 0.0)) {
    throw NumericError(NumericError::Kind::kUndefined,
                       fmt::format("{}: l''(z*) = {} is not positive", loss.to_string(), lpp));
  }
  return {zs, lpp};
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

// Bisection on [lo, hi] with f(lo), f(hi) of opposite (non-zero) sign.
template <class F>
double bisect(F&& f, double lo, double hi, double tol) {
  int s_lo = sign_of(f(lo));
  for (int iter = 0; iter < 400 && std::abs(hi - lo) > tol; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    const int s_mid = sign_of(f(mid));
    if (s_mid == 0) return mid;
    if (s_mid == s_lo) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Scans from z* in direction `side` for the first sign change of D.
double scan_branch(const ScalarLoss& loss, double eta, const MinimumInfo& m, double step, int side,
                   const BifurcationOptions& opt) {
  auto D = [&](double a) { return two_step_residual(loss, eta, a); };
  double near = step;
  while (near > 1e-12 && sign_of(D(m.z_star + side * near)) != -side) near *= 0.5;
  if (near <= 1e-12) {
    throw NumericError(NumericError::Kind::kNoSignChange,
                       fmt::format("{} eta={}: two-step map has no repelling neighbourhood at z*",
                                   loss.to_string(), eta));
  }
  const int sign_near = -side;
  double prev = near;
  for (double u = near + step; u <= opt.scan_cap + 0.5 * step; u += step) {
    const double cur = std::min(u, opt.scan_cap);
    if (sign_of(D(m.z_star + side * cur)) != sign_near) {
      const double lo = m.z_star + side * prev;
      const double hi = m.z_star + side * cur;
      return bisect(D, lo, hi, opt.bracket_tol);
    }
    prev = cur;
  }
  throw NumericError(
      NumericError::Kind::kNoSignChange,
      fmt::format("{} eta={}: no sign change of the two-step map within |z - z*| <= {} ({} side)",
                  loss.to_string(), eta, opt.scan_cap, side > 0 ? "upper" : "lower"));
}

FixedPoints solve_fixed_points(const ScalarLoss& loss, double eta, const MinimumInfo& m,
                               const BifurcationOptions& opt) {
  const double scaled = eta * m.curvature;
  if (!(scaled > 2.0)) {
    throw NumericError(NumericError::Kind::kBelowThreshold,
                       fmt::format("eta * l''(z*) = {} is not above the threshold 2", scaled));
  }
  if (scaled > 2.0 + opt.tau_search * (1.0 + 1e-12)) {
    throw DomainError(fmt::format("eta * l''(z*) = {} exceeds 2 + tau_search = {}", scaled,
                                  2.0 + opt.tau_search));
  }
  const TwoStepTaylor c = taylor_coefficients(loss, eta);
  double seed = opt.scan_cap;
  if (c.c3 > 0.0) seed = std::min(seed, std::sqrt((scaled - 2.0) * m.curvature / c.c3));
  const double step = std::max(1e-4, 0.1 * seed);

  FixedPoints fp{};
  fp.z_plus = scan_branch(loss, eta, m, step, +1, opt);
  fp.z_minus = scan_branch(loss, eta, m, step, -1, opt);
  fp.residual_plus = std::abs(two_step_residual(loss, eta, fp.z_plus));
  fp.residual_minus = std::abs(two_step_residual(loss, eta, fp.z_minus));
  if (fp.residual_plus > opt.residual_tol || fp.residual_minus > opt.residual_tol) {
    throw NumericError(NumericError::Kind::kNoConvergence,
                       fmt::format("{} eta={}: fixed-point residual {} exceeds {}", loss.to_string(),
                                   eta, std::max(fp.residual_plus, fp.residual_minus),
                                   opt.residual_tol));
  }
  return fp;
}

BifurcationDiagram empty_diagram(const ScalarLoss& loss, double eta_lo, double eta_hi, int count,
                                 const BifurcationOptions& opt, MinimumInfo& m) {
  m = minimum_info(loss);
  if (count < 2) throw UsageError("diagram needs at least two grid points");
  if (!(eta_lo < eta_hi)) throw UsageError("diagram needs eta_lo < eta_hi");
  if (!(eta_lo * m.curvature > 2.0)) {
    throw NumericError(NumericError::Kind::kBelowThreshold,
                       fmt::format("eta_lo * l''(z*) = {} must exceed 2", eta_lo * m.curvature));
  }
  if (eta_hi * m.curvature > (2.0 + opt.tau_search) * (1.0 + 1e-12)) {
    throw DomainError(fmt::format("eta_hi * l''(z*) = {} exceeds 2 + tau_search",
                                  eta_hi * m.curvature));
  }
  BifurcationDiagram d{loss, 0.0, 0.0, {}, {}, {}, {}, {}, false, false};
  d.z_star = m.z_star;
  d.curvature = m.curvature;
  const auto n = static_cast<std::size_t>(count);
  d.eta.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.eta[i] = eta_lo + (eta_hi - eta_lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  d.eta.back() = eta_hi;
  d.z_minus.assign(n, 0.0);
  d.z_plus.assign(n, 0.0);
  d.residual_minus.assign(n, 0.0);
  d.residual_plus.assign(n, 0.0);
  return d;
}

void verify_diagram(BifurcationDiagram& d) {
  bool mono_plus = true, mono_minus = true;
  for (std::size_t i = 1; i < d.size(); ++i) {
    mono_plus = mono_plus && d.z_plus[i] > d.z_plus[i - 1];
    mono_minus = mono_minus && d.z_minus[i] < d.z_minus[i - 1];
  }
  d.monotone = mono_plus && mono_minus;
  d.shrinks_at_lower_end = std::abs(d.z_plus.front() - d.z_star) < std::abs(d.z_plus.back() - d.z_star) &&
                           std::abs(d.z_minus.front() - d.z_star) < std::abs(d.z_minus.back() - d.z_star);
}

}  // namespace

double two_step_residual(const ScalarLoss& loss, double eta, double a) {
  const double g = loss.d1(a);
  return g + loss.d1(a - eta * g);
}

double two_step_slope(const ScalarLoss& loss, double eta, double a) {
  const double g = loss.d1(a);
  const double lpp = loss.d2(a);
  return lpp + loss.d2(a - eta * g) * (1.0 - eta * lpp);
}

TwoStepTaylor taylor_coefficients(const ScalarLoss& loss, double eta) {
  const double zs = minimum(loss);
  const DerivativeLadder l = loss.ladder(zs);
  const double m = 1.0 - eta * l[2];
  return {(2.0 - eta * l[2]) * l[2], 0.5 * l[3] * m * (2.0 - eta * l[2]),
          l[4] / 6.0 * m * (1.0 + m * m) - 0.5 * eta * l[3] * l[3] * m};
}

FixedPoints find_fixed_points(const ScalarLoss& loss, double eta, const BifurcationOptions& options) {
  return solve_fixed_points(loss, eta, minimum_info(loss), options);
}

BifurcationDiagram diagram(const ScalarLoss& loss, double eta_lo, double eta_hi, int count,
                           const BifurcationOptions& options) {
  MinimumInfo m{};
  BifurcationDiagram d = empty_diagram(loss, eta_lo, eta_hi, count, options, m);
  const auto n = static_cast<std::int64_t>(d.size());
  std::vector<std::string> failures(d.size());

#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      const FixedPoints fp = solve_fixed_points(loss, d.eta[k], m, options);
      d.z_minus[k] = fp.z_minus;
      d.z_plus[k] = fp.z_plus;
      d.residual_minus[k] = fp.residual_minus;
      d.residual_plus[k] = fp.residual_plus;
    } catch (const std::exception& e) {
      failures[k] = e.what();
    }
  }
  for (std::size_t k = 0; k < failures.size(); ++k) {
    if (!failures[k].empty()) {
      throw NumericError(NumericError::Kind::kNoSignChange,
                         fmt::format("diagram at eta={:.17g}: {}", d.eta[k], failures[k]));
    }
  }
  verify_diagram(d);
  return d;
}

BifurcationDiagram diagram_serial(const ScalarLoss& loss, double eta_lo, double eta_hi, int count,
                                  const BifurcationOptions& options) {
  MinimumInfo m{};
  BifurcationDiagram d = empty_diagram(loss, eta_lo, eta_hi, count, options, m);
  for (std::size_t k = 0; k < d.size(); ++k) {
    FixedPoints fp;
    try {
      fp = solve_fixed_points(loss, d.eta[k], m, options);
    } catch (const std::exception& e) {
      throw NumericError(NumericError::Kind::kNoSignChange,
                         fmt::format("diagram at eta={:.17g}: {}", d.eta[k], e.what()));
    }
    d.z_minus[k] = fp.z_minus;
    d.z_plus[k] = fp.z_plus;
    d.residual_minus[k] = fp.residual_minus;
    d.residual_plus[k] = fp.residual_plus;
  }
  verify_diagram(d);
  return d;
}

InverseDiagram::InverseDiagram(const ScalarLoss& loss, const BifurcationOptions& options)
    : loss_(loss) {
  const MinimumInfo m = minimum_info(loss);
  z_star_ = m.z_star;
  curvature_ = m.curvature;
  eta_lo_ = (2.0 - options.rho) / curvature_;
  eta_hi_ = (2.0 + options.tau_search) / curvature_;
}

std::optional<double> InverseDiagram::operator()(double z) const {
  if (z == z_star_) return threshold();
  if (!std::isfinite(z)) return std::nullopt;
  const double g = loss_.d1(z);
  if (g == 0.0) {
    if (std::abs(z - z_star_) <= 1e-8 * (1.0 + std::abs(z_star_))) return threshold();
    return std::nullopt;
  }
  auto D = [&](double eta) { return g + loss_.d1(z - eta * g); };
  const int s_lo = sign_of(D(eta_lo_));
  const int s_hi = sign_of(D(eta_hi_));
  if (s_lo == 0) return eta_lo_;
  if (s_hi == 0) return eta_hi_;
  if (s_lo == s_hi) return std::nullopt;
  return bisect(D, eta_lo_, eta_hi_, 0.0);
}

double zhat(const ScalarLoss& loss, double z, const BifurcationOptions& options) {
  const InverseDiagram inv(loss, options);
  const auto eta = inv(z);
  if (!eta) {
    throw DomainError(fmt::format("{}: z={} is outside the range of the bifurcation diagram",
                                  loss.to_string(), z));
  }
  return *eta;
}

ZhatDerivatives zhat_derivatives(const ScalarLoss& loss, double z, const BifurcationOptions& options) {
  const InverseDiagram inv(loss, options);
  auto eval = [&](double w) {
    const auto eta = inv(w);
    if (!eta) {
      throw DomainError(fmt::format("{}: z={} is outside the range of the bifurcation diagram",
                                    loss.to_string(), w));
    }
    return *eta;
  };
  const double zs = inv.z_star();

  ZhatDerivatives out{};
  const double g = loss.d1(z);
  if (std::abs(g) < 1e-8) {
    const double h = 1e-4 * (1.0 + std::abs(zs));
    out.first = (eval(z + h) - eval(z - h)) / (2.0 * h);
  } else {
    const double eta = eval(z);
    const double o = z - eta * g;
    const double lpp_z = loss.d2(z);
    const double lpp_o = loss.d2(o);
    out.first = (lpp_z + lpp_o * (1.0 - eta * lpp_z)) / (g * lpp_o);
  }
  const double h2 = 1e-3 * (1.0 + std::abs(zs));
  out.second_at_zstar = (eval(zs + h2) - 2.0 * eval(zs) + eval(zs - h2)) / (h2 * h2);
  return out;
}

double phi(const ScalarLoss& loss, double z, const BifurcationOptions& options) {
  const double zs = minimum(loss);
  if (std::abs(z - zs) <= 1e-4 * (1.0 + std::abs(zs))) {
    const DerivativeLadder l = loss.ladder(zs);
    const double alpha = alpha_from_derivatives(l[2], l[3], l[4]);
    if (!(alpha > 0.0)) {
      throw NumericError(NumericError::Kind::kUndefined,
                         fmt::format("{}: Phi undefined, alpha(z*) = {}", loss.to_string(), alpha));
    }
    return 3.0 * l[2] * l[2] * l[2] / alpha;
  }
  const double eta = zhat(loss, z, options);
  const double first = zhat_derivatives(loss, z, options).first;
  const double g = loss.d1(z);
  const double lpp_o = loss.d2(z - eta * g);
  return (-first * g * z * (lpp_o + 2.0 / eta) + 2.0 * g) / (first * lpp_o);
}

double predict_final_sharpness(const ScalarLoss& loss, double eta) {
  const double zs = minimum(loss);
  const DerivativeLadder l = loss.ladder(zs);
  const double alpha = alpha_from_derivatives(l[2], l[3], l[4]);
  if (!(alpha > 0.0)) {
    throw NumericError(NumericError::Kind::kUndefined,
                       fmt::format("{}: final sharpness prediction needs alpha(z*) > 0 (got {})",
                                   loss.to_string(), alpha));
  }
  const double lpp2 = l[2] * l[2];
  return 2.0 / eta - 3.0 * lpp2 * lpp2 / alpha * eta;
}

TwoStepLimits two_step_converge(const ScalarLoss& loss, double eta, double a0,
                                std::int64_t max_steps, const BifurcationOptions& options) {
  const MinimumInfo m = minimum_info(loss);
  if (a0 == m.z_star) return {a0, a0, 0, true};

  constexpr int kWindow = 20;
  constexpr double kCauchy = 1e-12;
  double prev2 = a0;                            // a_{t-1}
  double prev = scalar_gd_step(a0, loss, eta);  // a_t
  int calm = 0;
  std::int64_t t = 1;
  for (; t < max_steps; ++t) {
    const double next = scalar_gd_step(prev, loss, eta);
    if (!std::isfinite(next)) {
      throw NumericError(NumericError::Kind::kDiverged, "scalar gradient descent diverged");
    }
    calm = std::abs(next - prev2) <= kCauchy ? calm + 1 : 0;
    prev2 = prev;
    prev = next;
    if (calm >= kWindow) break;
  }
  if (calm < kWindow) {
    throw NumericError(NumericError::Kind::kNoConvergence,
                       fmt::format("two-step iterates not Cauchy after {} steps", max_steps));
  }
  ++t;
  // prev = a_t, prev2 = a_{t-1}
  TwoStepLimits out{};
  out.steps = t;
  out.even_limit = (t % 2 == 0) ? prev : prev2;
  out.odd_limit = (t % 2 == 0) ? prev2 : prev;
  const FixedPoints fp = find_fixed_points(loss, eta, options);
  const double lo = std::min(out.even_limit, out.odd_limit);
  const double hi = std::max(out.even_limit, out.odd_limit);
  out.matches_fixed_points = std::abs(lo - fp.z_minus) <= 1e-8 && std::abs(hi - fp.z_plus) <= 1e-8;
  return out;
}

}  // namespace eos

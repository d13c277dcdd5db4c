// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "../dense_oracle.hpp"
#include "../oracles.hpp"
#include "eos/bifurcation.hpp"
#include "eos/dataset.hpp"
#include "eos/dynamics.hpp"
#include "eos/errors.hpp"
#include "eos/hessian_probe.hpp"
#include "eos/loss_zoo.hpp"
#include "eos/phase.hpp"
#include "eos/presets.hpp"

using namespace eos;
namespace fs = std::filesystem;

namespace {

struct Check {
  bool ok = true;
  std::vector<std::string> failures;
  std::string note;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      failures.push_back(what);
    }
  }
};

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("eos_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double fd_alpha(const ScalarLoss& loss, double z) {
  auto f = [&](double w) { return loss.value(w); };
  using eos::testing::default_fd_step;
  using eos::testing::fd_derivative;
  const double d2 = fd_derivative(f, z, 2, default_fd_step(2));
  const double d3 = fd_derivative(f, z, 3, default_fd_step(3));
  const double d4 = fd_derivative(f, z, 4, default_fd_step(4));
  return 3 * d3 * d3 - d4 * d2;
}

// ---------------------------------------------------------------------------

Check product_stability_values() {
  Check c;
  c.expect(product_stability(ScalarLoss::quadratic(1.0), 0.3).alpha == 0.0, "quadratic alpha != 0");
  c.expect(!product_stability(ScalarLoss::quadratic(1.0), 0.3).is_stable, "quadratic reported stable");
  struct Case {
    ScalarLoss loss;
    double z;
    double expected;
    double tol;
  };
  const std::vector<Case> cases = {{ScalarLoss::bce(2.0 / 3.0), 0.0, 0.03125, 1e-9},
                                   {ScalarLoss::bce(2.0 / 3.0), std::log(2.0), 8.0 / 243.0, 1e-9},
                                   {ScalarLoss::mlsq(1, 2), 1.0, 1536.0, 1e-9},
                                   {ScalarLoss::degreg(1.0), 1.0, 0.125, 1e-6}};
  double worst_fd = 0;
  for (const auto& k : cases) {
    const double a = product_stability(k.loss, k.z).alpha;
    c.expect(rel(a, k.expected) <= k.tol, fmt::format("{} at {}: {} vs {}", k.loss.to_string(), k.z, a, k.expected));
    const double fd = fd_alpha(k.loss, k.z);
    worst_fd = std::max(worst_fd, rel(fd, a));
    c.expect(rel(fd, a) <= 1e-5, fmt::format("{}: finite-difference oracle {} disagrees", k.loss.to_string(), fd));
  }
  c.note = fmt::format("worst FD-oracle rel. diff {:.1e}", worst_fd);
  return c;
}

Check conservation_identities() {
  Check c;
  PresetOverrides ov;
  ov.render_svg = false;
  const PresetPlan plan = make_plan("phase-space", 0, ov);
  double worst_bal = 0, worst_con = 0, worst_z = 0;
  for (const auto& job : plan.trajectories) {
    const Trajectory t = run(job_config(job));
    worst_bal = std::max(worst_bal, t.max_balance_residual);
    worst_con = std::max(worst_con, t.max_conservation_residual);
    worst_z = std::max(worst_z, t.max_z_update_residual);
  }
  c.expect(plan.trajectories.size() == 9, "phase-space preset should hold 9 runs");
  c.expect(worst_bal <= 1e-12, fmt::format("balance residual {}", worst_bal));
  c.expect(worst_con <= 1e-12, fmt::format("s^2-4z^2 residual {}", worst_con));

  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1, 1), ue(0.005, 0.05);
  const std::vector<ScalarLoss> losses = {ScalarLoss::mlsq(1, 2), ScalarLoss::bce(2.0 / 3.0),
                                          ScalarLoss::degreg(1.0), ScalarLoss::quadratic(1.0)};
  double worst_two = 0;
  for (int i = 0; i < 1000; ++i) {
    const ScalarLoss& loss = losses[static_cast<std::size_t>(i) % losses.size()];
    const double zs = loss.z_star().value();
    const double eta = ue(rng);
    const double z0 = zs + 0.1 * u(rng);
    const double s0 = std::max(2 * std::abs(z0) + 0.01, (2.0 + 0.2 * u(rng)) / (eta * loss.d2(zs)));
    const FactoredState st = init_from_zs(z0, s0);
    const TwoStepDeltas d = two_step_deltas(st, loss, eta);
    const FactoredState b = gd_step(gd_step(st, loss, eta), loss, eta);
    worst_two = std::max({worst_two, std::abs(d.delta_z - (b.z() - st.z())), std::abs(d.delta_s - (b.s() - st.s()))});
  }
  c.expect(worst_two <= 1e-12, fmt::format("two-step closed form off by {}", worst_two));
  c.note = fmt::format("balance {:.1e}, s^2-4z^2 {:.1e}, z-update {:.1e}, two-step {:.1e}", worst_bal, worst_con,
                       worst_z, worst_two);
  return c;
}

Check two_step_fixed_points() {
  Check c;
  struct Case {
    ScalarLoss loss;
    double eta;
  };
  for (const auto& k : {Case{ScalarLoss::mlsq(1, 2), 0.26}, Case{ScalarLoss::bce(2.0 / 3.0), 9.2}}) {
    const double zs = k.loss.z_star().value();
    const FixedPoints fp = find_fixed_points(k.loss, k.eta);
    c.expect(fp.z_minus < zs && zs < fp.z_plus, k.loss.to_string() + ": ordering");
    c.expect(fp.residual_minus <= 1e-10 && fp.residual_plus <= 1e-10, k.loss.to_string() + ": residual");
    for (double off : {0.01, -0.01}) {
      const TwoStepLimits lim = two_step_converge(k.loss, k.eta, zs + off, 200000);
      const double lo = std::min(lim.even_limit, lim.odd_limit), hi = std::max(lim.even_limit, lim.odd_limit);
      c.expect(std::abs(lo - fp.z_minus) <= 1e-8 && std::abs(hi - fp.z_plus) <= 1e-8,
               fmt::format("{} from z*{:+}: limits {} {}", k.loss.to_string(), off, lo, hi));
    }
  }
  bool quad_reports = false;
  try {
    find_fixed_points(ScalarLoss::quadratic(1.0), 1.04);
  } catch (const NumericError& e) {
    quad_reports = e.kind() == NumericError::Kind::kNoSignChange;
  }
  c.expect(quad_reports, "quadratic should report no nontrivial fixed point");
  const FixedPoints m = find_fixed_points(ScalarLoss::mlsq(1, 2), 0.26);
  c.note = fmt::format("MLSq Z- = {:.10f}, Z+ = {:.10f}", m.z_minus, m.z_plus);
  return c;
}

Check diagram_properties() {
  Check c;
  const ScalarLoss ml = ScalarLoss::mlsq(1, 2);
  const BifurcationDiagram d = diagram(ml, 0.2505, 0.27, 20);
  c.expect(d.size() == 20, "grid size");
  c.expect(d.monotone, "branches not strictly monotone");
  c.expect(d.shrinks_at_lower_end, "branches do not shrink toward z* at the lower end");
  double worst = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double eta = d.eta[i];
    for (int k = 0; k <= 50; ++k) {
      const double a = d.z_minus[i] + (d.z_plus[i] - d.z_minus[i]) * k / 50.0;
      const double h = 1e-6;
      const double slope = (two_step_residual(ml, eta, a + h) - two_step_residual(ml, eta, a - h)) / (2 * h);
      worst = std::max(worst, std::abs(slope) * eta);
    }
  }
  c.expect(worst < 1.0, fmt::format("max eta |D'| = {}", worst));
  c.note = fmt::format("max eta*|D'| = {:.3f}, |Z+ - 1| from {:.4f} to {:.4f}", worst, d.z_plus.front() - 1,
                       d.z_plus.back() - 1);
  return c;
}

Check inverse_map_constants() {
  Check c;
  for (const auto& loss : {ScalarLoss::mlsq(1, 2), ScalarLoss::bce(2.0 / 3.0)}) {
    const double zs = loss.z_star().value();
    const ZhatDerivatives zd = zhat_derivatives(loss, zs);
    c.expect(std::abs(zd.first) <= 1e-6, fmt::format("{}: Zhat'(z*) = {}", loss.to_string(), zd.first));
    c.expect(rel(zd.second_at_zstar, 2.0) <= 1e-2, fmt::format("{}: Zhat''(z*) = {}", loss.to_string(), zd.second_at_zstar));
    const double p = phi(loss, zs);
    c.expect(rel(p, 1.0) <= 1e-6, fmt::format("{}: Phi(z*) = {}", loss.to_string(), p));
    c.note += fmt::format("{} Zhat''={:.5f} ", loss.family() == LossFamily::kMLSq ? "MLSq" : "BCE", zd.second_at_zstar);
  }
  return c;
}

struct SharpnessRun {
  ScalarLoss loss;
  double eta;
  std::int64_t max_steps;
  int stride;
};

std::vector<SharpnessRun> sharpness_grid() {
  const ScalarLoss ml = ScalarLoss::mlsq(1, 2), bce = ScalarLoss::bce(2.0 / 3.0);
  return {{ml, 0.02, 2'000'000, 2},         {ml, 0.01, 2'000'000, 2},          {ml, 0.005, 4'000'000, 4},
          {bce, 0.02, 10'000'000, 10},      {bce, 0.01, 30'000'000, 40},       {bce, 0.005, 30'000'000, 200}};
}

std::vector<Trajectory> g_sharpness_runs;

Check final_sharpness() {
  Check c;
  const auto grid = sharpness_grid();
  g_sharpness_runs.clear();
  std::vector<double> ratios(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& g = grid[i];
    const TrajectoryJob job{"c6", g.loss, g.eta, 0.02, 2.1, g.max_steps, g.stride};
    Trajectory t = run(job_config(job));
    const double lpp = g.loss.d2(g.loss.z_star().value());
    const double lam = sharpness(t.final_state, g.loss).lambda_max;
    const double err = std::abs(lam - predict_final_sharpness(g.loss, g.eta));
    const double scale = std::pow(g.eta, 5.0 / 3.0);
    ratios[i] = err / scale;
    c.expect(err <= 5 * scale * lpp * lpp,
             fmt::format("{} eta={}: |lambda - prediction| = {} > {}", g.loss.to_string(), g.eta, err, 5 * scale * lpp * lpp));
    c.note += fmt::format("{}@{}:{:.2g}{} ", g.loss.family() == LossFamily::kMLSq ? "MLSq" : "BCE", g.eta, ratios[i],
                          t.converged() ? "" : "(stalled)");
    g_sharpness_runs.push_back(std::move(t));
  }
  // Scaling: the ratio stays under the same 5 l''(z*)^2 ceiling at every eta of a family.
  for (std::size_t f = 0; f < grid.size(); f += 3) {
    const double lpp = grid[f].loss.d2(grid[f].loss.z_star().value());
    const double worst = *std::max_element(ratios.begin() + static_cast<std::ptrdiff_t>(f),
                                           ratios.begin() + static_cast<std::ptrdiff_t>(f + 3));
    c.expect(worst <= 5 * lpp * lpp, fmt::format("{}: ratio {} unbounded", grid[f].loss.to_string(), worst));
  }
  c.note = "err/eta^(5/3): " + c.note;
  return c;
}

Check phase_structure() {
  Check c;
  const auto grid = sharpness_grid();
  std::size_t comparisons = 0;
  for (std::size_t i = 0; i < g_sharpness_runs.size(); ++i) {
    const Trajectory& t = g_sharpness_runs[i];
    if (!t.converged()) continue;
    const PhaseSummary ps = summarize_phases(t.records, t.config.phase.window);
    c.expect(ps.ordered(), fmt::format("{} eta={}: phases not ordered I->II->III", grid[i].loss.to_string(), grid[i].eta));
    const GammaMonotonicity gm = check_phase_two_gamma(t.records, 1e-12);
    comparisons += gm.comparisons;
    c.expect(gm.violations == 0, fmt::format("{} eta={}: {} gamma increases in Phase II (worst {})",
                                             grid[i].loss.to_string(), grid[i].eta, gm.violations, gm.worst_increase));
  }
  c.expect(g_sharpness_runs.size() == grid.size(), "criterion 6 runs missing");
  c.note = fmt::format("{} Phase-II gamma comparisons", comparisons);
  return c;
}

Check delta_gap() {
  Check c;
  PresetOverrides ov;
  ov.render_svg = false;
  const PresetOutcome out = run_preset(make_plan("delta-gap", 0, ov), scratch("delta_gap"));
  double small = -1, large = -1;
  for (const auto& r : out.summary) {
    c.expect(r.status == "converged", r.job + " did not converge");
    const double err = std::abs(r.final_sharpness - r.predicted_sharpness.value_or(NAN));
    if (std::abs(r.eta_lpp_s0 - 2.001) < 1e-12) small = err;
    if (std::abs(r.eta_lpp_s0 - 2.05) < 1e-12) large = err;
  }
  c.expect(small >= 0 && large >= 0, "delta rows missing");
  c.expect(small >= 10 * large, fmt::format("gap ratio {}", small / large));
  c.note = fmt::format("|err| delta=0.001: {:.3g}, delta=0.05: {:.3g}, ratio {:.1f}", small, large, small / large);
  return c;
}

Check multivariate_probe() {
  Check c;
  AnalyticPolynomial qo = AnalyticPolynomial::parse("1.5*w0^2 + 0.5*w1^2 + w0^3 + w0^4");
  const double a = multivariate_stability(qo).alpha;
  c.expect(rel(a, 12.0) <= 1e-3, fmt::format("quartic oracle alpha = {}", a));
  for (const char* q : {"1.5*w0^2 + 0.5*w1^2", "2*w0^2 + w0*w1 + w1^2 + 0.3*w2^2 - w2"}) {
    AnalyticPolynomial p = AnalyticPolynomial::parse(q);
    const double aq = multivariate_stability(p).alpha;
    c.expect(std::abs(aq) <= 1e-3, fmt::format("quadratic alpha = {}", aq));
  }
  std::mt19937_64 rng(99);
  double worst = 0;
  for (int trial = 0; trial < 12; ++trial) {
    AnalyticPolynomial p = eos::testing::random_probe_polynomial(rng, 2 + static_cast<std::size_t>(trial % 3));
    const auto oracle = eos::testing::dense_oracle(p);
    ProbeConfig cfg;
    cfg.power_iters = 200;
    const double ap = multivariate_stability(p, cfg).alpha;
    const double r = std::abs(ap - oracle.alpha) / std::max(1.0, std::abs(oracle.alpha));
    worst = std::max(worst, r);
  }
  c.expect(worst <= 1e-3, fmt::format("dense oracle rel. diff {}", worst));
  for (const auto& loss : {ScalarLoss::bce(2.0 / 3.0), ScalarLoss::mlsq(1, 2), ScalarLoss::degreg(1.0),
                           ScalarLoss::quadratic(1.0)}) {
    const double zs = loss.z_star().value();
    FactoredScalar f(loss, FactoredScalar::Embedding::kScalar, {zs});
    const double am = multivariate_stability(f).alpha;
    const double al = product_stability(loss, zs).alpha;
    const bool agree = al == 0.0 ? std::abs(am) <= 1e-3 : (am > 0) == (al > 0);
    c.expect(agree, fmt::format("{}: probe {} vs scalar {}", loss.to_string(), am, al));
  }
  c.note = fmt::format("quartic alpha {:.6f}, dense oracle worst rel. {:.1e}", a, worst);
  return c;
}

Check probe_preset() {
  Check c;
  const PresetPlan plan = make_plan("probe-demo", 0);
  const fs::path a = scratch("probe_a"), b = scratch("probe_b");
  const PresetOutcome oa = run_preset(plan, a);
  run_preset(plan, b);
  c.expect(oa.failures == 0, "probe preset reported failures");
  const std::string file = "probe_" + plan.probes.front().id + ".csv";
  c.expect(fs::exists(a / file), "probe CSV missing");
  c.expect(slurp(a / file) == slurp(b / file), "probe CSV differs between runs");
  const auto& rows = oa.probes.front();
  c.expect(!rows.empty(), "no probe rows");
  std::size_t positive = 0;
  double max_lambda = 0;
  for (const auto& r : rows) {
    c.expect(std::isfinite(r.alpha), fmt::format("alpha not finite at step {}", r.step));
    positive += r.alpha > 0;
    max_lambda = std::max(max_lambda, r.lambda_max);
  }

  const ProbeJob& job = plan.probes.front();
  auto data = std::make_shared<const Dataset>(make_two_gaussians(job.samples, job.widths.front(), job.separation, 0));
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    TinyMLP m(job.widths, OutputLoss::kBCE, data, seed);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0, 1);
    Vector theta(m.dim());
    for (auto& t : theta) t = n(rng);
    m.set_params(theta);
    worst = std::max(worst, eos::testing::gradient_check(m));
  }
  c.expect(worst <= 1e-5, fmt::format("gradient check rel. error {}", worst));
  c.note = fmt::format("{} probes, alpha>0 at {}, max lambda {:.3f} (2/eta = {:.3f}), grad check {:.1e}", rows.size(),
                       positive, max_lambda, 2 / job.eta, worst);
  return c;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Check()> fn;
  };
  // Criterion 7 reuses the runs of criterion 6 and shares its budget.
  const std::vector<Criterion> criteria = {
      {1, "product-stability values", 1, product_stability_values},
      {2, "conservation identities", 5, conservation_identities},
      {3, "two-step fixed points", 5, two_step_fixed_points},
      {4, "bifurcation diagram properties", 10, diagram_properties},
      {5, "inverse-map constants", 5, inverse_map_constants},
      {6, "final sharpness", 60, final_sharpness},
      {7, "phase structure", 60, phase_structure},
      {8, "delta gap", 60, delta_gap},
      {9, "multivariate probe", 10, multivariate_probe},
      {10, "tiny MLP probe run", 120, probe_preset},
  };
  int failed = 0;
  double shared_elapsed = 0;
  for (const auto& cr : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Check c;
    try {
      c = cr.fn();
    } catch (const std::exception& e) {
      c.ok = false;
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (cr.id == 6) shared_elapsed = elapsed;
    if (cr.id == 7) elapsed += shared_elapsed;
    if (elapsed > cr.budget_s) {
      c.ok = false;
      c.failures.push_back(fmt::format("runtime {:.2f}s exceeds {:.0f}s", elapsed, cr.budget_s));
    }
    std::string detail = c.note;
    for (const auto& f : c.failures) detail += " | " + f;
    fmt::print("criterion {:>2} {:<32} {}  ({:.2f}s)  {}\n", cr.id, cr.name, c.ok ? "PASS" : "FAIL", elapsed, detail);
    std::fflush(stdout);
    failed += c.ok ? 0 : 1;
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}

// eoslab: command-line front end for the loss zoo, factored GD simulator,
// bifurcation solver, Hessian probe, SVG plotter and experiment presets.
//
// Exit codes: 0 success, 1 usage, 2 numeric failure, 3 I/O.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "eos/bifurcation.hpp"
#include "eos/config.hpp"
#include "eos/csv.hpp"
#include "eos/dataset.hpp"
#include "eos/dynamics.hpp"
#include "eos/errors.hpp"
#include "eos/hessian_probe.hpp"
#include "eos/loss_zoo.hpp"
#include "eos/models.hpp"
#include "eos/phase.hpp"
#include "eos/presets.hpp"
#include "eos/svg.hpp"

namespace fs = std::filesystem;
using namespace eos;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitIo = 3;

void kv(const char* key, double v) { fmt::print("{}={}\n", key, fmt17(v)); }
void kv(const char* key, const std::string& v) { fmt::print("{}={}\n", key, v); }

// Comma-separated numbers; `none` is the empty list.
std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  if (text == "none") return out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!item.empty()) {
      try {
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw UsageError(fmt::format("'{}' is not a number", item));
      }
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

// Config entries fill options of the active subcommand (or the app) that
// were not given on the command line.
void apply_config(CLI::App& app, CLI::App* sub, const ConfigFile& cfg) {
  for (const auto& [key, value] : cfg.entries()) {
    CLI::Option* opt = nullptr;
    for (CLI::App* scope : {sub, &app}) {
      if (!scope) continue;
      try {
        opt = scope->get_option("--" + key);
        break;
      } catch (const CLI::OptionNotFound&) {
      }
    }
    if (!opt) throw UsageError(fmt::format("config: unknown key '{}'", key));
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

fs::path output_path(const std::string& out_dir, const std::string& name) { return fs::path(out_dir) / name; }

struct Globals {
  std::string out = ".";
  std::uint64_t seed = 0;
  std::string config;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge-of-stability laboratory for gradient descent on l(xy)"};
  app.require_subcommand(1);
  Globals g;
  // Options that must be set, from the command line or the config file.
  std::vector<std::pair<CLI::App*, CLI::Option*>> needed;
  auto need = [&](CLI::App* sub, CLI::Option* opt) { needed.emplace_back(sub, opt); };
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--config", g.config, "key=value file; command-line flags take precedence");

  // stability
  std::string stab_loss;
  std::optional<double> stab_z;
  bool stab_validate = false;
  auto* stability = app.add_subcommand("stability", "Product-stability alpha of a scalar loss");
  need(stability, stability->add_option("--loss", stab_loss, "Loss string, e.g. bce:q=2/3"));
  stability->add_option("--z", stab_z, "Evaluation point (default: the minimizer)");
  stability->add_flag("--validate", stab_validate, "Check derivatives against finite differences");

  // simulate
  std::string sim_loss;
  double sim_eta = 0.01;
  std::optional<double> sim_x0, sim_y0, sim_z0, sim_s0, sim_gamma0;
  double sim_offset = 0.02;
  std::int64_t sim_steps = 1'000'000;
  int sim_stride = 1;
  double sim_tol = 1e-13;
  double sim_k = 10.0;
  int sim_window = 50;
  std::string sim_file = "trajectory.csv";
  auto* simulate = app.add_subcommand("simulate", "Gradient descent on L(x,y) = l(xy)");
  need(simulate, simulate->add_option("--loss", sim_loss, "Loss string"));
  simulate->add_option("--eta", sim_eta, "Learning rate")->capture_default_str();
  simulate->add_option("--x0", sim_x0);
  simulate->add_option("--y0", sim_y0);
  simulate->add_option("--z0", sim_z0);
  simulate->add_option("--s0", sim_s0);
  simulate->add_option("--eta-lpp-s0", sim_gamma0, "Initialize with eta*l''(z*)*s0 at z0 = z* + offset");
  simulate->add_option("--z-offset", sim_offset)->capture_default_str();
  simulate->add_option("--max-steps", sim_steps)->capture_default_str();
  simulate->add_option("--stride", sim_stride)->capture_default_str();
  simulate->add_option("--tol", sim_tol)->capture_default_str();
  simulate->add_option("--k-threshold", sim_k)->capture_default_str();
  simulate->add_option("--window", sim_window)->capture_default_str();
  simulate->add_option("--file", sim_file)->capture_default_str();

  // bifurcation
  std::string bif_loss;
  std::optional<double> bif_eta;
  double bif_lo = 0.0, bif_hi = 0.0;
  int bif_count = 20;
  std::string bif_file = "diagram.csv";
  auto* bifurcation = app.add_subcommand("bifurcation", "Two-step fixed points and diagrams");
  need(bifurcation, bifurcation->add_option("--loss", bif_loss));
  bifurcation->add_option("--eta", bif_eta, "Single learning rate: print Z- and Z+");
  bifurcation->add_option("--eta-lo", bif_lo);
  bifurcation->add_option("--eta-hi", bif_hi);
  bifurcation->add_option("--count", bif_count)->capture_default_str();
  bifurcation->add_option("--file", bif_file)->capture_default_str();

  // zhat
  std::string zh_loss;
  std::optional<double> zh_z;
  auto* zhat_cmd = app.add_subcommand("zhat", "Inverse bifurcation map, its derivatives and Phi");
  need(zhat_cmd, zhat_cmd->add_option("--loss", zh_loss));
  zhat_cmd->add_option("--z", zh_z, "Evaluation point (default: the minimizer)");

  // predict-sharpness
  std::string ps_loss;
  double ps_eta = 0.01;
  auto* predict = app.add_subcommand("predict-sharpness", "Limiting sharpness estimate");
  need(predict, predict->add_option("--loss", ps_loss));
  need(predict, predict->add_option("--eta", ps_eta));

  // two-step
  std::string ts_loss;
  double ts_eta = 0.0, ts_a0 = 0.0;
  std::int64_t ts_steps = 200000;
  auto* two_step = app.add_subcommand("two-step", "Scalar GD even/odd limits");
  need(two_step, two_step->add_option("--loss", ts_loss));
  need(two_step, two_step->add_option("--eta", ts_eta));
  need(two_step, two_step->add_option("--a0", ts_a0));
  two_step->add_option("--max-steps", ts_steps)->capture_default_str();

  // probe
  std::string pr_model = "mlp";
  std::string pr_poly;
  std::string pr_at;
  std::string pr_widths = "2,8,8,1";
  std::string pr_dataset;
  std::size_t pr_samples = 200;
  double pr_separation = 2.0;
  double pr_eta = 0.5;
  std::int64_t pr_steps = 2000, pr_every = 50;
  std::string pr_file = "probe.csv";
  ProbeConfig pc;
  auto* probe = app.add_subcommand("probe", "Multivariate product-stability of a model");
  probe->add_option("--model", pr_model, "poly | mlp")->check(CLI::IsMember({"poly", "mlp"}))->capture_default_str();
  probe->add_option("--poly", pr_poly, "Polynomial, e.g. '1.5*w0^2 + w0^3'");
  probe->add_option("--at", pr_at, "Comma-separated parameter values for --model poly");
  probe->add_option("--widths", pr_widths)->capture_default_str();
  probe->add_option("--dataset", pr_dataset, "Dataset CSV (default: synthetic two Gaussians)");
  probe->add_option("--samples", pr_samples)->capture_default_str();
  probe->add_option("--separation", pr_separation)->capture_default_str();
  probe->add_option("--eta", pr_eta)->capture_default_str();
  probe->add_option("--steps", pr_steps)->capture_default_str();
  probe->add_option("--probe-every", pr_every)->capture_default_str();
  probe->add_option("--power-iters", pc.power_iters)->capture_default_str();
  probe->add_option("--cg-iters", pc.cg_iters)->capture_default_str();
  probe->add_option("--cg-tol", pc.cg_tol)->capture_default_str();
  probe->add_option("--hvp-step", pc.hvp_step)->capture_default_str();
  probe->add_option("--d3-step", pc.d3_step)->capture_default_str();
  probe->add_option("--d4-step", pc.d4_step)->capture_default_str();
  probe->add_option("--file", pr_file)->capture_default_str();

  // plot
  std::string pl_csv, pl_x, pl_svg = "plot.svg";
  std::vector<std::string> pl_y;
  std::optional<double> pl_ref;
  bool pl_log = false;
  std::string pl_title;
  auto* plot = app.add_subcommand("plot", "Render CSV columns as an SVG line chart");
  need(plot, plot->add_option("--csv", pl_csv));
  need(plot, plot->add_option("--x", pl_x));
  need(plot, plot->add_option("--y", pl_y, "One or more y columns"));
  plot->add_option("--ref", pl_ref, "Horizontal reference line");
  plot->add_flag("--log-y", pl_log);
  plot->add_option("--title", pl_title);
  plot->add_option("--file", pl_svg)->capture_default_str();

  // preset
  std::string pre_name;
  std::optional<std::string> pre_etas, pre_gammas;
  std::optional<std::int64_t> pre_steps;
  bool pre_no_svg = false;
  auto* preset = app.add_subcommand("preset", "Run a named experiment preset");
  preset->add_option("name", pre_name)->required()->check(CLI::IsMember(preset_names()));
  preset->add_option("--etas", pre_etas, "Comma-separated learning rates (none: no runs)");
  preset->add_option("--eta-lpp-s0", pre_gammas, "Comma-separated eta*l''*s0 values");
  preset->add_option("--max-steps", pre_steps);
  preset->add_flag("--no-svg", pre_no_svg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (!g.config.empty()) {
      const ConfigFile cfg = ConfigFile::load(g.config);
      CLI::App* active = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
      try {
        apply_config(app, active, cfg);
      } catch (const CLI::ParseError& e) {
        throw UsageError(fmt::format("config: {}", e.what()));
      }
    }
    for (const auto& [sub, opt] : needed) {
      if (sub->parsed() && opt->count() == 0) {
        throw UsageError(fmt::format("{} is required", opt->get_name()));
      }
    }

    if (*stability) {
      const ScalarLoss loss = ScalarLoss::parse(stab_loss);
      const double z = stab_z ? *stab_z : minimum(loss);
      const StabilityValue st = product_stability(loss, z);
      kv("loss", loss.to_string());
      kv("z", z);
      for (int k = 1; k <= 4; ++k) kv(fmt::format("d{}", k).c_str(), loss.derivative(z, k));
      kv("alpha", st.alpha);
      kv("stable", st.is_stable ? "true" : "false");
      if (stab_validate) {
        const ValidationReport rep = validate_derivatives(loss, {z - 0.5, z, z + 0.5}, 1e-5);
        kv("validate_max_rel_error", rep.max_rel_error);
      }
    } else if (*simulate) {
      RunConfig cfg;
      cfg.loss = ScalarLoss::parse(sim_loss);
      cfg.eta = sim_eta;
      cfg.max_steps = sim_steps;
      cfg.record_stride = sim_stride;
      cfg.convergence_tol = sim_tol;
      cfg.seed = g.seed;
      cfg.phase.k_threshold = sim_k;
      cfg.phase.window = sim_window;
      if (sim_x0 || sim_y0) {
        if (!sim_x0 || !sim_y0) throw UsageError("--x0 and --y0 must be given together");
        cfg.init = XYInit{*sim_x0, *sim_y0};
      } else if (sim_z0 || sim_s0) {
        if (!sim_z0 || !sim_s0) throw UsageError("--z0 and --s0 must be given together");
        cfg.init = ZSInit{*sim_z0, *sim_s0};
      } else if (sim_gamma0) {
        const double zs = minimum(cfg.loss);
        cfg.init = ZSInit{zs + sim_offset, *sim_gamma0 / (sim_eta * cfg.loss.d2(zs))};
      } else {
        throw UsageError("initialization required: --x0/--y0, --z0/--s0 or --eta-lpp-s0");
      }
      const Trajectory traj = run(cfg);
      const fs::path path = output_path(g.out, sim_file);
      write_text_file(path, trajectory_csv(traj));
      const PhaseSummary ps = summarize_phases(traj.records, cfg.phase.window);
      kv("status", std::string(status_tag(traj.status)));
      kv("steps", static_cast<double>(traj.steps));
      kv("final_x", traj.final_state.x);
      kv("final_y", traj.final_state.y);
      kv("final_z", traj.final_state.z());
      kv("final_sharpness", sharpness(traj.final_state, cfg.loss).lambda_max);
      kv("phases_ordered", ps.ordered() ? "true" : "false");
      kv("max_balance_residual", traj.max_balance_residual);
      kv("max_conservation_residual", traj.max_conservation_residual);
      kv("file", path.string());
      if (traj.status == RunStatus::kDiverged || traj.status == RunStatus::kDomainExit) return kExitNumeric;
    } else if (*bifurcation) {
      const ScalarLoss loss = ScalarLoss::parse(bif_loss);
      if (bif_eta) {
        const FixedPoints fp = find_fixed_points(loss, *bif_eta);
        kv("z_minus", fp.z_minus);
        kv("z_plus", fp.z_plus);
        kv("residual_minus", fp.residual_minus);
        kv("residual_plus", fp.residual_plus);
      } else {
        const BifurcationDiagram d = diagram(loss, bif_lo, bif_hi, bif_count);
        const fs::path path = output_path(g.out, bif_file);
        write_text_file(path, diagram_csv(d));
        kv("monotone", d.monotone ? "true" : "false");
        kv("shrinks_at_lower_end", d.shrinks_at_lower_end ? "true" : "false");
        kv("file", path.string());
      }
    } else if (*zhat_cmd) {
      const ScalarLoss loss = ScalarLoss::parse(zh_loss);
      const double z = zh_z ? *zh_z : minimum(loss);
      const ZhatDerivatives zd = zhat_derivatives(loss, z);
      kv("z", z);
      kv("zhat", zhat(loss, z));
      kv("zhat_prime", zd.first);
      kv("zhat_second_at_zstar", zd.second_at_zstar);
      kv("phi", phi(loss, z));
    } else if (*predict) {
      const ScalarLoss loss = ScalarLoss::parse(ps_loss);
      kv("threshold", 2.0 / ps_eta);
      kv("predicted_sharpness", predict_final_sharpness(loss, ps_eta));
    } else if (*two_step) {
      const ScalarLoss loss = ScalarLoss::parse(ts_loss);
      const TwoStepLimits lim = two_step_converge(loss, ts_eta, ts_a0, ts_steps);
      kv("even_limit", lim.even_limit);
      kv("odd_limit", lim.odd_limit);
      kv("steps", static_cast<double>(lim.steps));
      kv("matches_fixed_points", lim.matches_fixed_points ? "true" : "false");
    } else if (*probe) {
      pc.seed = g.seed;
      validate(pc);
      if (pr_model == "poly") {
        if (pr_poly.empty()) throw UsageError("--poly is required for --model poly");
        AnalyticPolynomial poly = AnalyticPolynomial::parse(pr_poly);
        if (!pr_at.empty()) {
          const std::vector<double> at = parse_list(pr_at);
          if (at.size() != poly.dim()) {
            throw UsageError(fmt::format("--at has {} values, polynomial has {} variables", at.size(), poly.dim()));
          }
          poly.set_params(at);
        }
        const ProbeReport rep = multivariate_stability(poly, pc);
        kv("lambda_max", rep.lambda_max);
        kv("q_term", rep.q_term);
        kv("d4", rep.d4);
        kv("alpha", rep.alpha);
        kv("negative_curvature", rep.negative_curvature ? "true" : "false");
        kv("cg_converged", rep.solve.converged ? "true" : "false");
      } else {
        std::vector<std::size_t> widths;
        for (double w : parse_list(pr_widths)) widths.push_back(static_cast<std::size_t>(w));
        if (widths.size() < 2) throw UsageError("--widths needs at least an input and an output width");
        auto data = std::make_shared<const Dataset>(
            pr_dataset.empty() ? make_two_gaussians(pr_samples, widths.front(), pr_separation, g.seed)
                               : read_dataset_csv(pr_dataset));
        TinyMLP model(widths, OutputLoss::kBCE, data, g.seed);
        const std::vector<ProbeRow> rows = train_and_probe(model, pr_eta, pr_steps, pr_every, pc);
        const fs::path path = output_path(g.out, pr_file);
        write_text_file(path, probe_csv(rows));
        kv("probes", static_cast<double>(rows.size()));
        kv("final_lambda_max", rows.back().lambda_max);
        kv("final_alpha", rows.back().alpha);
        kv("threshold", 2.0 / pr_eta);
        kv("file", path.string());
      }
    } else if (*plot) {
      SvgOptions opts;
      opts.reference_y = pl_ref;
      opts.log_y = pl_log;
      opts.title = pl_title;
      const fs::path path = output_path(g.out, pl_svg);
      render_svg_file(pl_csv, pl_x, pl_y, path, opts);
      kv("file", path.string());
    } else if (*preset) {
      PresetOverrides ov;
      if (pre_etas) ov.etas = parse_list(*pre_etas);
      if (pre_gammas) ov.eta_lpp_s0 = parse_list(*pre_gammas);
      ov.max_steps = pre_steps;
      if (pre_no_svg) ov.render_svg = false;
      const PresetPlan plan = make_plan(pre_name, g.seed, ov);
      const PresetOutcome out = run_preset(plan, g.out);
      kv("preset", plan.name);
      kv("files", static_cast<double>(out.manifest.size()));
      kv("failures", static_cast<double>(out.failures));
      kv("manifest", (fs::path(g.out) / "manifest.csv").string());
    }
  } catch (const UsageError& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return kExitUsage;
  } catch (const NumericError& e) {
    fmt::print(stderr, "numeric failure: {}\n", e.what());
    return kExitNumeric;
  } catch (const DomainError& e) {
    fmt::print(stderr, "numeric failure: {}\n", e.what());
    return kExitNumeric;
  } catch (const IoError& e) {
    fmt::print(stderr, "i/o error: {}\n", e.what());
    return kExitIo;
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitNumeric;
  }
  return 0;
}

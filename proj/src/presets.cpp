#include "eos/presets.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <memory>

#include <fmt/format.h>

#include "eos/bifurcation.hpp"
#include "eos/csv.hpp"
#include "eos/dataset.hpp"
#include "eos/errors.hpp"
#include "eos/models.hpp"
#include "eos/phase.hpp"
#include "eos/svg.hpp"

namespace eos {
namespace {

const ScalarLoss kMlsq = ScalarLoss::mlsq(1.0, 2);
const ScalarLoss kBce = ScalarLoss::bce(2.0 / 3.0);

constexpr double kZOffset = 0.02;

std::string family_tag(const ScalarLoss& loss) {
  switch (loss.family()) {
    case LossFamily::kBCE: return "bce";
    case LossFamily::kMLSq: return "mlsq";
    case LossFamily::kDegReg: return "degreg";
    case LossFamily::kQuadratic: return "quad";
  }
  return "loss";
}

std::string loss_label(const ScalarLoss& loss) {
  std::string s = loss.to_string();
  std::replace(s.begin(), s.end(), ',', ';');
  return s;
}

TrajectoryJob traj_job(const ScalarLoss& loss, double eta, double eta_lpp_s0, std::int64_t max_steps,
                       int stride) {
  return {fmt::format("{}_eta{:g}_g{:g}", family_tag(loss), eta, eta_lpp_s0),
          loss,
          eta,
          kZOffset,
          eta_lpp_s0,
          max_steps,
          stride};
}

// Even stride so two-step comparisons stay on one parity.
int even_stride(double eta, double base_eta, int base_stride) {
  const double r = (base_eta / eta) * (base_eta / eta);
  const int k = std::max(1, static_cast<int>(std::lround(r)));
  return 2 * ((base_stride * k + 1) / 2);
}

void add_grid(PresetPlan& plan, const ScalarLoss& loss, const std::vector<double>& etas,
              const std::vector<double>& gammas, std::int64_t max_steps, double base_eta, int base_stride) {
  for (double eta : etas) {
    for (double g : gammas) {
      plan.trajectories.push_back(traj_job(loss, eta, g, max_steps, even_stride(eta, base_eta, base_stride)));
    }
  }
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"xy-trajectory", "phase-space",         "end-of-training",
                                                 "delta-gap",     "bifurcation-overlay", "probe-demo"};
  return names;
}

PresetPlan make_plan(std::string_view name, std::uint64_t seed, const PresetOverrides& ov) {
  PresetPlan plan;
  plan.name = std::string(name);
  plan.seed = seed;
  if (ov.render_svg) plan.render_svg = *ov.render_svg;
  auto etas_or = [&](std::vector<double> d) { return ov.etas ? *ov.etas : d; };
  auto gammas_or = [&](std::vector<double> d) { return ov.eta_lpp_s0 ? *ov.eta_lpp_s0 : d; };
  auto steps_or = [&](std::int64_t d) { return ov.max_steps ? *ov.max_steps : d; };

  if (name == "xy-trajectory") {
    add_grid(plan, kMlsq, etas_or({0.01}), gammas_or({2.1}), steps_or(2'000'000), 0.01, 1);
    add_grid(plan, kBce, etas_or({0.04}), gammas_or({2.1}), steps_or(2'000'000), 0.04, 4);
  } else if (name == "phase-space") {
    add_grid(plan, kMlsq, etas_or({0.02, 0.01, 0.005}), gammas_or({2.05, 2.1, 2.15}), steps_or(2'000'000),
             0.01, 2);
    if (!plan.trajectories.empty()) plan.diagrams.push_back({"mlsq_overlay", kMlsq, 0.2505, 0.275, 50});
  } else if (name == "end-of-training") {
    add_grid(plan, kMlsq, etas_or({0.02, 0.01, 0.005}), gammas_or({2.1}), steps_or(5'000'000), 0.01, 100);
    add_grid(plan, kBce, etas_or({0.08, 0.04, 0.02}), gammas_or({2.1}), steps_or(5'000'000), 0.04, 100);
  } else if (name == "delta-gap") {
    std::vector<double> gammas;
    for (double d : {0.001, 0.005, 0.02, 0.05, 0.1}) gammas.push_back(2.0 + d);
    add_grid(plan, kMlsq, etas_or({0.01}), gammas_or(gammas), steps_or(5'000'000), 0.01, 10);
  } else if (name == "bifurcation-overlay") {
    add_grid(plan, kMlsq, etas_or({0.01}), gammas_or({2.1}), steps_or(2'000'000), 0.01, 2);
    add_grid(plan, kBce, etas_or({0.04}), gammas_or({2.1}), steps_or(2'000'000), 0.04, 4);
    if (!plan.trajectories.empty()) {
      plan.diagrams.push_back({"mlsq", kMlsq, 0.2505, 0.27, 20});
      plan.diagrams.push_back({"bce", kBce, 9.05, 9.5, 10});
    }
  } else if (name == "probe-demo") {
    for (double eta : etas_or({0.5})) {
      plan.probes.push_back({fmt::format("mlp_eta{:g}", eta), {2, 8, 8, 1}, 200, 2.0, eta, steps_or(3000), 50});
    }
  } else {
    throw UsageError(fmt::format("unknown preset '{}'", name));
  }
  return plan;
}

RunConfig job_config(const TrajectoryJob& job) {
  const auto zs = job.loss.z_star();
  if (!zs) throw UsageError(fmt::format("{}: loss has no finite minimum", job.id));
  const double lpp = job.loss.d2(*zs);
  RunConfig cfg;
  cfg.loss = job.loss;
  cfg.eta = job.eta;
  cfg.init = ZSInit{*zs + job.z_offset, job.eta_lpp_s0 / (job.eta * lpp)};
  cfg.max_steps = job.max_steps;
  cfg.record_stride = job.record_stride;
  return cfg;
}

void ManifestWriter::write(std::size_t slot, ManifestEntry entry, const std::string& content) {
  std::lock_guard<std::mutex> lock(mutex_);
  try {
    write_text_file(root_ / entry.file, content);
  } catch (const IoError& e) {
    entry.status = "error";
    entry.message = e.what();
    entries_.emplace_back(slot, std::move(entry));
    throw;
  }
  entries_.emplace_back(slot, std::move(entry));
}

void ManifestWriter::record(std::size_t slot, ManifestEntry entry) {
  std::lock_guard<std::mutex> lock(mutex_);
  entries_.emplace_back(slot, std::move(entry));
}

void ManifestWriter::render_svg(std::size_t slot, ManifestEntry entry, const std::string& csv_file,
                                const std::string& x_column, const std::vector<std::string>& y_columns,
                                std::optional<double> reference_y, bool log_y) {
  std::lock_guard<std::mutex> lock(mutex_);
  SvgOptions opts;
  opts.title = entry.job;
  opts.reference_y = reference_y;
  opts.reference_label = "2/eta";
  opts.log_y = log_y;
  try {
    render_svg_file(root_ / csv_file, x_column, y_columns, root_ / entry.file, opts);
  } catch (const UsageError& e) {
    entry.status = "error";
    entry.message = e.what();
  }
  entries_.emplace_back(slot, std::move(entry));
}

std::vector<ManifestEntry> ManifestWriter::entries() const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto sorted = entries_;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<ManifestEntry> out;
  out.reserve(sorted.size());
  for (auto& [slot, e] : sorted) out.push_back(std::move(e));
  return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out =
      "job,loss,eta,eta_lpp_s0,status,steps,final_z,final_sharpness,predicted_sharpness,abs_error,"
      "steps_phase_I,steps_phase_II,steps_phase_III,phases_ordered,max_balance_residual,"
      "max_conservation_residual\n";
  for (const auto& r : rows) {
    const std::string pred = r.predicted_sharpness ? fmt17(*r.predicted_sharpness) : "";
    const std::string err =
        r.predicted_sharpness ? fmt17(std::abs(r.final_sharpness - *r.predicted_sharpness)) : "";
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.job, r.loss, fmt17(r.eta),
                       fmt17(r.eta_lpp_s0), r.status, r.steps, fmt17(r.final_z), fmt17(r.final_sharpness), pred,
                       err, r.steps_in[0], r.steps_in[1], r.steps_in[2], r.phases_ordered ? 1 : 0,
                       fmt17(r.max_balance_residual), fmt17(r.max_conservation_residual));
  }
  return out;
}

std::string manifest_csv(const std::vector<ManifestEntry>& entries) {
  std::string out = "job,kind,file,status,message\n";
  for (const auto& e : entries) {
    std::string msg = e.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out += fmt::format("{},{},{},{},{}\n", e.job, e.kind, e.file, e.status, msg);
  }
  return out;
}

PresetOutcome run_preset(const PresetPlan& plan, const std::filesystem::path& out_dir, bool keep_trajectories) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", out_dir.string(), ec.message()));

  ManifestWriter writer(out_dir);
  PresetOutcome outcome;
  const std::size_t n_traj = plan.trajectories.size();
  const std::size_t n_diag = plan.diagrams.size();
  const std::size_t n_jobs = n_traj + n_diag + plan.probes.size();
  outcome.summary.resize(n_traj);
  outcome.trajectories.resize(keep_trajectories ? n_traj : 0);
  outcome.probes.resize(plan.probes.size());
  std::vector<int> failed(n_jobs, 0);
  std::vector<std::exception_ptr> io_errors(n_jobs);

  auto run_trajectory = [&](std::size_t i) {
    const TrajectoryJob& job = plan.trajectories[i];
    SummaryRow& row = outcome.summary[i];
    row.job = job.id;
    row.loss = loss_label(job.loss);
    row.eta = job.eta;
    row.eta_lpp_s0 = job.eta_lpp_s0;
    const std::string file = "traj_" + job.id + ".csv";
    try {
      const RunConfig cfg = job_config(job);
      Trajectory traj = run(cfg);
      row.status = std::string(status_tag(traj.status));
      row.steps = traj.steps;
      row.final_z = traj.final_state.z();
      row.final_sharpness = sharpness(traj.final_state, job.loss).lambda_max;
      try {
        row.predicted_sharpness = predict_final_sharpness(job.loss, job.eta);
      } catch (const NumericError&) {
        row.predicted_sharpness.reset();
      }
      const PhaseSummary ps = summarize_phases(traj.records, cfg.phase.window);
      std::copy(std::begin(ps.steps_in), std::end(ps.steps_in), std::begin(row.steps_in));
      row.phases_ordered = ps.ordered();
      row.max_balance_residual = traj.max_balance_residual;
      row.max_conservation_residual = traj.max_conservation_residual;
      if (traj.status == RunStatus::kDiverged || traj.status == RunStatus::kDomainExit) failed[i] = 1;
      writer.write(i, {job.id, "trajectory", file, row.status, ""}, trajectory_csv(traj));
      if (plan.render_svg) {
        writer.render_svg(i, {job.id, "svg", "sharpness_" + job.id + ".svg", "ok", ""}, file, "t",
                          {"sharpness"}, 2.0 / job.eta, false);
        writer.render_svg(i, {job.id, "svg", "phase_" + job.id + ".svg", "ok", ""}, file, "gamma", {"z"},
                          std::nullopt, false);
      }
      if (keep_trajectories) outcome.trajectories[i] = std::move(traj);
    } catch (const IoError&) {
      throw;
    } catch (const Error& e) {
      failed[i] = 1;
      row.status = "error";
      writer.record(i, {job.id, "trajectory", file, "error", e.what()});
    }
  };

  auto run_diagram = [&](std::size_t k) {
    const std::size_t slot = n_traj + k;
    const DiagramJob& job = plan.diagrams[k];
    const std::string file = "diagram_" + job.id + ".csv";
    try {
      const BifurcationDiagram d = diagram_serial(job.loss, job.eta_lo, job.eta_hi, job.count);
      writer.write(slot, {job.id, "diagram", file, d.monotone ? "ok" : "non-monotone", ""}, diagram_csv(d));
      if (plan.render_svg) {
        writer.render_svg(slot, {job.id, "svg", "diagram_" + job.id + ".svg", "ok", ""}, file, "eta",
                          {"z_minus", "z_plus"}, std::nullopt, false);
      }
    } catch (const IoError&) {
      throw;
    } catch (const Error& e) {
      failed[slot] = 1;
      writer.record(slot, {job.id, "diagram", file, "error", e.what()});
    }
  };

  auto run_probe = [&](std::size_t k) {
    const std::size_t slot = n_traj + n_diag + k;
    const ProbeJob& job = plan.probes[k];
    const std::string file = "probe_" + job.id + ".csv";
    try {
      auto data = std::make_shared<const Dataset>(
          make_two_gaussians(job.samples, job.widths.front(), job.separation, plan.seed));
      const std::string data_file = "dataset_" + job.id + ".csv";
      write_dataset_csv(*data, out_dir / data_file);
      writer.record(slot, {job.id, "dataset", data_file, "ok", ""});
      TinyMLP model(job.widths, OutputLoss::kBCE, data, plan.seed);
      ProbeConfig pc;
      pc.seed = plan.seed;
      std::vector<ProbeRow> rows = train_and_probe(model, job.eta, job.steps, job.probe_every, pc);
      writer.write(slot, {job.id, "probe", file, "ok", ""}, probe_csv(rows));
      if (plan.render_svg) {
        writer.render_svg(slot, {job.id, "svg", "sharpness_" + job.id + ".svg", "ok", ""}, file, "step",
                          {"lambda_max"}, 2.0 / job.eta, false);
        writer.render_svg(slot, {job.id, "svg", "alpha_" + job.id + ".svg", "ok", ""}, file, "step",
                          {"alpha"}, std::nullopt, false);
      }
      outcome.probes[k] = std::move(rows);
    } catch (const IoError&) {
      throw;
    } catch (const Error& e) {
      failed[slot] = 1;
      writer.record(slot, {job.id, "probe", file, "error", e.what()});
    }
  };

  const auto total = static_cast<std::int64_t>(n_jobs);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t j = 0; j < total; ++j) {
    const auto i = static_cast<std::size_t>(j);
    try {
      if (i < n_traj) {
        run_trajectory(i);
      } else if (i < n_traj + n_diag) {
        run_diagram(i - n_traj);
      } else {
        run_probe(i - n_traj - n_diag);
      }
    } catch (...) {
      io_errors[i] = std::current_exception();
    }
  }
  for (const auto& e : io_errors) {
    if (e) std::rethrow_exception(e);
  }

  outcome.manifest = writer.entries();
  for (int f : failed) outcome.failures += static_cast<std::size_t>(f);
  write_text_file(out_dir / "summary.csv", summary_csv(outcome.summary));
  write_text_file(out_dir / "manifest.csv", manifest_csv(outcome.manifest));
  return outcome;
}

}  // namespace eos

#pragma once

// Experiment presets: named grids of runs whose outputs are CSV files plus a
// summary and a manifest in one directory.

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eos/dynamics.hpp"
#include "eos/hessian_probe.hpp"
#include "eos/loss_zoo.hpp"

namespace eos {

struct TrajectoryJob {
  std::string id;
  ScalarLoss loss;
  double eta;
  double z_offset;    // z0 = z* + z_offset
  double eta_lpp_s0;  // s0 = eta_lpp_s0 / (eta l''(z*))
  std::int64_t max_steps;
  int record_stride;
};

struct DiagramJob {
  std::string id;
  ScalarLoss loss;
  double eta_lo;
  double eta_hi;
  int count;
};

struct ProbeJob {
  std::string id;
  std::vector<std::size_t> widths;
  std::size_t samples;
  double separation;
  double eta;
  std::int64_t steps;
  std::int64_t probe_every;
};

struct PresetPlan {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<TrajectoryJob> trajectories;
  std::vector<DiagramJob> diagrams;
  std::vector<ProbeJob> probes;
  bool render_svg = true;

  bool empty() const { return trajectories.empty() && diagrams.empty() && probes.empty(); }
};

// Replacement grids; an empty list empties the corresponding axis.
struct PresetOverrides {
  std::optional<std::vector<double>> etas;
  std::optional<std::vector<double>> eta_lpp_s0;  // also the 2 + delta axis
  std::optional<std::int64_t> max_steps;
  std::optional<bool> render_svg;
};

const std::vector<std::string>& preset_names();

// Throws UsageError for an unknown name.
PresetPlan make_plan(std::string_view name, std::uint64_t seed, const PresetOverrides& overrides = {});

struct ManifestEntry {
  std::string job;
  std::string kind;  // trajectory | diagram | probe | dataset | svg
  std::string file;  // relative to the output directory
  std::string status;
  std::string message;
};

struct SummaryRow {
  std::string job;
  std::string loss;  // canonical loss string with `;` separators
  double eta = 0.0;
  double eta_lpp_s0 = 0.0;
  std::string status;
  std::int64_t steps = 0;
  double final_z = 0.0;
  double final_sharpness = 0.0;
  std::optional<double> predicted_sharpness;
  std::int64_t steps_in[3] = {0, 0, 0};
  bool phases_ordered = false;
  double max_balance_residual = 0.0;
  double max_conservation_residual = 0.0;
};

// Serializes every file write of a sweep and keeps entries in job order.
class ManifestWriter {
 public:
  explicit ManifestWriter(std::filesystem::path root) : root_(std::move(root)) {}

  // Writes content and records the entry under slot; write failures are
  // recorded with status "error" and rethrown as IoError.
  void write(std::size_t slot, ManifestEntry entry, const std::string& content);
  void record(std::size_t slot, ManifestEntry entry);
  void render_svg(std::size_t slot, ManifestEntry entry, const std::string& csv_file,
                  const std::string& x_column, const std::vector<std::string>& y_columns,
                  std::optional<double> reference_y, bool log_y);

  std::vector<ManifestEntry> entries() const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  mutable std::mutex mutex_;
  std::vector<std::pair<std::size_t, ManifestEntry>> entries_;
};

struct PresetOutcome {
  std::vector<ManifestEntry> manifest;
  std::vector<SummaryRow> summary;
  std::vector<Trajectory> trajectories;  // in job order
  std::vector<std::vector<ProbeRow>> probes;
  std::size_t failures = 0;
};

// Runs the plan, writing per-job CSVs, summary.csv and manifest.csv into
// out_dir. Per-job numeric failures are recorded without stopping the sweep.
// keep_trajectories retains full trajectories in the outcome.
PresetOutcome run_preset(const PresetPlan& plan, const std::filesystem::path& out_dir,
                         bool keep_trajectories = false);

std::string summary_csv(const std::vector<SummaryRow>& rows);
std::string manifest_csv(const std::vector<ManifestEntry>& entries);

// Run configuration of a trajectory job.
RunConfig job_config(const TrajectoryJob& job);

}  // namespace eos

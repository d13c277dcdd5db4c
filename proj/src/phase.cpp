#include "eos/phase.hpp"

#include <cmath>

namespace eos {

namespace {

int rank_of(Phase p) {
  switch (p) {
    case Phase::kI:
      return 0;
    case Phase::kII:
      return 1;
    case Phase::kIII:
      return 2;
    case Phase::kUnclassified:
      break;
  }
  return -1;
}

}  // namespace

Phase classify_phase(const TrajectoryRecord& record, double eta, const InverseDiagram& inverse,
                     std::optional<double> trailing_envelope, double k_threshold) {
  if (record.gamma < inverse.threshold() && trailing_envelope &&
      record.envelope <= *trailing_envelope) {
    return Phase::kIII;
  }
  const auto eta_hat = inverse(record.z);
  if (!eta_hat) return Phase::kUnclassified;
  if (std::abs(*eta_hat - record.gamma) <= k_threshold * eta * eta) return Phase::kII;
  return Phase::kI;
}

PhaseSummary summarize_phases(const std::vector<TrajectoryRecord>& records, int window) {
  PhaseSummary out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Phase p = records[i].phase;
    if (p == Phase::kUnclassified) continue;
    if (!out.raw_runs.empty() && out.raw_runs.back().phase == p) {
      ++out.raw_runs.back().length;
    } else {
      out.raw_runs.push_back({p, i, 1});
    }
  }
  for (std::size_t i = 1; i < records.size(); ++i) {
    const int r = rank_of(records[i].phase);
    if (r >= 0) out.steps_in[r] += records[i].t - records[i - 1].t;
  }

  const auto min_len = static_cast<std::size_t>(std::max(window, 1));
  for (std::size_t k = 0; k < out.raw_runs.size(); ++k) {
    PhaseRun run = out.raw_runs[k];
    if (!out.smoothed_runs.empty() && (run.length < min_len || run.phase == out.smoothed_runs.back().phase)) {
      out.smoothed_runs.back().length += run.length;
      continue;
    }
    out.smoothed_runs.push_back(run);
  }

  out.starts_in_phase_one = !out.raw_runs.empty() && out.raw_runs.front().phase == Phase::kI;
  bool seen[3] = {false, false, false};
  for (const auto& r : out.smoothed_runs) seen[rank_of(r.phase)] = true;
  out.has_all_phases = seen[0] && seen[1] && seen[2];
  out.monotone = true;
  for (std::size_t k = 1; k < out.smoothed_runs.size(); ++k) {
    if (rank_of(out.smoothed_runs[k].phase) < rank_of(out.smoothed_runs[k - 1].phase)) {
      out.monotone = false;
    }
  }
  return out;
}

GammaMonotonicity check_phase_two_gamma(const std::vector<TrajectoryRecord>& records, double slack) {
  GammaMonotonicity out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].phase != Phase::kII) continue;
    for (std::size_t j = i + 1; j < records.size() && j <= i + 2; ++j) {
      if ((records[j].t - records[i].t) % 2 != 0) continue;
      if (records[j].phase == Phase::kII) {
        ++out.comparisons;
        const double inc = records[j].gamma - records[i].gamma;
        if (inc > slack) {
          ++out.violations;
          out.worst_increase = std::max(out.worst_increase, inc);
        }
      }
      break;
    }
  }
  return out;
}

}  // namespace eos

#pragma once

// Three-phase labelling of factored-GD trajectories.

#include <cstdint>
#include <optional>
#include <vector>

#include "eos/bifurcation.hpp"
#include "eos/dynamics.hpp"

namespace eos {

// trailing_envelope is the record envelope `window` records earlier, if any.
//   III: gamma < 2/l''(z*) and the envelope has not grown over the window.
//   II:  |Zhat(z) - gamma| <= K eta^2.
//   I:   otherwise; Unclassified when Zhat is undefined at z.
Phase classify_phase(const TrajectoryRecord& record, double eta, const InverseDiagram& inverse,
                     std::optional<double> trailing_envelope, double k_threshold);

struct PhaseRun {
  Phase phase;
  std::size_t first_record;
  std::size_t length;
};

struct PhaseSummary {
  std::vector<PhaseRun> raw_runs;
  std::vector<PhaseRun> smoothed_runs;
  bool starts_in_phase_one = false;
  bool has_all_phases = false;
  bool monotone = false;  // smoothed labels never step back
  std::int64_t steps_in[3] = {0, 0, 0};

  bool ordered() const { return starts_in_phase_one && has_all_phases && monotone; }
};

// Runs shorter than `window` records (other than the first) are merged into
// the preceding label before the ordering check. Unclassified records are
// skipped.
PhaseSummary summarize_phases(const std::vector<TrajectoryRecord>& records, int window);

struct GammaMonotonicity {
  std::size_t comparisons = 0;
  std::size_t violations = 0;
  double worst_increase = 0.0;
};

// Compares gamma between Phase-II records an even number of steps apart
// (the nearest such later record).
GammaMonotonicity check_phase_two_gamma(const std::vector<TrajectoryRecord>& records,
                                        double slack);

}  // namespace eos

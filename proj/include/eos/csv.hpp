#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "eos/bifurcation.hpp"
#include "eos/dynamics.hpp"
#include "eos/hessian_probe.hpp"

namespace eos {

// 17 significant digits, shortest round-trip form not required.
std::string fmt17(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a named column; throws UsageError when absent.
  std::size_t column(const std::string& name) const;
  // Column parsed as doubles; throws UsageError on a non-numeric cell.
  std::vector<double> numeric_column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

// Writes via a temporary file and rename; throws IoError.
void write_text_file(const std::filesystem::path& path, const std::string& content);

// t,x,y,z,s,gamma,loss,sharpness,grad_z,phase
std::string trajectory_csv(const Trajectory& traj);
// eta,eta_times_lpp,z_minus,z_plus,residual_minus,residual_plus
std::string diagram_csv(const BifurcationDiagram& diagram);
// step,loss,lambda_max,alpha,grad_norm
std::string probe_csv(const std::vector<ProbeRow>& rows);

}  // namespace eos

#include "eos/csv.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "eos/errors.hpp"

namespace eos {

std::string fmt17(double v) { return fmt::format("{:.17g}", v); }

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw UsageError(fmt::format("CSV has no column '{}'", name));
}

std::vector<double> CsvTable::numeric_column(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (c >= rows[r].size()) {
      throw UsageError(fmt::format("CSV row {} has no cell for column '{}'", r + 1, name));
    }
    const std::string& cell = rows[r][c];
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cell.size()) {
      throw UsageError(fmt::format("CSV row {} column '{}': '{}' is not numeric", r + 1, name, cell));
    }
    out.push_back(v);
  }
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw UsageError(fmt::format("'{}' is empty", path.string()));
  table.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    table.rows.push_back(split_line(line));
  }
  return table;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
    out << content;
    if (!out) throw IoError(fmt::format("write to '{}' failed", path.string()));
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(fmt::format("cannot move into '{}': {}", path.string(), ec.message()));
}

std::string trajectory_csv(const Trajectory& traj) {
  std::string out = "t,x,y,z,s,gamma,loss,sharpness,grad_z,phase\n";
  out.reserve(out.size() + traj.records.size() * 200);
  for (const auto& r : traj.records) {
    fmt::format_to(std::back_inserter(out), "{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}\n",
                   r.t, r.x, r.y, r.z, r.s, r.gamma, r.loss, r.sharpness, r.grad_z, phase_tag(r.phase));
  }
  return out;
}

std::string diagram_csv(const BifurcationDiagram& d) {
  std::string out = "eta,eta_times_lpp,z_minus,z_plus,residual_minus,residual_plus\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    fmt::format_to(std::back_inserter(out), "{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", d.eta[i],
                   d.eta[i] * d.curvature, d.z_minus[i], d.z_plus[i], d.residual_minus[i],
                   d.residual_plus[i]);
  }
  return out;
}

std::string probe_csv(const std::vector<ProbeRow>& rows) {
  std::string out = "step,loss,lambda_max,alpha,grad_norm\n";
  for (const auto& r : rows) {
    fmt::format_to(std::back_inserter(out), "{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.step, r.loss,
                   r.lambda_max, r.alpha, r.grad_norm);
  }
  return out;
}

}  // namespace eos

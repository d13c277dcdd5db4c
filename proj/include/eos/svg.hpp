#pragma once

// Minimal line-chart renderer for CSV columns.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eos/csv.hpp"

namespace eos {

struct SvgOptions {
  int width = 800;
  int height = 600;
  std::string title;
  std::optional<double> reference_y;  // horizontal line, e.g. 2/eta
  std::string reference_label = "reference";
  bool log_y = false;
};

// One polyline per y column plus a legend entry each. Throws UsageError on a
// missing column, a non-numeric cell, empty data or non-positive values under
// log_y.
std::string render_svg(const CsvTable& table, const std::string& x_column,
                       const std::vector<std::string>& y_columns, const SvgOptions& options = {});

// Reads csv_path and writes svg_path only if rendering succeeds.
void render_svg_file(const std::filesystem::path& csv_path, const std::string& x_column,
                     const std::vector<std::string>& y_columns, const std::filesystem::path& svg_path,
                     const SvgOptions& options = {});

}  // namespace eos

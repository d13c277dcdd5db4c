#include "eos/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "eos/errors.hpp"

namespace eos {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (hi - lo <= 0.0) {
      const double w = std::max(std::abs(lo), 1.0) * 0.5;
      lo -= w;
      hi += w;
    }
  }
};

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const CsvTable& table, const std::string& x_column,
                       const std::vector<std::string>& y_columns, const SvgOptions& options) {
  if (y_columns.empty()) throw UsageError("plot: at least one y column is required");
  if (table.rows.empty()) throw UsageError("plot: CSV has no data rows");
  const std::vector<double> xs = table.numeric_column(x_column);
  std::vector<std::vector<double>> ys;
  for (const auto& name : y_columns) ys.push_back(table.numeric_column(name));

  auto ty = [&](double v) {
    if (!options.log_y) return v;
    if (!(v > 0.0)) throw UsageError(fmt::format("plot: log scale needs positive values, got {}", v));
    return std::log10(v);
  };

  Range xr, yr;
  for (double v : xs) xr.add(v);
  for (const auto& col : ys) {
    for (double v : col) yr.add(ty(v));
  }
  if (options.reference_y) yr.add(ty(*options.reference_y));
  xr.pad();
  yr.pad();

  const double left = 70, right = 160, top = 40, bottom = 50;
  const double pw = options.width - left - right;
  const double ph = options.height - top - bottom;
  auto px = [&](double v) { return left + (v - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double v) { return top + (1.0 - (ty(v) - yr.lo) / (yr.hi - yr.lo)) * ph; };

  std::string out;
  out += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n",
      options.width, options.height);
  out += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", options.width, options.height);
  if (!options.title.empty()) {
    out += fmt::format("<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
                       options.width / 2, escape(options.title));
  }
  out += fmt::format(
      "<g class=\"axes\" stroke=\"black\" fill=\"none\"><rect x=\"{}\" y=\"{}\" width=\"{}\" "
      "height=\"{}\"/></g>\n",
      left, top, pw, ph);

  out += "<g class=\"ticks\" font-size=\"11\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    const double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    const double label_y = options.log_y ? std::pow(10.0, fy) : fy;
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{:.4g}</text>\n", px(fx),
                       top + ph + 18, fx);
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.4g}</text>\n", left - 6,
                       top + (1.0 - i / 4.0) * ph + 4, label_y);
  }
  out += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", left + pw / 2,
                     options.height - 10, escape(x_column));
  out += "</g>\n";

  for (std::size_t c = 0; c < ys.size(); ++c) {
    out += fmt::format("<polyline class=\"series\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" points=\"",
                       kPalette[c % std::size(kPalette)]);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i) out += ' ';
      out += fmt::format("{:.2f},{:.2f}", px(xs[i]), py(ys[c][i]));
    }
    out += "\"/>\n";
  }

  if (options.reference_y) {
    const double y = py(*options.reference_y);
    out += fmt::format(
        "<line class=\"reference\" x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"gray\" "
        "stroke-dasharray=\"6,4\"/>\n",
        left, y, left + pw, y);
  }

  out += "<g class=\"legend\" font-size=\"12\">\n";
  std::size_t slot = 0;
  auto entry = [&](const std::string& label, const char* colour, bool dashed) {
    const double y = top + 12 + 18.0 * static_cast<double>(slot++);
    const double x = left + pw + 12;
    out += fmt::format(
        "<g class=\"legend-entry\"><line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\"{}/>"
        "<text x=\"{:.2f}\" y=\"{:.2f}\">{}</text></g>\n",
        x, y, x + 20, y, colour, dashed ? " stroke-dasharray=\"6,4\"" : "", x + 26, y + 4, escape(label));
  };
  for (std::size_t c = 0; c < y_columns.size(); ++c) {
    entry(y_columns[c], kPalette[c % std::size(kPalette)], false);
  }
  if (options.reference_y) entry(options.reference_label, "gray", true);
  out += "</g>\n</svg>\n";
  return out;
}

void render_svg_file(const std::filesystem::path& csv_path, const std::string& x_column,
                     const std::vector<std::string>& y_columns, const std::filesystem::path& svg_path,
                     const SvgOptions& options) {
  const CsvTable table = read_csv(csv_path);
  const std::string svg = render_svg(table, x_column, y_columns, options);
  write_text_file(svg_path, svg);
}

}  // namespace eos

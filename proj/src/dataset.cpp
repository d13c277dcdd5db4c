#include "eos/dataset.hpp"

#include <random>

#include <fmt/format.h>

#include "eos/csv.hpp"
#include "eos/errors.hpp"

namespace eos {

Dataset make_two_gaussians(std::size_t samples, std::size_t features, double separation,
                           std::uint64_t seed) {
  if (features == 0) throw UsageError("dataset needs at least one feature");
  Dataset data;
  data.features = features;
  data.labels.reserve(samples);
  data.x.reserve(samples * features);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < samples; ++i) {
    const double label = static_cast<double>(i % 2);
    data.labels.push_back(label);
    for (std::size_t k = 0; k < features; ++k) {
      const double centre = k == 0 ? (label - 0.5) * separation : 0.0;
      data.x.push_back(centre + noise(rng));
    }
  }
  return data;
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::string out = "label";
  for (std::size_t k = 0; k < data.features; ++k) out += fmt::format(",feat_{}", k);
  out += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += fmt17(data.labels[i]);
    for (std::size_t k = 0; k < data.features; ++k) out += ',' + fmt17(data.row(i)[k]);
    out += '\n';
  }
  write_text_file(path, out);
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  if (table.header.empty() || table.header.front() != "label") {
    throw UsageError(fmt::format("'{}': dataset header must start with 'label'", path.string()));
  }
  Dataset data;
  data.features = table.header.size() - 1;
  for (std::size_t k = 0; k < data.features; ++k) {
    if (table.header[k + 1] != fmt::format("feat_{}", k)) {
      throw UsageError(fmt::format("'{}': expected column feat_{}", path.string(), k));
    }
  }
  data.labels = table.numeric_column("label");
  std::vector<std::vector<double>> cols;
  for (std::size_t k = 0; k < data.features; ++k) cols.push_back(table.numeric_column(table.header[k + 1]));
  data.x.reserve(data.labels.size() * data.features);
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    for (std::size_t k = 0; k < data.features; ++k) data.x.push_back(cols[k][i]);
  }
  return data;
}

}  // namespace eos

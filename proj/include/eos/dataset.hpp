#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace eos {

// In-memory labelled dataset, features stored row-major.
struct Dataset {
  std::size_t features = 0;
  std::vector<double> labels;
  std::vector<double> x;

  std::size_t size() const { return labels.size(); }
  const double* row(std::size_t i) const { return x.data() + i * features; }
};

// Two isotropic Gaussian blobs centred at -separation/2 and +separation/2 on
// the first axis; labels 0 and 1, alternating.
Dataset make_two_gaussians(std::size_t samples, std::size_t features, double separation,
                           std::uint64_t seed);

// Headered CSV `label,feat_0,...,feat_{k-1}`.
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace eos

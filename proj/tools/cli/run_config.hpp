#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "popform/frf_model.hpp"

namespace popform::cli {

struct RunConfig {
  frf::FrequencyBand band{48.0, 56.0};
  std::size_t k = 4;
  std::uint64_t seed = 1;
  std::size_t restarts = 10;
  std::size_t copies_train = 20;
  double noise_fraction = 0.05;
  std::size_t n_train = 600;
  std::size_t copies_test = 1000;
  std::vector<double> sweep_pct = {0.0, -0.5, -1.0, -1.5, -2.0, -2.5, -3.0, -3.5};
  double confidence = 0.99;
  std::size_t grid_size = 200;
  std::size_t trials = 50;
  std::size_t samples = 1000;
  std::size_t band_samples = 10000;
  std::size_t max_em_iters = 200;
  bool freeze_noise = false;
  int sign = +1;

  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
// Keys missing from `j` keep their current value; unknown keys are rejected.
void merge_json(RunConfig& config, const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

// FNV-1a over the compact JSON form, as 16 hex digits.
std::string config_hash(const RunConfig& config);

}  // namespace popform::cli

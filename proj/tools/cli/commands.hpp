#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace popform::cli {

namespace fs = std::filesystem;

struct SynthOptions {
  std::optional<fs::path> specs;  // default population when empty
  bool second_mode = false;
  fs::path out_dir = ".";
};

struct FitOptions {
  std::optional<fs::path> data;  // <out_dir>/clean.csv
  fs::path out_dir = ".";
};

struct ThresholdOptions {
  std::optional<fs::path> form;  // <out_dir>/form.json
  std::optional<fs::path> data;  // <out_dir>/clean.csv
  fs::path out_dir = ".";
};

struct SweepOptions {
  std::optional<fs::path> form;       // <out_dir>/form.json
  std::optional<fs::path> specs;      // <out_dir>/specs.json
  std::optional<fs::path> threshold;  // <out_dir>/threshold.json
  fs::path out_dir = ".";
};

struct ScoreOptions {
  fs::path form;
  fs::path threshold;
  fs::path record;
  std::optional<fs::path> out;
};

// Each command writes its artifacts and returns the process exit code.
int cmd_synth(const RunConfig& config, const SynthOptions& opts, std::ostream& log);
int cmd_fit(const RunConfig& config, const FitOptions& opts, std::ostream& log);
int cmd_threshold(const RunConfig& config, const ThresholdOptions& opts, std::ostream& log);
int cmd_sweep(const RunConfig& config, const SweepOptions& opts, std::ostream& log);
// 0 when the record is inlying, 1 when it is outlying.
int cmd_score(const RunConfig& config, const ScoreOptions& opts, std::ostream& out,
              std::ostream& log);

// Parses argv, dispatches and maps every failure to an exit code:
// 2 for bad input, 3 for numerical or fit failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace popform::cli

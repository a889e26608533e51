#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cdgmae/errors.hpp"
#include "cdgmae/gradcheck_suite.hpp"
#include "cdgmae/labelprop.hpp"
#include "cdgmae/trainer.hpp"

namespace cdgmae::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kNumerical = 3 };

class UsageError : public Error {
 public:
  using Error::Error;
};

/// A parsed invocation. Only the fields relevant to `name` are meaningful.
struct Command {
  std::string name;  // "help" when only usage text was requested
  std::string help;
  std::uint64_t seed = 0;

  std::filesystem::path out;
  std::filesystem::path data;
  std::filesystem::path checkpoint;
  std::filesystem::path config;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> feature_pairs;
  std::filesystem::path save_features;

  // synth-views / synth-video
  std::size_t count = 8;
  std::size_t views = 4;
  std::size_t frames = 10;
  std::size_t size = 32;
  double strength = 0.5;
  double speed = 0.5;
  double spin = 0.0;
  bool ppm = false;
  bool grid_aligned = false;  // squares on patch-block edges

  // train / flops
  TrainConfig train;
  std::vector<std::pair<std::size_t, double>> flops_settings;

  // metrics
  bool both_directions = false;

  // labelprop
  PropagationConfig propagation;
  EvalTask task = EvalTask::kSegmentation;
  bool identity_features = false;
  std::size_t patch = 4;

  // gradcheck
  GradCheckOptions gradcheck;
};

/// Throws UsageError on unknown subcommands or flags, missing required flags
/// and invalid values. `--config` entries are applied first; flags win.
Command parse_args(int argc, const char* const* argv);

/// Executes a parsed command; returns an ExitCode.
int run(const Command& command, std::ostream& out, std::ostream& err);

/// parse_args + run with errors mapped to exit codes.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cdgmae::cli

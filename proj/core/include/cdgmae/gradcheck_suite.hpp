#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cdgmae/gradcheck.hpp"

namespace cdgmae {

/// Float analytic gradients against 64-bit central differences.
struct GradCheckOptions {
  std::size_t trials = 20;
  std::uint64_t seed = 0;
  double step = 1e-5;
  double primitive_tolerance = 1e-4;
  double model_tolerance = 1e-3;
  std::string model_preset = "tiny";
  bool include_model = true;
  /// Trial 0 probes every model coordinate; later trials sample this many
  /// coordinates per parameter tensor.
  std::size_t sampled_coordinates = 6;
};

/// One result per primitive (and per variant, e.g. softmax axis).
std::vector<GradCheckResult> check_primitives(const GradCheckOptions& options);

/// End-to-end reconstruction loss of a multi-anchor model.
GradCheckResult check_model(const GradCheckOptions& options);

std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckOptions& options);

std::string format_gradcheck_report(const std::vector<GradCheckResult>& results);

}  // namespace cdgmae

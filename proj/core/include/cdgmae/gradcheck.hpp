#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "cdgmae/tensor.hpp"

namespace cdgmae {

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every
/// coordinate of x, evaluated in 64-bit.
Tensor64 finite_diff_grad(const std::function<double(const Tensor64&)>& f, const Tensor64& x, double h);

/// Central difference for a single coordinate of a leaf that `f` reads
/// implicitly. The leaf is restored before returning.
double finite_diff_coordinate(const std::function<double()>& f, Tensor64& leaf, std::size_t index, double h);

/// Normwise relative error max|a - r| / max(max|r|, floor).
double relative_error(std::span<const double> analytic, std::span<const double> reference, double floor = 1e-8);

struct GradCheckResult {
  std::string name;
  std::size_t trials = 0;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_relative_error <= tolerance; }
};

}  // namespace cdgmae

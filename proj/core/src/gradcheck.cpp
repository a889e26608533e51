#include "cdgmae/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cdgmae/errors.hpp"

namespace cdgmae {

Tensor64 finite_diff_grad(const std::function<double(const Tensor64&)>& f, const Tensor64& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad: step must be positive");
  Tensor64 probe = x.detach();
  std::vector<double> grad(x.size());
  auto values = probe.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = f(probe);
    values[i] = saved - h;
    const double down = f(probe);
    values[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return Tensor64::from_data(x.shape(), std::move(grad));
}

double finite_diff_coordinate(const std::function<double()>& f, Tensor64& leaf, std::size_t index, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_coordinate: step must be positive");
  auto values = leaf.mutable_data();
  if (index >= values.size()) throw ContractError("finite_diff_coordinate: index out of range");
  const double saved = values[index];
  values[index] = saved + h;
  const double up = f();
  values[index] = saved - h;
  const double down = f();
  values[index] = saved;
  return (up - down) / (2.0 * h);
}

double relative_error(std::span<const double> analytic, std::span<const double> reference, double floor) {
  if (analytic.size() != reference.size()) throw DimensionError("relative_error: length mismatch");
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - reference[i]));
    scale = std::max(scale, std::abs(reference[i]));
  }
  return diff / std::max(scale, floor);
}

}  // namespace cdgmae

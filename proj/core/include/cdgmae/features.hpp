#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cdgmae/tensor.hpp"

namespace cdgmae {

/// Encoder output for one image: a global (class-token) vector and one
/// local vector per grid cell in row-major order.
struct FeatureSet {
  std::vector<float> cls;
  Tensor patches;  // [rows * cols, D]
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string source_id;

  std::size_t size() const { return rows * cols; }
  std::size_t dim() const { return cls.size(); }
};

}  // namespace cdgmae

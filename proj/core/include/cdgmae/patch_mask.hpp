#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cdgmae/tensor.hpp"

namespace cdgmae {

/// Non-overlapping P x P patches of an H x W x C image in row-major grid
/// order; each token is the flattened P x P x C block.
struct PatchSequence {
  Tensor tokens;  // [rows * cols, P * P * C]
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t patch_size = 0;
  std::size_t channels = 0;

  std::size_t size() const { return rows * cols; }
  std::size_t token_dim() const { return patch_size * patch_size * channels; }
};

PatchSequence patchify(const Tensor& image, std::size_t patch_size);
Tensor unpatchify(const PatchSequence& seq);

/// Partition of {0..N-1} into visible and masked patch indices, both sorted.
struct MaskPlan {
  std::vector<std::size_t> visible;
  std::vector<std::size_t> masked;
  double ratio = 0.0;
  std::uint64_t seed = 0;

  std::size_t size() const { return visible.size() + masked.size(); }
};

/// max(1, floor(N (1 - ratio))).
std::size_t visible_count(std::size_t n, double ratio);

/// Uniformly random visible subset of size visible_count(n, ratio).
/// Requires n >= 1 and 0 <= ratio < 1.
MaskPlan sample_mask(std::size_t n, double ratio, std::uint64_t seed);

/// Plan that keeps every patch visible.
MaskPlan full_plan(std::size_t n);

struct MaskedTokens {
  Tensor visible;  // rows of plan.visible, in order
  Tensor masked;   // rows of plan.masked, in order (reconstruction targets)
};

MaskedTokens apply_mask(const PatchSequence& seq, const MaskPlan& plan);

/// Full-length [N x D] sequence: row plan.visible[i] holds visible_out row i,
/// every masked position holds mask_token ([D] or [1 x D]).
template <typename T>
BasicTensor<T> scatter_restore(const BasicTensor<T>& visible_out, const BasicTensor<T>& mask_token,
                               const MaskPlan& plan);

}  // namespace cdgmae

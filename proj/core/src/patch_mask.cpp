#include "cdgmae/patch_mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cdgmae/errors.hpp"
#include "cdgmae/ops.hpp"
#include "cdgmae/random.hpp"

namespace cdgmae {

PatchSequence patchify(const Tensor& image, std::size_t patch_size) {
  if (image.rank() != 3) throw DimensionError("patchify: expected H x W x C image, got " + shape_string(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (patch_size == 0 || h % patch_size != 0 || w % patch_size != 0) {
    throw DimensionError("patchify: image " + shape_string(image.shape()) + " not divisible by patch size " +
                         std::to_string(patch_size));
  }
  PatchSequence seq;
  seq.rows = h / patch_size;
  seq.cols = w / patch_size;
  seq.patch_size = patch_size;
  seq.channels = c;
  const std::size_t dim = seq.token_dim();
  const auto px = image.data();
  std::vector<float> tokens(seq.size() * dim);
  for (std::size_t pr = 0; pr < seq.rows; ++pr) {
    for (std::size_t pc = 0; pc < seq.cols; ++pc) {
      float* dst = tokens.data() + (pr * seq.cols + pc) * dim;
      for (std::size_t y = 0; y < patch_size; ++y) {
        const float* src = px.data() + ((pr * patch_size + y) * w + pc * patch_size) * c;
        std::copy_n(src, patch_size * c, dst + y * patch_size * c);
      }
    }
  }
  seq.tokens = Tensor::from_data({seq.size(), dim}, std::move(tokens));
  return seq;
}

Tensor unpatchify(const PatchSequence& seq) {
  const std::size_t p = seq.patch_size, c = seq.channels, dim = seq.token_dim();
  if (seq.tokens.shape() != Shape{seq.size(), dim}) {
    throw DimensionError("unpatchify: tokens " + shape_string(seq.tokens.shape()) + " inconsistent with grid");
  }
  const std::size_t h = seq.rows * p, w = seq.cols * p;
  const auto tv = seq.tokens.data();
  std::vector<float> px(h * w * c);
  for (std::size_t pr = 0; pr < seq.rows; ++pr) {
    for (std::size_t pc = 0; pc < seq.cols; ++pc) {
      const float* src = tv.data() + (pr * seq.cols + pc) * dim;
      for (std::size_t y = 0; y < p; ++y) {
        std::copy_n(src + y * p * c, p * c, px.data() + ((pr * p + y) * w + pc * p) * c);
      }
    }
  }
  return Tensor::from_data({h, w, c}, std::move(px));
}

std::size_t visible_count(std::size_t n, double ratio) {
  const double kept = std::floor(static_cast<double>(n) * (1.0 - ratio) + 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::max(0.0, kept)));
}

MaskPlan sample_mask(std::size_t n, double ratio, std::uint64_t seed) {
  if (n == 0) throw ContractError("sample_mask: N must be at least 1");
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ContractError("sample_mask: ratio must lie in [0, 1)");
  const std::size_t keep = visible_count(n, ratio);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first `keep` slots are a uniform subset.
  for (std::size_t i = 0; i < keep; ++i) std::swap(order[i], order[i + rng.below(n - i)]);
  MaskPlan plan;
  plan.ratio = ratio;
  plan.seed = seed;
  plan.visible.assign(order.begin(), order.begin() + static_cast<long>(keep));
  plan.masked.assign(order.begin() + static_cast<long>(keep), order.end());
  std::sort(plan.visible.begin(), plan.visible.end());
  std::sort(plan.masked.begin(), plan.masked.end());
  return plan;
}

MaskPlan full_plan(std::size_t n) {
  MaskPlan plan;
  plan.visible.resize(n);
  std::iota(plan.visible.begin(), plan.visible.end(), std::size_t{0});
  return plan;
}

MaskedTokens apply_mask(const PatchSequence& seq, const MaskPlan& plan) {
  if (plan.size() != seq.size()) {
    throw ContractError("apply_mask: plan covers " + std::to_string(plan.size()) + " patches, sequence has " +
                        std::to_string(seq.size()));
  }
  NoGradGuard no_grad;
  return {gather_rows(seq.tokens, plan.visible), gather_rows(seq.tokens, plan.masked)};
}

template <typename T>
BasicTensor<T> scatter_restore(const BasicTensor<T>& visible_out, const BasicTensor<T>& mask_token,
                               const MaskPlan& plan) {
  if (visible_out.rank() != 2 || visible_out.dim(0) != plan.visible.size()) {
    throw ContractError("scatter_restore: visible block " + shape_string(visible_out.shape()) +
                        " does not match " + std::to_string(plan.visible.size()) + " visible patches");
  }
  const std::size_t d = visible_out.dim(1);
  const BasicTensor<T> token = mask_token.rank() == 1 ? reshape(mask_token, {1, mask_token.dim(0)}) : mask_token;
  if (token.shape() != Shape{1, d}) {
    throw ContractError("scatter_restore: mask token " + shape_string(mask_token.shape()) + " vs width " +
                        std::to_string(d));
  }
  const std::size_t n = plan.size();
  const std::size_t nv = plan.visible.size();
  // Rows [0, nv) of the stacked block are visible outputs, [nv, n) mask tokens.
  std::vector<std::size_t> source(n);
  for (std::size_t i = 0; i < nv; ++i) source[plan.visible[i]] = i;
  for (std::size_t i = 0; i < plan.masked.size(); ++i) source[plan.masked[i]] = nv + i;
  BasicTensor<T> stacked = visible_out;
  if (!plan.masked.empty()) {
    const std::vector<std::size_t> zeros(plan.masked.size(), 0);
    stacked = concat<T>({visible_out, gather_rows(token, zeros)}, 0);
  }
  return gather_rows(stacked, source);
}

template BasicTensor<float> scatter_restore(const BasicTensor<float>&, const BasicTensor<float>&, const MaskPlan&);
template BasicTensor<double> scatter_restore(const BasicTensor<double>&, const BasicTensor<double>&,
                                             const MaskPlan&);

}  // namespace cdgmae

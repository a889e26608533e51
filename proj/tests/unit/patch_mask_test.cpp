#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cdgmae/errors.hpp"
#include "cdgmae/ops.hpp"
#include "cdgmae/patch_mask.hpp"
#include "test_support.hpp"

namespace cdgmae {
namespace {

Tensor ramp_image(std::size_t h, std::size_t w, std::size_t c) {
  std::vector<float> v(h * w * c);
  std::iota(v.begin(), v.end(), 0.0f);
  return Tensor::from_data({h, w, c}, std::move(v));
}

TEST(Patchify, StandardGridHas196Patches) {
  PatchSequence seq = patchify(Tensor::zeros({224, 224, 3}), 16);
  EXPECT_EQ(seq.size(), 196u);
  EXPECT_EQ(seq.tokens.shape(), (Shape{196, 768}));
}

TEST(Patchify, SinglePatchIsFlattenedImage) {
  Tensor img = ramp_image(4, 4, 3);
  PatchSequence seq = patchify(img, 4);
  ASSERT_EQ(seq.size(), 1u);
  EXPECT_EQ(test::values(seq.tokens), test::values(img));
}

TEST(Patchify, HandEnumeratedBlocks) {
  // 8x8 image with value = row * 8 + col; 4x4 patches.
  PatchSequence seq = patchify(ramp_image(8, 8, 1), 4);
  ASSERT_EQ(seq.size(), 4u);
  for (std::size_t pr = 0; pr < 2; ++pr)
    for (std::size_t pc = 0; pc < 2; ++pc)
      for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) {
          const float expected = static_cast<float>((pr * 4 + y) * 8 + pc * 4 + x);
          EXPECT_EQ(seq.tokens[(pr * 2 + pc) * 16 + y * 4 + x], expected);
        }
  // first token spelled out
  const std::vector<float> first = {0, 1, 2, 3, 8, 9, 10, 11, 16, 17, 18, 19, 24, 25, 26, 27};
  EXPECT_TRUE(std::equal(first.begin(), first.end(), seq.tokens.data().begin()));
}

TEST(Patchify, RoundTripIsExact) {
  Rng rng(1);
  for (std::size_t p : {1u, 2u, 4u, 8u}) {
    for (std::size_t c : {1u, 3u}) {
      const std::size_t h = p * (1 + rng.below(4)), w = p * (1 + rng.below(4));
      Tensor img = test::random_tensor({h, w, c}, rng);
      Tensor back = unpatchify(patchify(img, p));
      EXPECT_EQ(back.shape(), img.shape());
      EXPECT_EQ(test::values(back), test::values(img));
    }
  }
}

TEST(Patchify, NonDivisibleRejected) {
  EXPECT_THROW(patchify(Tensor::zeros({10, 8, 3}), 4), DimensionError);
  EXPECT_THROW(patchify(Tensor::zeros({8, 8}), 4), DimensionError);
}

TEST(SampleMask, VisibleCounts) {
  EXPECT_EQ(sample_mask(196, 0.0, 1).visible.size(), 196u);
  MaskPlan p90 = sample_mask(196, 0.90, 1);
  EXPECT_EQ(p90.visible.size(), 19u);
  EXPECT_EQ(p90.masked.size(), 177u);
  EXPECT_EQ(sample_mask(196, 0.985, 1).visible.size(), 2u);
  EXPECT_EQ(visible_count(196, 0.5), 98u);
  EXPECT_EQ(visible_count(196, 0.75), 49u);
  EXPECT_EQ(visible_count(3, 0.99), 1u);
}

TEST(SampleMask, PartitionAndCardinalityProperty) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(300);
    const double ratio = rng.uniform(0.0, 0.999);
    const std::uint64_t seed = rng.next_u64();
    MaskPlan plan = sample_mask(n, ratio, seed);
    const std::size_t expected = std::max<std::size_t>(1, std::size_t(std::floor(n * (1.0 - ratio) + 1e-9)));
    ASSERT_EQ(plan.visible.size(), expected);
    ASSERT_TRUE(std::is_sorted(plan.visible.begin(), plan.visible.end()));
    ASSERT_TRUE(std::is_sorted(plan.masked.begin(), plan.masked.end()));
    std::vector<std::size_t> all = plan.visible;
    all.insert(all.end(), plan.masked.begin(), plan.masked.end());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all.size(), n);
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(all[i], i);
  }
}

TEST(SampleMask, UniformInclusionFrequency) {
  std::vector<int> hits(10, 0);
  const int draws = 10000;
  for (int d = 0; d < draws; ++d)
    for (std::size_t i : sample_mask(10, 0.5, mix_seed(99, d)).visible) ++hits[i];
  for (int h : hits) EXPECT_NEAR(h / double(draws), 0.5, 0.03);
}

TEST(SampleMask, DeterministicPerSeed) {
  EXPECT_EQ(sample_mask(196, 0.75, 42).visible, sample_mask(196, 0.75, 42).visible);
  EXPECT_NE(sample_mask(196, 0.75, 42).visible, sample_mask(196, 0.75, 43).visible);
}

TEST(SampleMask, Contracts) {
  EXPECT_THROW(sample_mask(10, 1.0, 0), ContractError);
  EXPECT_THROW(sample_mask(10, -0.1, 0), ContractError);
  EXPECT_THROW(sample_mask(0, 0.5, 0), ContractError);
}

TEST(ApplyMask, RatioZeroKeepsEverything) {
  Rng rng(3);
  PatchSequence seq = patchify(test::random_tensor({8, 8, 3}, rng), 4);
  MaskedTokens mt = apply_mask(seq, sample_mask(seq.size(), 0.0, 1));
  EXPECT_EQ(test::values(mt.visible), test::values(seq.tokens));
  EXPECT_EQ(mt.masked.dim(0), 0u);
}

TEST(ApplyMask, SingleVisibleToken) {
  PatchSequence seq = patchify(ramp_image(8, 8, 1), 4);
  MaskPlan plan;
  plan.visible = {0};
  plan.masked = {1, 2, 3};
  MaskedTokens mt = apply_mask(seq, plan);
  EXPECT_EQ(mt.visible.shape(), (Shape{1, 16}));
  EXPECT_EQ(mt.visible[5], seq.tokens[5]);
  ASSERT_EQ(mt.masked.dim(0), 3u);
  for (std::size_t i = 0; i < 48; ++i) EXPECT_EQ(mt.masked[i], seq.tokens[16 + i]);
}

TEST(ApplyMask, GathersReconstructSequence) {
  Rng rng(4);
  PatchSequence seq = patchify(test::random_tensor({16, 16, 3}, rng), 4);
  MaskPlan plan = sample_mask(seq.size(), 0.6, 7);
  MaskedTokens mt = apply_mask(seq, plan);
  const std::size_t d = seq.token_dim();
  std::vector<float> rebuilt(seq.tokens.size(), -1.0f);
  for (std::size_t i = 0; i < plan.visible.size(); ++i)
    std::copy_n(mt.visible.data().begin() + i * d, d, rebuilt.begin() + plan.visible[i] * d);
  for (std::size_t i = 0; i < plan.masked.size(); ++i)
    std::copy_n(mt.masked.data().begin() + i * d, d, rebuilt.begin() + plan.masked[i] * d);
  EXPECT_EQ(rebuilt, test::values(seq.tokens));
}

TEST(ApplyMask, SizeMismatchRejected) {
  PatchSequence seq = patchify(Tensor::zeros({8, 8, 1}), 4);
  EXPECT_THROW(apply_mask(seq, sample_mask(5, 0.5, 0)), ContractError);
}

TEST(ScatterRestore, AllVisibleIsIdentity) {
  Rng rng(5);
  Tensor vis = test::random_tensor({6, 3}, rng);
  Tensor out = scatter_restore(vis, Tensor::full({3}, 9.0f), full_plan(6));
  EXPECT_EQ(test::values(out), test::values(vis));
}

TEST(ScatterRestore, OneRealTokenAmongMaskTokens) {
  MaskPlan plan;
  plan.visible = {2};
  plan.masked = {0, 1, 3};
  Tensor vis = Tensor::from_data({1, 2}, {5.0f, 6.0f});
  Tensor out = scatter_restore(vis, Tensor::from_data({1, 2}, {-1.0f, -2.0f}), plan);
  EXPECT_EQ(test::values(out), (std::vector<float>{-1, -2, -1, -2, 5, 6, -1, -2}));
}

TEST(ScatterRestore, MatchesHandScatter) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    MaskPlan plan = sample_mask(25, rng.uniform(0, 0.95), rng.next_u64());
    Tensor vis = test::random_tensor({plan.visible.size(), 4}, rng);
    Tensor token = test::random_tensor({4}, rng);
    Tensor out = scatter_restore(vis, token, plan);
    std::vector<float> expected(25 * 4);
    for (std::size_t pos = 0; pos < 25; ++pos)
      for (std::size_t c = 0; c < 4; ++c) expected[pos * 4 + c] = token[c];
    for (std::size_t i = 0; i < plan.visible.size(); ++i)
      for (std::size_t c = 0; c < 4; ++c) expected[plan.visible[i] * 4 + c] = vis[i * 4 + c];
    EXPECT_EQ(test::values(out), expected);
  }
}

TEST(ScatterRestore, GradientsFlowToVisibleAndMaskToken) {
  MaskPlan plan = sample_mask(10, 0.7, 3);
  Tensor vis = Tensor::full({plan.visible.size(), 2}, 1.0f, true);
  Tensor token = Tensor::full({1, 2}, 0.0f, true);
  Gradients g = backward(sum(scatter_restore(vis, token, plan)));
  for (float v : g.at(vis).data()) EXPECT_EQ(v, 1.0f);
  for (float v : g.at(token).data()) EXPECT_EQ(v, static_cast<float>(plan.masked.size()));
}

TEST(ScatterRestore, Contracts) {
  MaskPlan plan = sample_mask(10, 0.5, 1);
  EXPECT_THROW(scatter_restore(Tensor::zeros({4, 2}), Tensor::zeros({2}), plan), ContractError);
  EXPECT_THROW(scatter_restore(Tensor::zeros({5, 2}), Tensor::zeros({3}), plan), ContractError);
}

}  // namespace
}  // namespace cdgmae

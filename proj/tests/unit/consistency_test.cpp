#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cdgmae/consistency.hpp"
#include "cdgmae/errors.hpp"
#include "cdgmae/ops.hpp"
#include "cdgmae/records.hpp"
#include "test_support.hpp"

namespace cdgmae {
namespace {

FeatureSet make_set(std::vector<float> cls, std::vector<float> patches, std::size_t rows, std::size_t cols,
                    std::string id = "f") {
  FeatureSet f;
  const std::size_t d = cls.size();
  f.cls = std::move(cls);
  f.patches = Tensor::from_data({rows * cols, d}, std::move(patches));
  f.rows = rows;
  f.cols = cols;
  f.source_id = std::move(id);
  return f;
}

FeatureSet random_set(Rng& rng, std::size_t rows, std::size_t cols, std::size_t d) {
  std::vector<float> cls(d), patches(rows * cols * d);
  for (float& v : cls) v = static_cast<float>(rng.uniform(-1, 1));
  for (float& v : patches) v = static_cast<float>(rng.uniform(-1, 1));
  return make_set(std::move(cls), std::move(patches), rows, cols);
}

double cos64(const float* u, const float* v, std::size_t d) {
  double uv = 0, uu = 0, vv = 0;
  for (std::size_t k = 0; k < d; ++k) {
    uv += double(u[k]) * v[k];
    uu += double(u[k]) * u[k];
    vv += double(v[k]) * v[k];
  }
  return uv / std::sqrt(uu * vv);
}

FeatureSet permuted(const FeatureSet& f, const std::vector<std::size_t>& perm) {
  const std::size_t d = f.dim();
  std::vector<float> p(f.patches.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    std::copy_n(f.patches.data().begin() + perm[i] * d, d, p.begin() + i * d);
  return make_set(f.cls, std::move(p), f.rows, f.cols);
}

std::vector<std::size_t> random_perm(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm;
}

TEST(GlobalSimilarity, ClosedForms) {
  FeatureSet a = make_set({1, 0}, {1, 0}, 1, 1);
  FeatureSet b = make_set({1, 1}, {1, 0}, 1, 1);
  FeatureSet c = make_set({-1, 0}, {1, 0}, 1, 1);
  EXPECT_NEAR(global_similarity(a, a), 1.0, 1e-12);
  EXPECT_NEAR(global_similarity(a, c), -1.0, 1e-12);
  EXPECT_NEAR(global_similarity(a, b), 0.7071, 1e-4);
  FeatureSet z = make_set({0, 0}, {1, 0}, 1, 1);
  EXPECT_THROW(global_similarity(a, z), DegenerateInputError);
}

TEST(LocalSimilarity, AverageOfCoLocatedCosines) {
  // cell 0 identical (sim 1), cell 1 orthogonal (sim 0)
  FeatureSet a = make_set({1, 0}, {1, 0, 0, 1}, 1, 2);
  FeatureSet b = make_set({1, 0}, {1, 0, 1, 0}, 1, 2);
  EXPECT_NEAR(local_similarity(a, b), 0.5, 1e-12);
  EXPECT_NEAR(local_similarity(a, a), 1.0, 1e-12);
}

TEST(LocalSimilarity, MatchesLoopOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    FeatureSet a = random_set(rng, 2, 2, 5), b = random_set(rng, 2, 2, 5);
    double ref = 0;
    for (std::size_t i = 0; i < 4; ++i)
      ref += cos64(a.patches.data().data() + i * 5, b.patches.data().data() + i * 5, 5);
    EXPECT_NEAR(local_similarity(a, b), ref / 4, 1e-6);
  }
}

TEST(LocalSimilarity, GridMismatchRejected) {
  Rng rng(2);
  EXPECT_THROW(local_similarity(random_set(rng, 2, 2, 3), random_set(rng, 3, 3, 3)), ContractError);
}

TEST(NearestPatch, MatchesBruteForce) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    FeatureSet a = random_set(rng, 3, 3, 6), b = random_set(rng, 3, 3, 6);
    double ref = 0;
    for (std::size_t i = 0; i < 9; ++i) {
      double best = -2;
      for (std::size_t j = 0; j < 9; ++j)
        best = std::max(best, cos64(a.patches.data().data() + i * 6, b.patches.data().data() + j * 6, 6));
      ref += best;
    }
    EXPECT_NEAR(nearest_patch_similarity(a, b), ref / 9, 1e-6);
  }
}

TEST(NearestPatch, PermutationRecoversMatchesWhileLocalDrops) {
  Rng rng(4);
  FeatureSet a = random_set(rng, 3, 3, 8);
  FeatureSet b = permuted(a, {1, 0, 2, 3, 4, 5, 6, 7, 8});
  EXPECT_NEAR(nearest_patch_similarity(a, b), 1.0, 1e-6);
  EXPECT_LT(local_similarity(a, b), 1.0 - 1e-6);
}

TEST(NearestPatch, DifferentGridSizesAllowed) {
  Rng rng(5);
  FeatureSet a = random_set(rng, 2, 2, 4), b = random_set(rng, 3, 3, 4);
  const double v = nearest_patch_similarity(a, b);
  EXPECT_GE(v, -1.0);
  EXPECT_LE(v, 1.0);
  FeatureSet empty;
  empty.cls = {1, 0, 0, 0};
  EXPECT_THROW(nearest_patch_similarity(a, empty), ContractError);
}

TEST(Properties, NpsAtLeastLsOnRandomPairs) {
  Rng rng(6);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t side = 1 + rng.below(4), d = 1 + rng.below(8);
    FeatureSet a = random_set(rng, side, side, d), b = random_set(rng, side, side, d);
    ASSERT_GE(nearest_patch_similarity(a, b), local_similarity(a, b)) << trial;
  }
}

TEST(Properties, SelfPairIsOne) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    FeatureSet a = random_set(rng, 3, 3, 7);
    PairReport r = evaluate_pair(a, a);
    EXPECT_NEAR(r.gs, 1.0, 1e-6);
    EXPECT_NEAR(r.ls, 1.0, 1e-6);
    EXPECT_NEAR(r.nps, 1.0, 1e-6);
  }
}

TEST(Properties, PositiveRescalingInvariance) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    FeatureSet a = random_set(rng, 3, 3, 5), b = random_set(rng, 3, 3, 5);
    FeatureSet scaled = b;
    for (float& v : scaled.cls) v *= 3.5f;
    std::vector<float> p(b.patches.data().begin(), b.patches.data().end());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] *= static_cast<float>(0.1 + (i / 5) * 0.7);
    scaled.patches = Tensor::from_data(b.patches.shape(), std::move(p));
    PairReport r0 = evaluate_pair(a, b), r1 = evaluate_pair(a, scaled);
    EXPECT_NEAR(r0.gs, r1.gs, 1e-6);
    EXPECT_NEAR(r0.ls, r1.ls, 1e-6);
    EXPECT_NEAR(r0.nps, r1.nps, 1e-6);
  }
}

TEST(Properties, NpsInvariantToPermutingSecondSet) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    FeatureSet a = random_set(rng, 3, 3, 5), b = random_set(rng, 3, 3, 5);
    FeatureSet pb = permuted(b, random_perm(9, rng));
    EXPECT_NEAR(nearest_patch_similarity(a, b), nearest_patch_similarity(a, pb), 1e-12);
  }
}

TEST(Properties, ZeroPatchIsDegenerate) {
  FeatureSet a = make_set({1, 0}, {1, 0, 0, 0}, 1, 2);
  FeatureSet b = make_set({1, 0}, {1, 0, 0, 1}, 1, 2);
  EXPECT_THROW(local_similarity(a, b), DegenerateInputError);
  EXPECT_THROW(nearest_patch_similarity(b, a), DegenerateInputError);
}

TEST(EvaluatePairs, MeansAndDirections) {
  Rng rng(10);
  FeatureSet a = random_set(rng, 2, 2, 4), b = random_set(rng, 2, 2, 4), c = random_set(rng, 2, 2, 4);
  std::vector<FeaturePair> pairs = {{a, b}, {a, c}};
  ConsistencyReport rep = evaluate_pairs(pairs, true);
  ASSERT_EQ(rep.pairs.size(), 2u);
  EXPECT_NEAR(rep.mean_gs, (rep.pairs[0].gs + rep.pairs[1].gs) / 2, 1e-12);
  EXPECT_NEAR(rep.mean_ls, (rep.pairs[0].ls + rep.pairs[1].ls) / 2, 1e-12);
  EXPECT_NEAR(rep.mean_nps, (rep.pairs[0].nps + rep.pairs[1].nps) / 2, 1e-12);
  ASSERT_TRUE(rep.pairs[0].nps_reverse.has_value());
  EXPECT_NEAR(*rep.pairs[0].nps_reverse, nearest_patch_similarity(b, a), 1e-12);
  EXPECT_FALSE(evaluate_pairs(pairs).pairs[0].nps_reverse.has_value());
  EXPECT_THROW(evaluate_pairs(std::span<const FeaturePair>()), ContractError);

  std::vector<FeaturePair> self = {{a, a}};
  ConsistencyReport one = evaluate_pairs(self);
  EXPECT_NEAR(one.mean_gs, 1.0, 1e-6);
  EXPECT_NEAR(one.mean_ls, 1.0, 1e-6);
  EXPECT_NEAR(one.mean_nps, 1.0, 1e-6);
}

TEST(EvaluatePairs, RecordsParseBack) {
  Rng rng(11);
  FeatureSet a = random_set(rng, 2, 2, 4), b = random_set(rng, 2, 2, 4);
  a.source_id = "left";
  b.source_id = "right";
  std::vector<FeaturePair> pairs = {{a, b}};
  ConsistencyReport rep = evaluate_pairs(pairs);
  std::string text = format_consistency_records(rep);
  Record r = parse_record(text.substr(0, text.find('\n')));
  EXPECT_EQ(record_field(r, "first"), "left");
  EXPECT_EQ(record_field(r, "second"), "right");
  EXPECT_NEAR(std::stod(record_field(r, "nps")), rep.pairs[0].nps, 1e-5);
  EXPECT_NE(format_consistency_table(rep).find("left"), std::string::npos);
}

TEST(FeatureFile, RoundTrip) {
  test::TempDir dir("features");
  Rng rng(12);
  FeatureSet a = random_set(rng, 3, 3, 6);
  write_feature_file(dir.path() / "a.cdgt", a);
  FeatureSet back = read_feature_file(dir.path() / "a.cdgt");
  EXPECT_EQ(back.rows, 3u);
  EXPECT_EQ(back.cols, 3u);
  EXPECT_EQ(back.cls, a.cls);
  EXPECT_EQ(test::values(back.patches), test::values(a.patches));
  EXPECT_THROW(write_feature_file(dir.path() / "b.cdgt", random_set(rng, 2, 3, 4)), ContractError);
}

}  // namespace
}  // namespace cdgmae

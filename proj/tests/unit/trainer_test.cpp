#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

#include "cdgmae/errors.hpp"
#include "cdgmae/ops.hpp"
#include "cdgmae/records.hpp"
#include "cdgmae/trainer.hpp"
#include "test_support.hpp"

namespace cdgmae {
namespace {

std::vector<ViewBag> tiny_dataset(std::size_t count, std::uint64_t seed, std::size_t views = 4) {
  std::vector<ViewBag> bags;
  for (std::size_t i = 0; i < count; ++i) bags.push_back(gen_views(gen_scene(mix_seed(seed, i), 16).spec, views, 0.5));
  return bags;
}

TrainConfig small_config(std::size_t steps) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.batch_size = 4;
  cfg.seed = 3;
  return cfg;
}

TEST(Strategy, NamesRoundTrip) {
  for (ViewStrategy s : {ViewStrategy::kAlwaysReal, ViewStrategy::kAlwaysGenerated, ViewStrategy::kRandomChoice,
                         ViewStrategy::kKnnPair})
    EXPECT_EQ(parse_strategy(strategy_name(s)), s);
  EXPECT_EQ(strategy_name(ViewStrategy::kRandomChoice), "random_choice");
  EXPECT_THROW(parse_strategy("sometimes"), ContractError);
}

TEST(SelectViews, AlwaysRealTargetsTheRealImage) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    ViewSelection sel = select_views(4, ViewStrategy::kAlwaysReal, 2, rng);
    EXPECT_EQ(sel.target, 0u);
    EXPECT_EQ(sel.anchors.size(), 2u);
  }
}

TEST(SelectViews, AlwaysGeneratedNeverTargetsReal) {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    ViewSelection sel = select_views(4, ViewStrategy::kAlwaysGenerated, 3, rng);
    EXPECT_GE(sel.target, 1u);
    EXPECT_LE(sel.target, 4u);
  }
}

TEST(SelectViews, AnchorsAreAllGeneratedViewsWhenNEqualsM) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    ViewSelection sel = select_views(4, ViewStrategy::kAlwaysReal, 4, rng);
    std::vector<std::size_t> a = sel.anchors;
    std::sort(a.begin(), a.end());
    EXPECT_EQ(a, (std::vector<std::size_t>{1, 2, 3, 4}));
  }
}

TEST(SelectViews, RandomChoiceIsFairCoin) {
  Rng rng(4);
  int real = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) real += select_views(4, ViewStrategy::kRandomChoice, 2, rng).target == 0;
  EXPECT_NEAR(real / double(draws), 0.5, 0.03);
}

TEST(SelectViews, TargetNeverAmongAnchorsAndAnchorsDistinct) {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const ViewStrategy s = i % 3 == 0 ? ViewStrategy::kAlwaysReal
                           : i % 3 == 1 ? ViewStrategy::kAlwaysGenerated
                                        : ViewStrategy::kRandomChoice;
    const std::size_t n = 1 + rng.below(4);
    ViewSelection sel = select_views(4, s, n, rng);
    std::set<std::size_t> seen(sel.anchors.begin(), sel.anchors.end());
    ASSERT_EQ(seen.size(), n);
    ASSERT_EQ(seen.count(sel.target), 0u);
    for (std::size_t a : sel.anchors) ASSERT_LE(a, 4u);
  }
}

TEST(SelectViews, TooManyAnchorsRejected) {
  Rng rng(6);
  EXPECT_THROW(select_views(4, ViewStrategy::kAlwaysReal, 5, rng), ContractError);
  EXPECT_THROW(select_views(0, ViewStrategy::kAlwaysReal, 1, rng), ContractError);
  EXPECT_THROW(select_views(4, ViewStrategy::kKnnPair, 1, rng), ContractError);
}

TEST(Knn, TwoImagesPickTheOther) {
  const std::vector<std::vector<float>> f = {{1, 0}, {0.3f, 1}};
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    KnnPair p = knn_pair_select(f, 1, rng);
    EXPECT_NE(p.target, p.anchor);
  }
  EXPECT_EQ(knn_neighbors(f, 0, 1), (std::vector<std::size_t>{1}));
}

TEST(Knn, DuplicateIsRankOne) {
  Rng rng(8);
  std::vector<std::vector<float>> f;
  for (int i = 0; i < 8; ++i) {
    std::vector<float> v(6);
    for (float& x : v) x = static_cast<float>(rng.uniform(-1, 1));
    f.push_back(v);
  }
  f.push_back(f[3]);
  EXPECT_EQ(knn_neighbors(f, 3, 3).front(), 8u);
  EXPECT_EQ(knn_neighbors(f, 8, 3).front(), 3u);
}

TEST(Knn, MatchesBruteForceRanking) {
  Rng rng(9);
  std::vector<std::vector<float>> f;
  for (int i = 0; i < 10; ++i) {
    std::vector<float> v(5);
    for (float& x : v) x = static_cast<float>(rng.uniform(-1, 1));
    f.push_back(v);
  }
  for (std::size_t q = 0; q < 10; ++q) {
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t j = 0; j < 10; ++j) {
      if (j == q) continue;
      double uv = 0, uu = 0, vv = 0;
      for (std::size_t k = 0; k < 5; ++k) {
        uv += double(f[q][k]) * f[j][k];
        uu += double(f[q][k]) * f[q][k];
        vv += double(f[j][k]) * f[j][k];
      }
      scored.emplace_back(-uv / std::sqrt(uu * vv), j);
    }
    std::sort(scored.begin(), scored.end());
    std::vector<std::size_t> expected;
    for (std::size_t r = 0; r < 5; ++r) expected.push_back(scored[r].second);
    EXPECT_EQ(knn_neighbors(f, q, 5), expected) << "query " << q;
  }
}

TEST(Knn, AnchorDrawnFromNeighbors) {
  Rng rng(10);
  std::vector<std::vector<float>> f;
  for (int i = 0; i < 12; ++i) f.push_back({float(std::cos(i * 0.5)), float(std::sin(i * 0.5)), 0.1f});
  for (int i = 0; i < 500; ++i) {
    KnnPair p = knn_pair_select(f, 3, rng);
    std::vector<std::size_t> nn = knn_neighbors(f, p.target, 3);
    EXPECT_NE(std::find(nn.begin(), nn.end(), p.anchor), nn.end());
  }
  std::vector<std::vector<float>> small = {{1, 0}, {0, 1}};
  EXPECT_THROW(knn_pair_select(small, 2, rng), ContractError);
  EXPECT_THROW(knn_neighbors(small, 0, 2), ContractError);
}

TEST(LearningRate, WarmupPeakEndpointAndMidpoint) {
  TrainConfig cfg;
  const double total = 1000;
  EXPECT_DOUBLE_EQ(lr_at(100, total, cfg), 1.5e-4);
  EXPECT_DOUBLE_EQ(lr_at(0, total, cfg), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(50, total, cfg), 0.75e-4);
  EXPECT_NEAR(lr_at(total, total, cfg), 0.0, 1e-20);
  EXPECT_NEAR(lr_at(550, total, cfg), 1.5e-4 / 2, 1e-9);
  double prev = lr_at(100, total, cfg);
  for (double s = 101; s <= total; s += 1) {
    const double lr = lr_at(s, total, cfg);
    ASSERT_LE(lr, prev);
    prev = lr;
  }
}

TEST(AdamW, ZeroGradientsNoDecayLeaveParamsUnchanged) {
  std::vector<float> p = {0.5f, -1.0f, 2.0f}, g(3, 0.0f), m(3, 0.0f), v(3, 0.0f);
  const std::vector<float> before = p;
  AdamWSettings hp;
  hp.weight_decay = 0.0;
  adamw_step(p, g, m, v, 1, 1e-3, hp, true);
  EXPECT_EQ(p, before);
}

TEST(AdamW, FirstStepMatchesHandComputation) {
  std::vector<float> p = {0.5f, -1.0f, 2.0f}, g = {0.1f, -3.0f, 1e-3f}, m(3, 0.0f), v(3, 0.0f);
  const std::vector<float> p0 = p;
  AdamWSettings hp;
  hp.weight_decay = 0.0;
  const double lr = 1e-3;
  adamw_step(p, g, m, v, 1, lr, hp, false);
  for (std::size_t i = 0; i < 3; ++i) {
    const double gi = g[i];
    const double mhat = (1 - 0.9) * gi / (1 - 0.9);
    const double vhat = (1 - 0.95) * gi * gi / (1 - 0.95);
    const double expected = p0[i] - lr * mhat / (std::sqrt(vhat) + 1e-8);
    EXPECT_NEAR(p[i], expected, 1e-7);
    EXPECT_FLOAT_EQ(m[i], static_cast<float>(0.1 * gi));
    EXPECT_FLOAT_EQ(v[i], static_cast<float>(0.05 * gi * gi));
  }
}

TEST(AdamW, DecayOnlyShrinksByLrTimesWd) {
  std::vector<float> p = {0.5f, -1.0f, 2.0f}, g(3, 0.0f), m(3, 0.0f), v(3, 0.0f);
  const std::vector<float> p0 = p;
  AdamWSettings hp;
  adamw_step(p, g, m, v, 1, 1e-2, hp, true);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], p0[i] - 1e-2 * 0.05 * p0[i], 1e-7);
  EXPECT_THROW(adamw_step(p, g, m, v, 0, 1e-2, hp, true), ContractError);
}

TEST(AdamW, UpdateDecaysWeightsOnly) {
  ModelParams params = init_params(ModelConfig::preset("tiny"), 1);
  params.visit([](const std::string&, Tensor& t) { std::fill(t.mutable_data().begin(), t.mutable_data().end(), 1.0f); });
  OptimizerState state = OptimizerState::for_params(params);
  adamw_update(params, Gradients{}, state, 0.1, AdamWSettings{});
  EXPECT_EQ(state.step, 1u);
  params.visit([](const std::string& name, const Tensor& t) {
    const float expected = name.ends_with(".weight") ? 1.0f - 0.1f * 0.05f : 1.0f;
    for (float v : t.data()) ASSERT_FLOAT_EQ(v, expected) << name;
  });
}

TEST(Config, KeysParseAndUnknownKeysAreRejected) {
  TrainConfig cfg;
  apply_config_entries(cfg,
                       parse_config_text("strategy = always_real\nsteps = 7\nbase_lr = 1e-3\n"
                                         "num_anchors = 3\nanchor_mask = 0.5\nsame_crop_across_views = false\n",
                                         "cfg"),
                       "cfg");
  EXPECT_EQ(cfg.strategy, ViewStrategy::kAlwaysReal);
  EXPECT_EQ(cfg.steps, 7u);
  EXPECT_DOUBLE_EQ(cfg.base_lr, 1e-3);
  EXPECT_EQ(cfg.model.num_anchors, 3u);
  EXPECT_DOUBLE_EQ(cfg.model.anchor_mask, 0.5);
  EXPECT_FALSE(cfg.same_crop_across_views);
  try {
    apply_config_entries(cfg, parse_config_text("steps = 1\nlearning_speed = 3\n", "run.cfg"), "run.cfg");
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(apply_config_entries(cfg, parse_config_text("steps = many\n", "c"), "c"), ContractError);
}

TEST(Config, ItemsRoundTrip) {
  TrainConfig cfg;
  cfg.strategy = ViewStrategy::kKnnPair;
  cfg.base_lr = 1.0 / 3.0;
  cfg.crop_scale = {0.4, 0.9};
  cfg.seed = 1234567890123ULL;
  TrainConfig back;
  for (const auto& [k, v] : train_config_items(cfg)) ASSERT_TRUE(apply_train_key(back, k, v)) << k;
  EXPECT_EQ(train_config_items(back), train_config_items(cfg));
}

TEST(Config, DefaultsAndValidation) {
  TrainConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.model.target_mask, 0.90);
  EXPECT_DOUBLE_EQ(cfg.base_lr, 1.5e-4);
  EXPECT_DOUBLE_EQ(cfg.weight_decay, 0.05);
  EXPECT_DOUBLE_EQ(cfg.beta1, 0.9);
  EXPECT_DOUBLE_EQ(cfg.beta2, 0.95);
  EXPECT_EQ(cfg.crop_scale, std::make_pair(0.5, 1.0));
  EXPECT_EQ(cfg.crop_aspect, std::make_pair(0.75, 1.33));
  EXPECT_NO_THROW(cfg.validate(4));
  cfg.model.num_anchors = 5;
  EXPECT_THROW(cfg.validate(4), ContractError);
  cfg.model.num_anchors = 2;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(4), ContractError);
  cfg.batch_size = 8;
  cfg.epochs = 3;
  EXPECT_EQ(cfg.total_steps(20), 9u);  // ceil(20 / 8) per epoch
  cfg.steps = 5;
  EXPECT_EQ(cfg.total_steps(20), 5u);
}

TEST(Sample, MaskingAndViewShapes) {
  std::vector<ViewBag> data = tiny_dataset(3, 1);
  TrainConfig cfg = small_config(1);
  Rng rng(11);
  SampleInputs s = make_sample(data, 1, cfg, rng);
  EXPECT_EQ(s.target.size(), 16u);
  EXPECT_EQ(s.anchors.size(), cfg.model.num_anchors);
  EXPECT_EQ(s.target_plan.visible.size(), visible_count(16, 0.9));
  for (const auto& plan : s.anchor_plans) EXPECT_EQ(plan.visible.size(), visible_count(16, cfg.model.anchor_mask));
  // anchors are masked independently
  if (s.anchor_plans.size() >= 2) {
    bool differ = false;
    for (int trial = 0; trial < 10 && !differ; ++trial) {
      SampleInputs t = make_sample(data, 1, cfg, rng);
      differ = t.anchor_plans[0].visible != t.anchor_plans[1].visible;
    }
    EXPECT_TRUE(differ);
  }
  cfg.strategy = ViewStrategy::kKnnPair;
  EXPECT_THROW(make_sample(data, 0, cfg, rng), ContractError);
}

TEST(Sample, NoAugmentAlwaysRealUsesExactImage) {
  std::vector<ViewBag> data = tiny_dataset(2, 2);
  TrainConfig cfg = small_config(1);
  cfg.augment = false;
  cfg.strategy = ViewStrategy::kAlwaysReal;
  Rng rng(12);
  SampleInputs s = make_sample(data, 0, cfg, rng);
  EXPECT_EQ(test::values(s.target.tokens), test::values(patchify(data[0].real, 4).tokens));
}

TEST(TrainStep, LossMatches64BitReference) {
  std::vector<ViewBag> data = tiny_dataset(4, 3);
  TrainConfig cfg = small_config(1);
  ModelParams params = init_params(cfg.model, 5);
  Rng rng(13);
  std::vector<SampleInputs> batch;
  for (std::size_t i = 0; i < 4; ++i) batch.push_back(make_sample(data, i, cfg, rng));
  ModelParams64 p64 = params.cast<double>();
  double ref = 0;
  for (const auto& s : batch) ref += reconstruction_loss(p64, s).item();
  ref /= 4;
  OptimizerState state = OptimizerState::for_params(params);
  StepResult r = train_step(params, state, batch, 1e-3, cfg);
  EXPECT_NEAR(r.loss, ref, 1e-5 * ref);
  EXPECT_GT(r.grad_norm, 0.0);
  EXPECT_EQ(state.step, 1u);
}

TEST(TrainStep, NonFiniteLossRaisesWithDiagnostics) {
  std::vector<ViewBag> data = tiny_dataset(2, 4);
  TrainConfig cfg = small_config(1);
  ModelParams params = init_params(cfg.model, 6);
  params.head.bias.mutable_data()[0] = std::numeric_limits<float>::quiet_NaN();
  OptimizerState state = OptimizerState::for_params(params);
  Rng rng(14);
  std::vector<SampleInputs> batch = {make_sample(data, 0, cfg, rng)};
  try {
    train_step(params, state, batch, 1e-3, cfg);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("step 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("lr="), std::string::npos) << msg;
    EXPECT_NE(msg.find("grad_norm="), std::string::npos) << msg;
  }
  EXPECT_EQ(state.step, 0u);
}

TEST(Trainer, SameSeedGivesIdenticalLossSequence) {
  auto run = [](std::uint64_t seed) {
    TrainConfig cfg = small_config(10);
    cfg.seed = seed;
    Trainer t(cfg, tiny_dataset(8, 5));
    std::vector<double> losses;
    for (const auto& s : t.run()) losses.push_back(s.loss);
    return losses;
  };
  const std::vector<double> a = run(1);
  EXPECT_EQ(a.size(), 10u);
  EXPECT_EQ(a, run(1));
  EXPECT_NE(a, run(2));
}

TEST(Trainer, InitCopyLeavesCallerParamsUntouched) {
  TrainConfig cfg = small_config(2);
  ModelParams init = init_params(cfg.model, 9);
  const std::vector<float> before(init.head.weight.data().begin(), init.head.weight.data().end());
  Trainer t(cfg, tiny_dataset(4, 6), init);
  t.run();
  EXPECT_TRUE(t.done());
  EXPECT_EQ(test::values(init.head.weight), before);
  EXPECT_NE(test::values(t.params().head.weight), before);
  EXPECT_THROW(t.step(), ContractError);
}

TEST(Trainer, KnnPairStrategyRuns) {
  TrainConfig cfg = small_config(2);
  cfg.strategy = ViewStrategy::kKnnPair;
  cfg.knn_k = 3;
  Trainer t(cfg, tiny_dataset(6, 7));
  for (const auto& s : t.run()) EXPECT_TRUE(std::isfinite(s.loss));
  TrainConfig bad = cfg;
  bad.knn_k = 6;
  EXPECT_THROW(Trainer(bad, tiny_dataset(6, 7)), ContractError);
}

TEST(Trainer, LogRecordHasNoWallClock) {
  StepStats s{3, 1e-4, 0.25, 1.5, 12.0};
  Record r = step_record(s);
  EXPECT_EQ(record_field(r, "step"), "3");
  EXPECT_EQ(record_field(r, "loss"), "0.25");
  EXPECT_THROW(record_field(r, "wall_ms"), ContractError);
}

}  // namespace
}  // namespace cdgmae

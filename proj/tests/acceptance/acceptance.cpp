// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "cdgmae/consistency.hpp"
#include "cdgmae/flops.hpp"
#include "cdgmae/gradcheck_suite.hpp"
#include "cdgmae/labelprop.hpp"
#include "cdgmae/patch_mask.hpp"
#include "cdgmae/trainer.hpp"

using namespace cdgmae;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// --- 1: compute table -------------------------------------------------------

Verdict flops_table() {
  const auto t0 = Clock::now();
  const std::vector<double> published = {6.0, 10.4, 8.3, 6.1, 11.6, 8.3, 14.9, 10.6};
  const ModelConfig cfg = ModelConfig::preset("vit-s16");
  std::vector<double> est;
  for (const auto& [n, ra] : standard_flops_settings()) est.push_back(estimate_flops(cfg, n, ra, 0.9));
  double worst_abs = 0.0, worst_ratio = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    worst_abs = std::max(worst_abs, std::abs(est[i] - published[i]) / published[i]);
    for (std::size_t j = 0; j < est.size(); ++j) {
      const double want = published[i] / published[j];
      worst_ratio = std::max(worst_ratio, std::abs(est[i] / est[j] - want) / want);
    }
  }
  const double secs = seconds_since(t0);
  return {worst_abs <= 0.15 && worst_ratio <= 0.05 && secs < 1.0,
          "max value dev " + fmt("%.1f%%", 100 * worst_abs) + ", max ratio dev " + fmt("%.1f%%", 100 * worst_ratio) +
              ", " + fmt("%.3fs", secs)};
}

// --- 2: gradients -----------------------------------------------------------

Verdict gradients() {
  const auto t0 = Clock::now();
  GradCheckOptions opt;
  opt.trials = 20;
  opt.include_model = true;
  const auto results = run_gradcheck_suite(opt);
  bool ok = !results.empty();
  double worst_prim = 0.0, worst_model = 0.0;
  for (const auto& r : results) {
    ok = ok && r.passed() && r.trials == 20;
    const bool model = r.tolerance > opt.primitive_tolerance;
    ok = ok && r.tolerance <= (model ? 1e-3 : 1e-4);
    (model ? worst_model : worst_prim) = std::max(model ? worst_model : worst_prim, r.max_relative_error);
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 60.0, std::to_string(results.size()) + " checks, primitives " + fmt("%.2e", worst_prim) +
                                 ", model " + fmt("%.2e", worst_model) + ", " + fmt("%.1fs", secs)};
}

// --- 3: similarity metrics --------------------------------------------------

FeatureSet random_set(Rng& rng, std::size_t rows, std::size_t cols, std::size_t d) {
  FeatureSet f;
  f.rows = rows;
  f.cols = cols;
  f.cls.resize(d);
  for (float& v : f.cls) v = static_cast<float>(rng.uniform(-1, 1));
  std::vector<float> p(rows * cols * d);
  for (float& v : p) v = static_cast<float>(rng.uniform(-1, 1));
  f.patches = Tensor::from_data({rows * cols, d}, std::move(p));
  return f;
}

Verdict metric_properties() {
  Rng rng(31);
  std::size_t nps_violations = 0, self_fail = 0, perm_fail = 0, scale_fail = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t side = 1 + rng.below(4), d = 2 + rng.below(14);
    const FeatureSet a = random_set(rng, side, side, d), b = random_set(rng, side, side, d);
    const PairReport ab = evaluate_pair(a, b);
    nps_violations += ab.nps < ab.ls;

    const PairReport self = evaluate_pair(a, a);
    self_fail += std::abs(self.gs - 1) > 1e-6 || std::abs(self.ls - 1) > 1e-6 || std::abs(self.nps - 1) > 1e-6;

    const std::size_t l = side * side;
    std::vector<std::size_t> perm(l);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = l; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    FeatureSet pb = b;
    std::vector<float> pv(l * d);
    for (std::size_t i = 0; i < l; ++i)
      std::copy_n(b.patches.data().begin() + perm[i] * d, d, pv.begin() + i * d);
    pb.patches = Tensor::from_data({l, d}, std::move(pv));
    perm_fail += nearest_patch_similarity(a, pb) != ab.nps;

    FeatureSet sb = b;
    const float s = static_cast<float>(rng.uniform(0.1, 10.0));
    for (float& v : sb.cls) v *= s;
    std::vector<float> sv(b.patches.data().begin(), b.patches.data().end());
    for (std::size_t i = 0; i < l; ++i) {
      const float row_scale = static_cast<float>(rng.uniform(0.1, 10.0));
      for (std::size_t k = 0; k < d; ++k) sv[i * d + k] *= row_scale;
    }
    sb.patches = Tensor::from_data({l, d}, std::move(sv));
    const PairReport scaled = evaluate_pair(a, sb);
    scale_fail += std::abs(scaled.gs - ab.gs) > 1e-6 || std::abs(scaled.ls - ab.ls) > 1e-6 ||
                  std::abs(scaled.nps - ab.nps) > 1e-6;
  }
  const bool ok = nps_violations == 0 && self_fail == 0 && perm_fail == 0 && scale_fail == 0;
  return {ok, "1000 pairs; violations nps<ls " + std::to_string(nps_violations) + ", self " +
                  std::to_string(self_fail) + ", permutation " + std::to_string(perm_fail) + ", rescale " +
                  std::to_string(scale_fail)};
}

// --- 4: masking -------------------------------------------------------------

Verdict masking() {
  Rng rng(41);
  std::size_t failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(400);
    const double r = rng.uniform(0.0, 0.999);
    const MaskPlan plan = sample_mask(n, r, rng.next_u64());
    const auto expected = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(n * (1.0 - r) + 1e-9)));
    std::vector<std::size_t> all = plan.visible;
    all.insert(all.end(), plan.masked.begin(), plan.masked.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> want(n);
    std::iota(want.begin(), want.end(), std::size_t{0});
    failures += all != want || plan.visible.size() != expected;
  }
  const std::size_t v90 = sample_mask(196, 0.90, 1).visible.size();
  const std::size_t v985 = sample_mask(196, 0.985, 1).visible.size();
  return {failures == 0 && v90 == 19 && v985 == 2, "1000 plans, " + std::to_string(failures) +
                                                       " failures; 196 -> " + std::to_string(v90) + " at 0.90, " +
                                                       std::to_string(v985) + " at 0.985"};
}

// --- 5: tiny training -------------------------------------------------------

std::vector<ViewBag> make_bags(std::size_t count, std::size_t size, std::uint64_t seed) {
  std::vector<ViewBag> bags;
  for (std::size_t i = 0; i < count; ++i) bags.push_back(gen_views(gen_scene(mix_seed(seed, i), size).spec, 4, 0.5));
  return bags;
}

Verdict tiny_training() {
  const auto t0 = Clock::now();
  TrainConfig cfg;
  cfg.model = ModelConfig::preset("tiny");
  cfg.model.num_anchors = 2;
  cfg.model.anchor_mask = 0.25;
  cfg.steps = 200;
  cfg.batch_size = 16;
  cfg.base_lr = 1e-3;
  cfg.seed = 5;
  const std::vector<ViewBag> bags = make_bags(64, 16, 501);
  auto losses = [&] {
    Trainer t(cfg, bags);
    std::vector<double> out;
    for (const auto& s : t.run()) out.push_back(s.loss);
    return out;
  };
  const std::vector<double> a = losses(), b = losses();
  const bool finite = std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
  const double secs = seconds_since(t0);
  const bool ok = finite && a.size() == 200 && a.back() <= 0.5 * a.front() && a == b && secs < 300.0;
  return {ok, "loss " + fmt("%.4f", a.front()) + " -> " + fmt("%.4f", a.back()) + " (ratio " +
                  fmt("%.3f", a.back() / a.front()) + "), repeat " + (a == b ? "identical" : "DIFFERS") + ", " +
                  fmt("%.1fs", secs)};
}

// --- 6: label propagation oracle -------------------------------------------

std::vector<float> brute_force_step(const std::vector<std::pair<Tensor, Tensor>>& context, const Tensor& query,
                                    std::size_t top_k, double temperature) {
  const std::size_t l = query.dim(0), d = query.dim(1), c = context.front().second.dim(1);
  auto unit = [d](const Tensor& t, std::size_t i) {
    std::vector<double> v(d, 0.0);
    double n = 0;
    for (std::size_t k = 0; k < d; ++k) n += double(t[i * d + k]) * t[i * d + k];
    if (n <= 0) return v;
    const double inv = 1.0 / std::sqrt(n);
    for (std::size_t k = 0; k < d; ++k) v[k] = t[i * d + k] * inv;
    return v;
  };
  std::vector<float> out(l * c, 0.0f);
  for (std::size_t i = 0; i < l; ++i) {
    const auto qi = unit(query, i);
    std::vector<std::pair<double, const float*>> cand;
    for (const auto& [feat, lab] : context)
      for (std::size_t j = 0; j < l; ++j) {
        const auto kj = unit(feat, j);
        double a = 0;
        for (std::size_t k = 0; k < d; ++k) a += qi[k] * kj[k];
        if (a > 0) cand.emplace_back(a, lab.data().data() + j * c);
      }
    if (cand.empty()) continue;
    std::stable_sort(cand.begin(), cand.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
    const std::size_t k = std::min(top_k, cand.size());
    const double top = cand.front().first;
    double z = 0;
    for (std::size_t t = 0; t < k; ++t) z += std::exp((cand[t].first - top) / temperature);
    std::vector<double> acc(c, 0.0);
    for (std::size_t t = 0; t < k; ++t) {
      const double w = std::exp((cand[t].first - top) / temperature) / z;
      for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += w * cand[t].second[ch];
    }
    for (std::size_t ch = 0; ch < c; ++ch) out[i * c + ch] = static_cast<float>(std::clamp(acc[ch], 0.0, 1.0));
  }
  return out;
}

Verdict labelprop_oracle() {
  const Video video = gen_video(gen_grid_aligned_scene(61, 32, 4).spec, 10, MotionSpec{0.0, 0.0});
  std::vector<NamedVideo> videos = {{"static", video}};
  const MetricsReport rep = run_eval(identity_extractor(4), videos, EvalTask::kSegmentation, PropagationConfig{});
  const bool identity_ok = rep.mean_j == 1.0 && rep.mean_f == 1.0;

  PropagationConfig cfg;
  cfg.neighborhood = 1000;
  cfg.queue_length = 1000;
  Rng rng(62);
  const std::size_t l = 64, d = 8, c = 3;
  auto features = [&] {
    std::vector<float> v(l * d);
    for (float& x : v) x = static_cast<float>(rng.uniform(-1, 1));
    return Tensor::from_data({l, d}, std::move(v));
  };
  std::vector<float> lab(l * c, 0.0f);
  for (std::size_t i = 0; i < l; ++i) {
    const std::size_t k = rng.below(c + 1);
    if (k < c) lab[i * c + k] = 1.0f;
  }
  std::vector<std::pair<Tensor, Tensor>> ref = {{features(), Tensor::from_data({l, c}, lab)}};
  PropagationContext ctx(8, 8, cfg);
  ctx.seed(ref[0].first, ref[0].second);
  std::size_t mismatches = 0;
  for (int f = 1; f < 5; ++f) {
    const Tensor q = features();
    const std::vector<float> want = brute_force_step(ref, q, cfg.top_k, cfg.temperature);
    const Tensor got = propagate_frame(ctx, q);
    for (std::size_t i = 0; i < want.size(); ++i) mismatches += got[i] != want[i];
    ref.emplace_back(q, Tensor::from_data({l, c}, want));
  }
  return {identity_ok && mismatches == 0, "identity J_m " + fmt("%.6f", rep.mean_j) + " F_m " +
                                              fmt("%.6f", rep.mean_f) + "; brute-force mismatches " +
                                              std::to_string(mismatches) + " of " + std::to_string(4 * l * c)};
}

// --- 7 and 8: trained toy model --------------------------------------------

struct SeedOutcome {
  double j_trained = 0.0;
  double j_untrained = 0.0;
  ConsistencyReport generated;
  ConsistencyReport random;
};

SeedOutcome toy_seed(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.model = ModelConfig::preset("toy");
  cfg.steps = 200;
  cfg.batch_size = 16;
  cfg.base_lr = 1e-3;
  cfg.seed = seed;
  const std::size_t size = cfg.model.image_size;
  Trainer trainer(cfg, make_bags(64, size, mix_seed(seed, 7)));
  const ModelParams untrained = trainer.params().cast<float>();
  trainer.run();
  const ModelParams& trained = trainer.params();

  SeedOutcome out;
  std::vector<NamedVideo> videos;
  for (std::size_t i = 0; i < 20; ++i)
    videos.push_back({"v" + std::to_string(i), gen_video(gen_scene(mix_seed(seed, 1000 + i), size).spec, 8, {1.0, 0.0})});
  const PropagationConfig pc;
  out.j_trained = run_eval(model_extractor(trained), videos, EvalTask::kSegmentation, pc).mean_j;
  out.j_untrained = run_eval(model_extractor(untrained), videos, EvalTask::kSegmentation, pc).mean_j;

  std::vector<FeaturePair> gen, rnd;
  for (std::size_t i = 0; i < 20; ++i) {
    const ViewBag bag = gen_views(gen_scene(mix_seed(seed, 2000 + i), size).spec, 4, 0.5);
    const Scene other = gen_scene(mix_seed(seed, 3000 + i), size);
    const FeatureSet real = extract_features(trained, bag.real);
    for (const auto& v : bag.views) gen.emplace_back(real, extract_features(trained, v));
    rnd.emplace_back(real, extract_features(trained, other.image));
  }
  out.generated = evaluate_pairs(gen);
  out.random = evaluate_pairs(rnd);
  return out;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& check) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("[%s] %d %s: %s\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "compute table", flops_table);
  report(2, "gradient correctness", gradients);
  report(3, "similarity metric properties", metric_properties);
  report(4, "masking invariants", masking);
  report(5, "tiny training", tiny_training);
  report(6, "label propagation oracle", labelprop_oracle);

  std::vector<SeedOutcome> seeds;
  std::string seed_error;
  try {
    for (std::uint64_t s = 0; s < 3; ++s) seeds.push_back(toy_seed(s));
  } catch (const std::exception& e) {
    seed_error = e.what();
  }
  report(7, "trained beats untrained on propagation", [&]() -> Verdict {
    if (!seed_error.empty()) return {false, "exception: " + seed_error};
    bool ok = true;
    std::string detail;
    for (const auto& s : seeds) {
      ok = ok && s.j_trained > s.j_untrained;
      detail += (detail.empty() ? "" : ", ") + fmt("J_m %.4f", s.j_trained) + fmt(" vs %.4f", s.j_untrained);
    }
    return {ok, detail};
  });
  report(8, "generated views above random scenes", [&]() -> Verdict {
    if (!seed_error.empty()) return {false, "exception: " + seed_error};
    bool ok = true;
    std::string detail;
    for (const auto& s : seeds) {
      ok = ok && s.generated.mean_gs > s.random.mean_gs && s.generated.mean_nps > s.random.mean_nps;
      detail += (detail.empty() ? "" : "; ") + fmt("GS %.6f", s.generated.mean_gs) +
                fmt(" vs %.6f", s.random.mean_gs) + fmt(", NPS %.4f", s.generated.mean_nps) +
                fmt(" vs %.4f", s.random.mean_nps);
    }
    return {ok, detail};
  });

  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

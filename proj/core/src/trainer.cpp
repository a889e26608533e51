#include "cdgmae/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>

#include "cdgmae/checkpoint.hpp"
#include "cdgmae/errors.hpp"
#include "cdgmae/ops.hpp"

namespace cdgmae {
namespace {

constexpr std::uint64_t kSampleStream = 0x73616d70;
constexpr std::uint64_t kBatchStream = 0x62617463;

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const Tensor& view_image(const ViewBag& bag, std::size_t index) { return index == 0 ? bag.real : bag.views[index - 1]; }

Tensor augment(const Tensor& image, const CropParams* shared, const TrainConfig& config, Rng& rng) {
  if (!config.augment) return image;
  if (shared != nullptr) return apply_crop(image, *shared);
  return random_resized_crop(image, config.crop_scale, config.crop_aspect, rng).image;
}

}  // namespace

std::string strategy_name(ViewStrategy s) {
  switch (s) {
    case ViewStrategy::kAlwaysReal: return "always_real";
    case ViewStrategy::kAlwaysGenerated: return "always_generated";
    case ViewStrategy::kRandomChoice: return "random_choice";
    case ViewStrategy::kKnnPair: return "knn_pair";
  }
  return "random_choice";
}

ViewStrategy parse_strategy(const std::string& name) {
  for (auto s : {ViewStrategy::kAlwaysReal, ViewStrategy::kAlwaysGenerated, ViewStrategy::kRandomChoice,
                 ViewStrategy::kKnnPair}) {
    if (strategy_name(s) == name) return s;
  }
  throw ContractError("unknown view strategy '" + name + "'");
}

void TrainConfig::validate(std::size_t bag_views) const {
  model.validate();
  const std::size_t n = model.num_anchors;
  if (n == 0) throw ContractError("train config: num_anchors must be positive");
  if (strategy == ViewStrategy::kKnnPair) {
    if (n > knn_k) throw ContractError("train config: knn_pair needs num_anchors <= knn_k");
  } else if (n > bag_views) {
    throw ContractError("train config: num_anchors " + std::to_string(n) + " exceeds the " +
                        std::to_string(bag_views) + " generated views per bag");
  }
  if (batch_size == 0) throw ContractError("train config: batch_size must be positive");
  if (steps == 0 && epochs == 0) throw ContractError("train config: steps or epochs must be positive");
  if (!(base_lr >= 0.0)) throw ContractError("train config: base_lr must be non-negative");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw ContractError("train config: warmup_fraction must lie in [0, 1]");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ContractError("train config: betas must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw ContractError("train config: weight_decay must be non-negative");
}

std::size_t TrainConfig::total_steps(std::size_t dataset_size) const {
  if (steps > 0) return steps;
  const std::size_t per_epoch = (dataset_size + batch_size - 1) / batch_size;
  return epochs * std::max<std::size_t>(per_epoch, 1);
}

bool apply_train_key(TrainConfig& c, const std::string& key, const std::string& value) {
  if (apply_model_key(c.model, key, value)) return true;
  if (key == "strategy") {
    c.strategy = parse_strategy(value);
  } else if (key == "knn_k") {
    c.knn_k = parse_size_value(key, value);
  } else if (key == "steps") {
    c.steps = parse_size_value(key, value);
  } else if (key == "epochs") {
    c.epochs = parse_size_value(key, value);
  } else if (key == "batch_size") {
    c.batch_size = parse_size_value(key, value);
  } else if (key == "base_lr") {
    c.base_lr = parse_double_value(key, value);
  } else if (key == "warmup_fraction") {
    c.warmup_fraction = parse_double_value(key, value);
  } else if (key == "weight_decay") {
    c.weight_decay = parse_double_value(key, value);
  } else if (key == "beta1") {
    c.beta1 = parse_double_value(key, value);
  } else if (key == "beta2") {
    c.beta2 = parse_double_value(key, value);
  } else if (key == "eps") {
    c.eps = parse_double_value(key, value);
  } else if (key == "seed") {
    c.seed = parse_size_value(key, value);
  } else if (key == "augment") {
    c.augment = parse_bool_value(key, value);
  } else if (key == "crop_scale_min") {
    c.crop_scale.first = parse_double_value(key, value);
  } else if (key == "crop_scale_max") {
    c.crop_scale.second = parse_double_value(key, value);
  } else if (key == "aspect_min") {
    c.crop_aspect.first = parse_double_value(key, value);
  } else if (key == "aspect_max") {
    c.crop_aspect.second = parse_double_value(key, value);
  } else if (key == "same_crop_across_views") {
    c.same_crop_across_views = parse_bool_value(key, value);
  } else if (key == "checkpoint_every") {
    c.checkpoint_every = parse_size_value(key, value);
  } else {
    return false;
  }
  return true;
}

void apply_config_entries(TrainConfig& config, const std::vector<ConfigEntry>& entries, const std::string& origin) {
  for (const auto& e : entries) {
    bool known = false;
    try {
      known = apply_train_key(config, e.key, e.value);
    } catch (const ContractError& err) {
      throw ContractError(origin + ":" + std::to_string(e.line) + ": " + err.what());
    }
    if (!known) throw ContractError(origin + ":" + std::to_string(e.line) + ": unknown key '" + e.key + "'");
  }
}

std::vector<std::pair<std::string, std::string>> train_config_items(const TrainConfig& c) {
  auto items = model_config_items(c.model);
  const std::vector<std::pair<std::string, std::string>> rest = {
      {"strategy", strategy_name(c.strategy)},
      {"knn_k", std::to_string(c.knn_k)},
      {"steps", std::to_string(c.steps)},
      {"epochs", std::to_string(c.epochs)},
      {"batch_size", std::to_string(c.batch_size)},
      {"base_lr", exact(c.base_lr)},
      {"warmup_fraction", exact(c.warmup_fraction)},
      {"weight_decay", exact(c.weight_decay)},
      {"beta1", exact(c.beta1)},
      {"beta2", exact(c.beta2)},
      {"eps", exact(c.eps)},
      {"seed", std::to_string(c.seed)},
      {"augment", c.augment ? "true" : "false"},
      {"crop_scale_min", exact(c.crop_scale.first)},
      {"crop_scale_max", exact(c.crop_scale.second)},
      {"aspect_min", exact(c.crop_aspect.first)},
      {"aspect_max", exact(c.crop_aspect.second)},
      {"same_crop_across_views", c.same_crop_across_views ? "true" : "false"},
      {"checkpoint_every", std::to_string(c.checkpoint_every)},
  };
  items.insert(items.end(), rest.begin(), rest.end());
  return items;
}

ViewSelection select_views(std::size_t num_generated, ViewStrategy strategy, std::size_t num_anchors, Rng& rng) {
  if (num_generated == 0) throw ContractError("select_views: bag has no generated views");
  ViewSelection sel;
  switch (strategy) {
    case ViewStrategy::kAlwaysReal: sel.target = 0; break;
    case ViewStrategy::kAlwaysGenerated: sel.target = 1 + rng.below(num_generated); break;
    case ViewStrategy::kRandomChoice:
      sel.target = rng.bernoulli(0.5) ? 0 : 1 + rng.below(num_generated);
      break;
    case ViewStrategy::kKnnPair: throw ContractError("select_views: knn_pair draws anchors from other images");
  }
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i <= num_generated; ++i) {
    if (i != sel.target) pool.push_back(i);
  }
  if (num_anchors > pool.size()) {
    throw ContractError("select_views: " + std::to_string(num_anchors) + " anchors requested, only " +
                        std::to_string(pool.size()) + " views remain");
  }
  for (std::size_t i = 0; i < num_anchors; ++i) {
    std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    sel.anchors.push_back(pool[i]);
  }
  return sel;
}

std::vector<std::size_t> knn_neighbors(std::span<const std::vector<float>> features, std::size_t index,
                                       std::size_t k) {
  if (features.size() < k + 1) {
    throw ContractError("knn_neighbors: dataset of " + std::to_string(features.size()) + " images is smaller than k+1");
  }
  if (index >= features.size()) throw ContractError("knn_neighbors: index out of range");
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t j = 0; j < features.size(); ++j) {
    if (j == index) continue;
    scored.emplace_back(cosine_sim(std::span<const float>(features[index]), std::span<const float>(features[j])), j);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(scored[i].second);
  return out;
}

KnnPair knn_pair_select(std::span<const std::vector<float>> features, std::size_t k, Rng& rng) {
  if (k == 0) throw ContractError("knn_pair_select: k must be positive");
  if (features.size() < k + 1) {
    throw ContractError("knn_pair_select: dataset of " + std::to_string(features.size()) +
                        " images is smaller than k+1");
  }
  KnnPair pair;
  pair.target = rng.below(features.size());
  const auto nn = knn_neighbors(features, pair.target, k);
  pair.anchor = nn[rng.below(nn.size())];
  return pair;
}

double lr_at(double step, double total_steps, const TrainConfig& config) {
  if (total_steps <= 0.0) return config.base_lr;
  step = std::clamp(step, 0.0, total_steps);
  const double warmup = config.warmup_fraction * total_steps;
  if (step < warmup) return config.base_lr * step / warmup;
  const double span = total_steps - warmup;
  if (span <= 0.0) return config.base_lr;
  const double progress = (step - warmup) / span;
  return config.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimizerState OptimizerState::for_params(const ModelParams& params) {
  OptimizerState s;
  params.visit([&](const std::string&, const Tensor& t) {
    s.m.push_back(Tensor::zeros(t.shape()));
    s.v.push_back(Tensor::zeros(t.shape()));
  });
  return s;
}

void adamw_step(std::span<float> param, std::span<const float> grad, std::span<float> m, std::span<float> v,
                std::uint64_t step, double lr, const AdamWSettings& hp, bool decay) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw DimensionError("adamw_step: buffer sizes differ");
  }
  if (step == 0) throw ContractError("adamw_step: step count is 1-based");
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
    const double vi = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    double p = param[i];
    if (decay) p -= lr * hp.weight_decay * p;
    p -= lr * (mi / c1) / (std::sqrt(vi / c2) + hp.eps);
    param[i] = static_cast<float>(p);
  }
}

void adamw_update(ModelParams& params, const Gradients& grads, OptimizerState& state, double lr,
                  const AdamWSettings& hp) {
  ++state.step;
  std::size_t index = 0;
  params.visit([&](const std::string& name, Tensor& t) {
    if (index >= state.m.size() || state.m[index].shape() != t.shape()) {
      throw DimensionError("adamw_update: optimizer state does not match parameter '" + name + "'");
    }
    const bool decay = name.size() >= 7 && name.compare(name.size() - 7, 7, ".weight") == 0;
    std::vector<float> zero;
    std::span<const float> g;
    if (grads.contains(t)) {
      g = grads.at(t).data();
    } else {
      zero.assign(t.size(), 0.0f);
      g = zero;
    }
    adamw_step(t.mutable_data(), g, state.m[index].mutable_data(), state.v[index].mutable_data(), state.step, lr, hp,
               decay);
    ++index;
  });
}

SampleInputs make_sample(std::span<const ViewBag> dataset, std::size_t bag_index, const TrainConfig& config, Rng& rng,
                         const std::vector<std::vector<std::size_t>>* neighbors) {
  if (bag_index >= dataset.size()) throw ContractError("make_sample: bag index out of range");
  const ModelConfig& mc = config.model;
  const ViewBag& bag = dataset[bag_index];
  if (bag.real.rank() != 3 || bag.real.dim(0) != mc.image_size || bag.real.dim(1) != mc.image_size) {
    throw ContractError("make_sample: bag images are " + shape_string(bag.real.shape()) + ", model expects " +
                        std::to_string(mc.image_size) + " px");
  }

  // (bag, view) pairs for the target followed by the anchors.
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  if (config.strategy == ViewStrategy::kKnnPair) {
    if (neighbors == nullptr || neighbors->size() != dataset.size()) {
      throw ContractError("make_sample: knn_pair needs precomputed neighbors");
    }
    std::vector<std::size_t> pool = (*neighbors)[bag_index];
    if (mc.num_anchors > pool.size()) throw ContractError("make_sample: not enough neighbors for the anchors");
    picks.emplace_back(bag_index, 0);
    for (std::size_t i = 0; i < mc.num_anchors; ++i) {
      std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
      picks.emplace_back(pool[i], 0);
    }
  } else {
    const ViewSelection sel = select_views(bag.num_views(), config.strategy, mc.num_anchors, rng);
    picks.emplace_back(bag_index, sel.target);
    for (std::size_t a : sel.anchors) picks.emplace_back(bag_index, a);
  }

  std::optional<CropParams> shared;
  if (config.augment && config.same_crop_across_views) {
    shared = sample_crop(mc.image_size, mc.image_size, config.crop_scale, config.crop_aspect, rng);
  }
  const CropParams* crop = shared ? &*shared : nullptr;
  const std::size_t n = mc.num_patches();

  SampleInputs sample;
  const auto& [tb, tv] = picks.front();
  sample.target = patchify(augment(view_image(dataset[tb], tv), crop, config, rng), mc.patch_size);
  sample.target_plan = sample_mask(n, mc.target_mask, rng.next_u64());
  for (std::size_t i = 1; i < picks.size(); ++i) {
    const auto& [ab, av] = picks[i];
    sample.anchors.push_back(patchify(augment(view_image(dataset[ab], av), crop, config, rng), mc.patch_size));
    sample.anchor_plans.push_back(sample_mask(n, mc.anchor_mask, rng.next_u64()));
  }
  return sample;
}

StepResult train_step(ModelParams& params, OptimizerState& state, std::span<const SampleInputs> batch, double lr,
                      const TrainConfig& config) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  Tensor total;
  for (const auto& sample : batch) {
    Tensor loss = reconstruction_loss(params, sample);
    total = total.defined() ? add(total, loss) : loss;
  }
  const Tensor loss = scale(total, 1.0f / static_cast<float>(batch.size()));
  const Gradients grads = backward(loss);

  StepResult result;
  result.loss = loss.item();
  double sq = 0.0;
  std::vector<std::pair<double, std::string>> norms;
  params.visit([&](const std::string& name, const Tensor& t) {
    if (!grads.contains(t)) return;
    double s = 0.0;
    for (float g : grads.at(t).data()) s += static_cast<double>(g) * g;
    sq += s;
    norms.emplace_back(std::sqrt(s), name);
  });
  result.grad_norm = std::sqrt(sq);

  if (!std::isfinite(result.loss) || !std::isfinite(result.grad_norm)) {
    std::ostringstream msg;
    msg << "non-finite training state at step " << state.step + 1 << ": lr=" << format_number(lr)
        << " loss=" << format_number(result.loss) << " grad_norm=" << format_number(result.grad_norm);
    // Non-finite norms rank first; NaN maps to +inf to keep the ordering strict.
    auto key = [](double v) { return std::isfinite(v) ? v : std::numeric_limits<double>::infinity(); };
    std::stable_sort(norms.begin(), norms.end(),
                     [&](const auto& a, const auto& b) { return key(a.first) > key(b.first); });
    for (std::size_t i = 0; i < std::min<std::size_t>(3, norms.size()); ++i) {
      msg << " " << norms[i].second << "=" << format_number(norms[i].first);
    }
    throw NumericalError(msg.str());
  }

  adamw_update(params, grads, state, lr, {config.beta1, config.beta2, config.weight_decay, config.eps});
  return result;
}

Record step_record(const StepStats& s) {
  return {{"step", std::to_string(s.step)},
          {"lr", format_number(s.lr)},
          {"loss", format_number(s.loss)},
          {"grad_norm", format_number(s.grad_norm)}};
}

Trainer::Trainer(TrainConfig config, std::vector<ViewBag> dataset)
    : config_(std::move(config)), dataset_(std::move(dataset)) {
  params_ = init_params(config_.model, mix_seed(config_.seed, 0x696e6974));
  prepare();
}

Trainer::Trainer(TrainConfig config, std::vector<ViewBag> dataset, const ModelParams& init)
    : config_(std::move(config)), dataset_(std::move(dataset)), params_(init.cast<float>()) {
  prepare();
}

void Trainer::prepare() {
  if (dataset_.empty()) throw ContractError("trainer: empty dataset");
  std::size_t views = dataset_.front().num_views();
  for (const auto& bag : dataset_) views = std::min(views, bag.num_views());
  config_.validate(views);
  total_steps_ = config_.total_steps(dataset_.size());
  state_ = OptimizerState::for_params(params_);
  if (config_.strategy == ViewStrategy::kKnnPair) {
    std::vector<std::vector<float>> feats;
    for (const auto& bag : dataset_) feats.push_back(extract_features(params_, bag.real).cls);
    for (std::size_t i = 0; i < feats.size(); ++i) neighbors_.push_back(knn_neighbors(feats, i, config_.knn_k));
  }
}

StepStats Trainer::step() {
  if (done()) throw ContractError("trainer: all steps already taken");
  const auto start = std::chrono::steady_clock::now();
  const std::size_t b = config_.batch_size;
  const std::uint64_t s = steps_done_;

  std::vector<std::size_t> order(dataset_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng batch_rng(mix_seed(mix_seed(config_.seed, kBatchStream), s));
  std::vector<SampleInputs> batch;
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t pick;
    if (b <= order.size()) {
      std::swap(order[i], order[i + batch_rng.below(order.size() - i)]);
      pick = order[i];
    } else {
      pick = batch_rng.below(order.size());
    }
    Rng rng(mix_seed(mix_seed(config_.seed, kSampleStream), s * b + i));
    batch.push_back(make_sample(dataset_, pick, config_, rng, neighbors_.empty() ? nullptr : &neighbors_));
  }

  StepStats stats;
  stats.step = s + 1;
  stats.lr = lr_at(static_cast<double>(s + 1), static_cast<double>(total_steps_), config_);
  const StepResult r = train_step(params_, state_, batch, stats.lr, config_);
  stats.loss = r.loss;
  stats.grad_norm = r.grad_norm;
  ++steps_done_;
  stats.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

std::vector<StepStats> Trainer::run(const std::function<void(const StepStats&)>& on_step) {
  std::vector<StepStats> out;
  while (!done()) {
    out.push_back(step());
    if (on_step) on_step(out.back());
  }
  return out;
}

}  // namespace cdgmae

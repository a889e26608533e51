#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdgmae/random.hpp"
#include "cdgmae/records.hpp"
#include "cdgmae/synth.hpp"
#include "cdgmae/vit.hpp"

namespace cdgmae {

enum class ViewStrategy { kAlwaysReal, kAlwaysGenerated, kRandomChoice, kKnnPair };

std::string strategy_name(ViewStrategy s);
ViewStrategy parse_strategy(const std::string& name);

/// Training settings. Anchor count and masking ratios live in `model`.
/// The model defaults to the desk-scale "tiny" preset.
struct TrainConfig {
  ModelConfig model = ModelConfig::preset("tiny");
  ViewStrategy strategy = ViewStrategy::kRandomChoice;
  std::size_t knn_k = 5;
  std::size_t steps = 0;   // when nonzero, overrides epochs
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double base_lr = 1.5e-4;
  double warmup_fraction = 0.1;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  bool augment = true;
  std::pair<double, double> crop_scale{0.5, 1.0};
  std::pair<double, double> crop_aspect{0.75, 1.33};
  bool same_crop_across_views = true;
  std::size_t checkpoint_every = 0;

  /// Throws ContractError; `bag_views` is the number of generated views M.
  void validate(std::size_t bag_views) const;
  std::size_t total_steps(std::size_t dataset_size) const;
};

/// Sets one config key (model keys included). Returns false for unknown keys.
bool apply_train_key(TrainConfig& config, const std::string& key, const std::string& value);
/// Applies every entry; unknown keys raise ContractError with origin and line.
void apply_config_entries(TrainConfig& config, const std::vector<ConfigEntry>& entries, const std::string& origin);
std::vector<std::pair<std::string, std::string>> train_config_items(const TrainConfig& config);

/// View indices into a bag: 0 is the real image, 1..M the generated views.
struct ViewSelection {
  std::size_t target = 0;
  std::vector<std::size_t> anchors;
};

/// Not valid for kKnnPair, which draws anchors from other images.
ViewSelection select_views(std::size_t num_generated, ViewStrategy strategy, std::size_t num_anchors, Rng& rng);

/// Indices of the k most cosine-similar feature vectors to `index`, most
/// similar first, excluding `index` itself. Ties go to the lower index.
std::vector<std::size_t> knn_neighbors(std::span<const std::vector<float>> features, std::size_t index,
                                       std::size_t k);

struct KnnPair {
  std::size_t target = 0;
  std::size_t anchor = 0;
};

/// Uniform target image; anchor uniform among its k nearest neighbors.
KnnPair knn_pair_select(std::span<const std::vector<float>> features, std::size_t k, Rng& rng);

/// Linear warmup to base_lr, then cosine decay to zero at total_steps.
double lr_at(double step, double total_steps, const TrainConfig& config);

struct OptimizerState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  /// Zero moments shaped like the trainable tensors, in visit order.
  static OptimizerState for_params(const ModelParams& params);
};

struct AdamWSettings {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.05;
  double eps = 1e-8;
};

/// One AdamW step on a flat buffer. `step` is the 1-based step count used
/// for bias correction.
void adamw_step(std::span<float> param, std::span<const float> grad, std::span<float> m, std::span<float> v,
                std::uint64_t step, double lr, const AdamWSettings& hp, bool decay);

/// Steps every trainable tensor; tensors without a gradient use zero.
/// Weight decay applies to `.weight` matrices only.
void adamw_update(ModelParams& params, const Gradients& grads, OptimizerState& state, double lr,
                  const AdamWSettings& hp);

/// Builds one training sample: crop, view selection and masking.
/// `neighbors` is required for kKnnPair.
SampleInputs make_sample(std::span<const ViewBag> dataset, std::size_t bag_index, const TrainConfig& config, Rng& rng,
                         const std::vector<std::vector<std::size_t>>* neighbors = nullptr);

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;
};

/// Mean reconstruction loss over the batch, backward and one AdamW update.
/// A non-finite loss or gradient raises NumericalError with diagnostics.
StepResult train_step(ModelParams& params, OptimizerState& state, std::span<const SampleInputs> batch, double lr,
                      const TrainConfig& config);

struct StepStats {
  std::uint64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

/// Deterministic log record; wall time is kept out of it.
Record step_record(const StepStats& stats);

class Trainer {
 public:
  Trainer(TrainConfig config, std::vector<ViewBag> dataset);
  /// Trains a deep copy of `init`; the caller's tensors are left untouched.
  Trainer(TrainConfig config, std::vector<ViewBag> dataset, const ModelParams& init);

  StepStats step();
  std::vector<StepStats> run(const std::function<void(const StepStats&)>& on_step = {});

  bool done() const { return steps_done_ >= total_steps_; }
  std::size_t total_steps() const { return total_steps_; }
  std::size_t steps_done() const { return steps_done_; }
  const ModelParams& params() const { return params_; }
  const TrainConfig& config() const { return config_; }

 private:
  void prepare();

  TrainConfig config_;
  std::vector<ViewBag> dataset_;
  ModelParams params_;
  OptimizerState state_;
  std::vector<std::vector<std::size_t>> neighbors_;
  std::size_t total_steps_ = 0;
  std::size_t steps_done_ = 0;
};

}  // namespace cdgmae

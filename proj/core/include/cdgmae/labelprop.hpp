#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdgmae/features.hpp"
#include "cdgmae/synth.hpp"
#include "cdgmae/tensor.hpp"
#include "cdgmae/vit.hpp"

namespace cdgmae {

struct PropagationConfig {
  std::size_t top_k = 7;
  std::size_t queue_length = 20;
  std::size_t neighborhood = 20;  // Chebyshev radius in patch cells
  double temperature = 0.7;
  bool include_first_frame = true;

  void validate() const;
};

/// Context memory: optional pinned first frame plus a bounded queue of recent
/// frames. Features are stored row-normalized; labels are [L, C] soft labels
/// with background mass implicit.
class PropagationContext {
 public:
  struct Entry {
    std::vector<double> features;  // [L * D], unit rows (zero rows stay zero)
    Tensor labels;                 // [L, C]
  };

  PropagationContext(std::size_t rows, std::size_t cols, const PropagationConfig& config);

  /// First annotated frame.
  void seed(const Tensor& features, const Tensor& labels);
  /// Appends a propagated frame, evicting the oldest queued one when full.
  void push(const Tensor& features, const Tensor& labels);

  bool empty() const { return !pinned_ && queue_.empty(); }
  std::size_t size() const { return (pinned_ ? 1 : 0) + queue_.size(); }
  std::size_t queued() const { return queue_.size(); }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t dim() const { return dim_; }
  std::size_t num_classes() const { return classes_; }
  const PropagationConfig& config() const { return config_; }

  /// Entries in a fixed order: pinned first, then queue oldest to newest.
  std::vector<const Entry*> entries() const;

 private:
  Entry make_entry(const Tensor& features, const Tensor& labels);

  std::size_t rows_;
  std::size_t cols_;
  std::size_t dim_ = 0;
  std::size_t classes_ = 0;
  PropagationConfig config_;
  std::optional<Entry> pinned_;
  std::deque<Entry> queue_;
};

/// Unit-normalizes each row in double; zero rows stay zero.
std::vector<double> normalize_rows(const Tensor& features);

/// Predicts soft labels [L, C] for the query frame from the context, then
/// pushes the query frame with its prediction onto the context. Candidates
/// with non-positive affinity carry no evidence and are skipped.
Tensor propagate_frame(PropagationContext& ctx, const Tensor& query_features);

/// Per-patch argmax over {background = 1 - sum, class 1..C}; ties go to the
/// lower id. Returns ids in [0, C] as floats, shape [rows, cols].
Tensor hard_labels(const Tensor& soft, std::size_t rows, std::size_t cols);

/// Majority vote over each patch block of an integer label map [H, W]; ties go
/// to the lower id. Returns a one-hot [L, C] tensor (background all zero).
Tensor downsample_labels(const Tensor& label_map, std::size_t patch, std::size_t num_classes);

/// Nearest-neighbor expansion of a [rows, cols] label grid to pixels.
Tensor upsample_labels(const Tensor& grid, std::size_t patch);

// --- metrics ---------------------------------------------------------------

double jaccard(const Tensor& pred_mask, const Tensor& gt_mask);
/// Inner 1-pixel boundary: mask pixels with a 4-neighbor outside the mask
/// (the image border counts as outside).
Tensor mask_boundary(const Tensor& mask);
double boundary_f(const Tensor& pred_mask, const Tensor& gt_mask, std::size_t tol);
/// ceil(0.0075 * image diagonal).
std::size_t default_boundary_tolerance(std::size_t height, std::size_t width);

/// Per-class IoU accumulated over all frames jointly, averaged over the
/// classes that occur in the ground truth.
double miou(std::span<const Tensor> pred_labels, std::span<const Tensor> gt_labels, std::size_t num_classes);

struct BBox {
  double width = 0.0;
  double height = 0.0;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Fraction of keypoints within alpha * max(box side) of ground truth; one
/// box per keypoint.
double pck(std::span<const Point> pred, std::span<const Point> gt, std::span<const BBox> boxes, double alpha);

// --- evaluation ------------------------------------------------------------

enum class EvalTask { kSegmentation, kParts, kPose };

std::string task_name(EvalTask task);
EvalTask parse_task(const std::string& name);

/// Image -> patch features on the image's patch grid.
using FeatureExtractor = std::function<FeatureSet(const Tensor& image)>;

FeatureExtractor model_extractor(const ModelParams& params);
/// Stub encoder: one-hot grid-position features, so every patch matches only
/// itself across frames.
FeatureExtractor identity_extractor(std::size_t patch_size);

struct VideoMetrics {
  std::string id;
  std::size_t frames = 0;
  double j = 0.0;
  double f = 0.0;
  double jf = 0.0;
  double miou = 0.0;
  double pck_01 = 0.0;
  double pck_02 = 0.0;
};

struct MetricsReport {
  EvalTask task = EvalTask::kSegmentation;
  std::vector<VideoMetrics> videos;
  double mean_j = 0.0;
  double mean_f = 0.0;
  double mean_jf = 0.0;
  double mean_miou = 0.0;
  double mean_pck_01 = 0.0;
  double mean_pck_02 = 0.0;
};

VideoMetrics evaluate_video(const FeatureExtractor& extractor, const Video& video, EvalTask task,
                            const PropagationConfig& config, std::string id = {});

struct NamedVideo {
  std::string id;
  Video video;
};

MetricsReport run_eval(const FeatureExtractor& extractor, std::span<const NamedVideo> videos, EvalTask task,
                       const PropagationConfig& config);

/// Every subdirectory of `root` is one video, ordered by name.
std::vector<NamedVideo> read_video_dataset(const std::filesystem::path& root);

std::string format_metrics_table(const MetricsReport& report);
std::string format_metrics_records(const MetricsReport& report);

}  // namespace cdgmae

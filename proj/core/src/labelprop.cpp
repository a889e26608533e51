#include "cdgmae/labelprop.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "cdgmae/errors.hpp"
#include "cdgmae/records.hpp"

namespace cdgmae {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

std::size_t label_id(float v) { return v <= 0.0f ? 0 : static_cast<std::size_t>(std::lround(v)); }

Tensor binary_mask(const Tensor& labels, std::size_t id) {
  std::vector<float> out(labels.size());
  const auto v = labels.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = label_id(v[i]) == id ? 1.0f : 0.0f;
  return Tensor::from_data(labels.shape(), std::move(out));
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::size_t max_label(const Tensor& labels) {
  std::size_t m = 0;
  for (float v : labels.data()) m = std::max(m, label_id(v));
  return m;
}

/// Soft labels for the first frame's keypoints: one channel per keypoint,
/// mass split evenly among keypoints sharing a patch.
Tensor keypoint_labels(std::span<const Keypoint> kps, std::size_t rows, std::size_t cols, std::size_t patch) {
  const std::size_t c = kps.size();
  std::vector<std::size_t> cell(c);
  std::vector<std::size_t> load(rows * cols, 0);
  for (std::size_t k = 0; k < c; ++k) {
    const auto r = std::min(rows - 1, static_cast<std::size_t>(std::max(0.0, kps[k].y) / static_cast<double>(patch)));
    const auto q = std::min(cols - 1, static_cast<std::size_t>(std::max(0.0, kps[k].x) / static_cast<double>(patch)));
    cell[k] = r * cols + q;
    ++load[cell[k]];
  }
  std::vector<float> out(rows * cols * c, 0.0f);
  for (std::size_t k = 0; k < c; ++k) out[cell[k] * c + k] = 1.0f / static_cast<float>(load[cell[k]]);
  return Tensor::from_data({rows * cols, c}, std::move(out));
}

BBox object_box(const Tensor& mask, std::size_t object, std::span<const Keypoint> kps) {
  const std::size_t h = mask.dim(0), w = mask.dim(1);
  const auto v = mask.data();
  std::size_t x0 = w, y0 = h, x1 = 0, y1 = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (label_id(v[y * w + x]) != object + 1) continue;
      x0 = std::min(x0, x), x1 = std::max(x1, x);
      y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  }
  if (x0 <= x1 && y0 <= y1) return {static_cast<double>(x1 - x0 + 1), static_cast<double>(y1 - y0 + 1)};
  // Fully occluded: fall back to the object's keypoint extent.
  double kx0 = 1e300, ky0 = 1e300, kx1 = -1e300, ky1 = -1e300;
  for (const auto& k : kps) {
    if (k.object != object) continue;
    kx0 = std::min(kx0, k.x), kx1 = std::max(kx1, k.x);
    ky0 = std::min(ky0, k.y), ky1 = std::max(ky1, k.y);
  }
  if (kx0 > kx1) return {1.0, 1.0};
  return {std::max(1.0, kx1 - kx0), std::max(1.0, ky1 - ky0)};
}

}  // namespace

void PropagationConfig::validate() const {
  if (top_k == 0) throw ContractError("propagation: top_k must be positive");
  if (!(temperature > 0.0)) throw ContractError("propagation: temperature must be positive");
  if (queue_length == 0 && !include_first_frame) {
    throw ContractError("propagation: an empty queue without the first frame leaves no context");
  }
}

std::vector<double> normalize_rows(const Tensor& features) {
  if (features.rank() != 2) throw DimensionError("normalize_rows: expected [L, D] features");
  const std::size_t l = features.dim(0), d = features.dim(1);
  const auto v = features.data();
  std::vector<double> out(l * d, 0.0);
  for (std::size_t i = 0; i < l; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += static_cast<double>(v[i * d + j]) * v[i * d + j];
    if (sq <= 0.0) continue;
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = v[i * d + j] * inv;
  }
  return out;
}

PropagationContext::PropagationContext(std::size_t rows, std::size_t cols, const PropagationConfig& config)
    : rows_(rows), cols_(cols), config_(config) {
  config_.validate();
  if (rows == 0 || cols == 0) throw ContractError("propagation: empty patch grid");
}

PropagationContext::Entry PropagationContext::make_entry(const Tensor& features, const Tensor& labels) {
  const std::size_t l = rows_ * cols_;
  if (features.rank() != 2 || features.dim(0) != l) {
    throw ContractError("propagation: features " + shape_string(features.shape()) + " do not cover the " +
                        std::to_string(rows_) + "x" + std::to_string(cols_) + " grid");
  }
  if (labels.rank() != 2 || labels.dim(0) != l) {
    throw ContractError("propagation: labels " + shape_string(labels.shape()) + " do not cover the grid");
  }
  if (dim_ != 0 && features.dim(1) != dim_) {
    throw ContractError("propagation: feature dim " + std::to_string(features.dim(1)) + " != context dim " +
                        std::to_string(dim_));
  }
  if (!empty() && labels.dim(1) != classes_) throw ContractError("propagation: label channel count changed");
  dim_ = features.dim(1);
  classes_ = labels.dim(1);
  return {normalize_rows(features), labels.detach()};
}

void PropagationContext::seed(const Tensor& features, const Tensor& labels) {
  if (!empty()) throw ContractError("propagation: context already seeded");
  Entry e = make_entry(features, labels);
  if (config_.include_first_frame) {
    pinned_ = std::move(e);
  } else {
    queue_.push_back(std::move(e));
  }
}

void PropagationContext::push(const Tensor& features, const Tensor& labels) {
  Entry e = make_entry(features, labels);
  if (config_.queue_length == 0) return;
  queue_.push_back(std::move(e));
  while (queue_.size() > config_.queue_length) queue_.pop_front();
}

std::vector<const PropagationContext::Entry*> PropagationContext::entries() const {
  std::vector<const Entry*> out;
  if (pinned_) out.push_back(&*pinned_);
  for (const auto& e : queue_) out.push_back(&e);
  return out;
}

Tensor propagate_frame(PropagationContext& ctx, const Tensor& query_features) {
  if (ctx.empty()) throw ContractError("propagate_frame: empty context");
  const std::size_t rows = ctx.rows(), cols = ctx.cols(), l = rows * cols;
  if (query_features.rank() != 2 || query_features.dim(0) != l || query_features.dim(1) != ctx.dim()) {
    throw ContractError("propagate_frame: query " + shape_string(query_features.shape()) + " does not match context [" +
                        std::to_string(l) + ", " + std::to_string(ctx.dim()) + "]");
  }
  const PropagationConfig& cfg = ctx.config();
  const std::size_t d = ctx.dim(), c = ctx.num_classes();
  const auto entries = ctx.entries();
  const std::vector<double> q = normalize_rows(query_features);
  const long radius = static_cast<long>(std::min<std::size_t>(cfg.neighborhood, std::max(rows, cols)));

  std::vector<float> out(l * c, 0.0f);
  struct Candidate {
    double affinity;
    std::size_t entry;
    std::size_t patch;
  };
  std::vector<Candidate> cand;
  std::vector<double> acc(c);
  for (std::size_t i = 0; i < l; ++i) {
    const long r = static_cast<long>(i / cols), cc = static_cast<long>(i % cols);
    const double* qi = q.data() + i * d;
    cand.clear();
    const long r0 = std::max(0L, r - radius), r1 = std::min(static_cast<long>(rows) - 1, r + radius);
    const long c0 = std::max(0L, cc - radius), c1 = std::min(static_cast<long>(cols) - 1, cc + radius);
    for (std::size_t e = 0; e < entries.size(); ++e) {
      for (long rr = r0; rr <= r1; ++rr) {
        for (long col = c0; col <= c1; ++col) {
          const std::size_t j = static_cast<std::size_t>(rr) * cols + static_cast<std::size_t>(col);
          const double* kj = entries[e]->features.data() + j * d;
          double a = 0.0;
          for (std::size_t t = 0; t < d; ++t) a += qi[t] * kj[t];
          if (a > 0.0) cand.push_back({a, e, j});
        }
      }
    }
    if (cand.empty()) continue;
    const std::size_t k = std::min(cfg.top_k, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<long>(k), cand.end(),
                      [](const Candidate& x, const Candidate& y) {
                        if (x.affinity != y.affinity) return x.affinity > y.affinity;
                        if (x.entry != y.entry) return x.entry < y.entry;
                        return x.patch < y.patch;
                      });
    const double top = cand.front().affinity;
    double z = 0.0;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = 0; t < k; ++t) z += std::exp((cand[t].affinity - top) / cfg.temperature);
    for (std::size_t t = 0; t < k; ++t) {
      const double w = std::exp((cand[t].affinity - top) / cfg.temperature) / z;
      const auto lab = entries[cand[t].entry]->labels.data();
      for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += w * lab[cand[t].patch * c + ch];
    }
    for (std::size_t ch = 0; ch < c; ++ch) out[i * c + ch] = static_cast<float>(std::clamp(acc[ch], 0.0, 1.0));
  }
  Tensor pred = Tensor::from_data({l, c}, std::move(out));
  ctx.push(query_features, pred);
  return pred;
}

Tensor hard_labels(const Tensor& soft, std::size_t rows, std::size_t cols) {
  if (soft.rank() != 2 || soft.dim(0) != rows * cols) throw DimensionError("hard_labels: soft labels do not cover grid");
  const std::size_t c = soft.dim(1);
  const auto v = soft.data();
  std::vector<float> out(rows * cols);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double mass = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) mass += v[i * c + ch];
    double best = 1.0 - mass;
    std::size_t arg = 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      if (v[i * c + ch] > best) best = v[i * c + ch], arg = ch + 1;
    }
    out[i] = static_cast<float>(arg);
  }
  return Tensor::from_data({rows, cols}, std::move(out));
}

Tensor downsample_labels(const Tensor& label_map, std::size_t patch, std::size_t num_classes) {
  if (label_map.rank() != 2) throw DimensionError("downsample_labels: expected [H, W] label map");
  const std::size_t h = label_map.dim(0), w = label_map.dim(1);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw ContractError("downsample_labels: label map is not divisible by the patch size");
  }
  const std::size_t rows = h / patch, cols = w / patch;
  const auto v = label_map.data();
  std::vector<float> out(rows * cols * num_classes, 0.0f);
  std::vector<std::size_t> votes(num_classes + 1);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::fill(votes.begin(), votes.end(), 0);
      for (std::size_t y = r * patch; y < (r + 1) * patch; ++y) {
        for (std::size_t x = c * patch; x < (c + 1) * patch; ++x) {
          const std::size_t id = label_id(v[y * w + x]);
          if (id > num_classes) throw ContractError("downsample_labels: label " + std::to_string(id) + " out of range");
          ++votes[id];
        }
      }
      const std::size_t winner =
          static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
      if (winner > 0) out[(r * cols + c) * num_classes + winner - 1] = 1.0f;
    }
  }
  return Tensor::from_data({rows * cols, num_classes}, std::move(out));
}

Tensor upsample_labels(const Tensor& grid, std::size_t patch) {
  if (grid.rank() != 2) throw DimensionError("upsample_labels: expected [rows, cols] grid");
  const std::size_t rows = grid.dim(0), cols = grid.dim(1), h = rows * patch, w = cols * patch;
  const auto v = grid.data();
  std::vector<float> out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) out[y * w + x] = v[(y / patch) * cols + x / patch];
  }
  return Tensor::from_data({h, w}, std::move(out));
}

double jaccard(const Tensor& pred_mask, const Tensor& gt_mask) {
  require_same_shape(pred_mask, gt_mask, "jaccard");
  const auto p = pred_mask.data(), g = gt_mask.data();
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool a = p[i] > 0.5f, b = g[i] > 0.5f;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Tensor mask_boundary(const Tensor& mask) {
  if (mask.rank() != 2) throw DimensionError("mask_boundary: expected [H, W] mask");
  const std::size_t h = mask.dim(0), w = mask.dim(1);
  const auto v = mask.data();
  auto on = [&](long y, long x) {
    if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return false;
    return v[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] > 0.5f;
  };
  std::vector<float> out(h * w, 0.0f);
  for (long y = 0; y < static_cast<long>(h); ++y) {
    for (long x = 0; x < static_cast<long>(w); ++x) {
      if (!on(y, x)) continue;
      if (!on(y - 1, x) || !on(y + 1, x) || !on(y, x - 1) || !on(y, x + 1)) {
        out[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = 1.0f;
      }
    }
  }
  return Tensor::from_data(mask.shape(), std::move(out));
}

double boundary_f(const Tensor& pred_mask, const Tensor& gt_mask, std::size_t tol) {
  require_same_shape(pred_mask, gt_mask, "boundary_f");
  const Tensor pb = mask_boundary(pred_mask), gb = mask_boundary(gt_mask);
  const std::size_t h = pb.dim(0), w = pb.dim(1);
  const long t = static_cast<long>(tol);
  const double t2 = static_cast<double>(tol) * static_cast<double>(tol);

  // Fraction of `from` boundary pixels within tol of a `to` boundary pixel.
  auto matched = [&](const Tensor& from, const Tensor& to, std::size_t& total) {
    const auto f = from.data(), g = to.data();
    std::size_t hits = 0;
    total = 0;
    for (long y = 0; y < static_cast<long>(h); ++y) {
      for (long x = 0; x < static_cast<long>(w); ++x) {
        if (f[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] < 0.5f) continue;
        ++total;
        bool hit = false;
        for (long dy = -t; dy <= t && !hit; ++dy) {
          for (long dx = -t; dx <= t && !hit; ++dx) {
            const long yy = y + dy, xx = x + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
            if (static_cast<double>(dy * dy + dx * dx) > t2) continue;
            hit = g[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)] > 0.5f;
          }
        }
        hits += hit;
      }
    }
    return hits;
  };
  std::size_t np = 0, ng = 0;
  const std::size_t hp = matched(pb, gb, np);
  const std::size_t hg = matched(gb, pb, ng);
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const double precision = static_cast<double>(hp) / static_cast<double>(np);
  const double recall = static_cast<double>(hg) / static_cast<double>(ng);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

std::size_t default_boundary_tolerance(std::size_t height, std::size_t width) {
  const double diag = std::hypot(static_cast<double>(height), static_cast<double>(width));
  return static_cast<std::size_t>(std::ceil(0.0075 * diag));
}

double miou(std::span<const Tensor> pred_labels, std::span<const Tensor> gt_labels, std::size_t num_classes) {
  if (pred_labels.size() != gt_labels.size()) throw ContractError("miou: frame count mismatch");
  std::vector<std::size_t> inter(num_classes, 0), uni(num_classes, 0), present(num_classes, 0);
  for (std::size_t f = 0; f < pred_labels.size(); ++f) {
    require_same_shape(pred_labels[f], gt_labels[f], "miou");
    const auto p = pred_labels[f].data(), g = gt_labels[f].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const std::size_t a = label_id(p[i]), b = label_id(g[i]);
      if (a >= num_classes || b >= num_classes) throw ContractError("miou: label outside [0, num_classes)");
      ++present[b];
      if (a == b) {
        ++inter[a];
        ++uni[a];
      } else {
        ++uni[a];
        ++uni[b];
      }
    }
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (present[k] == 0) continue;
    sum += static_cast<double>(inter[k]) / static_cast<double>(uni[k]);
    ++count;
  }
  return count == 0 ? 1.0 : sum / static_cast<double>(count);
}

double pck(std::span<const Point> pred, std::span<const Point> gt, std::span<const BBox> boxes, double alpha) {
  if (pred.size() != gt.size() || boxes.size() != gt.size()) throw ContractError("pck: keypoint count mismatch");
  if (gt.empty()) throw ContractError("pck: no keypoints");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double err = std::hypot(pred[i].x - gt[i].x, pred[i].y - gt[i].y);
    ok += err <= alpha * std::max(boxes[i].width, boxes[i].height);
  }
  return static_cast<double>(ok) / static_cast<double>(gt.size());
}

std::string task_name(EvalTask task) {
  switch (task) {
    case EvalTask::kSegmentation: return "seg";
    case EvalTask::kParts: return "parts";
    case EvalTask::kPose: return "pose";
  }
  return "seg";
}

EvalTask parse_task(const std::string& name) {
  for (auto t : {EvalTask::kSegmentation, EvalTask::kParts, EvalTask::kPose}) {
    if (task_name(t) == name) return t;
  }
  throw ContractError("unknown task '" + name + "' (expected seg, parts or pose)");
}

FeatureExtractor model_extractor(const ModelParams& params) {
  return [&params](const Tensor& image) { return extract_features(params, image); };
}

FeatureExtractor identity_extractor(std::size_t patch_size) {
  return [patch_size](const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) % patch_size != 0 || image.dim(1) % patch_size != 0) {
      throw ContractError("identity_extractor: image is not divisible by the patch size");
    }
    FeatureSet fs;
    fs.rows = image.dim(0) / patch_size;
    fs.cols = image.dim(1) / patch_size;
    const std::size_t l = fs.rows * fs.cols;
    std::vector<float> data(l * l, 0.0f);
    for (std::size_t i = 0; i < l; ++i) data[i * l + i] = 1.0f;
    fs.patches = Tensor::from_data({l, l}, std::move(data));
    fs.cls.assign(l, 1.0f);
    return fs;
  };
}

VideoMetrics evaluate_video(const FeatureExtractor& extractor, const Video& video, EvalTask task,
                            const PropagationConfig& config, std::string id) {
  const std::size_t frames = video.num_frames();
  if (frames < 2) throw ContractError("evaluate_video: at least two frames are required");
  if (video.masks.size() != frames || video.parts.size() != frames) {
    throw ContractError("evaluate_video: annotations do not cover every frame");
  }
  const std::size_t h = video.frames[0].dim(0), w = video.frames[0].dim(1);

  FeatureSet first = extractor(video.frames[0]);
  if (h % first.rows != 0 || w % first.cols != 0 || h / first.rows != w / first.cols) {
    throw ContractError("evaluate_video: frames are not divisible by the feature grid");
  }
  const std::size_t patch = h / first.rows;
  const std::size_t objects = video.scene.objects.size();

  std::size_t classes = 0;
  Tensor seed_labels;
  switch (task) {
    case EvalTask::kSegmentation:
      classes = std::max(objects, max_label(video.masks[0]));
      seed_labels = downsample_labels(video.masks[0], patch, classes);
      break;
    case EvalTask::kParts:
      classes = std::max(4 * objects, max_label(video.parts[0]));
      seed_labels = downsample_labels(video.parts[0], patch, classes);
      break;
    case EvalTask::kPose:
      if (video.keypoints.size() != frames || video.keypoints[0].empty()) {
        throw ContractError("evaluate_video: pose task needs keypoints on every frame");
      }
      classes = video.keypoints[0].size();
      seed_labels = keypoint_labels(video.keypoints[0], first.rows, first.cols, patch);
      break;
  }

  PropagationContext ctx(first.rows, first.cols, config);
  ctx.seed(first.patches, seed_labels);

  VideoMetrics m;
  m.id = std::move(id);
  m.frames = frames;
  std::vector<Tensor> pred_maps, gt_maps;
  std::vector<Point> pred_kp, gt_kp;
  std::vector<BBox> boxes;
  for (std::size_t t = 1; t < frames; ++t) {
    const FeatureSet fs = extractor(video.frames[t]);
    if (fs.rows != first.rows || fs.cols != first.cols) throw ContractError("evaluate_video: feature grid changed");
    const Tensor soft = propagate_frame(ctx, fs.patches);
    if (task == EvalTask::kPose) {
      const auto v = soft.data();
      const auto& kps = video.keypoints[t];
      if (kps.size() != classes) throw ContractError("evaluate_video: keypoint count changed");
      for (std::size_t k = 0; k < classes; ++k) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < soft.dim(0); ++i) {
          if (v[i * classes + k] > v[best * classes + k]) best = i;
        }
        pred_kp.push_back({(static_cast<double>(best % first.cols) + 0.5) * static_cast<double>(patch),
                           (static_cast<double>(best / first.cols) + 0.5) * static_cast<double>(patch)});
        gt_kp.push_back({kps[k].x, kps[k].y});
        boxes.push_back(object_box(video.masks[t], kps[k].object, kps));
      }
    } else {
      pred_maps.push_back(upsample_labels(hard_labels(soft, first.rows, first.cols), patch));
      gt_maps.push_back(task == EvalTask::kSegmentation ? video.masks[t] : video.parts[t]);
    }
  }

  if (task == EvalTask::kSegmentation) {
    const std::size_t tol = default_boundary_tolerance(h, w);
    std::vector<double> js, fsc;
    for (std::size_t o = 1; o <= classes; ++o) {
      bool in_first = false;
      for (float v : video.masks[0].data()) in_first = in_first || label_id(v) == o;
      if (!in_first) continue;
      std::vector<double> jo, fo;
      for (std::size_t t = 0; t < pred_maps.size(); ++t) {
        const Tensor p = binary_mask(pred_maps[t], o), g = binary_mask(gt_maps[t], o);
        jo.push_back(jaccard(p, g));
        fo.push_back(boundary_f(p, g, tol));
      }
      js.push_back(mean_of(jo));
      fsc.push_back(mean_of(fo));
    }
    m.j = js.empty() ? 1.0 : mean_of(js);
    m.f = fsc.empty() ? 1.0 : mean_of(fsc);
    m.jf = (m.j + m.f) / 2.0;
  } else if (task == EvalTask::kParts) {
    m.miou = miou(pred_maps, gt_maps, classes + 1);
  } else {
    m.pck_01 = pck(pred_kp, gt_kp, boxes, 0.1);
    m.pck_02 = pck(pred_kp, gt_kp, boxes, 0.2);
  }
  return m;
}

MetricsReport run_eval(const FeatureExtractor& extractor, std::span<const NamedVideo> videos, EvalTask task,
                       const PropagationConfig& config) {
  if (videos.empty()) throw ContractError("run_eval: no videos");
  MetricsReport report;
  report.task = task;
  for (const auto& v : videos) report.videos.push_back(evaluate_video(extractor, v.video, task, config, v.id));
  const double n = static_cast<double>(report.videos.size());
  for (const auto& v : report.videos) {
    report.mean_j += v.j / n;
    report.mean_f += v.f / n;
    report.mean_miou += v.miou / n;
    report.mean_pck_01 += v.pck_01 / n;
    report.mean_pck_02 += v.pck_02 / n;
  }
  report.mean_jf = (report.mean_j + report.mean_f) / 2.0;
  return report;
}

std::vector<NamedVideo> read_video_dataset(const std::filesystem::path& root) {
  std::vector<NamedVideo> out;
  for (const auto& dir : list_subdirectories(root)) out.push_back({dir.filename().string(), read_video(dir)});
  if (out.empty()) throw IoError(root.string() + ": no video directories");
  return out;
}

std::string format_metrics_table(const MetricsReport& r) {
  std::ostringstream os;
  auto row = [&](const std::string& id, const std::vector<double>& vals) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%-16s", id.c_str());
    os << buf;
    for (double v : vals) {
      std::snprintf(buf, sizeof buf, "  %10s", format_number(v).c_str());
      os << buf;
    }
    os << '\n';
  };
  std::vector<std::string> cols;
  switch (r.task) {
    case EvalTask::kSegmentation: cols = {"J&F_m", "J_m", "F_m"}; break;
    case EvalTask::kParts: cols = {"mIoU"}; break;
    case EvalTask::kPose: cols = {"PCK@0.1", "PCK@0.2"}; break;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%-16s", "video");
  os << buf;
  for (const auto& c : cols) {
    std::snprintf(buf, sizeof buf, "  %10s", c.c_str());
    os << buf;
  }
  os << '\n';
  auto values = [&](double jf, double j, double f, double mi, double p1, double p2) -> std::vector<double> {
    switch (r.task) {
      case EvalTask::kSegmentation: return {jf, j, f};
      case EvalTask::kParts: return {mi};
      case EvalTask::kPose: return {p1, p2};
    }
    return {};
  };
  for (const auto& v : r.videos) row(v.id, values(v.jf, v.j, v.f, v.miou, v.pck_01, v.pck_02));
  row("mean", values(r.mean_jf, r.mean_j, r.mean_f, r.mean_miou, r.mean_pck_01, r.mean_pck_02));
  return os.str();
}

std::string format_metrics_records(const MetricsReport& r) {
  std::string out;
  auto fields = [&](Record rec, double jf, double j, double f, double mi, double p1, double p2) {
    switch (r.task) {
      case EvalTask::kSegmentation:
        rec.emplace_back("jf", format_number(jf));
        rec.emplace_back("j", format_number(j));
        rec.emplace_back("f", format_number(f));
        break;
      case EvalTask::kParts: rec.emplace_back("miou", format_number(mi)); break;
      case EvalTask::kPose:
        rec.emplace_back("pck_0.1", format_number(p1));
        rec.emplace_back("pck_0.2", format_number(p2));
        break;
    }
    out += format_record(rec) + "\n";
  };
  for (const auto& v : r.videos) {
    fields({{"task", task_name(r.task)}, {"video", v.id}, {"frames", std::to_string(v.frames)}}, v.jf, v.j, v.f,
           v.miou, v.pck_01, v.pck_02);
  }
  fields({{"task", task_name(r.task)}, {"video", "mean"}, {"frames", std::to_string(r.videos.size())}}, r.mean_jf,
         r.mean_j, r.mean_f, r.mean_miou, r.mean_pck_01, r.mean_pck_02);
  return out;
}

}  // namespace cdgmae

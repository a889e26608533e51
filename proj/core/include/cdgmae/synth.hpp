#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "cdgmae/random.hpp"
#include "cdgmae/tensor.hpp"

namespace cdgmae {

enum class ShapeKind { kCircle, kSquare, kTriangle, kEllipse };

using Color = std::array<float, 3>;

/// One object; position and scale in pixels, orientation in radians.
/// Objects are drawn in ascending z.
struct ObjectSpec {
  ShapeKind kind = ShapeKind::kCircle;
  Color color{};
  double cx = 0.0;
  double cy = 0.0;
  double scale = 1.0;  // circumradius-like size parameter
  double angle = 0.0;
  int z = 0;
};

/// Sinusoidal two-tone texture with a linear shading gradient.
struct BackgroundSpec {
  Color base{};
  Color accent{};
  double freq_x = 1.0;
  double freq_y = 1.0;
  double phase = 0.0;
  double gradient = 0.0;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t size = 0;  // canvas is size x size x 3
  BackgroundSpec background;
  std::vector<ObjectSpec> objects;
};

/// Radius of the disc that contains the object.
double bounding_radius(const ObjectSpec& obj);
/// Whether canvas point (x, y) lies inside the object.
bool contains(const ObjectSpec& obj, double x, double y);

/// Anti-aliased render (4x4 supersampling), values in [0, 1].
Tensor render_scene(const SceneSpec& scene);

struct Scene {
  Tensor image;
  SceneSpec spec;
};

/// Deterministic scene of 1-5 objects fully inside the canvas.
Scene gen_scene(std::uint64_t seed, std::size_t size);

/// Scene of axis-aligned squares whose edges fall on multiples of `patch`.
Scene gen_grid_aligned_scene(std::uint64_t seed, std::size_t size, std::size_t patch);

/// Per-view perturbation, recorded so views can be audited.
struct ObjectTransform {
  double dx = 0.0;
  double dy = 0.0;
  double dangle = 0.0;
  double scale_factor = 1.0;
};

struct ViewTransform {
  std::vector<ObjectTransform> objects;
  double brightness = 0.0;
  double contrast = 1.0;
};

/// Largest per-pixel change the photometric jitter alone can cause.
inline constexpr double kPhotometricJitterBound = 0.075;

/// One real image plus M synthesized views of the same scene.
struct ViewBag {
  Tensor real;
  std::vector<Tensor> views;
  SceneSpec scene;
  double strength = 0.0;
  std::vector<ViewTransform> transforms;

  std::size_t num_views() const { return views.size(); }
  /// Index 0 is the real image, 1..M the generated views.
  const Tensor& image(std::size_t index) const { return index == 0 ? real : views.at(index - 1); }
};

/// Re-renders the scene M times with independently perturbed object poses
/// (rotation up to strength*45 deg, translation up to strength*20% of the
/// canvas, scale 1 +- strength*0.2) and a small global photometric jitter.
ViewBag gen_views(const SceneSpec& scene, std::size_t num_views, double strength);

struct MotionSpec {
  double speed = 1.0;  // pixels per frame
  double spin = 0.0;   // radians per frame
};

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  std::size_t object = 0;  // index into SceneSpec::objects
};

/// Frames with ground truth: instance masks (0 background, i+1 for object i),
/// part maps (object split into four local quadrants, label 4*i + q + 1) and
/// five keypoints per object (center plus four interior points).
struct Video {
  SceneSpec scene;
  std::vector<Tensor> frames;                   // [H, W, 3]
  std::vector<Tensor> masks;                    // [H, W], integer valued
  std::vector<Tensor> parts;                    // [H, W], integer valued
  std::vector<std::vector<Keypoint>> keypoints;  // per frame, same order every frame

  std::size_t num_frames() const { return frames.size(); }
};

/// Objects translate along seeded directions at `motion.speed` px/frame,
/// reflecting off the canvas edges, and rotate at `motion.spin` rad/frame.
Video gen_video(const SceneSpec& scene, std::size_t frames, const MotionSpec& motion);

/// Continuous crop rectangle in source pixels.
struct CropParams {
  double x0 = 0.0;
  double y0 = 0.0;
  double width = 0.0;
  double height = 0.0;
  double area_fraction = 1.0;
  double aspect = 1.0;
};

/// Area fraction ~ U(scale_range); aspect log-uniform over the part of
/// aspect_range for which the rectangle fits. After 10 infeasible draws the
/// centered full-height/width crop is used.
CropParams sample_crop(std::size_t height, std::size_t width, std::pair<double, double> scale_range,
                       std::pair<double, double> aspect_range, Rng& rng);

/// Bilinear resample of the crop back to the image's own size.
Tensor apply_crop(const Tensor& image, const CropParams& crop);

struct CropResult {
  Tensor image;
  CropParams params;
};

CropResult random_resized_crop(const Tensor& image, std::pair<double, double> scale_range,
                               std::pair<double, double> aspect_range, Rng& rng);

// ---- on-disk layouts -------------------------------------------------------

/// Binary PPM (P6, 8-bit) for an H x W x 3 image in [0, 1].
void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);

/// Directory with `real.cdgt`, `view_00.cdgt` ... and `metadata.txt`.
void write_bag(const std::filesystem::path& dir, const ViewBag& bag, bool with_ppm = false);
ViewBag read_bag(const std::filesystem::path& dir);
/// All bag directories under `root`, sorted by name.
std::vector<ViewBag> read_bags(const std::filesystem::path& root);

/// Directory with `frame_NNN.cdgt`, `mask_NNN.cdgt`, `parts_NNN.cdgt`,
/// `keypoints.txt` (`frame x y` per keypoint) and `meta.txt`.
void write_video(const std::filesystem::path& dir, const Video& video, bool with_ppm = false);
Video read_video(const std::filesystem::path& dir);
std::vector<std::filesystem::path> list_subdirectories(const std::filesystem::path& root);

}  // namespace cdgmae

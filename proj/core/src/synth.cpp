#include "cdgmae/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "cdgmae/errors.hpp"
#include "cdgmae/tensor_io.hpp"

namespace fs = std::filesystem;

namespace cdgmae {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kSupersample = 4;

Color hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h * 6.0, 6.0);
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

BackgroundSpec random_background(Rng& rng) {
  BackgroundSpec bg;
  const Color base = hsv_to_rgb(rng.uniform(), rng.uniform(0.1, 0.4), rng.uniform(0.25, 0.55));
  const Color accent = hsv_to_rgb(rng.uniform(), rng.uniform(0.1, 0.4), rng.uniform(0.35, 0.65));
  bg.base = base;
  bg.accent = accent;
  bg.freq_x = rng.uniform(0.5, 3.0);
  bg.freq_y = rng.uniform(0.5, 3.0);
  bg.phase = rng.uniform(0.0, kTwoPi);
  bg.gradient = rng.uniform(-0.15, 0.15);
  return bg;
}

Color background_at(const BackgroundSpec& bg, std::size_t size, double x, double y) {
  const double s = static_cast<double>(size);
  const double t = 0.5 + 0.5 * std::sin(kTwoPi * (bg.freq_x * x + bg.freq_y * y) / s + bg.phase);
  const double shade = bg.gradient * ((x + y) / s - 1.0);
  Color c;
  for (int k = 0; k < 3; ++k) {
    c[k] = static_cast<float>(std::clamp(bg.base[k] + t * (bg.accent[k] - bg.base[k]) + shade, 0.0, 1.0));
  }
  return c;
}

// Object-local coordinates scaled so the shape's defining size is 1.
void to_local(const ObjectSpec& o, double x, double y, double& u, double& v) {
  const double dx = x - o.cx, dy = y - o.cy;
  const double c = std::cos(o.angle), s = std::sin(o.angle);
  u = (c * dx + s * dy) / o.scale;
  v = (-s * dx + c * dy) / o.scale;
}

void to_canvas(const ObjectSpec& o, double u, double v, double& x, double& y) {
  const double c = std::cos(o.angle), s = std::sin(o.angle);
  x = o.cx + o.scale * (c * u - s * v);
  y = o.cy + o.scale * (s * u + c * v);
}

std::vector<const ObjectSpec*> draw_order(const SceneSpec& scene) {
  std::vector<const ObjectSpec*> order;
  for (const auto& o : scene.objects) order.push_back(&o);
  std::stable_sort(order.begin(), order.end(), [](const ObjectSpec* a, const ObjectSpec* b) { return a->z < b->z; });
  return order;
}

double reflect(double x, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0.0) return lo;
  double m = std::fmod(x - lo, 2.0 * span);
  if (m < 0.0) m += 2.0 * span;
  if (m > span) m = 2.0 * span - m;
  return lo + m;
}

const char* kind_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::kCircle: return "circle";
    case ShapeKind::kSquare: return "square";
    case ShapeKind::kTriangle: return "triangle";
    case ShapeKind::kEllipse: return "ellipse";
  }
  return "circle";
}

ShapeKind parse_kind(const std::string& s) {
  if (s == "circle") return ShapeKind::kCircle;
  if (s == "square") return ShapeKind::kSquare;
  if (s == "triangle") return ShapeKind::kTriangle;
  if (s == "ellipse") return ShapeKind::kEllipse;
  throw IoError("unknown shape kind '" + s + "'");
}

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Scene description lines shared by bag metadata and video meta files.
void write_scene_lines(std::ostream& os, const SceneSpec& scene) {
  os << "seed " << scene.seed << '\n' << "size " << scene.size << '\n';
  const auto& bg = scene.background;
  os << "background";
  for (float c : bg.base) os << ' ' << exact(c);
  for (float c : bg.accent) os << ' ' << exact(c);
  os << ' ' << exact(bg.freq_x) << ' ' << exact(bg.freq_y) << ' ' << exact(bg.phase) << ' ' << exact(bg.gradient)
     << '\n';
  for (const auto& o : scene.objects) {
    os << "object " << kind_name(o.kind);
    for (float c : o.color) os << ' ' << exact(c);
    os << ' ' << exact(o.cx) << ' ' << exact(o.cy) << ' ' << exact(o.scale) << ' ' << exact(o.angle) << ' ' << o.z
       << '\n';
  }
}

// Returns true if the line was a scene line.
bool read_scene_line(const std::string& kind, std::istringstream& ls, SceneSpec& scene) {
  if (kind == "seed") {
    ls >> scene.seed;
  } else if (kind == "size") {
    ls >> scene.size;
  } else if (kind == "background") {
    auto& bg = scene.background;
    for (float& c : bg.base) ls >> c;
    for (float& c : bg.accent) ls >> c;
    ls >> bg.freq_x >> bg.freq_y >> bg.phase >> bg.gradient;
  } else if (kind == "object") {
    ObjectSpec o;
    std::string name;
    ls >> name;
    o.kind = parse_kind(name);
    for (float& c : o.color) ls >> c;
    ls >> o.cx >> o.cy >> o.scale >> o.angle >> o.z;
    scene.objects.push_back(o);
  } else {
    return false;
  }
  if (ls.fail()) throw IoError("malformed '" + kind + "' line");
  return true;
}

std::string indexed(const char* stem, std::size_t i, int width) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%0*zu", stem, width, i);
  return buf;
}

Tensor label_tensor(std::size_t size, std::vector<float> labels) {
  return Tensor::from_data({size, size}, std::move(labels));
}

}  // namespace

double bounding_radius(const ObjectSpec& obj) {
  return obj.kind == ShapeKind::kSquare ? obj.scale * std::numbers::sqrt2 : obj.scale;
}

bool contains(const ObjectSpec& obj, double x, double y) {
  double u, v;
  to_local(obj, x, y, u, v);
  switch (obj.kind) {
    case ShapeKind::kCircle: return u * u + v * v <= 1.0;
    case ShapeKind::kSquare: return std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
    case ShapeKind::kEllipse: return u * u + (v / 0.6) * (v / 0.6) <= 1.0;
    case ShapeKind::kTriangle: return v <= 0.5 && std::abs(u) <= (v + 1.0) / std::numbers::sqrt3;
  }
  return false;
}

Tensor render_scene(const SceneSpec& scene) {
  const std::size_t n = scene.size;
  const auto order = draw_order(scene);
  std::vector<float> px(n * n * 3);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      Color c = background_at(scene.background, n, x + 0.5, y + 0.5);
      for (const ObjectSpec* o : order) {
        const double r = bounding_radius(*o) + 1.0;
        if (std::abs(x + 0.5 - o->cx) > r || std::abs(y + 0.5 - o->cy) > r) continue;
        int inside = 0;
        for (int sy = 0; sy < kSupersample; ++sy) {
          for (int sx = 0; sx < kSupersample; ++sx) {
            inside += contains(*o, x + (sx + 0.5) / kSupersample, y + (sy + 0.5) / kSupersample);
          }
        }
        const float cov = static_cast<float>(inside) / (kSupersample * kSupersample);
        for (int k = 0; k < 3; ++k) c[k] = cov * o->color[k] + (1.0f - cov) * c[k];
      }
      std::copy(c.begin(), c.end(), px.begin() + static_cast<long>((y * n + x) * 3));
    }
  }
  return Tensor::from_data({n, n, 3}, std::move(px));
}

Scene gen_scene(std::uint64_t seed, std::size_t size) {
  if (size == 0) throw ContractError("gen_scene: size must be positive");
  Rng rng(mix_seed(seed, 0));
  SceneSpec spec;
  spec.seed = seed;
  spec.size = size;
  spec.background = random_background(rng);
  const std::size_t count = 1 + rng.below(5);
  const double s = static_cast<double>(size);
  for (std::size_t i = 0; i < count; ++i) {
    ObjectSpec o;
    o.kind = static_cast<ShapeKind>(rng.below(4));
    o.color = hsv_to_rgb(rng.uniform(), rng.uniform(0.6, 1.0), rng.uniform(0.65, 1.0));
    o.scale = rng.uniform(0.12, 0.22) * s;
    o.angle = rng.uniform(0.0, kTwoPi);
    o.z = static_cast<int>(i);
    const double r = std::min(bounding_radius(o), s / 2.0);
    o.cx = rng.uniform(r, s - r);
    o.cy = rng.uniform(r, s - r);
    spec.objects.push_back(o);
  }
  return {render_scene(spec), spec};
}

Scene gen_grid_aligned_scene(std::uint64_t seed, std::size_t size, std::size_t patch) {
  if (patch == 0 || size % patch != 0) throw ContractError("gen_grid_aligned_scene: size must be a multiple of patch");
  Rng rng(mix_seed(seed, 1));
  SceneSpec spec;
  spec.seed = seed;
  spec.size = size;
  spec.background = random_background(rng);
  const std::size_t cells = size / patch;
  const std::size_t count = 1 + rng.below(std::min<std::size_t>(3, cells));
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t side = 1 + rng.below(std::max<std::size_t>(1, cells / 2));
    const std::size_t c0 = rng.below(cells - side + 1), r0 = rng.below(cells - side + 1);
    ObjectSpec o;
    o.kind = ShapeKind::kSquare;
    o.color = hsv_to_rgb(rng.uniform(), rng.uniform(0.6, 1.0), rng.uniform(0.65, 1.0));
    o.scale = 0.5 * static_cast<double>(side * patch);
    o.cx = (static_cast<double>(c0) + 0.5 * static_cast<double>(side)) * static_cast<double>(patch);
    o.cy = (static_cast<double>(r0) + 0.5 * static_cast<double>(side)) * static_cast<double>(patch);
    o.z = static_cast<int>(i);
    spec.objects.push_back(o);
  }
  return {render_scene(spec), spec};
}

ViewBag gen_views(const SceneSpec& scene, std::size_t num_views, double strength) {
  if (num_views == 0) throw ContractError("gen_views: at least one view is required");
  if (!(strength > 0.0 && strength <= 1.0)) throw ContractError("gen_views: strength must lie in (0, 1]");
  ViewBag bag;
  bag.real = render_scene(scene);
  bag.scene = scene;
  bag.strength = strength;
  const double s = static_cast<double>(scene.size);
  for (std::size_t v = 0; v < num_views; ++v) {
    Rng rng(mix_seed(scene.seed, 1000 + v));
    SceneSpec moved = scene;
    ViewTransform vt;
    for (auto& o : moved.objects) {
      const ObjectSpec original = o;
      ObjectTransform t;
      bool placed = false;
      for (int attempt = 0; attempt < 10 && !placed; ++attempt) {
        t.dx = rng.uniform(-1.0, 1.0) * strength * 0.2 * s;
        t.dy = rng.uniform(-1.0, 1.0) * strength * 0.2 * s;
        t.dangle = rng.uniform(-1.0, 1.0) * strength * std::numbers::pi / 4.0;
        t.scale_factor = 1.0 + rng.uniform(-1.0, 1.0) * strength * 0.2;
        o.cx = original.cx + t.dx;
        o.cy = original.cy + t.dy;
        o.angle = original.angle + t.dangle;
        o.scale = original.scale * t.scale_factor;
        const double r = bounding_radius(o);
        placed = o.cx + r > 0.0 && o.cx - r < s && o.cy + r > 0.0 && o.cy - r < s;
      }
      if (!placed) {
        o.cx = std::clamp(o.cx, 0.0, s);
        o.cy = std::clamp(o.cy, 0.0, s);
        t.dx = o.cx - original.cx;
        t.dy = o.cy - original.cy;
      }
      vt.objects.push_back(t);
    }
    vt.brightness = rng.uniform(-0.05, 0.05);
    vt.contrast = rng.uniform(0.95, 1.05);
    Tensor img = render_scene(moved);
    for (float& p : img.mutable_data()) {
      p = static_cast<float>(std::clamp((p - 0.5) * vt.contrast + 0.5 + vt.brightness, 0.0, 1.0));
    }
    bag.views.push_back(std::move(img));
    bag.transforms.push_back(std::move(vt));
  }
  return bag;
}

Video gen_video(const SceneSpec& scene, std::size_t frames, const MotionSpec& motion) {
  if (frames < 2) throw ContractError("gen_video: at least two frames are required");
  Video video;
  video.scene = scene;
  const std::size_t n = scene.size;
  const double s = static_cast<double>(n);
  Rng rng(mix_seed(scene.seed, 0x766964656fULL));
  std::vector<std::pair<double, double>> velocity;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const double theta = rng.uniform(0.0, kTwoPi);
    velocity.emplace_back(motion.speed * std::cos(theta), motion.speed * std::sin(theta));
  }
  constexpr double kInterior[4][2] = {{-0.3, -0.3}, {0.3, -0.3}, {-0.3, 0.3}, {0.3, 0.3}};
  for (std::size_t t = 0; t < frames; ++t) {
    SceneSpec state = scene;
    const double tt = static_cast<double>(t);
    for (std::size_t i = 0; i < state.objects.size(); ++i) {
      auto& o = state.objects[i];
      // Bounce range always contains the start, so frame 0 reproduces the scene.
      const double r = std::min(bounding_radius(o), s / 2.0);
      const double x0 = scene.objects[i].cx, y0 = scene.objects[i].cy;
      o.cx = t == 0 ? x0 : reflect(x0 + velocity[i].first * tt, std::min(r, x0), std::max(s - r, x0));
      o.cy = t == 0 ? y0 : reflect(y0 + velocity[i].second * tt, std::min(r, y0), std::max(s - r, y0));
      o.angle = scene.objects[i].angle + motion.spin * tt;
    }
    video.frames.push_back(render_scene(state));

    // Label maps use the pixel-center test; the top-most object wins.
    std::vector<float> mask(n * n, 0.0f), parts(n * n, 0.0f);
    std::vector<std::size_t> by_z(state.objects.size());
    for (std::size_t i = 0; i < by_z.size(); ++i) by_z[i] = i;
    std::stable_sort(by_z.begin(), by_z.end(),
                     [&](std::size_t a, std::size_t b) { return state.objects[a].z < state.objects[b].z; });
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        for (std::size_t i : by_z) {
          const auto& o = state.objects[i];
          if (!contains(o, x + 0.5, y + 0.5)) continue;
          double u, v;
          to_local(o, x + 0.5, y + 0.5, u, v);
          const std::size_t quadrant = (u >= 0.0 ? 1 : 0) + (v >= 0.0 ? 2 : 0);
          mask[y * n + x] = static_cast<float>(i + 1);
          parts[y * n + x] = static_cast<float>(4 * i + quadrant + 1);
        }
      }
    }
    video.masks.push_back(label_tensor(n, std::move(mask)));
    video.parts.push_back(label_tensor(n, std::move(parts)));

    std::vector<Keypoint> kps;
    for (std::size_t i = 0; i < state.objects.size(); ++i) {
      const auto& o = state.objects[i];
      kps.push_back({o.cx, o.cy, i});
      for (const auto& p : kInterior) {
        Keypoint k{0.0, 0.0, i};
        to_canvas(o, p[0], p[1], k.x, k.y);
        kps.push_back(k);
      }
    }
    video.keypoints.push_back(std::move(kps));
  }
  return video;
}

CropParams sample_crop(std::size_t height, std::size_t width, std::pair<double, double> scale_range,
                       std::pair<double, double> aspect_range, Rng& rng) {
  const auto [s_lo, s_hi] = scale_range;
  const auto [a_lo, a_hi] = aspect_range;
  if (!(s_lo > 0.0 && s_lo <= s_hi && s_hi <= 1.0)) throw ContractError("sample_crop: scale range must satisfy 0 < lo <= hi <= 1");
  if (!(a_lo > 0.0 && a_lo <= a_hi)) throw ContractError("sample_crop: aspect range must satisfy 0 < lo <= hi");
  const double h = static_cast<double>(height), w = static_cast<double>(width);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double fraction = rng.uniform(s_lo, s_hi);
    const double target = fraction * h * w;
    const double lo = std::max(a_lo, target / (h * h));
    const double hi = std::min(a_hi, (w * w) / target);
    if (lo > hi) continue;
    const double aspect = std::exp(rng.uniform(std::log(lo), std::log(hi)));
    CropParams c;
    c.width = std::min(w, std::sqrt(target * aspect));
    c.height = std::min(h, std::sqrt(target / aspect));
    c.x0 = rng.uniform(0.0, w - c.width);
    c.y0 = rng.uniform(0.0, h - c.height);
    c.area_fraction = fraction;
    c.aspect = aspect;
    return c;
  }
  CropParams c;
  const double ratio = w / h;
  c.width = w;
  c.height = h;
  if (ratio < a_lo) {
    c.height = w / a_lo;
  } else if (ratio > a_hi) {
    c.width = h * a_hi;
  }
  c.x0 = (w - c.width) / 2.0;
  c.y0 = (h - c.height) / 2.0;
  c.area_fraction = c.width * c.height / (w * h);
  c.aspect = c.width / c.height;
  return c;
}

Tensor apply_crop(const Tensor& image, const CropParams& crop) {
  if (image.rank() != 3) throw DimensionError("apply_crop: expected H x W x C image");
  const std::size_t h = image.dim(0), w = image.dim(1), ch = image.dim(2);
  const auto src = image.data();
  std::vector<float> out(src.size());
  const double sx_scale = crop.width / static_cast<double>(w), sy_scale = crop.height / static_cast<double>(h);
  for (std::size_t y = 0; y < h; ++y) {
    const double sy = std::clamp(crop.y0 + (y + 0.5) * sy_scale - 0.5, 0.0, static_cast<double>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double sx = std::clamp(crop.x0 + (x + 0.5) * sx_scale - 0.5, 0.0, static_cast<double>(w - 1));
      const std::size_t x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < ch; ++c) {
        const double top = src[(y0 * w + x0) * ch + c] * (1.0 - fx) + src[(y0 * w + x1) * ch + c] * fx;
        const double bottom = src[(y1 * w + x0) * ch + c] * (1.0 - fx) + src[(y1 * w + x1) * ch + c] * fx;
        out[(y * w + x) * ch + c] = static_cast<float>(top * (1.0 - fy) + bottom * fy);
      }
    }
  }
  return Tensor::from_data(image.shape(), std::move(out));
}

CropResult random_resized_crop(const Tensor& image, std::pair<double, double> scale_range,
                               std::pair<double, double> aspect_range, Rng& rng) {
  if (image.rank() != 3) throw DimensionError("random_resized_crop: expected H x W x C image");
  CropParams p = sample_crop(image.dim(0), image.dim(1), scale_range, aspect_range, rng);
  return {apply_crop(image, p), p};
}

void write_ppm(const fs::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) throw DimensionError("write_ppm: expected H x W x 3 image");
  std::string header = "P6\n" + std::to_string(image.dim(1)) + " " + std::to_string(image.dim(0)) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (float v : image.data()) {
    bytes.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0)));
  }
  write_file_atomic(path, bytes);
}

Tensor read_ppm(const fs::path& path) {
  const auto bytes = read_file(path);
  std::size_t at = 0;
  auto token = [&]() {
    std::string t;
    while (at < bytes.size()) {
      const char c = static_cast<char>(bytes[at]);
      if (c == '#') {
        while (at < bytes.size() && bytes[at] != '\n') ++at;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        ++at;
      } else {
        t += c;
        ++at;
      }
    }
    return t;
  };
  if (token() != "P6") throw IoError(path.string() + ": not a binary PPM (P6)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed PPM header");
  }
  if (maxval != 255) throw IoError(path.string() + ": only 8-bit PPM is supported");
  ++at;  // single whitespace after maxval
  if (bytes.size() < at + w * h * 3) throw IoError(path.string() + ": truncated PPM payload");
  std::vector<float> px(w * h * 3);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(bytes[at + i]) / 255.0f;
  return Tensor::from_data({h, w, 3}, std::move(px));
}

void write_bag(const fs::path& dir, const ViewBag& bag, bool with_ppm) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_tensor(dir / "real.cdgt", bag.real);
  if (with_ppm) write_ppm(dir / "real.ppm", bag.real);
  std::ostringstream meta;
  write_scene_lines(meta, bag.scene);
  meta << "strength " << exact(bag.strength) << '\n' << "views " << bag.views.size() << '\n';
  for (std::size_t v = 0; v < bag.views.size(); ++v) {
    const std::string stem = indexed("view", v, 2);
    write_tensor(dir / (stem + ".cdgt"), bag.views[v]);
    if (with_ppm) write_ppm(dir / (stem + ".ppm"), bag.views[v]);
    if (v < bag.transforms.size()) {
      const auto& t = bag.transforms[v];
      meta << "photometric " << v << ' ' << exact(t.brightness) << ' ' << exact(t.contrast) << '\n';
      for (std::size_t i = 0; i < t.objects.size(); ++i) {
        const auto& o = t.objects[i];
        meta << "transform " << v << ' ' << i << ' ' << exact(o.dx) << ' ' << exact(o.dy) << ' ' << exact(o.dangle)
             << ' ' << exact(o.scale_factor) << '\n';
      }
    }
  }
  write_text_atomic(dir / "metadata.txt", meta.str());
}

ViewBag read_bag(const fs::path& dir) {
  const fs::path meta_path = dir / "metadata.txt";
  std::istringstream is(read_text(meta_path));
  ViewBag bag;
  std::size_t views = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    try {
      if (kind.empty() || read_scene_line(kind, ls, bag.scene)) continue;
      if (kind == "strength") {
        ls >> bag.strength;
      } else if (kind == "views") {
        ls >> views;
        bag.transforms.resize(views);
      } else if (kind == "photometric") {
        std::size_t v = 0;
        ls >> v;
        if (v >= bag.transforms.size()) throw IoError("view index out of range");
        ls >> bag.transforms[v].brightness >> bag.transforms[v].contrast;
      } else if (kind == "transform") {
        std::size_t v = 0, i = 0;
        ObjectTransform t;
        ls >> v >> i >> t.dx >> t.dy >> t.dangle >> t.scale_factor;
        if (v >= bag.transforms.size()) throw IoError("view index out of range");
        auto& objs = bag.transforms[v].objects;
        if (objs.size() <= i) objs.resize(i + 1);
        objs[i] = t;
      } else {
        throw IoError("unknown entry '" + kind + "'");
      }
      if (ls.fail()) throw IoError("malformed '" + kind + "' line");
    } catch (const Error& e) {
      throw IoError(meta_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  bag.real = read_tensor(dir / "real.cdgt");
  for (std::size_t v = 0; v < views; ++v) bag.views.push_back(read_tensor(dir / (indexed("view", v, 2) + ".cdgt")));
  return bag;
}

std::vector<fs::path> list_subdirectories(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

std::vector<ViewBag> read_bags(const fs::path& root) {
  std::vector<ViewBag> bags;
  for (const auto& dir : list_subdirectories(root)) bags.push_back(read_bag(dir));
  return bags;
}

void write_video(const fs::path& dir, const Video& video, bool with_ppm) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ostringstream meta, kp;
  write_scene_lines(meta, video.scene);
  meta << "frames " << video.num_frames() << '\n';
  if (!video.keypoints.empty()) {
    meta << "keypoint_objects";
    for (const auto& k : video.keypoints.front()) meta << ' ' << k.object;
    meta << '\n';
  }
  for (std::size_t t = 0; t < video.num_frames(); ++t) {
    write_tensor(dir / (indexed("frame", t, 3) + ".cdgt"), video.frames[t]);
    if (with_ppm) write_ppm(dir / (indexed("frame", t, 3) + ".ppm"), video.frames[t]);
    write_tensor(dir / (indexed("mask", t, 3) + ".cdgt"), video.masks[t]);
    write_tensor(dir / (indexed("parts", t, 3) + ".cdgt"), video.parts[t]);
    for (const auto& k : video.keypoints[t]) kp << t << ' ' << exact(k.x) << ' ' << exact(k.y) << '\n';
  }
  write_text_atomic(dir / "meta.txt", meta.str());
  write_text_atomic(dir / "keypoints.txt", kp.str());
}

Video read_video(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.txt";
  std::istringstream is(read_text(meta_path));
  Video video;
  std::size_t frames = 0;
  std::vector<std::size_t> kp_objects;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind.empty() || read_scene_line(kind, ls, video.scene)) continue;
    if (kind == "frames") {
      ls >> frames;
    } else if (kind == "keypoint_objects") {
      std::size_t o;
      while (ls >> o) kp_objects.push_back(o);
    } else {
      throw IoError(meta_path.string() + ": unknown entry '" + kind + "'");
    }
  }
  video.keypoints.resize(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const fs::path frame_cdgt = dir / (indexed("frame", t, 3) + ".cdgt");
    video.frames.push_back(fs::exists(frame_cdgt) ? read_tensor(frame_cdgt)
                                                  : read_ppm(dir / (indexed("frame", t, 3) + ".ppm")));
    video.masks.push_back(read_tensor(dir / (indexed("mask", t, 3) + ".cdgt")));
    video.parts.push_back(read_tensor(dir / (indexed("parts", t, 3) + ".cdgt")));
  }
  const fs::path kp_path = dir / "keypoints.txt";
  if (fs::exists(kp_path)) {
    std::istringstream ks(read_text(kp_path));
    std::size_t t;
    double x, y;
    while (ks >> t >> x >> y) {
      if (t >= frames) throw IoError(kp_path.string() + ": frame index " + std::to_string(t) + " out of range");
      const std::size_t k = video.keypoints[t].size();
      video.keypoints[t].push_back({x, y, k < kp_objects.size() ? kp_objects[k] : 0});
    }
  }
  return video;
}

}  // namespace cdgmae

#include "sqtk/scenegen.hpp"

#include <algorithm>
#include <cmath>

namespace sqtk {
namespace {

constexpr double kPi = 3.14159265358979323846;

struct Palette {
  std::array<float, 3> primary;
  std::array<float, 3> secondary;  // checker only
};

const Palette kPalettes[kNumShapeCategories] = {
    {{1.00f, 0.25f, 0.20f}, {0, 0, 0}},        // disk: red
    {{0.20f, 0.85f, 0.30f}, {0, 0, 0}},        // square: green
    {{0.25f, 0.45f, 1.00f}, {0, 0, 0}},        // triangle: blue
    {{0.95f, 0.85f, 0.20f}, {0, 0, 0}},        // ring: yellow
    {{0.90f, 0.30f, 0.90f}, {0, 0, 0}},        // cross: magenta
    {{0.25f, 0.90f, 0.90f}, {0, 0, 0}},        // star: cyan
    {{1.00f, 0.60f, 0.15f}, {0, 0, 0}},        // bar: orange
    {{0.55f, 0.30f, 0.95f}, {0, 0, 0}},        // diamond: violet
    {{0.93f, 0.93f, 0.88f}, {0, 0, 0}},        // crescent: off-white
    {{0.35f, 0.65f, 0.45f}, {0.45f, 0.28f, 0.18f}},  // checker: teal/brown
};

const char* kShapeNames[kNumShapeCategories] = {
    "disk", "square", "triangle", "ring", "cross",
    "star", "bar", "diamond", "crescent", "checker",
};

// One placed object, in normalized image coordinates. `size` is the long
// dimension of the analytic extent; rotation is fixed over a track's life.
struct ObjectSpec {
  int category = 0;
  int track_id = -1;
  double cx = 0.5, cy = 0.5;
  double size = 0.2;
  double rot = 0.0;
  std::array<float, 3> color{};
  std::array<float, 3> color2{};
  // motion state (sequences)
  double vx = 0.0, vy = 0.0;
  double turn_rate = 0.0;
};

double shape_aspect(int category) {
  return static_cast<ShapeKind>(category % kNumShapeCategories) == ShapeKind::bar ? 1.0 / 3.0
                                                                                  : 1.0;
}

// Analytic half-extents of the unrotated silhouette, normalized units.
void half_extent(const ObjectSpec& o, double& hx, double& hy) {
  hx = 0.5 * o.size;
  hy = 0.5 * o.size * shape_aspect(o.category);
}

// Axis-aligned half-extents after rotation.
void rotated_half_extent(const ObjectSpec& o, double& hx, double& hy) {
  double ux, uy;
  half_extent(o, ux, uy);
  double c = std::abs(std::cos(o.rot)), s = std::abs(std::sin(o.rot));
  hx = ux * c + uy * s;
  hy = ux * s + uy * c;
}

bool point_in_polygon(const std::vector<std::array<double, 2>>& poly, double x, double y) {
  bool inside = false;
  std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    if ((poly[i][1] > y) != (poly[j][1] > y)) {
      double xc = poly[j][0] + (y - poly[j][1]) / (poly[i][1] - poly[j][1]) *
                                   (poly[i][0] - poly[j][0]);
      if (x < xc) inside = !inside;
    }
  }
  return inside;
}

std::vector<std::array<double, 2>> star_polygon() {
  std::vector<std::array<double, 2>> v;
  for (int k = 0; k < 10; ++k) {
    double r = (k % 2 == 0) ? 1.0 : 0.45;
    double a = -kPi / 2.0 + k * kPi / 5.0;
    v.push_back({r * std::cos(a), r * std::sin(a)});
  }
  return v;
}

const std::vector<std::array<double, 2>>& star_verts() {
  static const std::vector<std::array<double, 2>> v = star_polygon();
  return v;
}

// Membership test in local coordinates: (lx, ly) in units of the unrotated
// half extents, so the silhouette lives in [-1, 1] x [-1, 1].
bool inside_silhouette(ShapeKind kind, double lx, double ly) {
  switch (kind) {
    case ShapeKind::disk:
      return lx * lx + ly * ly <= 1.0;
    case ShapeKind::square:
    case ShapeKind::bar:
    case ShapeKind::checker:
      return std::abs(lx) <= 1.0 && std::abs(ly) <= 1.0;
    case ShapeKind::triangle: {
      // apex up, base at ly = 1
      if (ly < -1.0 || ly > 1.0) return false;
      double half = (ly + 1.0) * 0.5;  // width grows toward the base
      return std::abs(lx) <= half;
    }
    case ShapeKind::ring: {
      double r2 = lx * lx + ly * ly;
      return r2 <= 1.0 && r2 >= 0.55 * 0.55;
    }
    case ShapeKind::cross:
      return (std::abs(lx) <= 0.30 && std::abs(ly) <= 1.0) ||
             (std::abs(ly) <= 0.30 && std::abs(lx) <= 1.0);
    case ShapeKind::star:
      return point_in_polygon(star_verts(), lx, ly);
    case ShapeKind::diamond:
      return std::abs(lx) + std::abs(ly) <= 1.0;
    case ShapeKind::crescent: {
      if (lx * lx + ly * ly > 1.0) return false;
      double dx = lx - 0.45, dy = ly;
      return dx * dx + dy * dy > 0.82 * 0.82;
    }
  }
  return false;
}

// 2x2 supersampled coverage of one pixel (center px+0.5, py+0.5).
double coverage(const ObjectSpec& o, int px, int py, int image_size) {
  double hx, hy;
  half_extent(o, hx, hy);
  double c = std::cos(o.rot), s = std::sin(o.rot);
  auto kind = static_cast<ShapeKind>(o.category % kNumShapeCategories);
  int hits = 0;
  for (int sy = 0; sy < 2; ++sy)
    for (int sx = 0; sx < 2; ++sx) {
      double x = (px + 0.25 + 0.5 * sx) / image_size - o.cx;
      double y = (py + 0.25 + 0.5 * sy) / image_size - o.cy;
      double rx = (c * x + s * y) / hx;
      double ry = (-s * x + c * y) / hy;
      if (inside_silhouette(kind, rx, ry)) ++hits;
    }
  return hits / 4.0;
}

std::array<float, 3> pixel_color(const ObjectSpec& o, int px, int py, int image_size) {
  if (static_cast<ShapeKind>(o.category % kNumShapeCategories) != ShapeKind::checker)
    return o.color;
  double hx, hy;
  half_extent(o, hx, hy);
  double x = (px + 0.5) / image_size - o.cx;
  double y = (py + 0.5) / image_size - o.cy;
  int ix = static_cast<int>(std::floor((x / hx + 1.0) * 1.5));
  int iy = static_cast<int>(std::floor((y / hy + 1.0) * 1.5));
  return ((ix + iy) % 2 == 0) ? o.color : o.color2;
}

// Draws the object and returns the tight pixel-support box (coverage >= 0.5),
// measured before blending so occlusion cannot shrink it.
Box render_object(Image& img, const ObjectSpec& o) {
  double hx, hy;
  rotated_half_extent(o, hx, hy);
  int n = img.width;
  int x0 = std::max(0, static_cast<int>(std::floor((o.cx - hx) * n)) - 1);
  int x1 = std::min(n - 1, static_cast<int>(std::ceil((o.cx + hx) * n)) + 1);
  int y0 = std::max(0, static_cast<int>(std::floor((o.cy - hy) * n)) - 1);
  int y1 = std::min(n - 1, static_cast<int>(std::ceil((o.cy + hy) * n)) + 1);

  int sx0 = n, sx1 = -1, sy0 = n, sy1 = -1;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double a = coverage(o, x, y, n);
      if (a <= 0.0) continue;
      if (a >= 0.5) {
        sx0 = std::min(sx0, x);
        sx1 = std::max(sx1, x);
        sy0 = std::min(sy0, y);
        sy1 = std::max(sy1, y);
      }
      auto col = pixel_color(o, x, y, n);
      float* p = img.at(x, y);
      for (int ch = 0; ch < 3; ++ch)
        p[ch] = static_cast<float>((1.0 - a) * p[ch] + a * col[ch]);
    }

  if (sx1 < 0) {
    // Degenerate: nothing crossed the 0.5 coverage level. Fall back to the
    // analytic extent clamped to the canvas.
    sx0 = std::max(0, static_cast<int>(std::round((o.cx - hx) * n)));
    sx1 = std::min(n - 1, static_cast<int>(std::round((o.cx + hx) * n)));
    sy0 = std::max(0, static_cast<int>(std::round((o.cy - hy) * n)));
    sy1 = std::min(n - 1, static_cast<int>(std::round((o.cy + hy) * n)));
  }
  Box b;
  b.w = static_cast<double>(sx1 - sx0 + 1) / n;
  b.h = static_cast<double>(sy1 - sy0 + 1) / n;
  b.cx = (sx0 + 0.5 * (sx1 - sx0 + 1)) / n;
  b.cy = (sy0 + 0.5 * (sy1 - sy0 + 1)) / n;
  return clamp_box(b);
}

std::array<float, 3> jittered_color(const std::array<float, 3>& base, Rng& rng) {
  std::array<float, 3> c;
  double gain = rng.uniform(0.85, 1.0);
  for (int i = 0; i < 3; ++i) {
    double v = base[i] * gain + rng.uniform(-0.04, 0.04);
    c[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return c;
}

bool shape_rotates(int category) {
  auto k = static_cast<ShapeKind>(category % kNumShapeCategories);
  return k == ShapeKind::triangle || k == ShapeKind::star || k == ShapeKind::bar ||
         k == ShapeKind::cross;
}

ObjectSpec make_object(int category, int track_id, const SceneConfig& cfg, Rng& rng) {
  ObjectSpec o;
  o.category = category;
  o.track_id = track_id;
  o.size = rng.uniform(cfg.min_object_size, cfg.max_object_size);
  o.rot = shape_rotates(category) ? rng.uniform(-0.26, 0.26) : 0.0;
  o.color = jittered_color(kPalettes[category % kNumShapeCategories].primary, rng);
  o.color2 = jittered_color(kPalettes[category % kNumShapeCategories].secondary, rng);
  return o;
}

// Gap test between analytic boxes dilated by min_separation / 2 each.
bool separated(const ObjectSpec& a, const ObjectSpec& b, double min_sep) {
  double ahx, ahy, bhx, bhy;
  rotated_half_extent(a, ahx, ahy);
  rotated_half_extent(b, bhx, bhy);
  double gap = min_sep;
  return std::abs(a.cx - b.cx) >= ahx + bhx + gap ||
         std::abs(a.cy - b.cy) >= ahy + bhy + gap;
}

bool placement_ok(const ObjectSpec& cand, const std::vector<ObjectSpec>& placed,
                  double min_sep, int skip_track = -1) {
  double hx, hy;
  rotated_half_extent(cand, hx, hy);
  double margin = 0.01;
  if (cand.cx - hx < margin || cand.cx + hx > 1.0 - margin || cand.cy - hy < margin ||
      cand.cy + hy > 1.0 - margin)
    return false;
  if (min_sep <= 0.0) return true;
  for (const auto& p : placed) {
    if (p.track_id == skip_track && skip_track >= 0) continue;
    if (!separated(cand, p, min_sep)) return false;
  }
  return true;
}

constexpr int kPlacementRetries = 200;

bool place_object(ObjectSpec& o, const std::vector<ObjectSpec>& placed,
                  const SceneConfig& cfg, Rng& rng) {
  double hx, hy;
  rotated_half_extent(o, hx, hy);
  for (int attempt = 0; attempt < kPlacementRetries; ++attempt) {
    o.cx = rng.uniform(hx + 0.02, 1.0 - hx - 0.02);
    o.cy = rng.uniform(hy + 0.02, 1.0 - hy - 0.02);
    if (placement_ok(o, placed, cfg.min_separation)) return true;
  }
  return false;
}

std::vector<int> pick_scene_categories(const SceneConfig& cfg, Rng& rng) {
  std::vector<int> pool = cfg.effective_pool();
  int lo = std::min<int>(cfg.categories_per_scene[0], static_cast<int>(pool.size()));
  int hi = std::min<int>(cfg.categories_per_scene[1], static_cast<int>(pool.size()));
  int n = lo + (hi > lo ? rng.uniform_int(hi - lo + 1) : 0);
  n = std::max(n, 1);
  rng.shuffle(pool);
  pool.resize(n);
  return pool;
}

std::vector<ObjectSpec> place_initial_objects(const SceneConfig& cfg, Rng& rng,
                                              int first_track_id) {
  cfg.validate();
  std::vector<int> cats = pick_scene_categories(cfg, rng);
  int n_obj = cfg.objects_per_scene[0] +
              (cfg.objects_per_scene[1] > cfg.objects_per_scene[0]
                   ? rng.uniform_int(cfg.objects_per_scene[1] - cfg.objects_per_scene[0] + 1)
                   : 0);
  std::vector<ObjectSpec> objects;
  for (int i = 0; i < n_obj; ++i) {
    ObjectSpec o = make_object(cats[rng.uniform_int(static_cast<int>(cats.size()))],
                               first_track_id + i, cfg, rng);
    if (!place_object(o, objects, cfg, rng))
      throw GenerationError(
          "generate_scene: could not satisfy min_separation=" +
          std::to_string(cfg.min_separation) + " after " +
          std::to_string(kPlacementRetries) + " placement attempts for object " +
          std::to_string(i));
    objects.push_back(o);
  }
  return objects;
}

void render_background(Image& img, Rng& rng) {
  double base = rng.uniform(0.10, 0.18);
  std::array<float, 3> bg;
  for (int c = 0; c < 3; ++c)
    bg[c] = static_cast<float>(std::clamp(base + rng.uniform(-0.02, 0.02), 0.0, 1.0));
  fill(img, bg);
}

void add_noise(Image& img, double std_dev, Rng& rng) {
  if (std_dev <= 0.0) return;
  for (auto& v : img.px)
    v = static_cast<float>(std::clamp(v + std_dev * rng.normal(), 0.0, 1.0));
}

Scene render_frame(const std::vector<ObjectSpec>& objects, const SceneConfig& cfg,
                   Rng& rng, bool with_track_ids) {
  Scene scene;
  scene.image = Image(cfg.image_size, cfg.image_size);
  render_background(scene.image, rng);
  for (const auto& o : objects) {
    Annotation ann;
    ann.box = render_object(scene.image, o);
    ann.category_id = o.category;
    if (with_track_ids) ann.track_id = o.track_id;
    scene.annotations.push_back(ann);
  }
  add_noise(scene.image, cfg.noise_std, rng);
  return scene;
}

void init_velocity(ObjectSpec& o, const SequenceConfig& cfg, Rng& rng) {
  double hx, hy;
  rotated_half_extent(o, hx, hy);
  double speed = cfg.max_step * 2.0 * std::max(hx, hy) * rng.uniform(0.4, 1.0);
  double ang = rng.uniform(0.0, 2.0 * kPi);
  o.vx = speed * std::cos(ang);
  o.vy = speed * std::sin(ang);
  o.turn_rate = cfg.motion == MotionModel::curved ? rng.uniform(-0.2, 0.2) : 0.0;
}

// Advances one object, bouncing off borders and other objects. Candidates are
// tried in a fixed order; if none is admissible the object stays put for this
// frame, which keeps every configuration valid.
void advance_object(ObjectSpec& o, const std::vector<ObjectSpec>& all,
                    const SequenceConfig& cfg) {
  if (o.turn_rate != 0.0) {
    double c = std::cos(o.turn_rate), s = std::sin(o.turn_rate);
    double vx = c * o.vx - s * o.vy;
    double vy = s * o.vx + c * o.vy;
    o.vx = vx;
    o.vy = vy;
  }
  const std::array<std::array<double, 2>, 4> options = {{
      {o.vx, o.vy},
      {-o.vx, o.vy},
      {o.vx, -o.vy},
      {-o.vx, -o.vy},
  }};
  for (const auto& opt : options) {
    ObjectSpec cand = o;
    cand.cx += opt[0];
    cand.cy += opt[1];
    if (placement_ok(cand, all, cfg.scene.min_separation, o.track_id)) {
      o.cx = cand.cx;
      o.cy = cand.cy;
      o.vx = opt[0];
      o.vy = opt[1];
      return;
    }
  }
}

}  // namespace

const char* shape_name(int category_id) {
  return kShapeNames[category_id % kNumShapeCategories];
}

void SceneConfig::validate() const {
  if (image_size < 32) throw ContractViolation("SceneConfig: image_size must be >= 32");
  if (num_categories < 1 || num_categories > kNumShapeCategories)
    throw ContractViolation("SceneConfig: num_categories must be in [1, 10]");
  if (objects_per_scene[0] > objects_per_scene[1] || objects_per_scene[0] < 0)
    throw ContractViolation("SceneConfig: empty objects_per_scene range");
  if (categories_per_scene[0] > categories_per_scene[1] || categories_per_scene[0] < 1)
    throw ContractViolation("SceneConfig: empty categories_per_scene range");
  if (min_object_size <= 0.0 || min_object_size > max_object_size || max_object_size > 0.9)
    throw ContractViolation("SceneConfig: bad object size range");
  for (int c : category_pool)
    if (c < 0 || c >= num_categories)
      throw ContractViolation("SceneConfig: category_pool entry out of range");
}

std::vector<int> SceneConfig::effective_pool() const {
  if (!category_pool.empty()) return category_pool;
  std::vector<int> pool(num_categories);
  for (int i = 0; i < num_categories; ++i) pool[i] = i;
  return pool;
}

void SequenceConfig::validate() const {
  scene.validate();
  if (num_frames < 1) throw ContractViolation("SequenceConfig: num_frames must be >= 1");
  if (max_step < 0.0) throw ContractViolation("SequenceConfig: max_step must be >= 0");
  if (birth_prob < 0.0 || birth_prob > 1.0 || death_prob < 0.0 || death_prob > 1.0)
    throw ContractViolation("SequenceConfig: probabilities must be in [0,1]");
}

Scene generate_scene(const SceneConfig& cfg, Rng& rng) {
  auto objects = place_initial_objects(cfg, rng, 0);
  return render_frame(objects, cfg, rng, false);
}

std::vector<Scene> generate_sequence(const SequenceConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<ObjectSpec> objects = place_initial_objects(cfg.scene, rng, 0);
  int next_track_id = static_cast<int>(objects.size());
  std::vector<int> cats = cfg.scene.effective_pool();
  for (auto& o : objects) init_velocity(o, cfg, rng);

  std::vector<Scene> frames;
  frames.push_back(render_frame(objects, cfg.scene, rng, true));
  for (int f = 1; f < cfg.num_frames; ++f) {
    // deaths
    if (cfg.death_prob > 0.0) {
      std::vector<ObjectSpec> alive;
      for (auto& o : objects)
        if (rng.uniform() >= cfg.death_prob) alive.push_back(o);
      objects = std::move(alive);
    }
    // motion, in track id order
    for (auto& o : objects) advance_object(o, objects, cfg);
    // births (at most one per frame)
    if (cfg.birth_prob > 0.0 && rng.uniform() < cfg.birth_prob) {
      int cat = objects.empty() ? cats[rng.uniform_int(static_cast<int>(cats.size()))]
                                : objects[rng.uniform_int(static_cast<int>(objects.size()))]
                                      .category;
      ObjectSpec o = make_object(cat, next_track_id, cfg.scene, rng);
      if (place_object(o, objects, cfg.scene, rng)) {
        init_velocity(o, cfg, rng);
        objects.push_back(o);
        ++next_track_id;
      }
    }
    frames.push_back(render_frame(objects, cfg.scene, rng, true));
  }
  return frames;
}

Image crop_template(const Image& image, const Box& box, int target_long_side) {
  if (target_long_side < 1)
    throw ContractViolation("crop_template: target_long_side must be >= 1");
  auto c = to_corners(box);
  int x0 = static_cast<int>(std::floor(c[0] * image.width));
  int y0 = static_cast<int>(std::floor(c[1] * image.height));
  int x1 = static_cast<int>(std::ceil(c[2] * image.width));
  int y1 = static_cast<int>(std::ceil(c[3] * image.height));
  x0 = std::max(0, x0);
  y0 = std::max(0, y0);
  x1 = std::min(image.width, x1);
  y1 = std::min(image.height, y1);
  if (x1 <= x0 || y1 <= y0)
    throw ContractViolation("crop_template: box does not intersect the image");
  Image region = crop(image, x0, y0, x1 - x0, y1 - y0);
  int out_w, out_h;
  if (region.width >= region.height) {
    out_w = target_long_side;
    out_h = std::max(1, static_cast<int>(std::lround(
                            static_cast<double>(region.height) * target_long_side /
                            region.width)));
  } else {
    out_h = target_long_side;
    out_w = std::max(1, static_cast<int>(std::lround(
                            static_cast<double>(region.width) * target_long_side /
                            region.height)));
  }
  return resize_bilinear(region, out_w, out_h);
}

}  // namespace sqtk

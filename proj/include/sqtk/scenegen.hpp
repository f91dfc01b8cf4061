#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "sqtk/geometry.hpp"
#include "sqtk/image.hpp"

namespace sqtk {

struct Annotation {
  Box box;
  int category_id = 0;
  std::optional<int> track_id;
};

// The ten shape categories. Silhouette and palette are fixed per id so that
// crops of one category look alike across scenes.
enum class ShapeKind {
  disk = 0,
  square,
  triangle,
  ring,
  cross,
  star,
  bar,
  diamond,
  crescent,
  checker,
};
inline constexpr int kNumShapeCategories = 10;
const char* shape_name(int category_id);

struct SceneConfig {
  int image_size = 128;
  int num_categories = 10;
  std::array<int, 2> objects_per_scene{3, 8};
  std::array<int, 2> categories_per_scene{2, 4};
  // Categories scenes may draw from; empty means all of [0, num_categories).
  std::vector<int> category_pool;
  // Required gap between analytic boxes as a fraction of the image; 0 disables
  // overlap control entirely.
  double min_separation = 0.02;
  double noise_std = 0.02;
  double min_object_size = 0.10;
  double max_object_size = 0.26;
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<int> effective_pool() const;
};

enum class MotionModel { linear, curved };

struct SequenceConfig {
  SceneConfig scene;
  int num_frames = 24;
  // Per-frame center displacement bound as a fraction of max(w, h).
  double max_step = 0.2;
  double birth_prob = 0.0;
  double death_prob = 0.0;
  MotionModel motion = MotionModel::linear;

  void validate() const;
};

struct Scene {
  Image image;
  std::vector<Annotation> annotations;
};

// Renders one still scene. Deterministic given (cfg, rng state). Annotation
// boxes are derived from each shape's own rendered support, so they are tight
// to the drawn pixels regardless of later occlusion.
Scene generate_scene(const SceneConfig& cfg, Rng& rng);

// Renders a sequence with persistent track ids. Objects bounce off borders
// and, when min_separation > 0, off each other, so the separation invariant
// holds in every frame.
std::vector<Scene> generate_sequence(const SequenceConfig& cfg, Rng& rng);

// Crops the pixel region of `box` and resizes so the longer side equals
// `target_long_side` (aspect preserved, bilinear).
Image crop_template(const Image& image, const Box& box, int target_long_side);

}  // namespace sqtk

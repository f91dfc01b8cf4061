#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "sqtk/common.hpp"

namespace sqtk {

// Normalized center-format bounding box. cx, cy, w, h are fractions of the
// image; valid boxes satisfy cx,cy in [0,1] and w,h in [kMinBoxSize, 1].
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

inline constexpr double kMinBoxSize = 1e-4;

Box clamp_box(const Box& b);
bool box_valid(const Box& b);

// (x0, y0, x1, y1)
std::array<double, 4> to_corners(const Box& b);
Box from_corners(double x0, double y0, double x1, double y1);

double box_area(const Box& b);

// Intersection over union. Zero-area inputs yield 0.
double iou(const Box& a, const Box& b);

// Generalized IoU: iou - (enclosing - union) / enclosing, in [-1, 1].
double giou(const Box& a, const Box& b);

// Greedy non-maximum suppression by descending score. A box is suppressed iff
// its IoU with an already kept box exceeds `threshold`. Returns kept indices
// in score-descending order; equal scores break ties toward the lower index.
std::vector<std::size_t> nms(std::span<const Box> boxes,
                             std::span<const double> scores,
                             double threshold);

// Shifts the center by uniform(+-center_scale * side) and rescales each side
// by uniform(1 - size_scale, 1 + size_scale), then clamps. Draws exactly four
// uniforms from `rng` in cx, cy, w, h order.
Box jitter_box(const Box& b, double center_scale, double size_scale, Rng& rng);

}  // namespace sqtk

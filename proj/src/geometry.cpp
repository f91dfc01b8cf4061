#include "sqtk/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sqtk {

Box clamp_box(const Box& b) {
  Box r;
  r.cx = std::clamp(b.cx, 0.0, 1.0);
  r.cy = std::clamp(b.cy, 0.0, 1.0);
  r.w = std::clamp(b.w, kMinBoxSize, 1.0);
  r.h = std::clamp(b.h, kMinBoxSize, 1.0);
  return r;
}

bool box_valid(const Box& b) {
  return b.cx >= 0.0 && b.cx <= 1.0 && b.cy >= 0.0 && b.cy <= 1.0 &&
         b.w >= kMinBoxSize && b.w <= 1.0 && b.h >= kMinBoxSize && b.h <= 1.0;
}

std::array<double, 4> to_corners(const Box& b) {
  return {b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h};
}

Box from_corners(double x0, double y0, double x1, double y1) {
  Box b;
  b.cx = 0.5 * (x0 + x1);
  b.cy = 0.5 * (y0 + y1);
  b.w = x1 - x0;
  b.h = y1 - y0;
  return b;
}

double box_area(const Box& b) { return b.w * b.h; }

double iou(const Box& a, const Box& b) {
  double aa = box_area(a);
  double ab = box_area(b);
  if (aa <= 0.0 || ab <= 0.0) return 0.0;
  auto ca = to_corners(a);
  auto cb = to_corners(b);
  double iw = std::min(ca[2], cb[2]) - std::max(ca[0], cb[0]);
  double ih = std::min(ca[3], cb[3]) - std::max(ca[1], cb[1]);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  double inter = iw * ih;
  return inter / (aa + ab - inter);
}

double giou(const Box& a, const Box& b) {
  double aa = box_area(a);
  double ab = box_area(b);
  auto ca = to_corners(a);
  auto cb = to_corners(b);
  double iw = std::max(0.0, std::min(ca[2], cb[2]) - std::max(ca[0], cb[0]));
  double ih = std::max(0.0, std::min(ca[3], cb[3]) - std::max(ca[1], cb[1]));
  double inter = iw * ih;
  double uni = aa + ab - inter;
  double ew = std::max(ca[2], cb[2]) - std::min(ca[0], cb[0]);
  double eh = std::max(ca[3], cb[3]) - std::min(ca[1], cb[1]);
  double enc = ew * eh;
  if (uni <= 0.0 || enc <= 0.0) return 0.0;
  return inter / uni - (enc - uni) / enc;
}

std::vector<std::size_t> nms(std::span<const Box> boxes,
                             std::span<const double> scores,
                             double threshold) {
  if (boxes.size() != scores.size())
    throw ContractViolation("nms: boxes and scores length mismatch");
  if (threshold < 0.0 || threshold > 1.0)
    throw ContractViolation("nms: threshold must be in [0,1]");

  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return scores[i] > scores[j];
  });

  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (iou(boxes[idx], boxes[k]) > threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

Box jitter_box(const Box& b, double center_scale, double size_scale, Rng& rng) {
  if (center_scale < 0.0 || size_scale < 0.0)
    throw ContractViolation("jitter_box: noise scales must be non-negative");
  Box r = b;
  r.cx += rng.uniform(-center_scale * b.w, center_scale * b.w);
  r.cy += rng.uniform(-center_scale * b.h, center_scale * b.h);
  r.w *= rng.uniform(1.0 - size_scale, 1.0 + size_scale);
  r.h *= rng.uniform(1.0 - size_scale, 1.0 + size_scale);
  return clamp_box(r);
}

}  // namespace sqtk

#pragma once

#include <vector>

#include "sqtk/geometry.hpp"

namespace sqtk {

struct ImageDetections {
  std::vector<Box> gt;
  std::vector<std::pair<Box, double>> detections;  // (box, score)
};

struct DetectionPrResult {
  double map50 = 0.0;
  double mar = 0.0;
  long tp = 0, fp = 0;
  long gt_total = 0;
  std::vector<double> precision101;  // interpolated precision at recall 0..1
};

// Single-class AP at one IoU gate: detections are matched greedily in global
// score order, one GT at most once per image; AP uses 101-point interpolated
// precision; mAR is recall with at most `max_detections` kept per image.
DetectionPrResult detection_pr(const std::vector<ImageDetections>& images,
                               double iou_gate = 0.5, int max_detections = 100);

}  // namespace sqtk

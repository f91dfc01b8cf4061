#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sqtk/evalkit/mot_csv.hpp"
#include "sqtk/geometry.hpp"

namespace sqtk {

// Per-frame ground truth / hypotheses for one sequence, keyed by 1-based
// frame index.
struct TrackedBoxes {
  std::map<int, std::vector<std::pair<int, Box>>> frames;  // frame -> (id, box)

  void add(int frame, int id, const Box& box);
  long total_boxes() const;
  static TrackedBoxes from_rows(const std::vector<MotRow>& rows);
};

struct ClearResult {
  double mota = 0.0;
  long fp = 0, fn = 0, idsw = 0;
  long gt_total = 0;
  int mt = 0, ml = 0;
  int gt_trajectories = 0;
  long matches = 0;
};

// CLEAR-MOT with match persistence: pairs from the previous frame survive
// while still within the IoU gate; the remainder is Hungarian-assigned
// maximizing IoU above the gate. An identity switch is charged when a GT
// track's matched hypothesis id differs from its last matched id.
ClearResult clear_mot(const TrackedBoxes& gt, const TrackedBoxes& hyp,
                      double iou_gate = 0.5);

struct Idf1Result {
  double idf1 = 0.0;
  long idtp = 0, idfp = 0, idfn = 0;
};

// Trajectory-level bipartite matching maximizing id-consistent overlap.
Idf1Result idf1(const TrackedBoxes& gt, const TrackedBoxes& hyp, double iou_gate = 0.5);

struct MetricsReport {
  double mota = 0.0;
  double idf1 = 0.0;
  int mt = 0, ml = 0;
  long fp = 0, fn = 0, idsw = 0;
  double map50 = 0.0;
  double mar = 0.0;
  nlohmann::json per_sequence = nlohmann::json::object();
};

nlohmann::json metrics_report_to_json(const MetricsReport& r);

}  // namespace sqtk

#include "sqtk/evalkit/clearmot.hpp"

#include <algorithm>
#include <set>

#include "sqtk/assignment.hpp"
#include "sqtk/common.hpp"

namespace sqtk {

namespace {
constexpr double kForbidden = 1e9;
}

void TrackedBoxes::add(int frame, int id, const Box& box) {
  frames[frame].push_back({id, box});
}

long TrackedBoxes::total_boxes() const {
  long n = 0;
  for (const auto& [f, v] : frames) n += static_cast<long>(v.size());
  return n;
}

TrackedBoxes TrackedBoxes::from_rows(const std::vector<MotRow>& rows) {
  TrackedBoxes t;
  std::set<std::pair<int, int>> seen;
  for (const auto& r : rows) {
    if (!seen.insert({r.frame, r.id}).second)
      throw DataError("TrackedBoxes: duplicate (frame,id) in hypothesis rows");
    t.add(r.frame, r.id, r.box);
  }
  return t;
}

ClearResult clear_mot(const TrackedBoxes& gt, const TrackedBoxes& hyp, double iou_gate) {
  ClearResult res;

  // union of frame indices
  std::set<int> frame_ids;
  for (const auto& [f, v] : gt.frames) frame_ids.insert(f);
  for (const auto& [f, v] : hyp.frames) frame_ids.insert(f);

  std::map<int, int> prev_match;        // gt id -> hyp id matched in previous frame
  std::map<int, int> last_matched_hyp;  // gt id -> last hyp id ever matched
  std::map<int, long> gt_frames_seen, gt_frames_matched;

  static const std::vector<std::pair<int, Box>> kEmpty;
  for (int f : frame_ids) {
    auto git = gt.frames.find(f);
    auto hit = hyp.frames.find(f);
    const auto& G = git != gt.frames.end() ? git->second : kEmpty;
    const auto& H = hit != hyp.frames.end() ? hit->second : kEmpty;
    res.gt_total += static_cast<long>(G.size());
    for (const auto& [gid, box] : G) gt_frames_seen[gid] += 1;

    std::vector<char> g_used(G.size(), 0), h_used(H.size(), 0);
    std::map<int, int> new_match;

    // 1) persist previous-frame pairs still within the gate
    for (std::size_t gi = 0; gi < G.size(); ++gi) {
      auto pm = prev_match.find(G[gi].first);
      if (pm == prev_match.end()) continue;
      for (std::size_t hi = 0; hi < H.size(); ++hi) {
        if (h_used[hi] || H[hi].first != pm->second) continue;
        if (iou(G[gi].second, H[hi].second) >= iou_gate) {
          g_used[gi] = 1;
          h_used[hi] = 1;
          new_match[G[gi].first] = H[hi].first;
        }
        break;
      }
    }

    // 2) Hungarian on the remainder, maximizing IoU above the gate
    std::vector<int> g_rest, h_rest;
    for (std::size_t gi = 0; gi < G.size(); ++gi)
      if (!g_used[gi]) g_rest.push_back(static_cast<int>(gi));
    for (std::size_t hi = 0; hi < H.size(); ++hi)
      if (!h_used[hi]) h_rest.push_back(static_cast<int>(hi));
    if (!g_rest.empty() && !h_rest.empty()) {
      Eigen::MatrixXd cost(g_rest.size(), h_rest.size());
      for (std::size_t i = 0; i < g_rest.size(); ++i)
        for (std::size_t j = 0; j < h_rest.size(); ++j) {
          double v = iou(G[g_rest[i]].second, H[h_rest[j]].second);
          cost(i, j) = v >= iou_gate ? 1.0 - v : kForbidden;
        }
      auto rowsol = solve_assignment(cost);
      for (std::size_t i = 0; i < g_rest.size(); ++i) {
        int j = rowsol[i];
        if (j < 0 || cost(i, j) >= kForbidden) continue;
        g_used[g_rest[i]] = 1;
        h_used[h_rest[j]] = 1;
        new_match[G[g_rest[i]].first] = H[h_rest[j]].first;
      }
    }

    for (const auto& [gid, hid] : new_match) {
      auto last = last_matched_hyp.find(gid);
      if (last != last_matched_hyp.end() && last->second != hid) res.idsw += 1;
      last_matched_hyp[gid] = hid;
      gt_frames_matched[gid] += 1;
    }
    res.matches += static_cast<long>(new_match.size());
    res.fn += static_cast<long>(G.size()) - static_cast<long>(new_match.size());
    res.fp += static_cast<long>(H.size()) - static_cast<long>(new_match.size());
    prev_match = std::move(new_match);
  }

  res.gt_trajectories = static_cast<int>(gt_frames_seen.size());
  for (const auto& [gid, seen] : gt_frames_seen) {
    double ratio = static_cast<double>(gt_frames_matched[gid]) / static_cast<double>(seen);
    if (ratio >= 0.8) res.mt += 1;
    if (ratio <= 0.2) res.ml += 1;
  }
  res.mota = res.gt_total > 0
                 ? 1.0 - static_cast<double>(res.fp + res.fn + res.idsw) /
                             static_cast<double>(res.gt_total)
                 : 0.0;
  return res;
}

Idf1Result idf1(const TrackedBoxes& gt, const TrackedBoxes& hyp, double iou_gate) {
  // trajectory views keyed by id
  std::map<int, std::map<int, Box>> gtraj, htraj;
  for (const auto& [f, v] : gt.frames)
    for (const auto& [id, b] : v) gtraj[id][f] = b;
  for (const auto& [f, v] : hyp.frames)
    for (const auto& [id, b] : v) htraj[id][f] = b;

  std::vector<int> gids, hids;
  for (const auto& [id, t] : gtraj) gids.push_back(id);
  for (const auto& [id, t] : htraj) hids.push_back(id);

  Idf1Result res;
  long total_gt = gt.total_boxes();
  long total_hyp = hyp.total_boxes();
  if (!gids.empty() && !hids.empty()) {
    // overlap(g, h) = frames where both exist and IoU clears the gate
    Eigen::MatrixXd overlap(gids.size(), hids.size());
    for (std::size_t i = 0; i < gids.size(); ++i)
      for (std::size_t j = 0; j < hids.size(); ++j) {
        const auto& gt_frames = gtraj[gids[i]];
        const auto& hp_frames = htraj[hids[j]];
        long n = 0;
        for (const auto& [f, gb] : gt_frames) {
          auto it = hp_frames.find(f);
          if (it != hp_frames.end() && iou(gb, it->second) >= iou_gate) ++n;
        }
        overlap(i, j) = static_cast<double>(n);
      }
    auto rowsol = solve_assignment(-overlap);
    for (std::size_t i = 0; i < gids.size(); ++i)
      if (rowsol[i] >= 0) res.idtp += static_cast<long>(overlap(i, rowsol[i]));
  }
  res.idfn = total_gt - res.idtp;
  res.idfp = total_hyp - res.idtp;
  double denom = static_cast<double>(2 * res.idtp + res.idfp + res.idfn);
  res.idf1 = denom > 0.0 ? 2.0 * static_cast<double>(res.idtp) / denom : 0.0;
  return res;
}

nlohmann::json metrics_report_to_json(const MetricsReport& r) {
  return nlohmann::json{{"MOTA", r.mota}, {"IDF1", r.idf1},   {"MT", r.mt},
                        {"ML", r.ml},     {"FP", r.fp},       {"FN", r.fn},
                        {"IDSw", r.idsw}, {"mAP50", r.map50}, {"mAR", r.mar},
                        {"per_sequence", r.per_sequence}};
}

}  // namespace sqtk

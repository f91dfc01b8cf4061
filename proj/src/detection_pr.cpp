#include "sqtk/evalkit/detection_pr.hpp"

#include <algorithm>
#include <numeric>

namespace sqtk {

DetectionPrResult detection_pr(const std::vector<ImageDetections>& images,
                               double iou_gate, int max_detections) {
  DetectionPrResult res;

  struct Det {
    int image;
    int index;
    double score;
  };
  std::vector<Det> all;
  for (int im = 0; im < static_cast<int>(images.size()); ++im) {
    res.gt_total += static_cast<long>(images[im].gt.size());
    // cap per image by score before pooling
    std::vector<int> order(images[im].detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return images[im].detections[a].second > images[im].detections[b].second;
    });
    int keep = std::min<int>(max_detections, static_cast<int>(order.size()));
    for (int k = 0; k < keep; ++k)
      all.push_back({im, order[k], images[im].detections[order[k]].second});
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Det& a, const Det& b) { return a.score > b.score; });

  std::vector<std::vector<char>> gt_used(images.size());
  for (std::size_t i = 0; i < images.size(); ++i)
    gt_used[i].assign(images[i].gt.size(), 0);

  std::vector<char> is_tp(all.size(), 0);
  for (std::size_t d = 0; d < all.size(); ++d) {
    const auto& det = all[d];
    const auto& img = images[static_cast<std::size_t>(det.image)];
    const Box& db = img.detections[static_cast<std::size_t>(det.index)].first;
    double best = iou_gate;
    int best_g = -1;
    for (int gidx = 0; gidx < static_cast<int>(img.gt.size()); ++gidx) {
      if (gt_used[static_cast<std::size_t>(det.image)][static_cast<std::size_t>(gidx)])
        continue;
      double v = iou(db, img.gt[static_cast<std::size_t>(gidx)]);
      if (v >= best) {
        best = v;
        best_g = gidx;
      }
    }
    if (best_g >= 0) {
      gt_used[static_cast<std::size_t>(det.image)][static_cast<std::size_t>(best_g)] = 1;
      is_tp[d] = 1;
    }
  }

  // precision/recall along the ranked list
  std::vector<double> precision, recall;
  long tp = 0, fp = 0;
  for (std::size_t d = 0; d < all.size(); ++d) {
    if (is_tp[d])
      ++tp;
    else
      ++fp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(res.gt_total > 0
                         ? static_cast<double>(tp) / static_cast<double>(res.gt_total)
                         : 0.0);
  }
  res.tp = tp;
  res.fp = fp;
  res.mar = res.gt_total > 0 ? static_cast<double>(tp) / static_cast<double>(res.gt_total)
                             : 0.0;

  // 101-point interpolation: p(r) = max precision among points with recall >= r
  std::vector<double> p101(101, 0.0);
  for (int r = 0; r <= 100; ++r) {
    double target = r / 100.0;
    double best = 0.0;
    for (std::size_t i = 0; i < precision.size(); ++i)
      if (recall[i] >= target) best = std::max(best, precision[i]);
    p101[static_cast<std::size_t>(r)] = best;
  }
  res.precision101 = p101;
  res.map50 = res.gt_total > 0
                  ? std::accumulate(p101.begin(), p101.end(), 0.0) / 101.0
                  : 0.0;
  return res;
}

}  // namespace sqtk

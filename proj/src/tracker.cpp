#include "sqtk/tracker.hpp"

#include <algorithm>

namespace sqtk {

ModelScoringBackend::ModelScoringBackend(Model<float>& model, const Image& template_image)
    : model_(model) {
  nn::Graph<float> g;
  auto tf = model_.extract_features(g, template_image);
  pooled_ = g.value(model_.pooled_matrix(g, tf));
}

ScoringBackend::Output ModelScoringBackend::evaluate(int, const Image& frame,
                                                     const std::vector<Box>& tracked_boxes) {
  const int N = model_.config().num_queries;
  const int S = model_.config().scales;
  const int M = static_cast<int>(tracked_boxes.size());

  nn::Graph<float> g;
  auto feats = model_.extract_features(g, frame);
  auto mem = model_.encode(g, feats);
  nn::Var pooled = g.leaf(pooled_);
  nn::Var qb = g.param(model_.query_boxes_param());

  auto det_items = build_detection_layout(N, S, 0);
  auto [det_c, det_b] = assemble_queries(g, det_items, pooled, qb);
  std::vector<int> group_sizes{N};
  nn::Var contents = det_c, boxes = det_b;
  if (M > 0) {
    std::vector<std::pair<int, Box>> tracked;
    for (int m = 0; m < M; ++m) tracked.push_back({m, tracked_boxes[m]});
    auto trk_items = build_tracking_layout(S, tracked, 1);
    auto [trk_c, trk_b] = assemble_queries(g, trk_items, pooled, qb);
    contents = g.concat_rows({det_c, trk_c});
    boxes = g.concat_rows({det_b, trk_b});
    group_sizes.push_back(S * M);
  }
  auto mask = std::make_shared<nn::MaskMatrix>(build_group_attention_mask(group_sizes));
  auto out = model_.decode(g, contents, boxes, mask, mem);

  const auto& logits = g.value(out.logits.back());
  const auto& pred = g.value(out.boxes.back());
  auto prob = [](float logit) { return 1.0 / (1.0 + std::exp(-static_cast<double>(logit))); };
  auto row_box = [&](Eigen::Index r) {
    return clamp_box(Box{static_cast<double>(pred(r, 0)), static_cast<double>(pred(r, 1)),
                         static_cast<double>(pred(r, 2)), static_cast<double>(pred(r, 3))});
  };

  Output o;
  for (int n = 0; n < N; ++n) o.detections.push_back({row_box(n), prob(logits(n, 0))});
  o.track_candidates.resize(static_cast<std::size_t>(M));
  for (int s = 0; s < S; ++s)
    for (int m = 0; m < M; ++m) {
      Eigen::Index r = N + static_cast<Eigen::Index>(s) * M + m;
      o.track_candidates[static_cast<std::size_t>(m)].push_back(
          {row_box(r), prob(logits(r, 0))});
    }
  return o;
}

ScoringBackend::Output OracleScoringBackend::evaluate(int frame_index, const Image&,
                                                      const std::vector<Box>& tracked_boxes) {
  if (frame_index < 0 || frame_index >= static_cast<int>(gt_.size()))
    throw ContractViolation("OracleScoringBackend: frame index out of range");
  const auto& gt = gt_[static_cast<std::size_t>(frame_index)];
  Output o;
  for (const auto& b : gt) o.detections.push_back({b, 1.0});
  for (const auto& tb : tracked_boxes) {
    double best = 0.0;
    Box best_box = tb;
    for (const auto& b : gt) {
      double v = iou(tb, b);
      if (v > best) {
        best = v;
        best_box = b;
      }
    }
    // no overlap means the object is gone
    std::vector<ScoredBox> cands(static_cast<std::size_t>(scales_),
                                 {best_box, best > 0.0 ? 1.0 : 0.0});
    o.track_candidates.push_back(std::move(cands));
  }
  return o;
}

Tracker::Tracker(ScoringBackend& backend, const TrackerConfig& cfg)
    : backend_(backend), cfg_(cfg) {
  cfg_.validate();
}

FrameResult Tracker::admit_detections(std::vector<ScoredBox> detections,
                                      const std::vector<Box>& keep_unconditional,
                                      FrameResult result) {
  // Track boxes are kept unconditionally: detections overlapping any track
  // above the NMS threshold are dropped first, the survivors then suppress
  // each other greedily.
  std::vector<ScoredBox> remaining;
  for (const auto& d : detections) {
    bool suppressed = false;
    for (const auto& tb : keep_unconditional)
      if (iou(d.box, tb) > cfg_.nms_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) remaining.push_back(d);
  }
  std::vector<Box> boxes;
  std::vector<double> scores;
  for (const auto& d : remaining) {
    boxes.push_back(d.box);
    scores.push_back(d.score);
  }
  for (std::size_t idx : nms(boxes, scores, cfg_.nms_threshold)) {
    const auto& d = remaining[idx];
    if (d.score < cfg_.confidence_threshold) continue;
    Track t;
    t.id = next_id_++;
    t.box = d.box;
    t.score = d.score;
    t.age = 0;
    tracks_.push_back(t);
    result.born.push_back(t);
  }
  return result;
}

FrameResult Tracker::initialize(const Image& first_frame) {
  auto out = backend_.evaluate(frame_index_++, first_frame, {});
  return admit_detections(std::move(out.detections), {}, FrameResult{});
}

FrameResult Tracker::step(const Image& frame) {
  std::vector<Box> tracked_boxes;
  for (const auto& t : tracks_) tracked_boxes.push_back(t.box);
  auto out = backend_.evaluate(frame_index_++, frame, tracked_boxes);

  FrameResult result;
  std::vector<Track> survivors;
  std::vector<Box> survivor_boxes;
  for (std::size_t m = 0; m < tracks_.size(); ++m) {
    const auto& cands = out.track_candidates[m];
    // among the S scale candidates pick the one with the largest IoU against
    // the tracked box; ties break toward the lower scale index
    std::size_t best_s = 0;
    double best_iou = -1.0;
    for (std::size_t s = 0; s < cands.size(); ++s) {
      double v = iou(cands[s].box, tracks_[m].box);
      if (v > best_iou) {
        best_iou = v;
        best_s = s;
      }
    }
    const auto& chosen = cands[best_s];
    if (chosen.score >= cfg_.confidence_threshold) {
      Track t = tracks_[m];
      t.box = chosen.box;
      t.score = chosen.score;
      t.age += 1;
      survivors.push_back(t);
      survivor_boxes.push_back(t.box);
      result.continued.push_back({t.id, t.box, t.score});
    } else {
      result.died.push_back(tracks_[m].id);
    }
  }
  tracks_ = std::move(survivors);
  return admit_detections(std::move(out.detections), survivor_boxes, std::move(result));
}

std::vector<MotRow> run_video(const std::vector<Image>& frames, ScoringBackend& backend,
                              const TrackerConfig& cfg) {
  if (frames.empty()) throw ContractViolation("run_video: need at least one frame");
  Tracker tracker(backend, cfg);
  std::vector<MotRow> rows;
  auto emit = [&rows](int frame_1based, const FrameResult& fr) {
    for (const auto& [id, box, score] : fr.continued)
      rows.push_back({frame_1based, id, box, score});
    for (const auto& t : fr.born) rows.push_back({frame_1based, t.id, t.box, t.score});
  };
  emit(1, tracker.initialize(frames[0]));
  for (std::size_t f = 1; f < frames.size(); ++f)
    emit(static_cast<int>(f) + 1, tracker.step(frames[f]));
  return rows;
}

}  // namespace sqtk

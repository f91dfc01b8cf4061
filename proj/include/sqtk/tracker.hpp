#pragma once

#include <map>
#include <memory>
#include <vector>

#include "sqtk/evalkit/mot_csv.hpp"
#include "sqtk/model/model.hpp"
#include "sqtk/querybank.hpp"
#include "sqtk/scenegen.hpp"

namespace sqtk {

struct TrackerConfig {
  double confidence_threshold = 0.4;
  double nms_threshold = 0.5;

  void validate() const {
    if (confidence_threshold < 0.0 || confidence_threshold > 1.0 ||
        nms_threshold < 0.0 || nms_threshold > 1.0)
      throw ContractViolation("TrackerConfig: thresholds must be in [0,1]");
  }
};

struct Track {
  enum class Status { active, dead };
  int id = 0;
  Box box;
  double score = 0.0;
  int age = 0;
  Status status = Status::active;
};

struct FrameResult {
  std::vector<std::tuple<int, Box, double>> continued;  // (id, box, score)
  std::vector<Track> born;
  std::vector<int> died;
};

struct ScoredBox {
  Box box;
  double score = 0.0;
};

// Per-frame scoring seam. `track_candidates[m][s]` is the candidate produced
// for tracked box m at scale s.
class ScoringBackend {
 public:
  struct Output {
    std::vector<ScoredBox> detections;
    std::vector<std::vector<ScoredBox>> track_candidates;
  };
  virtual ~ScoringBackend() = default;
  virtual Output evaluate(int frame_index, const Image& frame,
                          const std::vector<Box>& tracked_boxes) = 0;
  virtual int scales() const = 0;
};

// Runs the trained model: N detection queries plus S*M tracking queries in
// one masked forward pass; final decoder layer provides boxes and scores.
class ModelScoringBackend : public ScoringBackend {
 public:
  ModelScoringBackend(Model<float>& model, const Image& template_image);
  Output evaluate(int frame_index, const Image& frame,
                  const std::vector<Box>& tracked_boxes) override;
  int scales() const override { return model_.config().scales; }

 private:
  Model<float>& model_;
  nn::Mat<float> pooled_;  // S x D, cached for the whole video
};

// Testing seam: detections are the ground-truth boxes of the template
// category at score 1.0; each tracked box's candidate is the GT box with the
// largest IoU (score 0 when nothing overlaps).
class OracleScoringBackend : public ScoringBackend {
 public:
  OracleScoringBackend(std::vector<std::vector<Box>> gt_per_frame, int scales)
      : gt_(std::move(gt_per_frame)), scales_(scales) {}
  Output evaluate(int frame_index, const Image& frame,
                  const std::vector<Box>& tracked_boxes) override;
  int scales() const override { return scales_; }

 private:
  std::vector<std::vector<Box>> gt_;
  int scales_;
};

// Online tracking-by-query state machine. Frames must be fed strictly in
// order; ids are never reused.
class Tracker {
 public:
  Tracker(ScoringBackend& backend, const TrackerConfig& cfg);

  // Detection-only pass on the first frame; every post-NMS detection at or
  // above the confidence threshold becomes a track.
  FrameResult initialize(const Image& first_frame);

  FrameResult step(const Image& frame);

  const std::vector<Track>& active_tracks() const { return tracks_; }

 private:
  FrameResult admit_detections(std::vector<ScoredBox> detections,
                               const std::vector<Box>& keep_unconditional,
                               FrameResult result);

  ScoringBackend& backend_;
  TrackerConfig cfg_;
  std::vector<Track> tracks_;  // active only
  int next_id_ = 1;
  int frame_index_ = 0;
};

// Full-video pipeline; returns MOTChallenge rows (1-based frames).
std::vector<MotRow> run_video(const std::vector<Image>& frames, ScoringBackend& backend,
                              const TrackerConfig& cfg);

}  // namespace sqtk

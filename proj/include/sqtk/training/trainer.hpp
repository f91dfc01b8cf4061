#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>

#include "sqtk/dataset.hpp"
#include "sqtk/training/loss.hpp"

namespace sqtk {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 4;
  int templates = 2;  // T
  double lr = 2e-4;
  double lr_decay_factor = 0.1;
  int decay_epoch = -1;  // -1: 90% of epochs
  double weight_decay = 1e-4;
  double clip_norm = 0.1;
  DenoisingMode denoising = DenoisingMode::optimized;
  bool negatives = true;  // two-category arm; false drops negative annotations
  double denoise_flip_prob = 0.2;  // original arm only
  DenoiseNoiseConfig noise;
  MatchWeights weights;
  int template_long_side = 32;
  std::uint64_t seed = 0;

  int effective_decay_epoch() const {
    return decay_epoch >= 0 ? decay_epoch : (epochs * 9) / 10;
  }
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Draws the per-image randomness (template categories, template crops,
// denoising noise) and freezes it into a TrainingExample. Returns nullopt for
// images with no annotations (Eq. 3 undefined on an empty set).
class ExampleSampler {
 public:
  ExampleSampler(const Dataset& dataset, const TrainConfig& cfg, int scales);

  std::optional<TrainingExample> sample(int entry_index, Rng& rng) const;

 private:
  const Dataset& dataset_;
  const TrainConfig& cfg_;
  int scales_;
  std::map<int, std::vector<std::pair<int, int>>> category_index_;
};

struct StepRecord {
  int step = 0;
  int epoch = 0;
  double total = 0.0, cls = 0.0, l1 = 0.0, giou = 0.0, recon = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  int steps = 0;
  std::vector<double> epoch_mean_loss;
};

// Single-threaded training loop: deterministic given (dataset, config, model
// seed). Writes one JSON line per step to `log` when provided. Throws
// DivergenceError on a non-finite loss.
TrainResult train(const Dataset& dataset, Model<float>& model, const TrainConfig& cfg,
                  std::ostream* log,
                  const std::function<void(const StepRecord&)>& on_step = {});

}  // namespace sqtk

#include "sqtk/training/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sqtk/assignment.hpp"
#include "sqtk/nn/adamw.hpp"

namespace sqtk {

RelabeledAnnotationSet relabel_annotations(const std::vector<Annotation>& annotations,
                                           int template_category) {
  RelabeledAnnotationSet out;
  out.template_category = template_category;
  for (const auto& a : annotations)
    out.entries.push_back({a.box, a.category_id == template_category ? 1 : 0});
  return out;
}

std::vector<int> sample_template_categories(const std::vector<Annotation>& annotations,
                                            int T, Rng& rng) {
  if (annotations.empty()) return {};
  std::set<int> present;
  for (const auto& a : annotations) present.insert(a.category_id);
  std::vector<int> distinct(present.begin(), present.end());
  std::vector<int> out;
  if (static_cast<int>(distinct.size()) >= T) {
    rng.shuffle(distinct);
    out.assign(distinct.begin(), distinct.begin() + T);
  } else {
    for (int t = 0; t < T; ++t)
      out.push_back(distinct[rng.uniform_int(static_cast<int>(distinct.size()))]);
  }
  return out;
}

MatchResult hungarian_match(const std::vector<double>& logits,
                            const std::vector<Box>& boxes,
                            const RelabeledAnnotationSet& targets,
                            const MatchWeights& weights) {
  if (logits.size() != boxes.size())
    throw ContractViolation("hungarian_match: logits/boxes length mismatch");
  std::vector<int> positive_entries;
  for (int e = 0; e < static_cast<int>(targets.entries.size()); ++e)
    if (targets.entries[e].label == 1) positive_entries.push_back(e);

  const int nq = static_cast<int>(logits.size());
  const int np = static_cast<int>(positive_entries.size());
  if (np > nq)
    throw ContractViolation("hungarian_match: more positive targets than queries");

  MatchResult result;
  if (np == 0) {
    for (int q = 0; q < nq; ++q) result.unmatched_queries.push_back(q);
    return result;
  }

  constexpr double kEps = 1e-8;
  Eigen::MatrixXd cost(nq, np);
  for (int q = 0; q < nq; ++q) {
    double p = 1.0 / (1.0 + std::exp(-logits[q]));
    double pos_cost = weights.focal_alpha * std::pow(1.0 - p, weights.focal_gamma) *
                      (-std::log(p + kEps));
    double neg_cost = (1.0 - weights.focal_alpha) * std::pow(p, weights.focal_gamma) *
                      (-std::log(1.0 - p + kEps));
    double cls_cost = pos_cost - neg_cost;
    for (int j = 0; j < np; ++j) {
      const Box& t = targets.entries[positive_entries[j]].box;
      double l1 = std::abs(boxes[q].cx - t.cx) + std::abs(boxes[q].cy - t.cy) +
                  std::abs(boxes[q].w - t.w) + std::abs(boxes[q].h - t.h);
      cost(q, j) = weights.w_cls * cls_cost + weights.w_l1 * l1 +
                   weights.w_giou * (1.0 - giou(boxes[q], t));
    }
  }
  std::vector<int> rowsol = solve_assignment(cost);
  std::vector<char> matched(nq, 0);
  // collect pairs ordered by query index
  for (int q = 0; q < nq; ++q) {
    if (rowsol[q] >= 0) {
      result.pairs.push_back({q, positive_entries[rowsol[q]]});
      matched[q] = 1;
    }
  }
  for (int q = 0; q < nq; ++q)
    if (!matched[q]) result.unmatched_queries.push_back(q);
  return result;
}

double total_loss(const std::vector<double>& hungarian_per_template,
                  const std::vector<std::vector<double>>& recon_per_template_scale,
                  int T, int S) {
  if (T < 1 || S < 1) throw ContractViolation("total_loss: T and S must be >= 1");
  if (static_cast<int>(hungarian_per_template.size()) != T)
    throw ContractViolation("total_loss: expected T Hungarian terms");
  double sum = 0.0;
  for (int t = 0; t < T; ++t) {
    double r = 0.0;
    if (t < static_cast<int>(recon_per_template_scale.size())) {
      const auto& per_scale = recon_per_template_scale[t];
      for (double v : per_scale) r += v;
      if (!per_scale.empty() && static_cast<int>(per_scale.size()) != S)
        throw ContractViolation("total_loss: expected S reconstruction terms");
    }
    sum += hungarian_per_template[t] + r / S;
  }
  return sum / T;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return nlohmann::json{
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"templates", c.templates},
      {"lr", c.lr},
      {"lr_decay_factor", c.lr_decay_factor},
      {"decay_epoch", c.decay_epoch},
      {"weight_decay", c.weight_decay},
      {"clip_norm", c.clip_norm},
      {"denoising", c.denoising == DenoisingMode::off
                        ? "off"
                        : c.denoising == DenoisingMode::original ? "original" : "optimized"},
      {"negatives", c.negatives},
      {"denoise_flip_prob", c.denoise_flip_prob},
      {"noise_center_scale", c.noise.center_scale},
      {"noise_size_scale", c.noise.size_scale},
      {"w_cls", c.weights.w_cls},
      {"w_l1", c.weights.w_l1},
      {"w_giou", c.weights.w_giou},
      {"focal_alpha", c.weights.focal_alpha},
      {"focal_gamma", c.weights.focal_gamma},
      {"template_long_side", c.template_long_side},
      {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.templates = j.value("templates", c.templates);
  c.lr = j.value("lr", c.lr);
  c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
  c.decay_epoch = j.value("decay_epoch", c.decay_epoch);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  std::string dn = j.value("denoising", "optimized");
  if (dn == "off")
    c.denoising = DenoisingMode::off;
  else if (dn == "original")
    c.denoising = DenoisingMode::original;
  else if (dn == "optimized")
    c.denoising = DenoisingMode::optimized;
  else
    throw DataError("unknown denoising mode: " + dn);
  c.negatives = j.value("negatives", c.negatives);
  c.denoise_flip_prob = j.value("denoise_flip_prob", c.denoise_flip_prob);
  c.noise.center_scale = j.value("noise_center_scale", c.noise.center_scale);
  c.noise.size_scale = j.value("noise_size_scale", c.noise.size_scale);
  c.weights.w_cls = j.value("w_cls", c.weights.w_cls);
  c.weights.w_l1 = j.value("w_l1", c.weights.w_l1);
  c.weights.w_giou = j.value("w_giou", c.weights.w_giou);
  c.weights.focal_alpha = j.value("focal_alpha", c.weights.focal_alpha);
  c.weights.focal_gamma = j.value("focal_gamma", c.weights.focal_gamma);
  c.template_long_side = j.value("template_long_side", c.template_long_side);
  c.seed = j.value("seed", c.seed);
  return c;
}

ExampleSampler::ExampleSampler(const Dataset& dataset, const TrainConfig& cfg, int scales)
    : dataset_(dataset), cfg_(cfg), scales_(scales),
      category_index_(dataset.category_index()) {}

std::optional<TrainingExample> ExampleSampler::sample(int entry_index, Rng& rng) const {
  const DatasetEntry& entry = dataset_.entries[static_cast<std::size_t>(entry_index)];
  auto categories = sample_template_categories(entry.annotations, cfg_.templates, rng);
  if (categories.empty()) return std::nullopt;

  TrainingExample ex;
  ex.scene = dataset_.image(static_cast<std::size_t>(entry_index));
  const int T = static_cast<int>(categories.size());
  for (int t = 0; t < T; ++t) {
    TemplateDraw draw;
    draw.category = categories[static_cast<std::size_t>(t)];
    auto [src_entry, src_ann] =
        pick_template_source(category_index_, draw.category, entry_index, rng);
    Image src = dataset_.image(static_cast<std::size_t>(src_entry));
    draw.crop = crop_template(
        src, dataset_.entries[static_cast<std::size_t>(src_entry)]
                 .annotations[static_cast<std::size_t>(src_ann)].box,
        cfg_.template_long_side);

    // The single-category arm drops negative annotations entirely.
    std::vector<Annotation> anns;
    for (const auto& a : entry.annotations)
      if (cfg_.negatives || a.category_id == draw.category) anns.push_back(a);
    draw.targets = relabel_annotations(anns, draw.category);

    if (cfg_.denoising == DenoisingMode::optimized) {
      draw.denoise_items =
          build_denoising_layout(anns, draw.category, scales_, T + t, cfg_.noise, rng,
                                 &draw.denoise_targets);
    } else if (cfg_.denoising == DenoisingMode::original) {
      draw.denoise_items = build_original_denoising_layout(
          anns, draw.category, scales_, T + t, cfg_.noise, cfg_.denoise_flip_prob,
          dataset_.num_categories(), rng, &draw.denoise_targets);
    }
    ex.templates.push_back(std::move(draw));
  }
  return ex;
}

TrainResult train(const Dataset& dataset, Model<float>& model, const TrainConfig& cfg,
                  std::ostream* log, const std::function<void(const StepRecord&)>& on_step) {
  if (dataset.entries.empty()) throw DataError("train: dataset has no entries");
  ExampleSampler sampler(dataset, cfg, model.config().scales);
  nn::AdamW<float> opt;
  opt.weight_decay = static_cast<float>(cfg.weight_decay);

  Rng order_rng(derive_seed(cfg.seed, 1));
  Rng sample_rng(derive_seed(cfg.seed, 2));

  TrainResult result;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr * (epoch >= cfg.effective_decay_epoch() ? cfg.lr_decay_factor : 1.0);
    std::vector<int> order(dataset.entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    order_rng.shuffle(order);

    double epoch_loss = 0.0;
    int epoch_batches = 0;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      // assemble one batch of non-empty examples
      std::vector<TrainingExample> batch;
      while (cursor < order.size() && static_cast<int>(batch.size()) < cfg.batch_size) {
        auto ex = sampler.sample(order[cursor], sample_rng);
        ++cursor;
        if (ex) batch.push_back(std::move(*ex));
      }
      if (batch.empty()) break;

      model.params().zero_grad();
      double batch_total = 0.0, batch_cls = 0.0, batch_l1 = 0.0, batch_giou = 0.0,
             batch_recon = 0.0;
      for (const auto& ex : batch) {
        nn::Graph<float> g;
        LossBreakdown bd;
        nn::Var loss = build_example_loss(g, model, ex, cfg.weights, &bd);
        float v = g.value(loss)(0, 0);
        if (!std::isfinite(v))
          throw DivergenceError("train: non-finite loss at step " + std::to_string(step));
        g.backward(g.scale(loss, 1.0f / static_cast<float>(batch.size())));
        batch_total += bd.total;
        batch_cls += bd.cls;
        batch_l1 += bd.l1;
        batch_giou += bd.giou;
        batch_recon += bd.recon;
      }
      const double inv = 1.0 / batch.size();
      nn::clip_grad_norm(model.params(), cfg.clip_norm);
      opt.step(model.params(), static_cast<float>(lr));
      ++step;

      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.total = batch_total * inv;
      rec.cls = batch_cls * inv;
      rec.l1 = batch_l1 * inv;
      rec.giou = batch_giou * inv;
      rec.recon = batch_recon * inv;
      rec.lr = lr;
      epoch_loss += rec.total;
      ++epoch_batches;
      if (log) {
        nlohmann::json line{{"step", rec.step}, {"epoch", rec.epoch},
                            {"total", rec.total}, {"cls", rec.cls},
                            {"l1", rec.l1},       {"giou", rec.giou},
                            {"recon", rec.recon}, {"lr", rec.lr}};
        (*log) << line.dump() << "\n";
      }
      if (on_step) on_step(rec);
    }
    result.epoch_mean_loss.push_back(epoch_batches > 0 ? epoch_loss / epoch_batches : 0.0);
  }
  result.steps = step;
  return result;
}

}  // namespace sqtk

#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "sqtk/model/model.hpp"
#include "sqtk/querybank.hpp"

namespace sqtk {

// Eq. 3-4: every annotation kept, label 1 iff its category matches the
// sampled template category.
struct RelabeledAnnotationSet {
  struct Entry {
    Box box;
    int label = 0;
  };
  std::vector<Entry> entries;
  int template_category = -1;

  int positive_count() const {
    int n = 0;
    for (const auto& e : entries) n += e.label;
    return n;
  }
};

RelabeledAnnotationSet relabel_annotations(const std::vector<Annotation>& annotations,
                                           int template_category);

// Uniform over the distinct categories present; without replacement while
// possible, with replacement once T exceeds the distinct count. Returns an
// empty vector for an empty annotation set (skip-image signal).
std::vector<int> sample_template_categories(const std::vector<Annotation>& annotations,
                                            int T, Rng& rng);

struct MatchWeights {
  double w_cls = 2.0;
  double w_l1 = 5.0;
  double w_giou = 2.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
};

struct MatchResult {
  std::vector<std::pair<int, int>> pairs;  // (query index, entry index)
  std::vector<int> unmatched_queries;
};

// Exact one-to-one assignment between queries and the label-1 targets,
// minimizing w_cls * focal-style class cost + w_l1 * |box - target|_1 +
// w_giou * (1 - giou). Throws when positives outnumber queries.
MatchResult hungarian_match(const std::vector<double>& logits,
                            const std::vector<Box>& boxes,
                            const RelabeledAnnotationSet& targets,
                            const MatchWeights& weights);

// Eq. 7 aggregation over plain values: (1/T) sum_t [LH_t + (1/S) sum_s LR_ts].
double total_loss(const std::vector<double>& hungarian_per_template,
                  const std::vector<std::vector<double>>& recon_per_template_scale,
                  int T, int S);

struct LossBreakdown {
  double total = 0.0;
  std::vector<double> hungarian_per_template;                   // T values
  std::vector<std::vector<double>> recon_per_template_scale;    // T x S
  // Eq.-7-weighted component sums for the log; cls/l1/giou cover the
  // Hungarian term, recon the whole reconstruction term.
  double cls = 0.0, l1 = 0.0, giou = 0.0, recon = 0.0;
};

enum class DenoisingMode { off, original, optimized };

// Everything sampled for one training image; noise and template choices are
// frozen here so the loss is a pure function of the parameters.
struct TemplateDraw {
  int category = -1;
  Image crop;
  RelabeledAnnotationSet targets;
  std::vector<QueryLayoutItem> denoise_items;
  std::vector<DenoiseTarget> denoise_targets;
};

struct TrainingExample {
  Image scene;
  std::vector<TemplateDraw> templates;
};

// ---- graph-side loss builders ----

template <class S>
nn::Var focal_bce_sum(nn::Graph<S>& g, nn::Var logits, const std::vector<double>& targets,
                      double alpha, double gamma) {
  const Eigen::Index n = g.value(logits).rows();
  if (n != static_cast<Eigen::Index>(targets.size()))
    throw ContractViolation("focal_bce_sum: target count mismatch");
  nn::Mat<S> t(n, 1), one_minus_t(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    t(i, 0) = static_cast<S>(targets[static_cast<std::size_t>(i)]);
    one_minus_t(i, 0) = S(1) - t(i, 0);
  }
  nn::Var p = g.sigmoid(logits);
  nn::Var q = g.add_const(g.scale(p, S(-1)), S(1));  // 1 - p
  nn::Var ls_pos = g.logsigmoid(logits);
  nn::Var ls_neg = g.logsigmoid(g.scale(logits, S(-1)));
  nn::Var pos = g.mul(g.pow_const(q, static_cast<S>(gamma)), ls_pos);
  pos = g.scale(g.mul(pos, g.leaf(t)), static_cast<S>(-alpha));
  nn::Var neg = g.mul(g.pow_const(p, static_cast<S>(gamma)), ls_neg);
  neg = g.scale(g.mul(neg, g.leaf(one_minus_t)), static_cast<S>(-(1.0 - alpha)));
  return g.sum_all(g.add(pos, neg));
}

template <class S>
nn::Var l1_box_sum(nn::Graph<S>& g, nn::Var pred_boxes, const std::vector<Box>& targets) {
  nn::Mat<S> t(static_cast<Eigen::Index>(targets.size()), 4);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    t(static_cast<Eigen::Index>(i), 0) = static_cast<S>(targets[i].cx);
    t(static_cast<Eigen::Index>(i), 1) = static_cast<S>(targets[i].cy);
    t(static_cast<Eigen::Index>(i), 2) = static_cast<S>(targets[i].w);
    t(static_cast<Eigen::Index>(i), 3) = static_cast<S>(targets[i].h);
  }
  return g.sum_all(g.abs_op(g.sub(pred_boxes, g.leaf(std::move(t)))));
}

// sum over pairs of (1 - giou(pred, target)); pred boxes are sigmoid outputs,
// so widths and heights are strictly positive.
template <class S>
nn::Var giou_loss_sum(nn::Graph<S>& g, nn::Var pred_boxes, const std::vector<Box>& targets) {
  const Eigen::Index m = g.value(pred_boxes).rows();
  nn::Mat<S> tx0(m, 1), ty0(m, 1), tx1(m, 1), ty1(m, 1), tarea(m, 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Box& b = targets[static_cast<std::size_t>(i)];
    auto c = to_corners(b);
    tx0(i, 0) = static_cast<S>(c[0]);
    ty0(i, 0) = static_cast<S>(c[1]);
    tx1(i, 0) = static_cast<S>(c[2]);
    ty1(i, 0) = static_cast<S>(c[3]);
    tarea(i, 0) = static_cast<S>(box_area(b));
  }
  nn::Var cx = g.slice_cols(pred_boxes, 0, 1);
  nn::Var cy = g.slice_cols(pred_boxes, 1, 1);
  nn::Var w = g.slice_cols(pred_boxes, 2, 1);
  nn::Var h = g.slice_cols(pred_boxes, 3, 1);
  nn::Var px0 = g.sub(cx, g.scale(w, S(0.5)));
  nn::Var px1 = g.add(cx, g.scale(w, S(0.5)));
  nn::Var py0 = g.sub(cy, g.scale(h, S(0.5)));
  nn::Var py1 = g.add(cy, g.scale(h, S(0.5)));
  nn::Var vx0 = g.leaf(tx0), vy0 = g.leaf(ty0), vx1 = g.leaf(tx1), vy1 = g.leaf(ty1);

  nn::Var iw = g.relu(g.sub(g.min_elem(px1, vx1), g.max_elem(px0, vx0)));
  nn::Var ih = g.relu(g.sub(g.min_elem(py1, vy1), g.max_elem(py0, vy0)));
  nn::Var inter = g.mul(iw, ih);
  nn::Var area_p = g.mul(w, h);
  nn::Var uni = g.sub(g.add(area_p, g.leaf(tarea)), inter);
  nn::Var iou_v = g.div(inter, uni);
  nn::Var ew = g.sub(g.max_elem(px1, vx1), g.min_elem(px0, vx0));
  nn::Var eh = g.sub(g.max_elem(py1, vy1), g.min_elem(py0, vy0));
  nn::Var enc = g.mul(ew, eh);
  nn::Var giou_v = g.sub(iou_v, g.div(g.sub(enc, uni), enc));
  return g.sum_all(g.add_const(g.scale(giou_v, S(-1)), S(1)));
}

struct GroupLossParts {
  double cls = 0.0, l1 = 0.0, giou = 0.0;
};

// One decoder layer's Hungarian loss for one detection group. Matching is
// recomputed per layer on that layer's predictions.
template <class S>
nn::Var hungarian_layer_loss(nn::Graph<S>& g, nn::Var logits, nn::Var boxes,
                             const RelabeledAnnotationSet& targets,
                             const MatchWeights& wts, GroupLossParts* parts) {
  const Eigen::Index n = g.value(logits).rows();
  std::vector<double> lv(static_cast<std::size_t>(n));
  std::vector<Box> bv(static_cast<std::size_t>(n));
  const auto& L = g.value(logits);
  const auto& B = g.value(boxes);
  for (Eigen::Index i = 0; i < n; ++i) {
    lv[static_cast<std::size_t>(i)] = static_cast<double>(L(i, 0));
    bv[static_cast<std::size_t>(i)] =
        Box{static_cast<double>(B(i, 0)), static_cast<double>(B(i, 1)),
            static_cast<double>(B(i, 2)), static_cast<double>(B(i, 3))};
  }
  MatchResult match = hungarian_match(lv, bv, targets, wts);

  std::vector<double> cls_targets(static_cast<std::size_t>(n), 0.0);
  std::vector<int> matched_rows;
  std::vector<Box> matched_boxes;
  for (const auto& [q, e] : match.pairs) {
    cls_targets[static_cast<std::size_t>(q)] = 1.0;
    matched_rows.push_back(q);
    matched_boxes.push_back(targets.entries[static_cast<std::size_t>(e)].box);
  }
  const double norm = std::max(1, targets.positive_count());

  nn::Var cls =
      g.scale(focal_bce_sum(g, logits, cls_targets, wts.focal_alpha, wts.focal_gamma),
              static_cast<S>(wts.w_cls / norm));
  nn::Var loss = cls;
  if (parts) parts->cls += static_cast<double>(g.value(cls)(0, 0));
  if (!matched_rows.empty()) {
    nn::Var mb = g.gather_rows(boxes, matched_rows);
    nn::Var l1 = g.scale(l1_box_sum(g, mb, matched_boxes), static_cast<S>(wts.w_l1 / norm));
    nn::Var gi =
        g.scale(giou_loss_sum(g, mb, matched_boxes), static_cast<S>(wts.w_giou / norm));
    loss = g.add(g.add(loss, l1), gi);
    if (parts) {
      parts->l1 += static_cast<double>(g.value(l1)(0, 0));
      parts->giou += static_cast<double>(g.value(gi)(0, 0));
    }
  }
  return loss;
}

// One decoder layer's reconstruction loss for the K denoising queries of one
// scale: identity pairing, cls on every query, box terms on label-1 targets.
template <class S>
nn::Var reconstruction_layer_loss(nn::Graph<S>& g, nn::Var logits, nn::Var boxes,
                                  const std::vector<DenoiseTarget>& targets,
                                  const MatchWeights& wts, GroupLossParts* parts) {
  const Eigen::Index n = g.value(logits).rows();
  if (n != static_cast<Eigen::Index>(targets.size()))
    throw ContractViolation("reconstruction_layer_loss: target count mismatch");
  std::vector<double> cls_targets(targets.size());
  std::vector<int> pos_rows;
  std::vector<Box> pos_boxes;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    cls_targets[i] = targets[i].label;
    if (targets[i].label == 1) {
      pos_rows.push_back(static_cast<int>(i));
      pos_boxes.push_back(targets[i].clean_box);
    }
  }
  const double norm = std::max<std::size_t>(1, pos_rows.size());
  nn::Var cls =
      g.scale(focal_bce_sum(g, logits, cls_targets, wts.focal_alpha, wts.focal_gamma),
              static_cast<S>(wts.w_cls / norm));
  nn::Var loss = cls;
  if (parts) parts->cls += static_cast<double>(g.value(cls)(0, 0));
  if (!pos_rows.empty()) {
    nn::Var mb = g.gather_rows(boxes, pos_rows);
    nn::Var l1 = g.scale(l1_box_sum(g, mb, pos_boxes), static_cast<S>(wts.w_l1 / norm));
    nn::Var gi =
        g.scale(giou_loss_sum(g, mb, pos_boxes), static_cast<S>(wts.w_giou / norm));
    loss = g.add(g.add(loss, l1), gi);
    if (parts) {
      parts->l1 += static_cast<double>(g.value(l1)(0, 0));
      parts->giou += static_cast<double>(g.value(gi)(0, 0));
    }
  }
  return loss;
}

// Full Eq. 7 objective for one training example: detection groups first, then
// one denoising group per template, all decoded in a single forward pass under
// the block-diagonal mask. Auxiliary decoder layers contribute symmetrically
// to both terms.
template <class S>
nn::Var build_example_loss(nn::Graph<S>& g, Model<S>& model, const TrainingExample& ex,
                           const MatchWeights& wts, LossBreakdown* breakdown) {
  const int T = static_cast<int>(ex.templates.size());
  if (T == 0) throw ContractViolation("build_example_loss: no templates");
  const int Sc = model.config().scales;
  const int N = model.config().num_queries;

  auto feats = model.extract_features(g, ex.scene);
  auto mem = model.encode(g, feats);
  nn::Var qb = g.param(model.query_boxes_param());

  bool needs_embed = false;
  for (const auto& t : ex.templates)
    for (const auto& it : t.denoise_items)
      if (it.content_source == ContentSource::label_embed) needs_embed = true;
  nn::Var le = needs_embed ? g.param(model.label_embed_param()) : -1;

  std::vector<nn::Var> content_parts, box_parts;
  std::vector<int> group_sizes;
  std::vector<nn::Var> pooled_vars(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    auto tf = model.extract_features(g, ex.templates[static_cast<std::size_t>(t)].crop);
    pooled_vars[static_cast<std::size_t>(t)] = model.pooled_matrix(g, tf);
    auto det_items = build_detection_layout(N, Sc, t);
    auto [c, b] = assemble_queries(g, det_items, pooled_vars[static_cast<std::size_t>(t)], qb, le);
    content_parts.push_back(c);
    box_parts.push_back(b);
    group_sizes.push_back(N);
  }
  std::vector<int> denoise_offsets(static_cast<std::size_t>(T), -1);
  int offset = T * N;
  for (int t = 0; t < T; ++t) {
    const auto& items = ex.templates[static_cast<std::size_t>(t)].denoise_items;
    if (items.empty()) continue;
    auto [c, b] = assemble_queries(g, items, pooled_vars[static_cast<std::size_t>(t)], qb, le);
    content_parts.push_back(c);
    box_parts.push_back(b);
    group_sizes.push_back(static_cast<int>(items.size()));
    denoise_offsets[static_cast<std::size_t>(t)] = offset;
    offset += static_cast<int>(items.size());
  }

  auto mask = std::make_shared<nn::MaskMatrix>(build_group_attention_mask(group_sizes));
  auto out = model.decode(g, g.concat_rows(content_parts), g.concat_rows(box_parts),
                          mask, mem);
  const int layers = static_cast<int>(out.logits.size());

  if (breakdown) {
    breakdown->hungarian_per_template.assign(static_cast<std::size_t>(T), 0.0);
    breakdown->recon_per_template_scale.assign(
        static_cast<std::size_t>(T), std::vector<double>(static_cast<std::size_t>(Sc), 0.0));
  }

  GroupLossParts h_parts, r_parts;
  nn::Var h_sum = -1, r_sum = -1;
  for (int t = 0; t < T; ++t) {
    const auto& draw = ex.templates[static_cast<std::size_t>(t)];
    nn::Var h_t = -1;
    for (int l = 0; l < layers; ++l) {
      nn::Var logits = g.slice_rows(out.logits[static_cast<std::size_t>(l)], t * N, N);
      nn::Var boxes = g.slice_rows(out.boxes[static_cast<std::size_t>(l)], t * N, N);
      nn::Var term = hungarian_layer_loss(g, logits, boxes, draw.targets, wts, &h_parts);
      h_t = h_t < 0 ? term : g.add(h_t, term);
    }
    if (breakdown)
      breakdown->hungarian_per_template[static_cast<std::size_t>(t)] =
          static_cast<double>(g.value(h_t)(0, 0));
    h_sum = h_sum < 0 ? h_t : g.add(h_sum, h_t);

    if (draw.denoise_items.empty()) continue;
    const int K = static_cast<int>(draw.denoise_items.size()) / Sc;
    for (int s = 0; s < Sc; ++s) {
      std::vector<DenoiseTarget> scale_targets(
          draw.denoise_targets.begin() + static_cast<std::ptrdiff_t>(s) * K,
          draw.denoise_targets.begin() + static_cast<std::ptrdiff_t>(s + 1) * K);
      nn::Var r_ts = -1;
      for (int l = 0; l < layers; ++l) {
        int row0 = denoise_offsets[static_cast<std::size_t>(t)] + s * K;
        nn::Var logits = g.slice_rows(out.logits[static_cast<std::size_t>(l)], row0, K);
        nn::Var boxes = g.slice_rows(out.boxes[static_cast<std::size_t>(l)], row0, K);
        nn::Var term =
            reconstruction_layer_loss(g, logits, boxes, scale_targets, wts, &r_parts);
        r_ts = r_ts < 0 ? term : g.add(r_ts, term);
      }
      if (breakdown)
        breakdown->recon_per_template_scale[static_cast<std::size_t>(t)]
                                           [static_cast<std::size_t>(s)] =
            static_cast<double>(g.value(r_ts)(0, 0));
      r_sum = r_sum < 0 ? r_ts : g.add(r_sum, r_ts);
    }
  }

  nn::Var total = g.scale(h_sum, static_cast<S>(1.0 / T));
  if (r_sum >= 0)
    total = g.add(total, g.scale(r_sum, static_cast<S>(1.0 / (T * Sc))));

  if (breakdown) {
    breakdown->total = static_cast<double>(g.value(total)(0, 0));
    breakdown->cls = h_parts.cls / T;
    breakdown->l1 = h_parts.l1 / T;
    breakdown->giou = h_parts.giou / T;
    breakdown->recon = (r_parts.cls + r_parts.l1 + r_parts.giou) / (T * Sc);
  }
  return total;
}

}  // namespace sqtk

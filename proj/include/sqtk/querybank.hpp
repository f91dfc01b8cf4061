#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "sqtk/geometry.hpp"
#include "sqtk/nn/graph.hpp"
#include "sqtk/scenegen.hpp"

namespace sqtk {

enum class QueryRole { detect, track, denoise };

// Decoupled object query. `content` is a copy of the source feature vector;
// spec-level view used by tests and tooling. The model assembles the same
// layout directly from graph vars via QueryLayout.
struct ObjectQuery {
  std::vector<double> content;
  Box box;
  QueryRole role = QueryRole::detect;
  int group = 0;
  int origin = -1;  // track id (track) or annotation index (denoise)
  int scale = -1;   // source scale for track/denoise contents
};

enum class ContentSource { pooled, label_embed };
enum class BoxSource { learned, given };

// One query's assembly recipe: where its content row and box come from.
struct QueryLayoutItem {
  QueryRole role = QueryRole::detect;
  int group = 0;
  int origin = -1;
  int scale = -1;
  ContentSource content_source = ContentSource::pooled;
  int content_index = 0;  // row in the pooled matrix or label-embed table
  BoxSource box_source = BoxSource::learned;
  int learned_index = 0;  // row in the learned query-box parameter
  Box given_box;          // valid when box_source == given
};

struct DenoiseTarget {
  int label = 0;  // 1 iff the source annotation matches the template category
  Box clean_box;  // ground truth without noise
  int scale = -1;
  int annotation_index = -1;
};

struct DenoiseNoiseConfig {
  double center_scale = 0.4;
  double size_scale = 0.4;
};

// Detection queries (MSOQ): query n takes content f_hat[n mod S] and learned
// box n.
std::vector<QueryLayoutItem> build_detection_layout(int num_queries, int scales,
                                                    int group);

// Tracking queries: for every scale s and tracked box m, one query
// (f_hat[s], b_hat[m]); scale-major order.
std::vector<QueryLayoutItem> build_tracking_layout(
    int scales, const std::vector<std::pair<int, Box>>& tracked, int group);

// Optimized denoising: every annotation (positive and negative) is jittered
// once and paired with pooled contents at every scale; label = category match
// against the template. Scale-major order; draws 4 uniforms per annotation.
std::vector<QueryLayoutItem> build_denoising_layout(
    const std::vector<Annotation>& annotations, int template_category, int scales,
    int group, const DenoiseNoiseConfig& noise, Rng& rng,
    std::vector<DenoiseTarget>* targets);

// Original-denoising ablation arm: same boxes, but contents come from a
// learned per-category embedding whose id is flipped with `flip_prob`, and
// labels follow the box's true category regardless of the content. Internals
// are best-effort; only the ablation consumes this.
std::vector<QueryLayoutItem> build_original_denoising_layout(
    const std::vector<Annotation>& annotations, int template_category, int scales,
    int group, const DenoiseNoiseConfig& noise, double flip_prob, int num_categories,
    Rng& rng, std::vector<DenoiseTarget>* targets);

// Block-diagonal attention mask: entry (i, j) is 1 iff queries i and j share a
// group. Symmetric and reflexive by construction.
nn::MaskMatrix build_group_attention_mask(const std::vector<int>& group_sizes);

// ---- spec-level materialized builders ----

using PooledFeatures = std::vector<std::vector<double>>;  // S vectors of dim D

std::vector<ObjectQuery> materialize_queries(
    const std::vector<QueryLayoutItem>& items, const PooledFeatures& pooled,
    const std::vector<Box>& learned_boxes);

std::vector<ObjectQuery> build_detection_queries(const PooledFeatures& pooled,
                                                 const std::vector<Box>& learned_boxes,
                                                 int group);

std::vector<ObjectQuery> build_tracking_queries(
    const PooledFeatures& pooled, const std::vector<std::pair<int, Box>>& tracked);

std::vector<ObjectQuery> build_denoising_queries(
    const std::vector<Annotation>& annotations, int template_category,
    const PooledFeatures& pooled, const DenoiseNoiseConfig& noise, Rng& rng,
    std::vector<DenoiseTarget>* targets);

// ---- graph assembly ----

inline double inverse_sigmoid(double x) {
  double v = std::clamp(x, 1e-5, 1.0 - 1e-5);
  return std::log(v / (1.0 - v));
}

// Builds (contents, box_logits) graph vars for a list of layout items.
// `pooled` is the S x D pooled-template matrix var for this template's group;
// `learned_boxes` the N x 4 logit-space parameter var; `label_embed` the
// category embedding table var (original-denoising arm only).
template <class S>
std::pair<nn::Var, nn::Var> assemble_queries(nn::Graph<S>& g,
                                             const std::vector<QueryLayoutItem>& items,
                                             nn::Var pooled, nn::Var learned_boxes,
                                             nn::Var label_embed = -1) {
  std::vector<int> pooled_rows, embed_rows, learned_rows;
  std::vector<int> content_kind;  // 0 pooled, 1 embed
  bool any_given = false;
  for (const auto& it : items) {
    if (it.content_source == ContentSource::pooled) {
      content_kind.push_back(0);
      pooled_rows.push_back(it.content_index);
    } else {
      content_kind.push_back(1);
      embed_rows.push_back(it.content_index);
    }
    if (it.box_source == BoxSource::given) any_given = true;
  }

  nn::Var contents;
  if (embed_rows.empty()) {
    contents = g.gather_rows(pooled, pooled_rows);
  } else if (pooled_rows.empty()) {
    if (label_embed < 0)
      throw ContractViolation("assemble_queries: label_embed var required");
    contents = g.gather_rows(label_embed, embed_rows);
  } else {
    // interleaved sources: gather each and merge in item order
    nn::Var from_pooled = g.gather_rows(pooled, pooled_rows);
    nn::Var from_embed = g.gather_rows(label_embed, embed_rows);
    std::vector<nn::Var> parts;
    int pi = 0, ei = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (content_kind[i] == 0)
        parts.push_back(g.slice_rows(from_pooled, pi++, 1));
      else
        parts.push_back(g.slice_rows(from_embed, ei++, 1));
    }
    contents = g.concat_rows(parts);
  }

  nn::Var boxes;
  if (!any_given) {
    std::vector<int> rows;
    for (const auto& it : items) rows.push_back(it.learned_index);
    boxes = g.gather_rows(learned_boxes, rows);
  } else {
    bool any_learned = false;
    for (const auto& it : items)
      if (it.box_source == BoxSource::learned) any_learned = true;
    if (!any_learned) {
      nn::Mat<S> m(static_cast<Eigen::Index>(items.size()), 4);
      for (std::size_t i = 0; i < items.size(); ++i) {
        const Box& b = items[i].given_box;
        m(static_cast<Eigen::Index>(i), 0) = static_cast<S>(inverse_sigmoid(b.cx));
        m(static_cast<Eigen::Index>(i), 1) = static_cast<S>(inverse_sigmoid(b.cy));
        m(static_cast<Eigen::Index>(i), 2) = static_cast<S>(inverse_sigmoid(b.w));
        m(static_cast<Eigen::Index>(i), 3) = static_cast<S>(inverse_sigmoid(b.h));
      }
      boxes = g.leaf(std::move(m));
    } else {
      std::vector<nn::Var> parts;
      for (const auto& it : items) {
        if (it.box_source == BoxSource::learned) {
          parts.push_back(g.slice_rows(learned_boxes, it.learned_index, 1));
        } else {
          nn::Mat<S> m(1, 4);
          m(0, 0) = static_cast<S>(inverse_sigmoid(it.given_box.cx));
          m(0, 1) = static_cast<S>(inverse_sigmoid(it.given_box.cy));
          m(0, 2) = static_cast<S>(inverse_sigmoid(it.given_box.w));
          m(0, 3) = static_cast<S>(inverse_sigmoid(it.given_box.h));
          parts.push_back(g.leaf(std::move(m)));
        }
      }
      boxes = g.concat_rows(parts);
    }
  }
  return {contents, boxes};
}

}  // namespace sqtk

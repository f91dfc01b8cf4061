#include "sqtk/evalkit/probe.hpp"

#include <set>

#include "sqtk/querybank.hpp"

namespace sqtk {

ProbeResult gt_query_probe(Model<float>& model, const Dataset& dataset,
                           std::uint64_t seed, int template_long_side) {
  auto index = dataset.category_index();
  Rng rng(derive_seed(seed, 0x70726f6265ull));

  ProbeResult res;
  double conf_sum = 0.0, iou_sum = 0.0;
  bool any = false;
  for (int e = 0; e < static_cast<int>(dataset.entries.size()); ++e) {
    const auto& entry = dataset.entries[static_cast<std::size_t>(e)];
    if (entry.annotations.empty()) continue;
    any = true;

    std::set<int> present;
    for (const auto& a : entry.annotations) present.insert(a.category_id);
    std::vector<int> cats(present.begin(), present.end());
    int category = cats[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(cats.size())))];

    auto [src_entry, src_ann] = pick_template_source(index, category, e, rng);
    Image src = dataset.image(static_cast<std::size_t>(src_entry));
    Image tmpl = crop_template(
        src, dataset.entries[static_cast<std::size_t>(src_entry)]
                 .annotations[static_cast<std::size_t>(src_ann)].box,
        template_long_side);

    std::vector<Box> gt_boxes;
    for (const auto& a : entry.annotations)
      if (a.category_id == category) gt_boxes.push_back(a.box);
    if (gt_boxes.empty()) continue;
    const int M = static_cast<int>(gt_boxes.size());
    const int S = model.config().scales;

    nn::Graph<float> g;
    auto tf = model.extract_features(g, tmpl);
    nn::Var pooled = model.pooled_matrix(g, tf);
    auto feats = model.extract_features(g, dataset.image(static_cast<std::size_t>(e)));
    auto mem = model.encode(g, feats);

    std::vector<std::pair<int, Box>> tracked;
    for (int m = 0; m < M; ++m) tracked.push_back({m, gt_boxes[static_cast<std::size_t>(m)]});
    auto items = build_tracking_layout(S, tracked, 0);
    nn::Var qb = g.param(model.query_boxes_param());
    auto [contents, boxes] = assemble_queries(g, items, pooled, qb);
    auto mask = std::make_shared<nn::MaskMatrix>(
        build_group_attention_mask({static_cast<int>(items.size())}));
    auto out = model.decode(g, contents, boxes, mask, mem);

    const auto& logits = g.value(out.logits.back());
    const auto& pred = g.value(out.boxes.back());
    for (int m = 0; m < M; ++m) {
      double best_iou = -1.0;
      double best_conf = 0.0;
      for (int s = 0; s < S; ++s) {
        Eigen::Index r = static_cast<Eigen::Index>(s) * M + m;
        Box pb{static_cast<double>(pred(r, 0)), static_cast<double>(pred(r, 1)),
               static_cast<double>(pred(r, 2)), static_cast<double>(pred(r, 3))};
        double v = iou(pb, gt_boxes[static_cast<std::size_t>(m)]);
        if (v > best_iou) {
          best_iou = v;
          best_conf = 1.0 / (1.0 + std::exp(-static_cast<double>(logits(r, 0))));
        }
      }
      conf_sum += best_conf;
      iou_sum += best_iou;
      res.query_count += 1;
    }
  }
  if (!any || res.query_count == 0)
    throw DataError("gt_query_probe: dataset has no annotated entries");
  res.avg_confidence = conf_sum / static_cast<double>(res.query_count);
  res.avg_iou = iou_sum / static_cast<double>(res.query_count);
  return res;
}

}  // namespace sqtk

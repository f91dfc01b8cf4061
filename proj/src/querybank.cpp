#include "sqtk/querybank.hpp"

namespace sqtk {

std::vector<QueryLayoutItem> build_detection_layout(int num_queries, int scales,
                                                    int group) {
  if (scales < 1 || num_queries % scales != 0)
    throw ContractViolation("build_detection_layout: N must be divisible by S");
  std::vector<QueryLayoutItem> items(num_queries);
  for (int n = 0; n < num_queries; ++n) {
    QueryLayoutItem& it = items[n];
    it.role = QueryRole::detect;
    it.group = group;
    it.scale = n % scales;
    it.content_source = ContentSource::pooled;
    it.content_index = n % scales;
    it.box_source = BoxSource::learned;
    it.learned_index = n;
  }
  return items;
}

std::vector<QueryLayoutItem> build_tracking_layout(
    int scales, const std::vector<std::pair<int, Box>>& tracked, int group) {
  std::vector<QueryLayoutItem> items;
  items.reserve(static_cast<std::size_t>(scales) * tracked.size());
  for (int s = 0; s < scales; ++s)
    for (const auto& [track_id, box] : tracked) {
      QueryLayoutItem it;
      it.role = QueryRole::track;
      it.group = group;
      it.origin = track_id;
      it.scale = s;
      it.content_source = ContentSource::pooled;
      it.content_index = s;
      it.box_source = BoxSource::given;
      it.given_box = clamp_box(box);
      items.push_back(it);
    }
  return items;
}

namespace {

// Jitters each annotation once, then pairs the noisy box with a content per
// scale (scale-major). The content choice differs between the two arms.
std::vector<QueryLayoutItem> denoising_common(
    const std::vector<Annotation>& annotations, int template_category, int scales,
    int group, const DenoiseNoiseConfig& noise, Rng& rng,
    std::vector<DenoiseTarget>* targets, const std::vector<int>& content_rows,
    ContentSource source) {
  const int K = static_cast<int>(annotations.size());
  std::vector<Box> noisy(K);
  for (int k = 0; k < K; ++k)
    noisy[k] = jitter_box(annotations[k].box, noise.center_scale, noise.size_scale, rng);

  std::vector<QueryLayoutItem> items;
  items.reserve(static_cast<std::size_t>(scales) * K);
  if (targets) targets->clear();
  for (int s = 0; s < scales; ++s)
    for (int k = 0; k < K; ++k) {
      QueryLayoutItem it;
      it.role = QueryRole::denoise;
      it.group = group;
      it.origin = k;
      it.scale = s;
      it.content_source = source;
      it.content_index = source == ContentSource::pooled ? s : content_rows[k];
      it.box_source = BoxSource::given;
      it.given_box = noisy[k];
      items.push_back(it);
      if (targets) {
        DenoiseTarget t;
        t.label = annotations[k].category_id == template_category ? 1 : 0;
        t.clean_box = annotations[k].box;
        t.scale = s;
        t.annotation_index = k;
        targets->push_back(t);
      }
    }
  return items;
}

}  // namespace

std::vector<QueryLayoutItem> build_denoising_layout(
    const std::vector<Annotation>& annotations, int template_category, int scales,
    int group, const DenoiseNoiseConfig& noise, Rng& rng,
    std::vector<DenoiseTarget>* targets) {
  return denoising_common(annotations, template_category, scales, group, noise, rng,
                          targets, {}, ContentSource::pooled);
}

std::vector<QueryLayoutItem> build_original_denoising_layout(
    const std::vector<Annotation>& annotations, int template_category, int scales,
    int group, const DenoiseNoiseConfig& noise, double flip_prob, int num_categories,
    Rng& rng, std::vector<DenoiseTarget>* targets) {
  // Category ids noised the DN-DETR way: flip to a random other id.
  std::vector<int> rows(annotations.size());
  for (std::size_t k = 0; k < annotations.size(); ++k) {
    int cat = annotations[k].category_id;
    if (num_categories > 1 && rng.uniform() < flip_prob) {
      int other = rng.uniform_int(num_categories - 1);
      cat = other >= cat ? other + 1 : other;
    }
    rows[k] = cat;
  }
  return denoising_common(annotations, template_category, scales, group, noise, rng,
                          targets, rows, ContentSource::label_embed);
}

nn::MaskMatrix build_group_attention_mask(const std::vector<int>& group_sizes) {
  if (group_sizes.empty())
    throw ContractViolation("build_group_attention_mask: group_sizes must be non-empty");
  int total = 0;
  for (int s : group_sizes) {
    if (s < 0) throw ContractViolation("build_group_attention_mask: negative group size");
    total += s;
  }
  nn::MaskMatrix mask = nn::MaskMatrix::Zero(total, total);
  int offset = 0;
  for (int s : group_sizes) {
    mask.block(offset, offset, s, s).setConstant(1);
    offset += s;
  }
  return mask;
}

std::vector<ObjectQuery> materialize_queries(
    const std::vector<QueryLayoutItem>& items, const PooledFeatures& pooled,
    const std::vector<Box>& learned_boxes) {
  std::vector<ObjectQuery> out;
  out.reserve(items.size());
  for (const auto& it : items) {
    ObjectQuery q;
    q.role = it.role;
    q.group = it.group;
    q.origin = it.origin;
    q.scale = it.scale;
    if (it.content_source != ContentSource::pooled)
      throw ContractViolation("materialize_queries: label-embed contents are graph-only");
    if (it.content_index < 0 || it.content_index >= static_cast<int>(pooled.size()))
      throw ContractViolation("materialize_queries: content index out of range");
    q.content = pooled[it.content_index];
    if (it.box_source == BoxSource::learned) {
      if (it.learned_index < 0 || it.learned_index >= static_cast<int>(learned_boxes.size()))
        throw ContractViolation("materialize_queries: learned box index out of range");
      q.box = learned_boxes[it.learned_index];
    } else {
      q.box = it.given_box;
    }
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<ObjectQuery> build_detection_queries(const PooledFeatures& pooled,
                                                 const std::vector<Box>& learned_boxes,
                                                 int group) {
  auto items = build_detection_layout(static_cast<int>(learned_boxes.size()),
                                      static_cast<int>(pooled.size()), group);
  return materialize_queries(items, pooled, learned_boxes);
}

std::vector<ObjectQuery> build_tracking_queries(
    const PooledFeatures& pooled, const std::vector<std::pair<int, Box>>& tracked) {
  auto items = build_tracking_layout(static_cast<int>(pooled.size()), tracked, 0);
  return materialize_queries(items, pooled, {});
}

std::vector<ObjectQuery> build_denoising_queries(
    const std::vector<Annotation>& annotations, int template_category,
    const PooledFeatures& pooled, const DenoiseNoiseConfig& noise, Rng& rng,
    std::vector<DenoiseTarget>* targets) {
  auto items = build_denoising_layout(annotations, template_category,
                                      static_cast<int>(pooled.size()), 0, noise, rng,
                                      targets);
  return materialize_queries(items, pooled, {});
}

}  // namespace sqtk

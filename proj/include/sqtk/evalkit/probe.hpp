#pragma once

#include "sqtk/dataset.hpp"
#include "sqtk/model/model.hpp"

namespace sqtk {

struct ProbeResult {
  double avg_confidence = 0.0;
  double avg_iou = 0.0;
  long query_count = 0;
};

// Table-5-style probe: feeds ground-truth boxes of the template category as
// tracking-query boxes and reports the mean positive-class probability and
// mean IoU of each box's selected (argmax-IoU among the S scales) output.
ProbeResult gt_query_probe(Model<float>& model, const Dataset& dataset,
                           std::uint64_t seed, int template_long_side = 32);

}  // namespace sqtk

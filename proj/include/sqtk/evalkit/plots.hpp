#pragma once

#include <filesystem>
#include <vector>

#include "sqtk/image.hpp"

namespace sqtk {

// Minimal raster plots for run artifacts; axes plus one polyline.
void render_curve_png(const std::filesystem::path& out,
                      const std::vector<double>& xs, const std::vector<double>& ys,
                      int width = 640, int height = 400);

// Loss curve from a training log (JSON lines with "step" and "total").
void render_loss_plot(const std::filesystem::path& log_jsonl,
                      const std::filesystem::path& out_png);

// Precision/recall curve from a report.json carrying "precision101".
void render_pr_plot(const std::filesystem::path& report_json,
                    const std::filesystem::path& out_png);

}  // namespace sqtk

#include "sqtk/evalkit/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "sqtk/common.hpp"

namespace sqtk {

namespace {

void put_line(Image& img, double x0, double y0, double x1, double y1,
              const std::array<float, 3>& rgb) {
  int steps = static_cast<int>(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
  for (int i = 0; i <= steps; ++i) {
    double t = static_cast<double>(i) / steps;
    int x = static_cast<int>(std::lround(x0 + (x1 - x0) * t));
    int y = static_cast<int>(std::lround(y0 + (y1 - y0) * t));
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
    float* p = img.at(x, y);
    p[0] = rgb[0];
    p[1] = rgb[1];
    p[2] = rgb[2];
  }
}

}  // namespace

void render_curve_png(const std::filesystem::path& out, const std::vector<double>& xs,
                      const std::vector<double>& ys, int width, int height) {
  if (xs.size() != ys.size() || xs.empty())
    throw ContractViolation("render_curve_png: need matching non-empty series");
  Image img(width, height);
  fill(img, {0.98f, 0.98f, 0.98f});
  const int m = 40;  // margin
  const std::array<float, 3> axis{0.2f, 0.2f, 0.2f};
  put_line(img, m, height - m, width - 10, height - m, axis);
  put_line(img, m, height - m, m, 10, axis);

  double xmin = *std::min_element(xs.begin(), xs.end());
  double xmax = *std::max_element(xs.begin(), xs.end());
  double ymin = *std::min_element(ys.begin(), ys.end());
  double ymax = *std::max_element(ys.begin(), ys.end());
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;

  auto px = [&](double x) {
    return m + (x - xmin) / (xmax - xmin) * (width - m - 10);
  };
  auto py = [&](double y) {
    return (height - m) - (y - ymin) / (ymax - ymin) * (height - m - 10);
  };
  const std::array<float, 3> line{0.85f, 0.25f, 0.15f};
  for (std::size_t i = 1; i < xs.size(); ++i)
    put_line(img, px(xs[i - 1]), py(ys[i - 1]), px(xs[i]), py(ys[i]), line);
  write_png(out, img);
}

void render_loss_plot(const std::filesystem::path& log_jsonl,
                      const std::filesystem::path& out_png) {
  std::ifstream in(log_jsonl);
  if (!in) throw DataError("render_loss_plot: cannot open " + log_jsonl.string());
  std::vector<double> xs, ys;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    xs.push_back(j.at("step").get<double>());
    ys.push_back(j.at("total").get<double>());
  }
  if (xs.empty()) throw DataError("render_loss_plot: empty log " + log_jsonl.string());
  render_curve_png(out_png, xs, ys);
}

void render_pr_plot(const std::filesystem::path& report_json,
                    const std::filesystem::path& out_png) {
  std::ifstream in(report_json);
  if (!in) throw DataError("render_pr_plot: cannot open " + report_json.string());
  nlohmann::json j;
  in >> j;
  if (!j.contains("precision101"))
    throw DataError("render_pr_plot: report has no precision101 field");
  std::vector<double> xs, ys;
  auto& p = j.at("precision101");
  for (std::size_t r = 0; r < p.size(); ++r) {
    xs.push_back(static_cast<double>(r) / 100.0);
    ys.push_back(p[r].get<double>());
  }
  ys.push_back(0.0);
  xs.push_back(1.0);
  render_curve_png(out_png, xs, ys);
}

}  // namespace sqtk

#include "sqtk/evalkit/mot_csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "sqtk/common.hpp"

namespace sqtk {

long long round_half_away(double v) {
  return static_cast<long long>(v >= 0.0 ? std::floor(v + 0.5) : std::ceil(v - 0.5));
}

std::string mot_csv_string(const std::vector<MotRow>& rows, int image_width,
                           int image_height) {
  std::string out;
  char buf[160];
  for (const auto& r : rows) {
    auto c = to_corners(r.box);
    long long left = round_half_away(c[0] * image_width);
    long long top = round_half_away(c[1] * image_height);
    long long w = round_half_away(r.box.w * image_width);
    long long h = round_half_away(r.box.h * image_height);
    std::snprintf(buf, sizeof(buf), "%d,%d,%lld,%lld,%lld,%lld,%.6f,-1,-1,-1\n", r.frame,
                  r.id, left, top, w, h, r.conf);
    out += buf;
  }
  return out;
}

void write_mot_csv(const std::filesystem::path& path, const std::vector<MotRow>& rows,
                   int image_width, int image_height) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_mot_csv: cannot open " + path.string());
  out << mot_csv_string(rows, image_width, image_height);
}

std::vector<MotRow> read_mot_csv(const std::filesystem::path& path, int image_width,
                                 int image_height) {
  std::ifstream in(path);
  if (!in) throw DataError("read_mot_csv: cannot open " + path.string());
  std::vector<MotRow> rows;
  std::set<std::pair<int, int>> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<double> fields;
    std::string tok;
    while (std::getline(ss, tok, ',')) fields.push_back(std::stod(tok));
    if (fields.size() < 7)
      throw DataError("read_mot_csv: line " + std::to_string(lineno) + " has fewer than 7 fields");
    MotRow r;
    r.frame = static_cast<int>(fields[0]);
    r.id = static_cast<int>(fields[1]);
    double left = fields[2], top = fields[3], w = fields[4], h = fields[5];
    r.conf = fields[6];
    r.box.cx = (left + 0.5 * w) / image_width;
    r.box.cy = (top + 0.5 * h) / image_height;
    r.box.w = w / image_width;
    r.box.h = h / image_height;
    if (!seen.insert({r.frame, r.id}).second)
      throw DataError("read_mot_csv: duplicate (frame,id) = (" + std::to_string(r.frame) +
                      "," + std::to_string(r.id) + ")");
    rows.push_back(r);
  }
  return rows;
}

}  // namespace sqtk

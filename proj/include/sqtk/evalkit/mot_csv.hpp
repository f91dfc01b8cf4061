#pragma once

#include <filesystem>
#include <vector>

#include "sqtk/geometry.hpp"

namespace sqtk {

// One MOTChallenge row. Boxes are kept normalized in memory; serialization
// converts to integer pixel coordinates.
struct MotRow {
  int frame = 0;  // 1-based
  int id = 0;
  Box box;
  double conf = 1.0;
};

// round half away from zero
long long round_half_away(double v);

// frame,id,bb_left,bb_top,bb_width,bb_height,conf,-1,-1,-1
void write_mot_csv(const std::filesystem::path& path, const std::vector<MotRow>& rows,
                   int image_width, int image_height);

std::string mot_csv_string(const std::vector<MotRow>& rows, int image_width,
                           int image_height);

// Reads rows back into normalized boxes. Throws DataError on malformed rows or
// duplicate (frame, id) pairs.
std::vector<MotRow> read_mot_csv(const std::filesystem::path& path, int image_width,
                                 int image_height);

}  // namespace sqtk

#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "sqtk/nn/graph.hpp"

namespace sqtk::nn {

// Checkpoint layout: magic "SQTK1", little-endian u32 header length, JSON
// header mapping parameter name -> [rows, cols] in store order, then raw
// little-endian float32 values in header order.
inline constexpr char kCheckpointMagic[5] = {'S', 'Q', 'T', 'K', '1'};

template <class S>
void save_checkpoint(const ParameterStore<S>& params, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter<S>& p = params[i];
    header[p.name] = {p.value.rows(), p.value.cols()};
  }
  std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_checkpoint: cannot open " + path.string());
  out.write(kCheckpointMagic, 5);
  std::uint32_t len = static_cast<std::uint32_t>(hs.size());
  char lenbuf[4] = {static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff),
                    static_cast<char>((len >> 16) & 0xff),
                    static_cast<char>((len >> 24) & 0xff)};
  out.write(lenbuf, 4);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& v = params[i].value;
    std::vector<float> buf(static_cast<std::size_t>(v.size()));
    for (Eigen::Index j = 0; j < v.size(); ++j)
      buf[static_cast<std::size_t>(j)] = static_cast<float>(v.data()[j]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw DataError("save_checkpoint: write failed for " + path.string());
}

template <class S>
void load_checkpoint(ParameterStore<S>& params, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open " + path.string());
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, kCheckpointMagic, 5) != 0)
    throw DataError("load_checkpoint: bad magic in " + path.string());
  unsigned char lenbuf[4];
  in.read(reinterpret_cast<char*>(lenbuf), 4);
  std::uint32_t len = static_cast<std::uint32_t>(lenbuf[0]) |
                      (static_cast<std::uint32_t>(lenbuf[1]) << 8) |
                      (static_cast<std::uint32_t>(lenbuf[2]) << 16) |
                      (static_cast<std::uint32_t>(lenbuf[3]) << 24);
  std::string hs(len, '\0');
  in.read(hs.data(), len);
  if (!in) throw DataError("load_checkpoint: truncated header in " + path.string());
  nlohmann::ordered_json header = nlohmann::ordered_json::parse(hs);

  for (auto it = header.begin(); it != header.end(); ++it) {
    if (!params.contains(it.key()))
      throw DataError("load_checkpoint: unexpected parameter " + it.key());
    Parameter<S>& p = params.at(it.key());
    Eigen::Index rows = it.value()[0].get<Eigen::Index>();
    Eigen::Index cols = it.value()[1].get<Eigen::Index>();
    if (rows != p.value.rows() || cols != p.value.cols())
      throw DataError("load_checkpoint: shape mismatch for " + it.key());
    std::vector<float> buf(static_cast<std::size_t>(rows * cols));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw DataError("load_checkpoint: truncated payload in " + path.string());
    for (Eigen::Index j = 0; j < p.value.size(); ++j)
      p.value.data()[j] = static_cast<S>(buf[static_cast<std::size_t>(j)]);
  }
  if (header.size() != params.size())
    throw DataError("load_checkpoint: parameter count mismatch");
}

}  // namespace sqtk::nn

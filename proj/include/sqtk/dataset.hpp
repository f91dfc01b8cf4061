#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sqtk/image.hpp"
#include "sqtk/scenegen.hpp"

namespace sqtk {

nlohmann::json scene_config_to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const nlohmann::json& j);
nlohmann::json sequence_config_to_json(const SequenceConfig& cfg);
SequenceConfig sequence_config_from_json(const nlohmann::json& j);

nlohmann::json box_to_json(const Box& b);
Box box_from_json(const nlohmann::json& j);

struct DatasetEntry {
  std::string image;     // path relative to the dataset root
  std::string sequence;  // empty for stills
  int frame = 0;         // 1-based within a sequence, 0 for stills
  std::vector<Annotation> annotations;
};

// A generated dataset on disk: PNGs + annotations.jsonl + meta.json. Images
// are decoded lazily and cached in their 8-bit form.
class Dataset {
 public:
  std::filesystem::path root;
  nlohmann::json meta;
  std::vector<DatasetEntry> entries;

  int image_size() const { return meta.at("image_size").get<int>(); }
  int num_categories() const { return meta.at("num_categories").get<int>(); }
  std::string kind() const { return meta.at("kind").get<std::string>(); }

  const RawImage& raw(std::size_t idx) const;
  Image image(std::size_t idx) const { return dequantize(raw(idx)); }

  // category id -> (entry index, annotation index)
  std::map<int, std::vector<std::pair<int, int>>> category_index() const;

  std::vector<std::string> sequence_ids() const;
  std::vector<int> entries_of_sequence(const std::string& seq) const;

 private:
  mutable std::vector<std::unique_ptr<RawImage>> cache_;
};

Dataset load_dataset(const std::filesystem::path& root);

// Streams scenes/sequences to disk in the documented layout.
class DatasetWriter {
 public:
  DatasetWriter(const std::filesystem::path& root, bool force);
  void add_scene(const Scene& scene);
  void add_sequence(const std::vector<Scene>& frames);
  void finish(const nlohmann::json& meta);

  int scene_count() const { return scene_count_; }
  int sequence_count() const { return sequence_count_; }

 private:
  std::filesystem::path root_;
  std::string jsonl_;
  int scene_count_ = 0;
  int sequence_count_ = 0;
};

// Picks a template crop for `category`: a random annotation of that category
// from an entry other than `exclude_entry` when possible. Returns the source
// (entry, annotation) pair.
std::pair<int, int> pick_template_source(
    const std::map<int, std::vector<std::pair<int, int>>>& index, int category,
    int exclude_entry, Rng& rng);

}  // namespace sqtk

#include "sqtk/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "sqtk/common.hpp"

namespace sqtk {

using nlohmann::json;

json box_to_json(const Box& b) { return json::array({b.cx, b.cy, b.w, b.h}); }

Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("bbox must be a 4-array");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json scene_config_to_json(const SceneConfig& cfg) {
  return json{{"image_size", cfg.image_size},
              {"num_categories", cfg.num_categories},
              {"objects_per_scene", cfg.objects_per_scene},
              {"categories_per_scene", cfg.categories_per_scene},
              {"category_pool", cfg.category_pool},
              {"min_separation", cfg.min_separation},
              {"noise_std", cfg.noise_std},
              {"min_object_size", cfg.min_object_size},
              {"max_object_size", cfg.max_object_size},
              {"seed", cfg.seed}};
}

SceneConfig scene_config_from_json(const json& j) {
  SceneConfig cfg;
  cfg.image_size = j.value("image_size", cfg.image_size);
  cfg.num_categories = j.value("num_categories", cfg.num_categories);
  if (j.contains("objects_per_scene")) cfg.objects_per_scene = j.at("objects_per_scene");
  if (j.contains("categories_per_scene"))
    cfg.categories_per_scene = j.at("categories_per_scene");
  cfg.category_pool = j.value("category_pool", cfg.category_pool);
  cfg.min_separation = j.value("min_separation", cfg.min_separation);
  cfg.noise_std = j.value("noise_std", cfg.noise_std);
  cfg.min_object_size = j.value("min_object_size", cfg.min_object_size);
  cfg.max_object_size = j.value("max_object_size", cfg.max_object_size);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

json sequence_config_to_json(const SequenceConfig& cfg) {
  json j = scene_config_to_json(cfg.scene);
  j["num_frames"] = cfg.num_frames;
  j["max_step"] = cfg.max_step;
  j["birth_prob"] = cfg.birth_prob;
  j["death_prob"] = cfg.death_prob;
  j["motion_model"] = cfg.motion == MotionModel::curved ? "curved" : "linear";
  return j;
}

SequenceConfig sequence_config_from_json(const json& j) {
  SequenceConfig cfg;
  cfg.scene = scene_config_from_json(j);
  cfg.num_frames = j.value("num_frames", cfg.num_frames);
  cfg.max_step = j.value("max_step", cfg.max_step);
  cfg.birth_prob = j.value("birth_prob", cfg.birth_prob);
  cfg.death_prob = j.value("death_prob", cfg.death_prob);
  std::string m = j.value("motion_model", "linear");
  if (m != "linear" && m != "curved") throw DataError("unknown motion_model: " + m);
  cfg.motion = m == "curved" ? MotionModel::curved : MotionModel::linear;
  return cfg;
}

namespace {

json annotations_to_json(const std::vector<Annotation>& anns) {
  json objs = json::array();
  for (const auto& a : anns) {
    json o{{"bbox", box_to_json(a.box)}, {"category_id", a.category_id}};
    o["track_id"] = a.track_id ? json(*a.track_id) : json(nullptr);
    objs.push_back(std::move(o));
  }
  return objs;
}

std::vector<Annotation> annotations_from_json(const json& objs) {
  std::vector<Annotation> anns;
  for (const auto& o : objs) {
    Annotation a;
    a.box = box_from_json(o.at("bbox"));
    a.category_id = o.at("category_id").get<int>();
    if (o.contains("track_id") && !o.at("track_id").is_null())
      a.track_id = o.at("track_id").get<int>();
    anns.push_back(std::move(a));
  }
  return anns;
}

std::string zero_pad(int v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*d", width, v);
  return buf;
}

}  // namespace

const RawImage& Dataset::raw(std::size_t idx) const {
  if (cache_.size() != entries.size()) cache_.resize(entries.size());
  if (!cache_[idx]) cache_[idx] = std::make_unique<RawImage>(read_png(root / entries[idx].image));
  return *cache_[idx];
}

std::map<int, std::vector<std::pair<int, int>>> Dataset::category_index() const {
  std::map<int, std::vector<std::pair<int, int>>> index;
  for (int e = 0; e < static_cast<int>(entries.size()); ++e)
    for (int a = 0; a < static_cast<int>(entries[e].annotations.size()); ++a)
      index[entries[e].annotations[a].category_id].push_back({e, a});
  return index;
}

std::vector<std::string> Dataset::sequence_ids() const {
  std::vector<std::string> ids;
  for (const auto& e : entries)
    if (!e.sequence.empty() && (ids.empty() || ids.back() != e.sequence))
      if (std::find(ids.begin(), ids.end(), e.sequence) == ids.end())
        ids.push_back(e.sequence);
  return ids;
}

std::vector<int> Dataset::entries_of_sequence(const std::string& seq) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(entries.size()); ++i)
    if (entries[i].sequence == seq) out.push_back(i);
  return out;
}

Dataset load_dataset(const std::filesystem::path& root) {
  Dataset ds;
  ds.root = root;
  std::ifstream meta_in(root / "meta.json");
  if (!meta_in) throw DataError("load_dataset: missing meta.json in " + root.string());
  meta_in >> ds.meta;

  std::ifstream in(root / "annotations.jsonl");
  if (!in) throw DataError("load_dataset: missing annotations.jsonl in " + root.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    DatasetEntry e;
    e.image = j.at("image").get<std::string>();
    e.sequence = j.value("sequence", std::string{});
    e.frame = j.value("frame", 0);
    e.annotations = annotations_from_json(j.at("objects"));
    ds.entries.push_back(std::move(e));
  }
  return ds;
}

DatasetWriter::DatasetWriter(const std::filesystem::path& root, bool force) : root_(root) {
  namespace fs = std::filesystem;
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!force)
      throw DataError("output directory " + root.string() +
                      " is not empty (use --force to overwrite)");
    fs::remove_all(root);
  }
  fs::create_directories(root);
}

void DatasetWriter::add_scene(const Scene& scene) {
  namespace fs = std::filesystem;
  fs::create_directories(root_ / "scenes");
  std::string name = zero_pad(scene_count_, 6) + ".png";
  std::string rel = "scenes/" + name;
  write_png(root_ / rel, scene.image);
  json line{{"image", rel}, {"objects", annotations_to_json(scene.annotations)}};
  jsonl_ += line.dump() + "\n";
  ++scene_count_;
}

void DatasetWriter::add_sequence(const std::vector<Scene>& frames) {
  namespace fs = std::filesystem;
  std::string seq = "seq" + zero_pad(sequence_count_, 4);
  fs::create_directories(root_ / "frames" / seq);
  for (int f = 0; f < static_cast<int>(frames.size()); ++f) {
    std::string rel = "frames/" + seq + "/" + zero_pad(f + 1, 6) + ".png";
    write_png(root_ / rel, frames[f].image);
    json line{{"image", rel},
              {"sequence", seq},
              {"frame", f + 1},
              {"objects", annotations_to_json(frames[f].annotations)}};
    jsonl_ += line.dump() + "\n";
  }
  ++sequence_count_;
}

void DatasetWriter::finish(const json& meta) {
  std::ofstream ann(root_ / "annotations.jsonl", std::ios::binary);
  ann << jsonl_;
  std::ofstream m(root_ / "meta.json", std::ios::binary);
  m << meta.dump(2) << "\n";
}

std::pair<int, int> pick_template_source(
    const std::map<int, std::vector<std::pair<int, int>>>& index, int category,
    int exclude_entry, Rng& rng) {
  auto it = index.find(category);
  if (it == index.end() || it->second.empty())
    throw DataError("no annotation of category " + std::to_string(category) +
                    " available for template sampling");
  std::vector<std::pair<int, int>> other;
  for (const auto& p : it->second)
    if (p.first != exclude_entry) other.push_back(p);
  // Template comes from a different image when one exists; otherwise fall
  // back to the current one.
  const auto& pool = other.empty() ? it->second : other;
  return pool[rng.uniform_int(static_cast<int>(pool.size()))];
}

}  // namespace sqtk

#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ocf/datagen/scene.hpp"

namespace ocf::datagen {

// One exported scene: 8-bit RGB image, 8-bit label map (pixel value = label),
// and the generating SceneSpec.
struct DatasetItem {
  std::string id;
  SceneSpec spec;
  Tensor image;
  GroundTruth gt;
};

struct ManifestEntry {
  std::string id;
  uint64_t seed = 0;
  int objects = 0;
  std::string image_path, label_path, spec_path;
};

struct Manifest {
  std::string family;
  int image_h = 0, image_w = 0;
  std::vector<ManifestEntry> items;
};

inline std::string item_id(int index) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << index;
  return os.str();
}

inline nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json j;
  j["version"] = 1;
  j["family"] = m.family;
  j["image_size"] = nlohmann::json{m.image_h, m.image_w};
  nlohmann::json items = nlohmann::json::array();
  for (const auto& e : m.items) {
    nlohmann::json je;
    je["id"] = e.id;
    je["seed"] = e.seed;
    je["objects"] = e.objects;
    je["image"] = e.image_path;
    je["label"] = e.label_path;
    je["spec"] = e.spec_path;
    items.push_back(je);
  }
  j["items"] = items;
  return j;
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  m.family = j.at("family").get<std::string>();
  m.image_h = j.at("image_size").at(0).get<int>();
  m.image_w = j.at("image_size").at(1).get<int>();
  for (const auto& je : j.at("items")) {
    ManifestEntry e;
    e.id = je.at("id").get<std::string>();
    e.seed = je.at("seed").get<uint64_t>();
    e.objects = je.at("objects").get<int>();
    e.image_path = je.at("image").get<std::string>();
    e.label_path = je.at("label").get<std::string>();
    e.spec_path = je.at("spec").get<std::string>();
    m.items.push_back(e);
  }
  return m;
}

// Writes <out>/manifest.json, images/<id>.png, labels/<id>.png and
// specs/<id>.json. Re-exporting identical items reproduces identical bytes.
inline Manifest export_dataset(const std::vector<DatasetItem>& items,
                               const std::filesystem::path& out_dir,
                               const std::string& family = "custom") {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  fs::create_directories(out_dir / "labels", ec);
  fs::create_directories(out_dir / "specs", ec);
  if (!fs::is_directory(out_dir / "images"))
    throw std::runtime_error("export_dataset: cannot create " + (out_dir / "images").string());

  Manifest m;
  m.family = family;
  if (!items.empty()) {
    m.image_h = items[0].gt.height;
    m.image_w = items[0].gt.width;
  }
  for (const auto& item : items) {
    ManifestEntry e;
    e.id = item.id;
    e.seed = item.spec.seed;
    e.objects = static_cast<int>(item.spec.objects.size());
    e.image_path = "images/" + item.id + ".png";
    e.label_path = "labels/" + item.id + ".png";
    e.spec_path = "specs/" + item.id + ".json";

    write_png((out_dir / e.image_path).string(), tensor_to_image8(item.image));

    Image8 label(item.gt.height, item.gt.width, 1);
    for (size_t p = 0; p < item.gt.label_map.size(); ++p) {
      int v = item.gt.label_map[p];
      if (v < 0 || v > 255) throw std::runtime_error("export_dataset: label out of 8-bit range");
      label.pixels[p] = static_cast<uint8_t>(v);
    }
    write_png((out_dir / e.label_path).string(), label);

    std::ofstream sf(out_dir / e.spec_path);
    if (!sf) throw std::runtime_error("export_dataset: cannot write " + e.spec_path);
    sf << scene_to_json(item.spec).dump(2) << "\n";

    m.items.push_back(std::move(e));
  }
  std::ofstream mf(out_dir / "manifest.json");
  if (!mf) throw std::runtime_error("export_dataset: cannot write manifest.json");
  mf << manifest_to_json(m).dump(2) << "\n";
  if (!mf) throw std::runtime_error("export_dataset: write failure on manifest.json");
  return m;
}

// In-memory dataset handed to the trainer / evaluators. Images are the
// quantized 8-bit values mapped back to [0,1].
struct LoadedItem {
  std::string id;
  SceneSpec spec;
  Tensor image;
  GroundTruth gt;  // label-derived; visible_fraction left empty
};

struct LoadedDataset {
  std::string family;
  int image_h = 0, image_w = 0;
  std::vector<LoadedItem> items;

  size_t size() const { return items.size(); }
};

inline LoadedDataset load_dataset(const std::filesystem::path& root) {
  std::ifstream mf(root / "manifest.json");
  if (!mf) throw std::runtime_error("load_dataset: missing manifest.json under " + root.string());
  nlohmann::json j;
  try {
    mf >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_dataset: bad manifest.json: " + std::string(e.what()));
  }
  Manifest m = manifest_from_json(j);
  LoadedDataset ds;
  ds.family = m.family;
  ds.image_h = m.image_h;
  ds.image_w = m.image_w;
  for (const auto& e : m.items) {
    LoadedItem item;
    item.id = e.id;
    Image8 img = read_png((root / e.image_path).string());
    if (img.channels != 3)
      throw std::runtime_error("load_dataset: expected RGB image at " + e.image_path);
    item.image = image8_to_tensor(img);
    Image8 lbl = read_png((root / e.label_path).string());
    if (lbl.channels != 1)
      throw std::runtime_error("load_dataset: expected single-channel label at " + e.label_path);
    item.gt.height = lbl.height;
    item.gt.width = lbl.width;
    item.gt.label_map.assign(lbl.pixels.begin(), lbl.pixels.end());
    int n = e.objects;
    item.gt.per_object_masks.assign(n, std::vector<uint8_t>(item.gt.label_map.size(), 0));
    for (size_t p = 0; p < item.gt.label_map.size(); ++p) {
      int v = item.gt.label_map[p];
      if (v > 0 && v <= n) item.gt.per_object_masks[v - 1][p] = 1;
    }
    std::ifstream sf(root / e.spec_path);
    if (!sf) throw std::runtime_error("load_dataset: missing spec " + e.spec_path);
    nlohmann::json js;
    sf >> js;
    item.spec = scene_from_json(js);
    ds.items.push_back(std::move(item));
  }
  return ds;
}

}  // namespace ocf::datagen

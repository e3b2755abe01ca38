#pragma once

// VQA record model, DriveLM-style ingestion, iteration mixing and JSONL
// serialization. Pipeline format: one record object per line, UTF-8, keys
// {record_id, scene_id, images, question, answer, category, origin,
// iteration, s}. Schema notes live in docs/schemas.md (v1).

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqapipe/common.hpp"
#include "vqapipe/error.hpp"
#include "vqapipe/scene_graph.hpp"

namespace vqapipe {

enum class RecordOrigin { Labeled, Pseudo };

inline std::string_view origin_name(RecordOrigin o) {
  return o == RecordOrigin::Labeled ? "labeled" : "pseudo";
}

struct VqaRecord {
  std::string record_id;
  std::string scene_id;
  std::map<std::string, std::string> images;  // camera name -> path, all six views
  std::string question;
  std::string answer;
  std::string category;  // perception | prediction | planning | behavior | node_selection
  RecordOrigin origin = RecordOrigin::Labeled;
  int iteration = 0;  // 0 for labeled, >= 1 for pseudo
  double s = 1.0;

  void validate() const {
    if (record_id.empty()) throw Error("record without record_id");
    if (scene_id.empty()) throw Error("record " + record_id + " without scene_id");
    if (s < 0.0 || s > 1.0) {
      throw Error("record " + record_id + " score out of range: " + std::to_string(s));
    }
    if (origin == RecordOrigin::Labeled && s != 1.0) {
      throw Error("labeled record " + record_id + " must carry s = 1");
    }
    if (origin == RecordOrigin::Pseudo && iteration < 1) {
      throw Error("pseudo record " + record_id + " requires iteration >= 1");
    }
  }

  bool operator==(const VqaRecord&) const = default;
};

inline nlohmann::json to_json(const VqaRecord& r) {
  return {{"record_id", r.record_id},
          {"scene_id", r.scene_id},
          {"images", r.images},
          {"question", r.question},
          {"answer", r.answer},
          {"category", r.category},
          {"origin", std::string(origin_name(r.origin))},
          {"iteration", r.iteration},
          {"s", quantize_score(r.s)}};
}

inline VqaRecord record_from_json(const nlohmann::json& j, const std::string& path = "$") {
  auto require = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw SchemaError(path + "." + key, "missing key");
    return j.at(key);
  };
  VqaRecord r;
  try {
    r.record_id = require("record_id").get<std::string>();
    r.scene_id = require("scene_id").get<std::string>();
    r.images = require("images").get<std::map<std::string, std::string>>();
    r.question = require("question").get<std::string>();
    r.answer = require("answer").get<std::string>();
    r.category = require("category").get<std::string>();
    std::string origin = require("origin").get<std::string>();
    if (origin == "labeled") {
      r.origin = RecordOrigin::Labeled;
    } else if (origin == "pseudo") {
      r.origin = RecordOrigin::Pseudo;
    } else {
      throw SchemaError(path + ".origin", "unknown origin '" + origin + "'");
    }
    r.iteration = require("iteration").get<int>();
    r.s = require("s").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path, std::string("bad value type: ") + e.what());
  }
  try {
    r.validate();
  } catch (const Error& e) {
    throw SchemaError(path, e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// JSONL

inline std::string to_jsonl(const std::vector<VqaRecord>& records) {
  std::string out;
  for (const VqaRecord& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<VqaRecord> records_from_jsonl(std::istream& in) {
  std::vector<VqaRecord> records;
  std::set<std::string> ids;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("$[" + std::to_string(line_no) + "]",
                        std::string("invalid JSON line: ") + e.what());
    }
    VqaRecord r = record_from_json(j, "$[" + std::to_string(line_no) + "]");
    if (!ids.insert(r.record_id).second) {
      throw DuplicateRecordId("duplicate record_id '" + r.record_id + "' at line " +
                              std::to_string(line_no));
    }
    records.push_back(std::move(r));
  }
  return records;
}

inline void save_jsonl(const std::string& path, const std::vector<VqaRecord>& records) {
  for (const VqaRecord& r : records) r.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << to_jsonl(records);
  if (!out) throw Error("failed writing " + path);
}

inline std::vector<VqaRecord> load_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return records_from_jsonl(in);
}

// Stable content digest over the serialized lines.
inline std::string dataset_digest(const std::vector<VqaRecord>& records) {
  return to_hex16(fnv1a64(to_jsonl(records)));
}

struct DatasetManifest {
  std::string name;
  int iteration = 0;
  std::vector<std::string> source_digests;
  size_t record_count = 0;
  std::string refinement_mode = "none";
  std::string digest;

  nlohmann::json to_json() const {
    return {{"schema", "vqapipe.dataset.v1"}, {"name", name},
            {"iteration", iteration},        {"sources", source_digests},
            {"record_count", record_count},  {"refinement_mode", refinement_mode},
            {"digest", digest}};
  }
};

// ---------------------------------------------------------------------------
// DriveLM-style ingestion. Pinned shape (see docs/schemas.md and the fixture
// under tests/data): top-level object keyed by scene token, each scene has
// key_frames keyed by frame token, each frame has a QA object with the four
// group arrays of {"Q","A"} pairs and an image_paths table with all six
// camera views.

inline const std::set<std::string>& labeled_qa_groups() {
  static const std::set<std::string> groups = {"perception", "prediction", "planning",
                                               "behavior"};
  return groups;
}

inline std::vector<VqaRecord> load_labeled(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("$", std::string("invalid JSON document: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("$", "expected an object keyed by scene token");

  std::vector<VqaRecord> records;
  for (const auto& [scene_token, scene] : doc.items()) {
    std::string scene_path = "$." + scene_token;
    if (!scene.is_object() || !scene.contains("key_frames")) {
      throw SchemaError(scene_path + ".key_frames", "missing key");
    }
    for (const auto& [frame_token, frame] : scene.at("key_frames").items()) {
      std::string frame_path = scene_path + ".key_frames." + frame_token;
      if (!frame.contains("QA")) throw SchemaError(frame_path + ".QA", "missing key");
      if (!frame.contains("image_paths")) {
        throw SchemaError(frame_path + ".image_paths", "missing key");
      }

      std::map<std::string, std::string> images;
      for (const auto& [camera, image] : frame.at("image_paths").items()) {
        if (!parse_camera(camera)) {
          throw SchemaError(frame_path + ".image_paths." + camera, "unknown camera view");
        }
        if (!image.is_string()) {
          throw SchemaError(frame_path + ".image_paths." + camera, "path must be a string");
        }
        images[camera] = image.get<std::string>();
      }
      if (images.size() != kAllCameras.size()) {
        throw SchemaError(frame_path + ".image_paths",
                          "expected all six camera views, got " + std::to_string(images.size()));
      }

      for (const auto& [group, qas] : frame.at("QA").items()) {
        std::string group_path = frame_path + ".QA." + group;
        if (!labeled_qa_groups().count(group)) {
          throw SchemaError(group_path, "unknown QA group");
        }
        if (!qas.is_array()) throw SchemaError(group_path, "expected an array of QA pairs");
        size_t index = 0;
        for (const auto& qa : qas) {
          std::string qa_path = group_path + "[" + std::to_string(index) + "]";
          if (!qa.contains("Q") || !qa.at("Q").is_string()) {
            throw SchemaError(qa_path + ".Q", "missing question string");
          }
          if (!qa.contains("A") || !qa.at("A").is_string()) {
            throw SchemaError(qa_path + ".A", "missing answer string");
          }
          VqaRecord r;
          r.record_id = scene_token + "_" + frame_token + "_" + group + "_" +
                        std::to_string(index);
          r.scene_id = scene_token;
          r.images = images;
          r.question = qa.at("Q").get<std::string>();
          r.answer = qa.at("A").get<std::string>();
          r.category = group;
          r.origin = RecordOrigin::Labeled;
          r.iteration = 0;
          r.s = 1.0;
          records.push_back(std::move(r));
          ++index;
        }
      }
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Mixing and scene splits

inline std::vector<VqaRecord> mix(const std::vector<std::vector<VqaRecord>>& datasets) {
  std::vector<VqaRecord> out;
  std::set<std::string> ids;
  for (const auto& dataset : datasets) {
    for (const VqaRecord& r : dataset) {
      if (!ids.insert(r.record_id).second) {
        throw DuplicateRecordId("record_id '" + r.record_id + "' appears in two datasets");
      }
      out.push_back(r);
    }
  }
  return out;
}

// Scene-id partitions with largest-remainder sizing; no scene's records ever
// straddle a split.
inline std::vector<std::vector<std::string>> split_scene_ids(std::vector<std::string> scene_ids,
                                                             const std::vector<double>& fractions,
                                                             std::uint64_t seed) {
  if (fractions.empty()) throw BadFractions("no fractions given");
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw BadFractions("negative fraction");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw BadFractions("fractions sum to " + std::to_string(total) + ", expected 1");
  }

  std::sort(scene_ids.begin(), scene_ids.end());
  scene_ids.erase(std::unique(scene_ids.begin(), scene_ids.end()), scene_ids.end());
  SplitMix64 rng(seed);
  rng.shuffle(scene_ids);

  const size_t n = scene_ids.size();
  std::vector<size_t> sizes(fractions.size(), 0);
  std::vector<std::pair<double, size_t>> remainders;
  size_t assigned = 0;
  for (size_t i = 0; i < fractions.size(); ++i) {
    double quota = fractions[i] * static_cast<double>(n);
    sizes[i] = static_cast<size_t>(quota);
    assigned += sizes[i];
    remainders.emplace_back(quota - std::floor(quota), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t i = 0; assigned < n; ++i) {
    ++sizes[remainders[i % remainders.size()].second];
    ++assigned;
  }

  std::vector<std::vector<std::string>> partitions;
  size_t cursor = 0;
  for (size_t size : sizes) {
    partitions.emplace_back(scene_ids.begin() + static_cast<std::ptrdiff_t>(cursor),
                            scene_ids.begin() + static_cast<std::ptrdiff_t>(cursor + size));
    cursor += size;
  }
  return partitions;
}

inline std::vector<std::vector<std::string>> split_scenes(const std::vector<VqaRecord>& records,
                                                          const std::vector<double>& fractions,
                                                          std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const VqaRecord& r : records) ids.push_back(r.scene_id);
  return split_scene_ids(std::move(ids), fractions, seed);
}

}  // namespace vqapipe

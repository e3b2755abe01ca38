#pragma once

// Synthetic driving-scene testbed: a deterministic scene generator over
// closed answer vocabularies, a ground-truth oracle whose error rate drops
// when hints are present, and a weighted count-table learner. Together they
// make the pipeline's data-quality claims checkable at desk scale.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqapipe/common.hpp"
#include "vqapipe/datasets.hpp"
#include "vqapipe/error.hpp"
#include "vqapipe/model_client.hpp"
#include "vqapipe/prompts.hpp"
#include "vqapipe/scene_graph.hpp"
#include "vqapipe/scr.hpp"

namespace vqapipe {

// ---------------------------------------------------------------------------
// Vocabularies. Everything an oracle or learner can say is drawn from these.

inline const std::vector<std::string>& sim_classes() {
  static const std::vector<std::string> v = {"car", "truck", "pedestrian", "traffic light",
                                             "traffic sign"};
  return v;
}

inline const std::vector<std::string>& sim_colors() {
  static const std::vector<std::string> v = {"black", "blue", "green", "red", "silver", "white"};
  return v;
}

inline const std::vector<std::string>& vehicle_status_vocab() {
  static const std::vector<std::string> v = {"braking", "going ahead", "stopped", "turning left",
                                             "turning right"};
  return v;
}

inline const std::vector<std::string>& pedestrian_status_vocab() {
  static const std::vector<std::string> v = {"stopped", "walking"};
  return v;
}

inline const std::vector<std::string>& observed_status_vocab() {
  static const std::vector<std::string> v = {"moving", "stationary"};
  return v;
}

inline const std::vector<std::string>& future_status_vocab() {
  static const std::vector<std::string> v = {"keep going", "remain stopped", "slow down"};
  return v;
}

inline const std::vector<std::string>& meaning_vocab(std::string_view class_label) {
  static const std::vector<std::string> light = {"green light", "red light"};
  static const std::vector<std::string> sign = {"speed limit", "stop sign"};
  static const std::vector<std::string> none = {};
  if (class_label == "traffic light") return light;
  if (class_label == "traffic sign") return sign;
  return none;
}

inline const std::vector<std::string>& direction_vocab() {
  static const std::vector<std::string> v = {"back",       "back left",  "back right", "front",
                                             "front left", "front right", "left",      "right"};
  return v;
}

inline const std::vector<std::string>& action_vocab() {
  static const std::vector<std::string> v = {"keep going", "slow down", "stop and wait", "yield"};
  return v;
}

inline const std::vector<std::string>& collision_vocab() {
  static const std::vector<std::string> v = {"accelerating suddenly", "reversing", "turning left",
                                             "turning right"};
  return v;
}

inline std::vector<std::string> visual_description_vocab() {
  std::vector<std::string> v;
  for (const std::string& color : sim_colors()) {
    for (const std::string& cls : sim_classes()) {
      v.push_back("a " + color + " " + cls);
    }
  }
  std::sort(v.begin(), v.end());
  return v;
}

// ---------------------------------------------------------------------------
// Scenes

struct SimConfig {
  size_t min_objects = 4;
  size_t max_objects = 8;
  double image_width = 1600.0;
  double image_height = 900.0;
  double red_light_stop_prob = 0.9;  // correlation that makes hints informative
};

struct SimObject {
  std::string id;
  std::string class_label;
  Camera camera = Camera::CAM_FRONT;
  double x = 0.0;
  double y = 0.0;
  std::string color;
  std::string status;   // moveable classes
  std::string meaning;  // sign classes

  ObjectRef ref() const { return ObjectRef{id, camera, x, y}; }
  bool moveable() const { return !is_static_sign_class(class_label); }
};

struct GroundTruthScene {
  std::string scene_id;
  std::vector<SimObject> objects;

  const SimObject* find(std::string_view id) const {
    for (const SimObject& o : objects) {
      if (o.id == id) return &o;
    }
    return nullptr;
  }

  bool red_light_in_view(Camera camera) const {
    for (const SimObject& o : objects) {
      if (o.camera == camera && o.class_label == "traffic light" && o.meaning == "red light") {
        return true;
      }
    }
    return false;
  }

  // Nearest same-view neighbour's class, "none" when the object is alone.
  std::string nearest_neighbor_class(const SimObject& obj) const {
    const SimObject* best = nullptr;
    double best_dist = 0.0;
    for (const SimObject& o : objects) {
      if (o.id == obj.id || o.camera != obj.camera) continue;
      double d = std::hypot(o.x - obj.x, o.y - obj.y);
      if (!best || d < best_dist) {
        best = &o;
        best_dist = d;
      }
    }
    return best ? best->class_label : "none";
  }
};

using SceneTable = std::map<std::string, GroundTruthScene>;

inline GroundTruthScene generate_scene(const SimConfig& config, const std::string& scene_id,
                                       std::uint64_t seed) {
  if (config.min_objects < 1 || config.max_objects < config.min_objects) {
    throw Error("generate_scene: bad object-count bounds");
  }
  SplitMix64 rng(seed);
  GroundTruthScene scene;
  scene.scene_id = scene_id;

  const size_t count =
      config.min_objects + rng.below(config.max_objects - config.min_objects + 1);
  // Class mix weighted toward vehicles and signals (percent points).
  static const std::vector<std::pair<std::string, int>> class_weights = {
      {"car", 30}, {"truck", 15}, {"pedestrian", 15}, {"traffic light", 20},
      {"traffic sign", 20}};

  for (size_t i = 0; i < count; ++i) {
    SimObject obj;
    obj.id = "c" + std::to_string(i + 1);
    int roll = static_cast<int>(rng.below(100));
    for (const auto& [cls, weight] : class_weights) {
      if (roll < weight) {
        obj.class_label = cls;
        break;
      }
      roll -= weight;
    }
    obj.camera = kAllCameras[rng.below(kAllCameras.size())];
    obj.x = std::round(rng.uniform(0.0, config.image_width) * 10.0) / 10.0;
    obj.y = std::round(rng.uniform(0.0, config.image_height) * 10.0) / 10.0;
    obj.color = sim_colors()[rng.below(sim_colors().size())];
    if (!obj.moveable()) {
      const auto& meanings = meaning_vocab(obj.class_label);
      obj.meaning = meanings[rng.below(meanings.size())];
    }
    scene.objects.push_back(std::move(obj));
  }

  // Statuses second, once the signal layout is known: objects facing a red
  // light in their view stop/brake with the configured probability, everyone
  // else keeps moving.
  for (SimObject& obj : scene.objects) {
    if (!obj.moveable()) continue;
    bool red = scene.red_light_in_view(obj.camera);
    bool halted = red && rng.unit() < config.red_light_stop_prob;
    if (obj.class_label == "pedestrian") {
      obj.status = halted ? "stopped" : "walking";
    } else if (halted) {
      obj.status = rng.below(2) == 0 ? "stopped" : "braking";
    } else {
      static const std::array<std::string_view, 3> moving = {"going ahead", "turning left",
                                                             "turning right"};
      obj.status = std::string(moving[rng.below(moving.size())]);
    }
  }
  return scene;
}

inline std::map<std::string, std::string> scene_images(const std::string& scene_id) {
  std::map<std::string, std::string> images;
  for (Camera c : kAllCameras) {
    images[std::string(camera_name(c))] =
        "sim://" + scene_id + "/" + std::string(camera_name(c));
  }
  return images;
}

// One detector box per object; footprint sizes are fixed per class.
inline std::vector<DetectedBox> scene_boxes(const GroundTruthScene& scene) {
  auto size_of = [](std::string_view cls) -> std::pair<double, double> {
    if (cls == "car") return {140.0, 90.0};
    if (cls == "truck") return {180.0, 120.0};
    if (cls == "pedestrian") return {50.0, 110.0};
    if (cls == "traffic light") return {40.0, 90.0};
    return {60.0, 60.0};
  };
  std::vector<DetectedBox> boxes;
  for (const SimObject& obj : scene.objects) {
    auto [w, h] = size_of(obj.class_label);
    boxes.push_back(DetectedBox{obj.class_label, obj.camera, obj.x, obj.y, w, h});
  }
  return boxes;
}

// Importance rule: the first min(5, n) objects, mirroring the 3-5 selection
// the selection prompt asks for.
inline std::vector<const SimObject*> select_important(const GroundTruthScene& scene,
                                                      size_t limit = 5) {
  std::vector<const SimObject*> out;
  for (const SimObject& obj : scene.objects) {
    if (out.size() >= limit) break;
    out.push_back(&obj);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Derived ground-truth relations (deterministic functions of coordinates)

namespace detail {

inline double global_x(const SimObject& obj, double image_width) {
  size_t index = 0;
  for (size_t i = 0; i < kAllCameras.size(); ++i) {
    if (kAllCameras[i] == obj.camera) index = i;
  }
  return static_cast<double>(index) * image_width + obj.x;
}

}  // namespace detail

// 8-way compass position of `a` relative to `b` on the stitched image plane
// (smaller y reads as "front").
inline std::string direction_of(const SimObject& a, const SimObject& b,
                                double image_width = 1600.0) {
  double dx = detail::global_x(a, image_width) - detail::global_x(b, image_width);
  double dy = a.y - b.y;
  double angle = std::atan2(-dy, dx) * 180.0 / 3.14159265358979323846;
  if (angle < 0.0) angle += 360.0;
  static const std::array<std::string_view, 8> labels = {
      "right", "front right", "front", "front left", "left", "back left", "back", "back right"};
  size_t octant = static_cast<size_t>(std::fmod(angle + 22.5, 360.0) / 45.0);
  return std::string(labels[octant % 8]);
}

inline std::string observed_status_of(const SimObject& obj) {
  return obj.status == "stopped" ? "stationary" : "moving";
}

inline std::string future_status_of(const GroundTruthScene& scene, const SimObject& obj) {
  if (obj.status == "stopped") return "remain stopped";
  if (obj.status == "braking" || scene.red_light_in_view(obj.camera)) return "slow down";
  return "keep going";
}

inline std::string visual_description_of(const SimObject& obj) {
  return "a " + obj.color + " " + obj.class_label;
}

// "Based on a, what's the action of b?": the condition object dictates.
inline std::string action_given(const SimObject& a, const SimObject&) {
  if (a.class_label == "traffic light") {
    return a.meaning == "red light" ? "stop and wait" : "keep going";
  }
  if (a.class_label == "traffic sign") {
    return a.meaning == "stop sign" ? "stop and wait" : "slow down";
  }
  if (a.class_label == "pedestrian") return "yield";
  if (a.status == "stopped" || a.status == "braking") return "slow down";
  return "keep going";
}

// Which of a's maneuvers would collide with b, from b's bearing.
inline std::string collision_condition(const SimObject& a, const SimObject& b,
                                       double image_width = 1600.0) {
  std::string bearing = direction_of(b, a, image_width);
  if (bearing == "back") return "reversing";
  if (bearing.find("front") != std::string::npos) return "accelerating suddenly";
  if (bearing.find("left") != std::string::npos) return "turning left";
  return "turning right";
}

// ---------------------------------------------------------------------------
// Question-level ground truth

inline std::string ground_truth_answer(const GroundTruthScene& scene, const ParsedQuestion& q,
                                       double image_width = 1600.0) {
  if (q.type == ParsedQuestion::Type::NodeSelection) {
    std::string out;
    for (const SimObject* obj : select_important(scene)) {
      if (!out.empty()) out += "; ";
      out += serialize_ref(obj->ref());
    }
    if (out.empty()) throw UnknownQuestion("scene " + scene.scene_id + " has no objects");
    return out;
  }

  const SimObject* subject = q.subject ? scene.find(q.subject->id) : nullptr;
  if (!subject) throw UnknownQuestion("question cites an object not in scene " + scene.scene_id);

  if (q.type == ParsedQuestion::Type::Attribution) {
    switch (q.attribution) {
      case AttributionKind::VisualDescription: return visual_description_of(*subject);
      case AttributionKind::ObservedStatus:
        if (!subject->moveable()) throw UnknownQuestion("status of a static sign");
        return observed_status_of(*subject);
      case AttributionKind::MovingStatus:
        if (!subject->moveable()) throw UnknownQuestion("status of a static sign");
        return subject->status;
      case AttributionKind::FutureStatus:
        if (!subject->moveable()) throw UnknownQuestion("status of a static sign");
        return future_status_of(scene, *subject);
      case AttributionKind::Meaning:
        if (subject->moveable()) throw UnknownQuestion("meaning of a moveable object");
        return subject->meaning;
    }
  }

  const SimObject* object = q.object ? scene.find(q.object->id) : nullptr;
  if (!object) throw UnknownQuestion("edge question cites an object not in scene");
  switch (q.edge) {
    case EdgeKind::Direction: return direction_of(*subject, *object, image_width);
    case EdgeKind::ActionGiven: return action_given(*subject, *object);
    case EdgeKind::CollisionCondition: return collision_condition(*subject, *object, image_width);
  }
  throw UnknownQuestion("unhandled question");
}

// Closed vocabulary the answer to `q` is drawn from.
inline std::vector<std::string> answer_vocab(const ParsedQuestion& q,
                                             std::string_view subject_class) {
  if (q.type == ParsedQuestion::Type::Edge) {
    switch (q.edge) {
      case EdgeKind::Direction: return direction_vocab();
      case EdgeKind::ActionGiven: return action_vocab();
      case EdgeKind::CollisionCondition: return collision_vocab();
    }
  }
  if (q.type == ParsedQuestion::Type::Attribution) {
    switch (q.attribution) {
      case AttributionKind::VisualDescription: return visual_description_vocab();
      case AttributionKind::ObservedStatus: return observed_status_vocab();
      case AttributionKind::MovingStatus:
        return subject_class == "pedestrian" ? pedestrian_status_vocab()
                                             : vehicle_status_vocab();
      case AttributionKind::FutureStatus: return future_status_vocab();
      case AttributionKind::Meaning: return meaning_vocab(subject_class);
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Noisy oracle

struct OracleConfig {
  double p0 = 0.3;      // error probability without hints
  double p_hint = 0.05; // error probability with both hint families present; p_hint <= p0
  std::uint64_t seed = 0;
};

// The attribution and edge hint families are complementary: each present
// family closes half the gap between p0 and p_hint, so prompts carrying both
// kinds of evidence earn the most accurate answers.
inline double oracle_error_rate(const OracleConfig& config, const RenderedHintCounts& hints) {
  double richness = 0.0;
  if (hints.attribution > 0) richness += 0.5;
  if (hints.edge > 0) richness += 0.5;
  return config.p0 - (config.p0 - config.p_hint) * richness;
}

// Ground truth with probability 1 - p, else a uniformly random wrong answer
// from the same vocabulary. Pure function of (scene, question, hints, config).
inline std::string oracle_answer(const GroundTruthScene& scene, const std::string& question,
                                 const RenderedHintCounts& hints, const OracleConfig& config,
                                 double image_width = 1600.0) {
  auto parsed = parse_question(question);
  if (!parsed) throw UnknownQuestion("oracle cannot parse: " + question);
  std::string truth = ground_truth_answer(scene, *parsed, image_width);
  if (parsed->type == ParsedQuestion::Type::NodeSelection) return truth;

  const SimObject* subject = scene.find(parsed->subject->id);
  std::vector<std::string> vocab = answer_vocab(*parsed, subject->class_label);
  double p = oracle_error_rate(config, hints);
  SplitMix64 rng(config.seed ^ fnv1a64(scene.scene_id) ^ fnv1a64(question));
  if (vocab.size() > 1 && rng.unit() < p) {
    std::vector<std::string> wrong;
    for (const std::string& v : vocab) {
      if (v != truth) wrong.push_back(v);
    }
    return wrong[rng.below(wrong.size())];
  }
  return truth;
}

inline std::string oracle_answer(const GroundTruthScene& scene, const std::string& question,
                                 bool hints_present, const OracleConfig& config,
                                 double image_width = 1600.0) {
  RenderedHintCounts hints;
  if (hints_present) {
    hints.attribution = 1;
    hints.edge = 1;
  }
  return oracle_answer(scene, question, hints, config, image_width);
}

// ModelClient facade over the oracle. The scene is recovered from the
// request's sim:// image URIs; hints are recognized by the re-ask preamble.
class OracleClient : public ModelClient {
 public:
  OracleClient(const SceneTable& scenes, OracleConfig config, double image_width = 1600.0,
               size_t embedding_dim = kDefaultEmbeddingDim)
      : scenes_(scenes), config_(config), image_width_(image_width),
        embedding_dim_(embedding_dim) {}

  std::string generate(const ModelRequest& request) override {
    request.validate();
    const GroundTruthScene& scene = scene_for(request);
    RenderedHintCounts hints;
    if (has_hint_preamble(request.prompt)) hints = count_rendered_hints(request.prompt);
    return oracle_answer(scene, request.prompt, hints, config_, image_width_);
  }

  Embedding embed(const std::string& text) override { return hash_embed(text, embedding_dim_); }

  double judge(const std::string&, const std::string& ground_truth,
               const std::string& prediction) override {
    return surrogate_judge(*this, ground_truth, prediction);
  }

  std::string id() const override { return "oracle"; }
  std::string embedder_id() const override { return hash_embedder_id(embedding_dim_); }

 private:
  const GroundTruthScene& scene_for(const ModelRequest& request) const {
    const std::string& uri = request.image_refs.front().uri;
    if (!starts_with(uri, "sim://")) {
      throw UnknownQuestion("oracle requires sim:// image refs, got " + uri);
    }
    std::string rest = uri.substr(6);
    std::string scene_id = rest.substr(0, rest.find('/'));
    auto it = scenes_.find(scene_id);
    if (it == scenes_.end()) throw UnknownQuestion("unknown scene " + scene_id);
    return it->second;
  }

  const SceneTable& scenes_;
  OracleConfig config_;
  double image_width_;
  size_t embedding_dim_;
};

// ---------------------------------------------------------------------------
// Ground-truth graph and labeled data

// Full-knowledge graph over the selected objects: attributions and candidate
// edges all carry ground-truth text.
inline SceneGraph true_graph(const GroundTruthScene& scene,
                             double edge_threshold = kDefaultEdgeThreshold,
                             double image_width = 1600.0,
                             bool sign_group_pairing = true) {
  std::vector<std::pair<ObjectRef, std::string>> node_answers;
  std::vector<AttributionAnswer> attribution_answers;
  std::vector<EdgeAnswer> edge_answers;
  std::vector<Node> probe_nodes;

  for (const SimObject* obj : select_important(scene)) {
    node_answers.emplace_back(obj->ref(), obj->class_label);
    probe_nodes.push_back(Node{obj->ref(), obj->class_label, {}});
    for (AttributionKind kind : kAllAttributionKinds) {
      if (!attribution_applicable(kind, obj->class_label)) continue;
      ParsedQuestion q;
      q.type = ParsedQuestion::Type::Attribution;
      q.attribution = kind;
      q.subject = obj->ref();
      attribution_answers.push_back(
          AttributionAnswer{obj->id, kind, ground_truth_answer(scene, q, image_width)});
    }
  }
  for (const auto& [from, to] :
       candidate_edge_pairs(probe_nodes, edge_threshold, sign_group_pairing)) {
    const SimObject* a = scene.find(from);
    const SimObject* b = scene.find(to);
    for (EdgeKind kind : kAllEdgeKinds) {
      ParsedQuestion q;
      q.type = ParsedQuestion::Type::Edge;
      q.edge = kind;
      q.subject = a->ref();
      q.object = b->ref();
      edge_answers.push_back(
          EdgeAnswer{from, to, kind, ground_truth_answer(scene, q, image_width)});
    }
  }
  return build_graph(scene.scene_id, node_answers, attribution_answers, edge_answers);
}

// Fully supervised records for a scene (the iteration-0 data and the held-out
// evaluation sets are both built from these).
inline std::vector<VqaRecord> labeled_records(const GroundTruthScene& scene,
                                              double edge_threshold = kDefaultEdgeThreshold,
                                              double image_width = 1600.0,
                                              bool sign_group_pairing = true) {
  std::vector<VqaRecord> records;
  auto images = scene_images(scene.scene_id);
  auto add = [&](const std::string& id_suffix, const std::string& question,
                 const std::string& answer, QuestionCategory category) {
    VqaRecord r;
    r.record_id = scene.scene_id + "_" + id_suffix;
    r.scene_id = scene.scene_id;
    r.images = images;
    r.question = question;
    r.answer = answer;
    r.category = std::string(question_category_name(category));
    r.origin = RecordOrigin::Labeled;
    r.iteration = 0;
    r.s = 1.0;
    records.push_back(std::move(r));
  };

  ParsedQuestion select;
  select.type = ParsedQuestion::Type::NodeSelection;
  add("sel", node_selection_prompt(scene_boxes(scene)),
      ground_truth_answer(scene, select, image_width), QuestionCategory::NodeSelection);

  std::vector<Node> probe_nodes;
  for (const SimObject* obj : select_important(scene)) {
    probe_nodes.push_back(Node{obj->ref(), obj->class_label, {}});
    for (AttributionKind kind : kAllAttributionKinds) {
      if (!attribution_applicable(kind, obj->class_label)) continue;
      ParsedQuestion q;
      q.type = ParsedQuestion::Type::Attribution;
      q.attribution = kind;
      q.subject = obj->ref();
      add(obj->id + "_" + std::string(attribution_kind_name(kind)),
          attribution_prompt(kind, obj->ref(), obj->class_label),
          ground_truth_answer(scene, q, image_width), category_of(kind));
    }
  }
  for (const auto& [from, to] :
       candidate_edge_pairs(probe_nodes, edge_threshold, sign_group_pairing)) {
    const SimObject* a = scene.find(from);
    const SimObject* b = scene.find(to);
    for (EdgeKind kind : kAllEdgeKinds) {
      ParsedQuestion q;
      q.type = ParsedQuestion::Type::Edge;
      q.edge = kind;
      q.subject = a->ref();
      q.object = b->ref();
      add(from + "_" + to + "_" + std::string(edge_kind_name(kind)),
          edge_prompt(kind, a->ref(), b->ref()), ground_truth_answer(scene, q, image_width),
          category_of(kind));
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Toy weighted learner (count-table classifier)

struct LearnerContext {
  std::string kind;           // attribution or edge kind tag
  std::string object_class;
  bool red_light_in_view = false;
  std::string neighbor_class; // "none" when alone in view

  std::string key() const {
    return kind + "|" + object_class + "|" + (red_light_in_view ? "1" : "0") + "|" +
           neighbor_class;
  }
};

inline std::optional<LearnerContext> make_context(const GroundTruthScene& scene,
                                                  const ParsedQuestion& q) {
  if (q.type == ParsedQuestion::Type::NodeSelection || !q.subject) return std::nullopt;
  const SimObject* subject = scene.find(q.subject->id);
  if (!subject) return std::nullopt;

  LearnerContext ctx;
  ctx.object_class = subject->class_label;
  ctx.red_light_in_view = scene.red_light_in_view(subject->camera);
  if (q.type == ParsedQuestion::Type::Attribution) {
    ctx.kind = std::string(attribution_kind_name(q.attribution));
    ctx.neighbor_class = scene.nearest_neighbor_class(*subject);
  } else {
    ctx.kind = std::string(edge_kind_name(q.edge));
    const SimObject* peer = q.object ? scene.find(q.object->id) : nullptr;
    if (!peer) return std::nullopt;
    ctx.neighbor_class = peer->class_label;
  }
  return ctx;
}

// Answer weights accumulate as integer micro-units of s, so training is
// exactly order-independent and an s = 0 record is a strict no-op.
class ToyLearner {
 public:
  using Cell = std::map<std::string, std::int64_t>;
  using Table = std::map<std::string, Cell>;

  struct TrainStats {
    size_t trained = 0;
    size_t ignored_out_of_vocab = 0;
    size_t ignored_unmapped = 0;
  };

  TrainStats train(const std::vector<VqaRecord>& records, const SceneTable& scenes) {
    TrainStats stats;
    for (const VqaRecord& record : records) {
      auto scene_it = scenes.find(record.scene_id);
      auto parsed = parse_question(record.question);
      std::optional<LearnerContext> ctx;
      if (scene_it != scenes.end() && parsed) ctx = make_context(scene_it->second, *parsed);
      if (!ctx) {
        ++stats.ignored_unmapped;
        continue;
      }
      std::vector<std::string> vocab = answer_vocab(*parsed, ctx->object_class);
      if (std::find(vocab.begin(), vocab.end(), record.answer) == vocab.end()) {
        ++stats.ignored_out_of_vocab;
        continue;
      }
      std::int64_t weight = std::llround(record.s * 1e6);
      if (weight <= 0) continue;  // zero-weight records must not alter the table
      table_[ctx->key()][record.answer] += weight;
      ++stats.trained;
    }
    return stats;
  }

  // Argmax over positive weights, lexicographic tie-break. A cell with no
  // accumulated weight predicts the empty string: the learner has seen no
  // supervision for that context and stays silent.
  std::string predict_context(const LearnerContext& ctx) const {
    const std::string* best = nullptr;
    std::int64_t best_weight = 0;
    auto it = table_.find(ctx.key());
    if (it != table_.end()) {
      for (const auto& [answer, weight] : it->second) {
        if (weight > best_weight) {  // map order makes ties lexicographic
          best = &answer;
          best_weight = weight;
        }
      }
    }
    return best ? *best : std::string();
  }

  std::string predict(const std::string& question, const GroundTruthScene& scene) const {
    auto parsed = parse_question(question);
    if (!parsed) return "";
    auto ctx = make_context(scene, *parsed);
    if (!ctx) return "";
    return predict_context(*ctx);
  }

  // Partial tables merge by cell-wise sum.
  void merge(const ToyLearner& other) {
    for (const auto& [key, cell] : other.table_) {
      for (const auto& [answer, weight] : cell) {
        table_[key][answer] += weight;
      }
    }
  }

  const Table& table() const { return table_; }

  // Every context the learner distinguishes; finite, so invariants are
  // exhaustively checkable.
  static std::vector<LearnerContext> enumerate_contexts() {
    std::vector<LearnerContext> contexts;
    std::vector<std::string> kinds;
    for (AttributionKind k : kAllAttributionKinds) {
      kinds.emplace_back(attribution_kind_name(k));
    }
    for (EdgeKind k : kAllEdgeKinds) kinds.emplace_back(edge_kind_name(k));

    std::vector<std::string> neighbors = sim_classes();
    neighbors.push_back("none");
    for (const std::string& kind : kinds) {
      for (const std::string& cls : sim_classes()) {
        if (auto attr = parse_attribution_kind(kind); attr && !attribution_applicable(*attr, cls)) {
          continue;
        }
        for (bool red : {false, true}) {
          for (const std::string& neighbor : neighbors) {
            contexts.push_back(LearnerContext{kind, cls, red, neighbor});
          }
        }
      }
    }
    return contexts;
  }

  // Vocabulary matching a context, for exhaustive prediction sweeps.
  static std::vector<std::string> context_vocab(const LearnerContext& ctx) {
    ParsedQuestion q;
    if (auto attr = parse_attribution_kind(ctx.kind)) {
      q.type = ParsedQuestion::Type::Attribution;
      q.attribution = *attr;
    } else if (auto edge = parse_edge_kind(ctx.kind)) {
      q.type = ParsedQuestion::Type::Edge;
      q.edge = *edge;
    } else {
      return {};
    }
    return answer_vocab(q, ctx.object_class);
  }

 private:
  Table table_;
};

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const GroundTruthScene& scene) {
  nlohmann::json objects = nlohmann::json::array();
  for (const SimObject& o : scene.objects) {
    nlohmann::json obj = {{"id", o.id},
                          {"class", o.class_label},
                          {"camera", std::string(camera_name(o.camera))},
                          {"x", o.x},
                          {"y", o.y},
                          {"color", o.color}};
    if (o.moveable()) {
      obj["status"] = o.status;
    } else {
      obj["meaning"] = o.meaning;
    }
    objects.push_back(std::move(obj));
  }
  return {{"scene_id", scene.scene_id}, {"objects", objects}};
}

inline GroundTruthScene ground_truth_scene_from_json(const nlohmann::json& j) {
  GroundTruthScene scene;
  scene.scene_id = j.at("scene_id").get<std::string>();
  for (const auto& o : j.at("objects")) {
    SimObject obj;
    obj.id = o.at("id").get<std::string>();
    obj.class_label = o.at("class").get<std::string>();
    auto camera = parse_camera(o.at("camera").get<std::string>());
    if (!camera) throw SchemaError("$.objects.camera", "unknown camera");
    obj.camera = *camera;
    obj.x = o.at("x").get<double>();
    obj.y = o.at("y").get<double>();
    obj.color = o.at("color").get<std::string>();
    if (o.contains("status")) obj.status = o.at("status").get<std::string>();
    if (o.contains("meaning")) obj.meaning = o.at("meaning").get<std::string>();
    scene.objects.push_back(std::move(obj));
  }
  return scene;
}

}  // namespace vqapipe

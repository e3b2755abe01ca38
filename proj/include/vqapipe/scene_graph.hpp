#pragma once

// Per-scene graph of important objects: nodes carry template-elicited
// attributions, edges carry pairwise relation features. Graphs are immutable
// once built and safe to share across threads.

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqapipe/common.hpp"
#include "vqapipe/error.hpp"

namespace vqapipe {

enum class Camera {
  CAM_FRONT,
  CAM_FRONT_LEFT,
  CAM_FRONT_RIGHT,
  CAM_BACK,
  CAM_BACK_LEFT,
  CAM_BACK_RIGHT,
};

inline constexpr std::array<Camera, 6> kAllCameras = {
    Camera::CAM_FRONT,      Camera::CAM_FRONT_LEFT, Camera::CAM_FRONT_RIGHT,
    Camera::CAM_BACK,       Camera::CAM_BACK_LEFT,  Camera::CAM_BACK_RIGHT,
};

inline std::string_view camera_name(Camera c) {
  switch (c) {
    case Camera::CAM_FRONT: return "CAM_FRONT";
    case Camera::CAM_FRONT_LEFT: return "CAM_FRONT_LEFT";
    case Camera::CAM_FRONT_RIGHT: return "CAM_FRONT_RIGHT";
    case Camera::CAM_BACK: return "CAM_BACK";
    case Camera::CAM_BACK_LEFT: return "CAM_BACK_LEFT";
    case Camera::CAM_BACK_RIGHT: return "CAM_BACK_RIGHT";
  }
  return "CAM_FRONT";
}

inline std::optional<Camera> parse_camera(std::string_view name) {
  for (Camera c : kAllCameras) {
    if (camera_name(c) == name) return c;
  }
  return std::nullopt;
}

inline bool is_front_camera(Camera c) {
  return c == Camera::CAM_FRONT || c == Camera::CAM_FRONT_LEFT ||
         c == Camera::CAM_FRONT_RIGHT;
}

// Classes whose nodes are static signage; everything else is moveable.
inline bool is_static_sign_class(std::string_view class_label) {
  return class_label == "traffic light" || class_label == "traffic sign";
}

struct ObjectRef {
  std::string id;
  Camera camera = Camera::CAM_FRONT;
  double x = 0.0;
  double y = 0.0;

  bool operator==(const ObjectRef&) const = default;
};

// "<id,CAM,x,y>" with one-decimal coordinates, e.g. "<c1,CAM_FRONT,1043.2,82.1>".
inline std::string serialize_ref(const ObjectRef& ref) {
  std::string out = "<";
  out += ref.id;
  out += ',';
  out += camera_name(ref.camera);
  out += ',';
  out += format_coord(ref.x);
  out += ',';
  out += format_coord(ref.y);
  out += '>';
  return out;
}

namespace detail {

inline std::optional<double> parse_nonnegative(const std::string& field) {
  if (field.empty()) return std::nullopt;
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &pos);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (pos != field.size() || !(v >= 0.0) || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

// Grammar: '<' id ',' camera ',' x ',' y '>' with optional whitespace around
// fields. Strict field count, strict camera enum, coordinates >= 0.
inline std::optional<ObjectRef> try_parse_object_ref(std::string_view text) {
  size_t open = text.find('<');
  size_t close = text.find('>', open == std::string_view::npos ? 0 : open);
  if (open == std::string_view::npos || close == std::string_view::npos) return std::nullopt;
  std::string_view body = text.substr(open + 1, close - open - 1);

  std::vector<std::string> fields;
  size_t start = 0;
  for (;;) {
    size_t comma = body.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(body.substr(start)));
      break;
    }
    fields.push_back(trim(body.substr(start, comma - start)));
    start = comma + 1;
  }
  if (fields.size() != 4) return std::nullopt;
  if (fields[0].empty()) return std::nullopt;
  auto camera = parse_camera(fields[1]);
  if (!camera) return std::nullopt;
  auto x = detail::parse_nonnegative(fields[2]);
  auto y = detail::parse_nonnegative(fields[3]);
  if (!x || !y) return std::nullopt;
  return ObjectRef{fields[0], *camera, *x, *y};
}

inline ObjectRef parse_object_ref(std::string_view text) {
  auto ref = try_parse_object_ref(text);
  if (!ref) throw MalformedRef("malformed object reference: " + std::string(text));
  return *ref;
}

// All parseable <id,CAM,x,y> tuples in a free-text answer, in order.
inline std::vector<ObjectRef> extract_object_refs(std::string_view text) {
  std::vector<ObjectRef> refs;
  size_t pos = 0;
  while (true) {
    size_t open = text.find('<', pos);
    if (open == std::string_view::npos) break;
    size_t close = text.find('>', open);
    if (close == std::string_view::npos) break;
    if (auto ref = try_parse_object_ref(text.substr(open, close - open + 1))) {
      refs.push_back(*ref);
    }
    pos = close + 1;
  }
  return refs;
}

enum class AttributionKind {
  VisualDescription,
  ObservedStatus,
  MovingStatus,
  FutureStatus,
  Meaning,
};

inline constexpr std::array<AttributionKind, 5> kAllAttributionKinds = {
    AttributionKind::VisualDescription, AttributionKind::ObservedStatus,
    AttributionKind::MovingStatus,      AttributionKind::FutureStatus,
    AttributionKind::Meaning,
};

inline std::string_view attribution_kind_name(AttributionKind k) {
  switch (k) {
    case AttributionKind::VisualDescription: return "visual_description";
    case AttributionKind::ObservedStatus: return "observed_status";
    case AttributionKind::MovingStatus: return "moving_status";
    case AttributionKind::FutureStatus: return "future_status";
    case AttributionKind::Meaning: return "meaning";
  }
  return "visual_description";
}

inline std::optional<AttributionKind> parse_attribution_kind(std::string_view name) {
  for (AttributionKind k : kAllAttributionKinds) {
    if (attribution_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

// Meaning is sign-only; the three status kinds are moveable-only.
inline bool attribution_applicable(AttributionKind kind, std::string_view class_label) {
  switch (kind) {
    case AttributionKind::VisualDescription: return true;
    case AttributionKind::Meaning: return is_static_sign_class(class_label);
    case AttributionKind::ObservedStatus:
    case AttributionKind::MovingStatus:
    case AttributionKind::FutureStatus: return !is_static_sign_class(class_label);
  }
  return false;
}

enum class EdgeKind {
  Direction,
  ActionGiven,
  CollisionCondition,
};

inline constexpr std::array<EdgeKind, 3> kAllEdgeKinds = {
    EdgeKind::Direction, EdgeKind::ActionGiven, EdgeKind::CollisionCondition};

inline std::string_view edge_kind_name(EdgeKind k) {
  switch (k) {
    case EdgeKind::Direction: return "direction";
    case EdgeKind::ActionGiven: return "action_given";
    case EdgeKind::CollisionCondition: return "collision_condition";
  }
  return "direction";
}

inline std::optional<EdgeKind> parse_edge_kind(std::string_view name) {
  for (EdgeKind k : kAllEdgeKinds) {
    if (edge_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

struct Node {
  ObjectRef ref;
  std::string class_label;
  std::map<AttributionKind, std::string> attributions;
};

struct Edge {
  std::string from_id;
  std::string to_id;
  std::optional<double> pixel_distance;  // same-view pairs only
  std::map<EdgeKind, std::string> features;

  bool connects(std::string_view id) const { return from_id == id || to_id == id; }
  const std::string& other(std::string_view id) const {
    return from_id == id ? to_id : from_id;
  }
};

struct SceneGraph {
  std::string scene_id;
  std::vector<Node> nodes;
  std::vector<Edge> edges;

  const Node* find_node(std::string_view id) const {
    for (const Node& n : nodes) {
      if (n.ref.id == id) return &n;
    }
    return nullptr;
  }

  std::vector<const Edge*> edges_incident(std::string_view id) const {
    std::vector<const Edge*> out;
    for (const Edge& e : edges) {
      if (e.connects(id)) out.push_back(&e);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Construction

inline constexpr size_t kMaxGraphNodes = 8;
inline constexpr double kDefaultEdgeThreshold = 300.0;  // px, for 1600-px-wide views

struct AttributionAnswer {
  std::string node_id;
  AttributionKind kind;
  std::string text;
};

struct EdgeAnswer {
  std::string from_id;
  std::string to_id;
  EdgeKind kind;
  std::string text;
};

inline double pixel_distance(const ObjectRef& a, const ObjectRef& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Unordered candidate pairs of node ids: same-view pairs strictly below the
// threshold, plus (when sign_group_pairing is on, the default) every
// same-camera-group pair touching a sign/light class. Cross-camera pairing is
// a convention, hence the flag. Order of each pair and of the list follows
// node order, so output is deterministic for a given node list.
inline std::vector<std::pair<std::string, std::string>> candidate_edge_pairs(
    const std::vector<Node>& nodes, double edge_threshold = kDefaultEdgeThreshold,
    bool sign_group_pairing = true) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (size_t i = 0; i < nodes.size(); ++i) {
    for (size_t j = i + 1; j < nodes.size(); ++j) {
      const Node& a = nodes[i];
      const Node& b = nodes[j];
      bool close_same_view =
          a.ref.camera == b.ref.camera &&
          pixel_distance(a.ref, b.ref) < edge_threshold;
      bool sign_group =
          sign_group_pairing &&
          (is_static_sign_class(a.class_label) || is_static_sign_class(b.class_label)) &&
          is_front_camera(a.ref.camera) == is_front_camera(b.ref.camera);
      if (close_same_view || sign_group) {
        pairs.emplace_back(a.ref.id, b.ref.id);
      }
    }
  }
  return pairs;
}

// Assembles a graph from per-question answers. Duplicate node ids are a hard
// error; answers citing unknown nodes are dropped and reported via
// dropped_log. Nodes beyond kMaxGraphNodes are discarded.
inline SceneGraph build_graph(std::string scene_id,
                              const std::vector<std::pair<ObjectRef, std::string>>& node_answers,
                              const std::vector<AttributionAnswer>& attribution_answers,
                              const std::vector<EdgeAnswer>& edge_answers,
                              std::vector<std::string>* dropped_log = nullptr) {
  auto drop = [&](const std::string& msg) {
    if (dropped_log) dropped_log->push_back(msg);
  };

  SceneGraph graph;
  graph.scene_id = std::move(scene_id);

  std::set<std::string> ids;
  for (const auto& [ref, class_label] : node_answers) {
    if (!ids.insert(ref.id).second) {
      throw DuplicateNodeId("duplicate node id '" + ref.id + "' in scene " + graph.scene_id);
    }
    if (graph.nodes.size() >= kMaxGraphNodes) {
      drop("node " + ref.id + ": beyond node cap, discarded");
      continue;
    }
    graph.nodes.push_back(Node{ref, class_label, {}});
  }
  if (graph.nodes.empty()) {
    throw Error("scene " + graph.scene_id + " has no nodes");
  }

  auto find_mutable = [&](std::string_view id) -> Node* {
    for (Node& n : graph.nodes) {
      if (n.ref.id == id) return &n;
    }
    return nullptr;
  };

  for (const AttributionAnswer& a : attribution_answers) {
    Node* node = find_mutable(a.node_id);
    if (!node) {
      drop("attribution answer for unknown node '" + a.node_id + "' dropped");
      continue;
    }
    if (a.text.empty()) {
      drop("empty attribution answer for node '" + a.node_id + "' dropped");
      continue;
    }
    node->attributions[a.kind] = a.text;
  }

  for (const EdgeAnswer& e : edge_answers) {
    Node* from = find_mutable(e.from_id);
    Node* to = find_mutable(e.to_id);
    if (!from || !to) {
      drop("edge answer " + e.from_id + "->" + e.to_id + " cites unknown node, dropped");
      continue;
    }
    if (e.from_id == e.to_id) {
      drop("edge answer with identical endpoints '" + e.from_id + "' dropped");
      continue;
    }
    if (e.text.empty()) {
      drop("empty edge answer " + e.from_id + "->" + e.to_id + " dropped");
      continue;
    }
    Edge* edge = nullptr;
    for (Edge& existing : graph.edges) {
      if ((existing.from_id == e.from_id && existing.to_id == e.to_id) ||
          (existing.from_id == e.to_id && existing.to_id == e.from_id)) {
        edge = &existing;
        break;
      }
    }
    if (!edge) {
      Edge fresh;
      fresh.from_id = e.from_id;
      fresh.to_id = e.to_id;
      if (from->ref.camera == to->ref.camera) {
        fresh.pixel_distance = pixel_distance(from->ref, to->ref);
      }
      graph.edges.push_back(std::move(fresh));
      edge = &graph.edges.back();
    }
    edge->features[e.kind] = e.text;
  }

  return graph;
}

// ---------------------------------------------------------------------------
// Hint retrieval

struct AttributionHint {
  AttributionKind kind;
  std::string text;
};

struct EdgeHint {
  EdgeKind kind;
  std::string other_id;
  std::string text;
};

using Hint = std::variant<AttributionHint, EdgeHint>;

struct EdgeTarget {
  EdgeKind kind;
  std::string peer_id;
};

// What the question under refinement asks about: one of the node's
// attributions, or one feature of an incident edge.
using HintTarget = std::variant<AttributionKind, EdgeTarget>;

inline std::string hint_target_tag(const HintTarget& target) {
  if (const auto* a = std::get_if<AttributionKind>(&target)) {
    return std::string("attr:") + std::string(attribution_kind_name(*a));
  }
  const auto& e = std::get<EdgeTarget>(target);
  return std::string("edge:") + std::string(edge_kind_name(e.kind)) + ":" + e.peer_id;
}

enum class HintSource {
  AttributionsAndEdges,
  AttributionsOnly,
  EdgesOnly,
  None,
};

inline std::string_view hint_source_name(HintSource s) {
  switch (s) {
    case HintSource::AttributionsAndEdges: return "attributions_edges";
    case HintSource::AttributionsOnly: return "attributions";
    case HintSource::EdgesOnly: return "edges";
    case HintSource::None: return "none";
  }
  return "attributions_edges";
}

inline std::optional<HintSource> parse_hint_source(std::string_view name) {
  for (HintSource s : {HintSource::AttributionsAndEdges, HintSource::AttributionsOnly,
                       HintSource::EdgesOnly, HintSource::None}) {
    if (hint_source_name(s) == name) return s;
  }
  return std::nullopt;
}

struct HintSet {
  std::vector<Hint> hints;  // sampled order
  std::string rendered;

  bool empty() const { return hints.empty(); }
  size_t size() const { return hints.size(); }

  std::vector<AttributionHint> attribution_hints() const {
    std::vector<AttributionHint> out;
    for (const Hint& h : hints) {
      if (const auto* a = std::get_if<AttributionHint>(&h)) out.push_back(*a);
    }
    return out;
  }

  std::vector<EdgeHint> edge_hints() const {
    std::vector<EdgeHint> out;
    for (const Hint& h : hints) {
      if (const auto* e = std::get_if<EdgeHint>(&h)) out.push_back(*e);
    }
    return out;
  }
};

namespace detail {

inline std::string attribution_phrase(AttributionKind k) {
  switch (k) {
    case AttributionKind::VisualDescription: return "visual description";
    case AttributionKind::ObservedStatus: return "observed status";
    case AttributionKind::MovingStatus: return "moving status";
    case AttributionKind::FutureStatus: return "future status";
    case AttributionKind::Meaning: return "meaning";
  }
  return "visual description";
}

// Renders one hint as a comma-joinable clause about the target node.
inline std::string render_hint_clause(const SceneGraph& graph, const std::string& node_id,
                                      const Hint& hint) {
  if (const auto* a = std::get_if<AttributionHint>(&hint)) {
    return "its " + attribution_phrase(a->kind) + " is " + a->text;
  }
  const auto& e = std::get<EdgeHint>(hint);
  const Node* other = graph.find_node(e.other_id);
  std::string other_text =
      other ? "the object " + serialize_ref(other->ref) : "the object " + e.other_id;
  // Edge features are directional; find whether the node is the from side.
  bool node_is_from = true;
  for (const Edge& edge : graph.edges) {
    if (edge.connects(node_id) && edge.other(node_id) == e.other_id &&
        edge.features.count(e.kind)) {
      node_is_from = edge.from_id == node_id;
      break;
    }
  }
  switch (e.kind) {
    case EdgeKind::Direction:
      return node_is_from ? "it is at the " + e.text + " of " + other_text
                          : other_text + " is at the " + e.text + " of it";
    case EdgeKind::ActionGiven:
      return node_is_from ? "based on it the action of " + other_text + " is " + e.text
                          : "based on " + other_text + " its action is " + e.text;
    case EdgeKind::CollisionCondition:
      return node_is_from ? "by " + e.text + " it could collide with " + other_text
                          : other_text + " could collide with it by " + e.text;
  }
  return e.text;
}

}  // namespace detail

// Hint clauses in a rendered re-ask prompt, split by family. Exact for
// clauses produced by render_hint_clause over comma-free answer texts (the
// simulator vocabularies); the noisy oracle uses the split to grade hint
// richness.
struct RenderedHintCounts {
  size_t attribution = 0;
  size_t edge = 0;

  size_t total() const { return attribution + edge; }
};

inline RenderedHintCounts count_rendered_hints(std::string_view prompt) {
  auto occurrences = [&prompt](std::string_view marker) {
    size_t count = 0, pos = 0;
    while ((pos = prompt.find(marker, pos)) != std::string_view::npos) {
      ++count;
      pos += marker.size();
    }
    return count;
  };
  RenderedHintCounts counts;
  counts.attribution = occurrences(", its ");
  // ", based on <" opens the spliced ActionGiven question clause, so the edge
  // markers pin the word after "based on" to stay off it.
  for (std::string_view marker : {", it is at the ", ", the object ", ", based on it ",
                                  ", based on the object ", ", by "}) {
    counts.edge += occurrences(marker);
  }
  return counts;
}

// Candidate hint pool for (node, target): all other attributions of the node
// plus all incident edge features, minus the exact target feature when the
// question itself is an edge question. Deterministic order: attributions in
// kind order, then edges in graph order with features in kind order.
inline std::vector<Hint> hint_pool(const SceneGraph& graph, const std::string& node_id,
                                   const HintTarget& target,
                                   HintSource source = HintSource::AttributionsAndEdges) {
  const Node* node = graph.find_node(node_id);
  if (!node) throw Error("hint_pool: unknown node '" + node_id + "'");

  std::vector<Hint> pool;
  if (source == HintSource::None) return pool;

  const auto* target_attr = std::get_if<AttributionKind>(&target);
  const auto* target_edge = std::get_if<EdgeTarget>(&target);

  if (source != HintSource::EdgesOnly) {
    for (AttributionKind kind : kAllAttributionKinds) {
      auto it = node->attributions.find(kind);
      if (it == node->attributions.end()) continue;
      if (target_attr && *target_attr == kind) continue;
      pool.push_back(AttributionHint{kind, it->second});
    }
  }
  if (source != HintSource::AttributionsOnly) {
    for (const Edge& edge : graph.edges) {
      if (!edge.connects(node_id)) continue;
      const std::string& other = edge.other(node_id);
      for (EdgeKind kind : kAllEdgeKinds) {
        auto it = edge.features.find(kind);
        if (it == edge.features.end()) continue;
        if (target_edge && target_edge->kind == kind && target_edge->peer_id == other) continue;
        pool.push_back(EdgeHint{kind, other, it->second});
      }
    }
  }
  return pool;
}

// Samples up to k hints without replacement; the RNG is seeded from
// (scene_id, node_id, target) xor the run seed so results are reproducible
// and independent of processing order.
inline HintSet retrieve_hints(const SceneGraph& graph, const std::string& node_id,
                              const HintTarget& target, size_t k, std::uint64_t run_seed,
                              HintSource source = HintSource::AttributionsAndEdges) {
  if (k < 1) throw Error("retrieve_hints: k must be >= 1");
  std::vector<Hint> pool = hint_pool(graph, node_id, target, source);
  if (pool.empty()) {
    throw EmptyPool("empty hint pool for node '" + node_id + "' target " +
                    hint_target_tag(target));
  }

  HintSet out;
  if (pool.size() <= k) {
    out.hints = std::move(pool);
  } else {
    std::uint64_t seed =
        fnv1a64(graph.scene_id + "|" + node_id + "|" + hint_target_tag(target)) ^ run_seed;
    SplitMix64 rng(seed);
    // Partial Fisher-Yates: first k slots are the sample, in sampled order.
    for (size_t i = 0; i < k; ++i) {
      size_t j = i + static_cast<size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    out.hints = std::move(pool);
  }

  const Node* node = graph.find_node(node_id);
  out.rendered = "Consider the object " + serialize_ref(node->ref) + " is a " + node->class_label;
  for (const Hint& h : out.hints) {
    out.rendered += ", " + detail::render_hint_clause(graph, node_id, h);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: one JSON document per scene.

inline nlohmann::json to_json(const SceneGraph& graph) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const Node& n : graph.nodes) {
    nlohmann::json attributions = nlohmann::json::object();
    for (const auto& [kind, text] : n.attributions) {
      attributions[std::string(attribution_kind_name(kind))] = text;
    }
    nodes.push_back({{"id", n.ref.id},
                     {"camera", std::string(camera_name(n.ref.camera))},
                     {"x", n.ref.x},
                     {"y", n.ref.y},
                     {"class", n.class_label},
                     {"attributions", attributions}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : graph.edges) {
    nlohmann::json features = nlohmann::json::object();
    for (const auto& [kind, text] : e.features) {
      features[std::string(edge_kind_name(kind))] = text;
    }
    nlohmann::json edge = {{"from", e.from_id}, {"to", e.to_id}, {"features", features}};
    if (e.pixel_distance) edge["pixel_distance"] = *e.pixel_distance;
    edges.push_back(std::move(edge));
  }
  return {{"scene_id", graph.scene_id}, {"nodes", nodes}, {"edges", edges}};
}

inline SceneGraph scene_graph_from_json(const nlohmann::json& j) {
  auto require = [](const nlohmann::json& obj, const char* key,
                    const std::string& path) -> const nlohmann::json& {
    if (!obj.contains(key)) throw SchemaError(path + "." + key, "missing key");
    return obj.at(key);
  };

  SceneGraph graph;
  graph.scene_id = require(j, "scene_id", "$").get<std::string>();
  size_t i = 0;
  for (const auto& n : require(j, "nodes", "$")) {
    std::string path = "$.nodes[" + std::to_string(i++) + "]";
    Node node;
    node.ref.id = require(n, "id", path).get<std::string>();
    auto camera = parse_camera(require(n, "camera", path).get<std::string>());
    if (!camera) throw SchemaError(path + ".camera", "unknown camera");
    node.ref.camera = *camera;
    node.ref.x = require(n, "x", path).get<double>();
    node.ref.y = require(n, "y", path).get<double>();
    node.class_label = require(n, "class", path).get<std::string>();
    const nlohmann::json& attributions = require(n, "attributions", path);
    for (const auto& [key, value] : attributions.items()) {
      auto kind = parse_attribution_kind(key);
      if (!kind) throw SchemaError(path + ".attributions." + key, "unknown attribution kind");
      node.attributions[*kind] = value.get<std::string>();
    }
    graph.nodes.push_back(std::move(node));
  }
  i = 0;
  for (const auto& e : require(j, "edges", "$")) {
    std::string path = "$.edges[" + std::to_string(i++) + "]";
    Edge edge;
    edge.from_id = require(e, "from", path).get<std::string>();
    edge.to_id = require(e, "to", path).get<std::string>();
    if (e.contains("pixel_distance")) edge.pixel_distance = e.at("pixel_distance").get<double>();
    const nlohmann::json& features = require(e, "features", path);
    for (const auto& [key, value] : features.items()) {
      auto kind = parse_edge_kind(key);
      if (!kind) throw SchemaError(path + ".features." + key, "unknown edge kind");
      edge.features[*kind] = value.get<std::string>();
    }
    if (!graph.find_node(edge.from_id) || !graph.find_node(edge.to_id)) {
      throw SchemaError(path, "edge endpoint does not resolve to a node");
    }
    graph.edges.push_back(std::move(edge));
  }
  return graph;
}

}  // namespace vqapipe

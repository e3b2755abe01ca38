#pragma once

// Template prompt catalog for node selection, attribution and edge questions,
// hint injection for re-asks, and the inverse mapping from rendered question
// text back to its template and object references. All functions are pure.

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqapipe/error.hpp"
#include "vqapipe/scene_graph.hpp"

namespace vqapipe {

enum class QuestionCategory {
  NodeSelection,
  Perception,
  Prediction,
  Planning,
};

inline std::string_view question_category_name(QuestionCategory c) {
  switch (c) {
    case QuestionCategory::NodeSelection: return "node_selection";
    case QuestionCategory::Perception: return "perception";
    case QuestionCategory::Prediction: return "prediction";
    case QuestionCategory::Planning: return "planning";
  }
  return "perception";
}

inline QuestionCategory category_of(AttributionKind kind) {
  switch (kind) {
    case AttributionKind::VisualDescription:
    case AttributionKind::ObservedStatus:
    case AttributionKind::Meaning: return QuestionCategory::Perception;
    case AttributionKind::MovingStatus:
    case AttributionKind::FutureStatus: return QuestionCategory::Prediction;
  }
  return QuestionCategory::Perception;
}

inline QuestionCategory category_of(EdgeKind) { return QuestionCategory::Planning; }

namespace templates {

inline constexpr std::string_view kNodeSelection =
    "What are the important objects in the current scene? Those objects will be "
    "considered for future reasoning and driving decisions.";

inline constexpr std::string_view kNodeSelectionFormat =
    "Please select 3 to 5 important objects and identify each one in the format "
    "<id,CAM,x,y>.";

inline std::string_view attribution(AttributionKind kind) {
  switch (kind) {
    case AttributionKind::VisualDescription:
      return "What is the visual description of the object {oi}?";
    case AttributionKind::ObservedStatus:
      return "What is the observed status of the object {oi}?";
    case AttributionKind::MovingStatus:
      return "What is the moving status of the object {oi}?";
    case AttributionKind::FutureStatus:
      return "What is the future status of the object {oi}?";
    case AttributionKind::Meaning:
      return "What is the meaning of the object {oi}?";
  }
  return "";
}

inline std::string_view edge(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::Direction: return "Which direction is {oi} from {oj}?";
    case EdgeKind::ActionGiven: return "Based on {oi}, what's the action of {oj}?";
    case EdgeKind::CollisionCondition:
      return "What actions taken by the {oi} can lead to a collision with {oj}?";
  }
  return "";
}

}  // namespace templates

namespace detail {

inline std::string replace_all(std::string text, std::string_view what, std::string_view with) {
  size_t pos = 0;
  while ((pos = text.find(what, pos)) != std::string::npos) {
    text.replace(pos, what.size(), with);
    pos += with.size();
  }
  return text;
}

}  // namespace detail

struct DetectedBox {
  std::string class_label;
  Camera camera = Camera::CAM_FRONT;
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
};

inline constexpr size_t kMaxCandidateBoxes = 20;

// Selection prompt; when detector boxes are supplied the 20 largest are
// appended as candidates so the model anchors its picks to real coordinates.
inline std::string node_selection_prompt(const std::vector<DetectedBox>& boxes) {
  std::string prompt(templates::kNodeSelection);
  prompt += " ";
  prompt += templates::kNodeSelectionFormat;
  if (boxes.empty()) return prompt;

  std::vector<size_t> order(boxes.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return boxes[a].area() > boxes[b].area(); });
  if (order.size() > kMaxCandidateBoxes) order.resize(kMaxCandidateBoxes);

  prompt += " Detected candidates:";
  for (size_t i = 0; i < order.size(); ++i) {
    const DetectedBox& box = boxes[order[i]];
    prompt += i == 0 ? " " : "; ";
    prompt += box.class_label + " at <" + std::string(camera_name(box.camera)) + "," +
              format_coord(box.x) + "," + format_coord(box.y) + ">";
  }
  prompt += ".";
  return prompt;
}

inline std::string attribution_prompt(AttributionKind kind, const ObjectRef& obj,
                                      std::string_view class_label) {
  if (!attribution_applicable(kind, class_label)) {
    throw InapplicableKind(std::string(attribution_kind_name(kind)) +
                           " not applicable to class '" + std::string(class_label) + "'");
  }
  return detail::replace_all(std::string(templates::attribution(kind)), "{oi}",
                             serialize_ref(obj));
}

inline std::string edge_prompt(EdgeKind kind, const ObjectRef& oi, const ObjectRef& oj) {
  if (oi.id == oj.id) {
    throw SameObject("edge prompt requires two distinct objects, got '" + oi.id + "' twice");
  }
  std::string text = detail::replace_all(std::string(templates::edge(kind)), "{oi}",
                                         serialize_ref(oi));
  return detail::replace_all(std::move(text), "{oj}", serialize_ref(oj));
}

// Comma-splices the rendered hints ahead of the question; the question's
// leading "What is" becomes "what's" and any other leading capital is
// lowercased, so the result reads as one sentence ending in the original
// interrogative clause.
inline std::string inject_hints(const std::string& question, const HintSet& hints) {
  if (hints.empty() || hints.rendered.empty()) {
    throw EmptyHints("inject_hints requires a non-empty hint set");
  }
  std::string clause = question;
  if (starts_with(clause, "What is ")) {
    clause = "what's " + clause.substr(8);
  } else if (!clause.empty() && std::isupper(static_cast<unsigned char>(clause[0]))) {
    clause[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(clause[0])));
  }
  return hints.rendered + ", " + clause;
}

// ---------------------------------------------------------------------------
// Question parsing (inverse of the templates)

struct ParsedQuestion {
  enum class Type { NodeSelection, Attribution, Edge };

  Type type = Type::NodeSelection;
  AttributionKind attribution = AttributionKind::VisualDescription;
  EdgeKind edge = EdgeKind::Direction;
  std::optional<ObjectRef> subject;  // o_i
  std::optional<ObjectRef> object;   // o_j, edge questions only

  HintTarget hint_target() const {
    if (type == Type::Attribution) return attribution;
    return EdgeTarget{edge, object ? object->id : std::string()};
  }
};

// Recovers the template and object refs from a rendered question, hinted or
// not. Hints always precede the question clause, so the trailing refs in the
// text are the question's own.
inline std::optional<ParsedQuestion> parse_question(std::string_view question) {
  std::string lower = to_lower(question);
  auto last_pos = [&](std::string_view stem) { return lower.rfind(std::string(stem)); };

  if (last_pos("what are the important objects") != std::string::npos) {
    ParsedQuestion q;
    q.type = ParsedQuestion::Type::NodeSelection;
    return q;
  }

  struct AttributionStem {
    AttributionKind kind;
    std::string_view stem;
  };
  static const AttributionStem kAttributionStems[] = {
      {AttributionKind::VisualDescription, "the visual description of the object"},
      {AttributionKind::ObservedStatus, "the observed status of the object"},
      {AttributionKind::MovingStatus, "the moving status of the object"},
      {AttributionKind::FutureStatus, "the future status of the object"},
      {AttributionKind::Meaning, "the meaning of the object"},
  };
  struct EdgeStem {
    EdgeKind kind;
    std::string_view stem;
  };
  static const EdgeStem kEdgeStems[] = {
      {EdgeKind::Direction, "which direction is"},
      {EdgeKind::ActionGiven, "what's the action of"},
      {EdgeKind::CollisionCondition, "what actions taken by the"},
  };

  size_t best_pos = std::string::npos;
  bool is_edge = false;
  AttributionKind best_attr = AttributionKind::VisualDescription;
  EdgeKind best_edge = EdgeKind::Direction;
  for (const auto& s : kAttributionStems) {
    size_t p = last_pos(s.stem);
    if (p != std::string::npos && (best_pos == std::string::npos || p > best_pos)) {
      best_pos = p;
      is_edge = false;
      best_attr = s.kind;
    }
  }
  for (const auto& s : kEdgeStems) {
    size_t p = last_pos(s.stem);
    if (p != std::string::npos && (best_pos == std::string::npos || p > best_pos)) {
      best_pos = p;
      is_edge = true;
      best_edge = s.kind;
    }
  }
  if (best_pos == std::string::npos) return std::nullopt;

  std::vector<ObjectRef> refs = extract_object_refs(question);
  ParsedQuestion q;
  if (is_edge) {
    if (refs.size() < 2) return std::nullopt;
    q.type = ParsedQuestion::Type::Edge;
    q.edge = best_edge;
    q.subject = refs[refs.size() - 2];
    q.object = refs[refs.size() - 1];
  } else {
    if (refs.empty()) return std::nullopt;
    q.type = ParsedQuestion::Type::Attribution;
    q.attribution = best_attr;
    q.subject = refs.back();
  }
  return q;
}

// Hinted prompts always open with the hint preamble.
inline bool has_hint_preamble(std::string_view prompt) {
  return starts_with(prompt, "Consider the object ");
}

// ---------------------------------------------------------------------------
// Catalog export

inline nlohmann::json prompt_catalog_json() {
  nlohmann::json attribution = nlohmann::json::array();
  for (AttributionKind kind : kAllAttributionKinds) {
    attribution.push_back(
        {{"kind", std::string(attribution_kind_name(kind))},
         {"category", std::string(question_category_name(category_of(kind)))},
         {"template", std::string(templates::attribution(kind))},
         {"applies_to", kind == AttributionKind::Meaning          ? "static signs"
                        : kind == AttributionKind::VisualDescription ? "all classes"
                                                                     : "moveable classes"}});
  }
  nlohmann::json edge = nlohmann::json::array();
  for (EdgeKind kind : kAllEdgeKinds) {
    edge.push_back({{"kind", std::string(edge_kind_name(kind))},
                    {"category", std::string(question_category_name(category_of(kind)))},
                    {"template", std::string(templates::edge(kind))}});
  }
  return {{"node_selection",
           {{"category", "node_selection"},
            {"template", std::string(templates::kNodeSelection)},
            {"format_instruction", std::string(templates::kNodeSelectionFormat)}}},
          {"attribution", attribution},
          {"edge", edge},
          {"hint_preamble", "Consider the object {oi} is a {class}, {hint 1}, {hint 2}, ..."}};
}

}  // namespace vqapipe

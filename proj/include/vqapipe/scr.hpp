#pragma once

// Self-Consistency Refinement: re-ask each pseudo-labeled question with
// graph-retrieved hints, score reliability as the clamped cosine between the
// original and re-asked answer embeddings, then weight or filter.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqapipe/datasets.hpp"
#include "vqapipe/model_client.hpp"
#include "vqapipe/prompts.hpp"
#include "vqapipe/scene_graph.hpp"

namespace vqapipe {

struct RefinementMode {
  enum class Kind { None, Filter, Score };

  Kind kind = Kind::Score;
  double threshold = 0.8;    // Filter drops s <= threshold
  bool reweight_kept = true; // Filter resets survivors to s = 1; off keeps raw s

  static RefinementMode none() { return {Kind::None, 0.8, true}; }
  static RefinementMode filter(double threshold = 0.8, bool reweight = true) {
    return {Kind::Filter, threshold, reweight};
  }
  static RefinementMode score() { return {Kind::Score, 0.8, true}; }

  std::string_view name() const {
    switch (kind) {
      case Kind::None: return "none";
      case Kind::Filter: return "filter";
      case Kind::Score: return "score";
    }
    return "score";
  }

  static std::optional<RefinementMode> parse(std::string_view name, double threshold = 0.8,
                                             bool reweight = true) {
    if (name == "none") return none();
    if (name == "filter") return filter(threshold, reweight);
    if (name == "score") return RefinementMode{Kind::Score, threshold, true};
    return std::nullopt;
  }
};

struct ScoredRecord {
  VqaRecord record;  // record.s reflects the refinement outcome
  double s = 1.0;    // raw consistency score before any filter re-weighting
  std::string reask_answer;
  std::string hints_rendered;
  std::string embedder_id;
};

inline constexpr size_t kDefaultHintCount = 4;

// s = clamp(cos(embed(original), embed(re-ask)), 0, 1). The clamp floor keeps
// anti-correlated embeddings inside the weight range the mixing step expects.
inline std::pair<double, std::string> consistency_score(ModelClient& client,
                                                        const std::vector<ImageRef>& images,
                                                        const std::string& question,
                                                        const std::string& original_answer,
                                                        const HintSet& hints) {
  if (original_answer.empty()) throw Error("consistency_score: empty original answer");
  ModelRequest request;
  request.image_refs = images;
  request.prompt = inject_hints(question, hints);
  std::string reask = client.generate(request);
  double s = clamp01(cosine(client.embed(original_answer), client.embed(reask)));
  return {s, reask};
}

struct RefinementOptions {
  RefinementMode mode = RefinementMode::score();
  size_t k = kDefaultHintCount;
  std::uint64_t seed = 0;
  HintSource hint_source = HintSource::AttributionsAndEdges;
  unsigned workers = 1;
};

struct RefinementReport {
  std::string mode = "score";
  size_t k = kDefaultHintCount;
  double threshold = 0.8;
  bool reweight_kept = true;
  std::string hint_source = "attributions_edges";
  std::string embedder_id;
  size_t input = 0;
  size_t kept = 0;
  size_t dropped = 0;
  size_t failed = 0;
  size_t empty_pool = 0;
  std::array<size_t, 20> histogram{};  // raw scores, 20 bins over [0,1]
  std::vector<std::string> log;

  void count_score(double s) {
    size_t bin = std::min<size_t>(19, static_cast<size_t>(s * 20.0));
    ++histogram[bin];
  }

  nlohmann::json to_json() const {
    return {{"schema", "vqapipe.refinement.v1"},
            {"mode", mode},
            {"k", k},
            {"threshold", threshold},
            {"reweight_kept", reweight_kept},
            {"hint_source", hint_source},
            {"embedder_id", embedder_id},
            {"counts",
             {{"input", input},
              {"kept", kept},
              {"dropped", dropped},
              {"failed", failed},
              {"empty_pool", empty_pool}}},
            {"score_histogram", histogram}};
  }
};

// Pure filter/weight step, separated from scoring so boundary semantics are
// testable with constructed scores. Filter retains strictly s > threshold and
// (by default) re-weights survivors to 1, treating the reliable ones equally;
// Score keeps raw s; None passes through at 1.
inline std::vector<ScoredRecord> apply_refinement_mode(std::vector<ScoredRecord> scored,
                                                       const RefinementMode& mode) {
  std::vector<ScoredRecord> out;
  out.reserve(scored.size());
  for (ScoredRecord& r : scored) {
    switch (mode.kind) {
      case RefinementMode::Kind::None:
        r.s = 1.0;
        r.record.s = 1.0;
        out.push_back(std::move(r));
        break;
      case RefinementMode::Kind::Score:
        r.record.s = r.s;
        out.push_back(std::move(r));
        break;
      case RefinementMode::Kind::Filter:
        if (r.s > mode.threshold) {
          r.record.s = mode.reweight_kept ? 1.0 : r.s;
          out.push_back(std::move(r));
        }
        break;
    }
  }
  return out;
}

namespace detail {

struct RefineOutcome {
  std::optional<ScoredRecord> scored;
  bool failed = false;
  bool empty_pool = false;
  std::string note;
};

inline std::vector<ImageRef> image_refs_of(const VqaRecord& record) {
  std::vector<ImageRef> refs;
  for (const auto& [camera, uri] : record.images) {
    if (auto cam = parse_camera(camera)) refs.push_back(ImageRef{*cam, uri});
  }
  if (refs.empty()) refs.push_back(ImageRef{Camera::CAM_FRONT, "none://" + record.scene_id});
  return refs;
}

}  // namespace detail

// Scores every pseudo record against its scene graph and applies the mode.
// Records that cannot be tied to a node/edge question (node selection, missing
// graph, missing node) take the empty-pool path: s = 1, kept, logged. Output
// is ordered by record_id, so worker count never changes bytes.
inline std::pair<std::vector<ScoredRecord>, RefinementReport> refine_dataset(
    ModelClient& client, const std::map<std::string, SceneGraph>& graphs,
    std::vector<VqaRecord> records, const RefinementOptions& options) {
  RefinementReport report;
  report.mode = std::string(options.mode.name());
  report.k = options.k;
  report.threshold = options.mode.threshold;
  report.reweight_kept = options.mode.reweight_kept;
  report.hint_source = std::string(hint_source_name(options.hint_source));
  report.embedder_id = client.embedder_id();
  report.input = records.size();

  std::sort(records.begin(), records.end(),
            [](const VqaRecord& a, const VqaRecord& b) { return a.record_id < b.record_id; });

  auto score_one = [&](size_t index) -> detail::RefineOutcome {
    const VqaRecord& record = records[index];
    detail::RefineOutcome outcome;

    if (record.origin == RecordOrigin::Labeled ||
        options.mode.kind == RefinementMode::Kind::None) {
      // Labeled data never passes through consistency scoring, and mode None
      // is a pure pass-through with no re-asks at all.
      ScoredRecord scored{record, 1.0, "", "", client.embedder_id()};
      outcome.scored = std::move(scored);
      return outcome;
    }

    auto parsed = parse_question(record.question);
    auto graph_it = graphs.find(record.scene_id);
    const SceneGraph* graph = graph_it == graphs.end() ? nullptr : &graph_it->second;
    std::string node_id;
    std::optional<HintTarget> target;
    if (parsed && parsed->type != ParsedQuestion::Type::NodeSelection && parsed->subject &&
        graph && graph->find_node(parsed->subject->id)) {
      node_id = parsed->subject->id;
      target = parsed->hint_target();
    }

    if (!target) {
      outcome.empty_pool = true;
      outcome.note = record.record_id + ": no hint pool (unrefinable question), s = 1";
      outcome.scored = ScoredRecord{record, 1.0, "", "", client.embedder_id()};
      return outcome;
    }

    HintSet hints;
    try {
      hints = retrieve_hints(*graph, node_id, *target, options.k, options.seed,
                             options.hint_source);
    } catch (const EmptyPool&) {
      outcome.empty_pool = true;
      outcome.note = record.record_id + ": empty hint pool, s = 1";
      outcome.scored = ScoredRecord{record, 1.0, "", "", client.embedder_id()};
      return outcome;
    }

    try {
      auto [s, reask] = consistency_score(client, detail::image_refs_of(record),
                                          record.question, record.answer, hints);
      outcome.scored =
          ScoredRecord{record, quantize_score(s), reask, hints.rendered, client.embedder_id()};
    } catch (const ClientError& e) {
      outcome.failed = true;
      outcome.note = record.record_id + ": failed (" + e.what() + ")";
    }
    return outcome;
  };

  std::vector<detail::RefineOutcome> outcomes =
      parallel_map<detail::RefineOutcome>(records.size(), options.workers, score_one);

  std::vector<ScoredRecord> scored;
  for (detail::RefineOutcome& outcome : outcomes) {
    if (outcome.failed) ++report.failed;
    if (outcome.empty_pool) ++report.empty_pool;
    if (!outcome.note.empty()) report.log.push_back(outcome.note);
    if (outcome.scored) {
      report.count_score(outcome.scored->s);
      scored.push_back(std::move(*outcome.scored));
    }
  }

  std::vector<ScoredRecord> out = apply_refinement_mode(std::move(scored), options.mode);
  report.kept = out.size();
  report.dropped = report.input - report.failed - report.kept;
  return {std::move(out), std::move(report)};
}

}  // namespace vqapipe

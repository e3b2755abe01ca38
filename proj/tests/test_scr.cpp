#include <doctest.h>

#include <functional>

#include "vqapipe/scr.hpp"
#include "vqapipe/simworld.hpp"

using namespace vqapipe;

namespace {

// Minimal scriptable backend: generate() is a lambda, embeddings hash.
class LambdaClient : public ModelClient {
 public:
  std::function<std::string(const ModelRequest&)> on_generate;
  std::function<Embedding(const std::string&)> on_embed;
  mutable std::atomic<int> generate_calls{0};

  std::string generate(const ModelRequest& request) override {
    ++generate_calls;
    return on_generate(request);
  }
  Embedding embed(const std::string& text) override {
    return on_embed ? on_embed(text) : hash_embed(text, 256);
  }
  double judge(const std::string&, const std::string& gt, const std::string& pred) override {
    return surrogate_judge(*this, gt, pred);
  }
  std::string id() const override { return "lambda"; }
  std::string embedder_id() const override { return "hash-256"; }
};

SceneGraph demo_graph() {
  return build_graph(
      "scene-a",
      {{{"c1", Camera::CAM_FRONT, 100, 100}, "car"},
       {{"c2", Camera::CAM_FRONT, 150, 120}, "traffic light"}},
      {{"c1", AttributionKind::VisualDescription, "a red car"},
       {"c1", AttributionKind::MovingStatus, "going ahead"},
       {"c2", AttributionKind::Meaning, "red light"}},
      {{"c1", "c2", EdgeKind::Direction, "left"}});
}

VqaRecord pseudo_record(const std::string& id, const std::string& question,
                        const std::string& answer) {
  VqaRecord r;
  r.record_id = id;
  r.scene_id = "scene-a";
  r.images = scene_images("scene-a");
  r.question = question;
  r.answer = answer;
  r.category = "prediction";
  r.origin = RecordOrigin::Pseudo;
  r.iteration = 1;
  r.s = 1.0;
  return r;
}

HintSet demo_hints() {
  return retrieve_hints(demo_graph(), "c1", AttributionKind::MovingStatus, 4, 0);
}

}  // namespace

TEST_CASE("consistency_score is exactly 1 when the re-ask echoes") {
  LambdaClient client;
  client.on_generate = [](const ModelRequest&) { return "going ahead"; };
  auto [s, reask] = consistency_score(client, {ImageRef{Camera::CAM_FRONT, "sim://x"}},
                                      "What is the moving status of the object <c1,...>?",
                                      "going ahead", demo_hints());
  CHECK(s == 1.0);
  CHECK(reask == "going ahead");
}

TEST_CASE("consistency_score clamps to [0, 1]") {
  LambdaClient client;
  client.on_generate = [](const ModelRequest&) { return "other"; };
  // Anti-correlated hand-built embeddings exercise the clamp floor.
  client.on_embed = [](const std::string& text) {
    return text == "original" ? Embedding{{1.0, 0.0}} : Embedding{{-0.3, 0.1}};
  };
  auto [s, reask] = consistency_score(client, {ImageRef{Camera::CAM_FRONT, "sim://x"}},
                                      "What is the moving status of the object <c1,...>?",
                                      "original", demo_hints());
  CHECK(s == 0.0);

  client.on_embed = [](const std::string& text) {
    return text == "original" ? Embedding{{1.0, 0.0}} : Embedding{{0.0, 1.0}};
  };
  auto [s2, reask2] = consistency_score(client, {ImageRef{Camera::CAM_FRONT, "sim://x"}},
                                        "What is the moving status of the object <c1,...>?",
                                        "original", demo_hints());
  CHECK(s2 == 0.0);
}

TEST_CASE("filter retention is strict and re-weights to 1") {
  auto make = [](const std::string& id, double s) {
    ScoredRecord r;
    r.record = VqaRecord{};
    r.record.record_id = id;
    r.s = s;
    return r;
  };
  std::vector<ScoredRecord> scored = {make("a", 0.95), make("b", 0.80), make("c", 0.75)};
  auto kept = apply_refinement_mode(scored, RefinementMode::filter(0.8));
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].record.record_id == "a");
  CHECK(kept[0].record.s == 1.0);  // treats the reliable ones equally
  CHECK(kept[0].s == 0.95);        // raw score preserved for reporting

  // Boundary: s = threshold drops, any epsilon above survives.
  auto boundary = apply_refinement_mode({make("x", 0.80), make("y", 0.8000001)},
                                        RefinementMode::filter(0.8));
  REQUIRE(boundary.size() == 1);
  CHECK(boundary[0].record.record_id == "y");
  CHECK(boundary[0].record.s == 1.0);
}

TEST_CASE("filter can keep raw scores when re-weighting is off") {
  auto make = [](const std::string& id, double s) {
    ScoredRecord r;
    r.record.record_id = id;
    r.record.s = s;
    r.s = s;
    return r;
  };
  auto kept = apply_refinement_mode({make("a", 0.95), make("b", 0.5)},
                                    RefinementMode::filter(0.8, /*reweight=*/false));
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].record.s == 0.95);  // raw score preserved
}

TEST_CASE("mode none passes every record through at weight 1") {
  auto make = [](const std::string& id, double s) {
    ScoredRecord r;
    r.record.record_id = id;
    r.s = s;
    return r;
  };
  auto out = apply_refinement_mode({make("a", 0.2), make("b", 0.9)}, RefinementMode::none());
  REQUIRE(out.size() == 2);
  CHECK(out[0].record.s == 1.0);
  CHECK(out[1].record.s == 1.0);
}

TEST_CASE("refine_dataset mode none skips the model entirely") {
  LambdaClient client;
  client.on_generate = [](const ModelRequest&) -> std::string {
    throw RemoteError(500, "should not be called");
  };
  std::map<std::string, SceneGraph> graphs;
  graphs.emplace("scene-a", demo_graph());
  std::vector<VqaRecord> records;
  for (int i = 0; i < 10; ++i) {
    records.push_back(pseudo_record(
        "r" + std::to_string(i),
        attribution_prompt(AttributionKind::MovingStatus, {"c1", Camera::CAM_FRONT, 100, 100},
                           "car"),
        "going ahead"));
  }
  RefinementOptions options;
  options.mode = RefinementMode::none();
  auto [out, report] = refine_dataset(client, graphs, records, options);
  CHECK(out.size() == 10);
  for (const ScoredRecord& r : out) CHECK(r.record.s == 1.0);
  CHECK(client.generate_calls == 0);
  CHECK(report.kept == 10);
  CHECK(report.dropped == 0);
}

TEST_CASE("refine_dataset scores, filters and reports deterministically") {
  auto graph = demo_graph();
  std::map<std::string, SceneGraph> graphs;
  graphs.emplace("scene-a", graph);

  std::string q_moving = attribution_prompt(AttributionKind::MovingStatus,
                                            {"c1", Camera::CAM_FRONT, 100, 100}, "car");
  std::string q_meaning = attribution_prompt(AttributionKind::Meaning,
                                             {"c2", Camera::CAM_FRONT, 150, 120},
                                             "traffic light");
  std::vector<VqaRecord> records = {
      pseudo_record("r1", q_moving, "going ahead"),   // echo: s = 1
      pseudo_record("r2", q_moving, "turning right"), // re-ask disagrees
  };
  // c2 keeps its Direction edge feature once Meaning is excluded, so r3 still
  // has a pool; r4 cites a node missing from the graph and takes the
  // empty-pool path.
  records.push_back(pseudo_record("r3", q_meaning, "red light"));
  records.push_back(pseudo_record(
      "r4",
      attribution_prompt(AttributionKind::MovingStatus, {"c9", Camera::CAM_FRONT, 1, 1}, "car"),
      "going ahead"));

  LambdaClient client;
  client.on_generate = [&](const ModelRequest& request) -> std::string {
    // The hinted re-ask always answers ground truth: "going ahead" for the
    // moving-status question, "red light" for meaning.
    if (request.prompt.find("moving status") != std::string::npos) return "going ahead";
    return "red light";
  };

  RefinementOptions options;
  options.mode = RefinementMode::score();
  options.seed = 11;
  auto [scored, report] = refine_dataset(client, graphs, records, options);
  REQUIRE(scored.size() == 4);
  CHECK(scored[0].record.record_id == "r1");
  CHECK(scored[0].record.s == 1.0);
  CHECK(scored[1].record.s < 0.8);   // "turning right" vs "going ahead"
  CHECK(scored[2].record.s == 1.0);  // echo
  CHECK(scored[3].record.s == 1.0);  // unknown node: empty-pool path
  CHECK(report.empty_pool == 1);
  CHECK(report.failed == 0);
  CHECK(report.input == 4);
  CHECK(report.kept == 4);

  // Same seed, same bytes.
  auto [scored2, report2] = refine_dataset(client, graphs, records, options);
  REQUIRE(scored2.size() == scored.size());
  for (size_t i = 0; i < scored.size(); ++i) {
    CHECK(to_json(scored[i].record) == to_json(scored2[i].record));
    CHECK(scored[i].reask_answer == scored2[i].reask_answer);
  }

  // Filter output is a subset of score output with s > theta, re-weighted.
  options.mode = RefinementMode::filter(0.8);
  auto [filtered, freport] = refine_dataset(client, graphs, records, options);
  CHECK(filtered.size() == 3);  // r2 dropped
  for (const ScoredRecord& r : filtered) {
    CHECK(r.record.s == 1.0);
    CHECK(r.s > 0.8);
  }
  CHECK(freport.dropped == 1);

  // Worker count never changes bytes.
  options.mode = RefinementMode::score();
  options.workers = 4;
  auto [parallel, preport] = refine_dataset(client, graphs, records, options);
  REQUIRE(parallel.size() == scored.size());
  for (size_t i = 0; i < parallel.size(); ++i) {
    CHECK(to_json(parallel[i].record) == to_json(scored[i].record));
  }
}

TEST_CASE("refine_dataset marks client failures and excludes them") {
  std::map<std::string, SceneGraph> graphs;
  graphs.emplace("scene-a", demo_graph());
  LambdaClient client;
  client.on_generate = [](const ModelRequest&) -> std::string {
    throw Timeout("backend down");
  };
  std::vector<VqaRecord> records = {pseudo_record(
      "r1",
      attribution_prompt(AttributionKind::MovingStatus, {"c1", Camera::CAM_FRONT, 100, 100},
                         "car"),
      "going ahead")};
  RefinementOptions options;
  options.mode = RefinementMode::score();
  auto [scored, report] = refine_dataset(client, graphs, records, options);
  CHECK(scored.empty());
  CHECK(report.failed == 1);
  CHECK(report.kept == 0);
  CHECK(report.input == 1);
}

TEST_CASE("labeled records pass through without consistency scoring") {
  std::map<std::string, SceneGraph> graphs;
  graphs.emplace("scene-a", demo_graph());
  LambdaClient client;
  client.on_generate = [](const ModelRequest&) -> std::string {
    throw RemoteError(500, "labeled records must not reach the model");
  };
  VqaRecord labeled;
  labeled.record_id = "lab1";
  labeled.scene_id = "scene-a";
  labeled.images = scene_images("scene-a");
  labeled.question = "What is the moving status of the object <c1,CAM_FRONT,100,100>?";
  labeled.answer = "going ahead";
  labeled.category = "prediction";
  labeled.origin = RecordOrigin::Labeled;
  labeled.s = 1.0;
  RefinementOptions options;
  options.mode = RefinementMode::score();
  auto [scored, report] = refine_dataset(client, graphs, {labeled}, options);
  REQUIRE(scored.size() == 1);
  CHECK(scored[0].record.s == 1.0);
  CHECK(client.generate_calls == 0);
}

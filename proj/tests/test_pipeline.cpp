#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "vqapipe/httplib_transport.hpp"
#include "vqapipe/pipeline.hpp"

using namespace vqapipe;
namespace fs = std::filesystem;

namespace {

// 2 moveable + 2 signs across two camera groups: exactly two candidate pairs
// ((c1,c2) by distance, (c3,c4) by the back-group sign rule).
GroundTruthScene fixture_scene() {
  GroundTruthScene scene;
  scene.scene_id = "scene-fix";
  scene.objects = {
      {"c1", "car", Camera::CAM_FRONT, 100.0, 100.0, "red", "going ahead", ""},
      {"c2", "truck", Camera::CAM_FRONT, 150.0, 120.0, "white", "turning left", ""},
      {"c3", "traffic light", Camera::CAM_BACK, 100.0, 100.0, "black", "", "green light"},
      {"c4", "traffic sign", Camera::CAM_BACK, 800.0, 800.0, "silver", "", "stop sign"},
  };
  return scene;
}

PipelineConfig small_config(std::uint64_t seed) {
  PipelineConfig config;
  config.seed = seed;
  config.num_scenes = 40;
  config.plan.eval_fraction = 0.2;
  config.plan.labeled_fraction = 0.1;
  config.plan.schedule = {0.3, 0.6};
  config.plan.refinement = RefinementMode::score();
  config.pipeline.workers = 2;
  config.oracle = OracleConfig{0.3, 0.05, 0};
  return config;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "vqapipe_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

class FailOnScenes : public ModelClient {
 public:
  FailOnScenes(const SceneTable& scenes, const OracleConfig& oracle,
               std::set<std::string> poisoned)
      : inner_(scenes, oracle), poisoned_(std::move(poisoned)) {}

  std::string generate(const ModelRequest& request) override {
    for (const std::string& scene_id : poisoned_) {
      if (request.image_refs.front().uri.find(scene_id) != std::string::npos) {
        throw std::logic_error("injected failure for " + scene_id);
      }
    }
    return inner_.generate(request);
  }
  Embedding embed(const std::string& text) override { return inner_.embed(text); }
  double judge(const std::string& q, const std::string& gt, const std::string& pred) override {
    return inner_.judge(q, gt, pred);
  }
  std::string id() const override { return inner_.id(); }
  std::string embedder_id() const override { return inner_.embedder_id(); }

 private:
  OracleClient inner_;
  std::set<std::string> poisoned_;
};

}  // namespace

TEST_CASE("scene input JSON round-trips") {
  SceneInput input = scene_input_of(fixture_scene());
  nlohmann::json j = to_json(input);
  SceneInput round = scene_input_from_json(j);
  CHECK(to_json(round) == j);
  CHECK(round.boxes.size() == 4);
  CHECK(round.images.size() == 6);
}

TEST_CASE("generate_pseudo enumerates the fixture's 19 records") {
  GroundTruthScene scene = fixture_scene();
  SceneTable scenes;
  scenes.emplace(scene.scene_id, scene);
  OracleClient client(scenes, OracleConfig{0.0, 0.0, 1});

  GenerationResult result = generate_pseudo({scene_input_of(scene)}, client, {});
  // 1 selection + (2 moveable x 4 + 2 signs x 2) attributions + 2 pairs x 3.
  CHECK(result.records.size() == 19);
  REQUIRE(result.graphs.count("scene-fix") == 1);
  const SceneGraph& graph = result.graphs.at("scene-fix");
  CHECK(graph.nodes.size() == 4);
  CHECK(graph.edges.size() == 2);
  CHECK(result.scenes_skipped == 0);

  // Classes recovered through the detector boxes, not invented.
  CHECK(graph.find_node("c1")->class_label == "car");
  CHECK(graph.find_node("c3")->class_label == "traffic light");

  // Error-free oracle: every record answer equals ground truth.
  for (const VqaRecord& r : result.records) {
    CHECK(r.origin == RecordOrigin::Pseudo);
    CHECK(r.iteration == 1);
    auto parsed = parse_question(r.question);
    REQUIRE(parsed.has_value());
    CHECK(r.answer == ground_truth_answer(scene, *parsed));
  }
}

TEST_CASE("generate_pseudo skips scenes without parseable selections") {
  MockClient mock;
  mock.set_default_answer("there are no tuples in this reply");
  GenerationResult result = generate_pseudo({scene_input_of(fixture_scene())}, mock, {});
  CHECK(result.records.empty());
  CHECK(result.graphs.empty());
  CHECK(result.scenes_skipped == 1);
  REQUIRE(result.log.size() == 1);
  CHECK(result.log[0].find("no parseable refs") != std::string::npos);
}

TEST_CASE("generate_pseudo is deterministic across worker counts") {
  SceneTable scenes;
  std::vector<SceneInput> inputs;
  for (int i = 0; i < 6; ++i) {
    SimConfig sim;
    GroundTruthScene scene = generate_scene(sim, "scene-d" + std::to_string(i), 100 + i);
    inputs.push_back(scene_input_of(scene));
    scenes.emplace(scene.scene_id, std::move(scene));
  }
  OracleClient client(scenes, OracleConfig{0.3, 0.05, 77});

  GenerationOptions serial;
  serial.workers = 1;
  GenerationOptions parallel;
  parallel.workers = 4;
  GenerationResult a = generate_pseudo(inputs, client, serial);
  GenerationResult b = generate_pseudo(inputs, client, parallel);
  CHECK(to_jsonl(a.records) == to_jsonl(b.records));
  REQUIRE(a.graphs.size() == b.graphs.size());
  for (const auto& [id, graph] : a.graphs) {
    CHECK(to_json(graph) == to_json(b.graphs.at(id)));
  }
}

TEST_CASE("generate_pseudo runs against a remote chat backend") {
  // A loopback "model": picks two detected candidates as nodes and answers
  // every other question with a fixed phrase.
  httplib::Server server;
  server.Post("/v1/chat/completions",
              [](const httplib::Request& request, httplib::Response& response) {
                nlohmann::json body = nlohmann::json::parse(request.body);
                std::string prompt =
                    body.at("messages").at(0).at("content").at(0).at("text").get<std::string>();
                std::string answer = "stopped";
                if (prompt.find("important objects") != std::string::npos) {
                  answer = "I pick <c1,CAM_FRONT,100,100> and <c2,CAM_FRONT,150,120>.";
                }
                nlohmann::json reply = {{"choices", {{{"message", {{"content", answer}}}}}}};
                response.set_content(reply.dump(), "application/json");
              });
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread serving([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ClientConfig client_config;
  client_config.base_url = "http://127.0.0.1:" + std::to_string(port);
  client_config.max_concurrent_requests = 2;
  RemoteClient client(client_config, std::make_shared<HttplibTransport>(client_config));

  GroundTruthScene scene = fixture_scene();
  GenerationOptions options;
  options.workers = 2;
  GenerationResult result = generate_pseudo({scene_input_of(scene)}, client, options);
  server.stop();
  serving.join();

  REQUIRE(result.graphs.count("scene-fix") == 1);
  const SceneGraph& graph = result.graphs.at("scene-fix");
  CHECK(graph.nodes.size() == 2);
  CHECK(graph.edges.size() == 1);  // c1-c2 close in CAM_FRONT
  // 1 selection + 2 moveable nodes x 4 attributions + 1 pair x 3 edges.
  CHECK(result.records.size() == 12);
  for (const VqaRecord& r : result.records) {
    if (r.category != "node_selection") CHECK(r.answer == "stopped");
  }
}

TEST_CASE("run_loop writes the fixed layout and improves over iterations") {
  PipelineConfig config = small_config(31);
  fs::path dir = temp_dir("loop_basic");
  LoopResult result = run_loop(config, dir.string());

  CHECK(fs::exists(dir / "config.json"));
  CHECK(fs::exists(dir / "eval.jsonl"));
  CHECK(fs::exists(dir / "manifest.json"));
  for (int t = 0; t <= 2; ++t) {
    fs::path iter = dir / ("iter-" + std::to_string(t));
    CHECK(fs::exists(iter / "dataset.jsonl"));
    CHECK(fs::exists(iter / "refinement.json"));
    CHECK(fs::exists(iter / "metrics.json"));
  }
  const auto& iterations = result.manifest.at("iterations");
  REQUIRE(iterations.size() == 3);

  // Mixed dataset grows strictly with non-empty tranches.
  size_t previous = 0;
  for (const auto& entry : iterations) {
    size_t mixed = entry.at("mixed_records").get<size_t>();
    CHECK(mixed > previous);
    previous = mixed;
  }
}

TEST_CASE("run_loop with an empty schedule stops after iteration zero") {
  PipelineConfig config = small_config(32);
  config.plan.schedule = {};
  fs::path dir = temp_dir("loop_empty_schedule");
  LoopResult result = run_loop(config, dir.string());
  CHECK(result.manifest.at("iterations").size() == 1);
  CHECK_FALSE(fs::exists(dir / "iter-1"));
}

TEST_CASE("run_loop refuses to overwrite a finished run") {
  PipelineConfig config = small_config(33);
  config.plan.schedule = {};
  fs::path dir = temp_dir("loop_no_overwrite");
  run_loop(config, dir.string());
  CHECK_THROWS_AS(run_loop(config, dir.string()), Error);
}

TEST_CASE("reruns with identical config and seeds are byte-identical") {
  PipelineConfig config = small_config(34);
  fs::path a = temp_dir("loop_repro_a");
  fs::path b = temp_dir("loop_repro_b");
  run_loop(config, a.string());
  run_loop(config, b.string());

  std::vector<std::string> files = {"config.json", "eval.jsonl", "manifest.json"};
  for (int t = 0; t <= 2; ++t) {
    std::string prefix = "iter-" + std::to_string(t) + "/";
    files.push_back(prefix + "dataset.jsonl");
    files.push_back(prefix + "refinement.json");
    files.push_back(prefix + "metrics.json");
  }
  for (const std::string& file : files) {
    CHECK_MESSAGE(slurp(a / file) == slurp(b / file), "differs: ", file);
  }
}

TEST_CASE("a mid-iteration failure leaves prior iterations untouched") {
  PipelineConfig config = small_config(35);
  fs::path failed = temp_dir("loop_fail");

  // Poison every scene of the second tranche; iteration 2's generation then
  // aborts the iteration after iterations 0 and 1 committed.
  SceneTable world = build_sim_world(config);
  auto partitions = plan_partitions(config, world);
  std::set<std::string> poisoned(partitions[3].begin(), partitions[3].end());
  REQUIRE(!poisoned.empty());

  ClientFactory factory = [&](const SceneTable& scenes, const OracleConfig& oracle) {
    return std::make_unique<FailOnScenes>(scenes, oracle, poisoned);
  };
  CHECK_THROWS_AS(run_loop(config, failed.string(), factory), std::logic_error);

  CHECK(fs::exists(failed / "iter-0"));
  CHECK(fs::exists(failed / "iter-1"));
  CHECK_FALSE(fs::exists(failed / "iter-2"));
  CHECK_FALSE(fs::exists(failed / "iter-2.staging"));
  nlohmann::json manifest = nlohmann::json::parse(slurp(failed / "manifest.json"));
  CHECK(manifest.at("iterations").size() == 2);

  // The surviving state is byte-identical to an untampered run's prefix.
  fs::path clean = temp_dir("loop_fail_clean");
  run_loop(config, clean.string());
  for (int t = 0; t <= 1; ++t) {
    for (const char* name : {"dataset.jsonl", "refinement.json", "metrics.json"}) {
      std::string rel = "iter-" + std::to_string(t) + "/" + name;
      CHECK_MESSAGE(slurp(failed / rel) == slurp(clean / rel), "differs: ", rel);
    }
  }
  nlohmann::json clean_manifest = nlohmann::json::parse(slurp(clean / "manifest.json"));
  CHECK(manifest.at("iterations")[0] == clean_manifest.at("iterations")[0]);
  CHECK(manifest.at("iterations")[1] == clean_manifest.at("iterations")[1]);
}

TEST_CASE("manifest table renders one line per iteration") {
  PipelineConfig config = small_config(36);
  config.plan.schedule = {0.3};
  fs::path dir = temp_dir("loop_table");
  LoopResult result = run_loop(config, dir.string());
  std::string table = render_manifest_table(result.manifest);
  CHECK(table.find("final") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 3);  // header + 2 rows
}

TEST_CASE("pipeline config JSON round-trips through parse and dump") {
  PipelineConfig config = small_config(37);
  nlohmann::json j = pipeline_config_to_json(config);
  PipelineConfig round = pipeline_config_from_json(j);
  CHECK(pipeline_config_to_json(round) == j);

  CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json{{"plan", {{"eval_fraction", 1.5}}}}),
                  Error);
  CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json{
                      {"simulator", {{"p0", 0.1}, {"p_hint", 0.5}}}}),
                  Error);
}

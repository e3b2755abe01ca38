#pragma once

// Orchestration of the iterative loop: question generation over unlabeled
// scenes, pseudo-answering, graph building, self-consistency refinement,
// dataset mixing, toy-learner training and held-out evaluation. Every
// iteration is staged and committed by a single directory rename, so a
// failure at any stage leaves prior state untouched.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqapipe/datasets.hpp"
#include "vqapipe/http_client.hpp"
#include "vqapipe/metrics.hpp"
#include "vqapipe/model_client.hpp"
#include "vqapipe/prompts.hpp"
#include "vqapipe/scene_graph.hpp"
#include "vqapipe/scr.hpp"
#include "vqapipe/simworld.hpp"

namespace vqapipe {

// ---------------------------------------------------------------------------
// Scene inputs (what `generate` consumes: unlabeled images + detector boxes)

struct SceneInput {
  std::string scene_id;
  std::map<std::string, std::string> images;
  std::vector<DetectedBox> boxes;
};

inline nlohmann::json to_json(const SceneInput& scene) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const DetectedBox& b : scene.boxes) {
    boxes.push_back({{"class", b.class_label},
                     {"camera", std::string(camera_name(b.camera))},
                     {"x", b.x},
                     {"y", b.y},
                     {"w", b.w},
                     {"h", b.h}});
  }
  return {{"scene_id", scene.scene_id}, {"images", scene.images}, {"boxes", boxes}};
}

inline SceneInput scene_input_from_json(const nlohmann::json& j, const std::string& path = "$") {
  SceneInput scene;
  try {
    scene.scene_id = j.at("scene_id").get<std::string>();
    scene.images = j.at("images").get<std::map<std::string, std::string>>();
    for (const auto& b : j.at("boxes")) {
      DetectedBox box;
      box.class_label = b.at("class").get<std::string>();
      auto camera = parse_camera(b.at("camera").get<std::string>());
      if (!camera) throw SchemaError(path + ".boxes.camera", "unknown camera");
      box.camera = *camera;
      box.x = b.at("x").get<double>();
      box.y = b.at("y").get<double>();
      box.w = b.at("w").get<double>();
      box.h = b.at("h").get<double>();
      scene.boxes.push_back(box);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path, std::string("bad scene input: ") + e.what());
  }
  return scene;
}

inline SceneInput scene_input_of(const GroundTruthScene& scene) {
  return SceneInput{scene.scene_id, scene_images(scene.scene_id), scene_boxes(scene)};
}

// ---------------------------------------------------------------------------
// Pseudo-label generation

struct GenerationOptions {
  int iteration = 1;
  double edge_threshold = kDefaultEdgeThreshold;
  bool sign_group_pairing = true;
  size_t max_selected_nodes = 5;
  double class_match_radius = 32.0;  // px, selection ref -> detector box
  unsigned workers = 1;
};

struct GenerationResult {
  std::map<std::string, SceneGraph> graphs;
  std::vector<VqaRecord> records;
  std::vector<std::string> log;
  size_t scenes_skipped = 0;
  size_t answers_dropped = 0;
};

namespace detail {

inline std::vector<ImageRef> image_refs_of(const SceneInput& scene) {
  std::vector<ImageRef> refs;
  for (const auto& [camera, uri] : scene.images) {
    if (auto cam = parse_camera(camera)) refs.push_back(ImageRef{*cam, uri});
  }
  return refs;
}

inline std::string class_for_ref(const ObjectRef& ref, const std::vector<DetectedBox>& boxes,
                                 double radius) {
  const DetectedBox* best = nullptr;
  double best_dist = 0.0;
  for (const DetectedBox& box : boxes) {
    if (box.camera != ref.camera) continue;
    double d = std::hypot(box.x - ref.x, box.y - ref.y);
    if (d <= radius && (!best || d < best_dist)) {
      best = &box;
      best_dist = d;
    }
  }
  return best ? best->class_label : "object";
}

struct SceneGeneration {
  std::optional<SceneGraph> graph;
  std::vector<VqaRecord> records;
  std::vector<std::string> log;
  size_t answers_dropped = 0;
};

inline SceneGeneration generate_for_scene(const SceneInput& scene, ModelClient& client,
                                          const GenerationOptions& options) {
  SceneGeneration out;
  auto images = image_refs_of(scene);
  auto ask = [&](const std::string& prompt) {
    ModelRequest request;
    request.image_refs = images;
    request.prompt = prompt;
    return client.generate(request);
  };
  auto make_record = [&](const std::string& id_suffix, const std::string& question,
                         const std::string& answer, QuestionCategory category) {
    VqaRecord r;
    // Iteration-tagged ids keep pseudo records distinct from labeled records
    // and from any earlier tranche touching the same scene.
    r.record_id = scene.scene_id + "_t" + std::to_string(options.iteration) + "_" + id_suffix;
    r.scene_id = scene.scene_id;
    r.images = scene.images;
    r.question = question;
    r.answer = answer;
    r.category = std::string(question_category_name(category));
    r.origin = RecordOrigin::Pseudo;
    r.iteration = options.iteration;
    r.s = 1.0;
    return r;
  };

  // Node selection.
  std::string selection_prompt = node_selection_prompt(scene.boxes);
  std::string selection_answer;
  try {
    selection_answer = ask(selection_prompt);
  } catch (const ClientError& e) {
    out.log.push_back(scene.scene_id + ": node selection failed (" + e.what() + "), skipped");
    return out;
  }
  std::vector<ObjectRef> refs = extract_object_refs(selection_answer);
  if (refs.size() > options.max_selected_nodes) refs.resize(options.max_selected_nodes);
  if (refs.empty()) {
    out.log.push_back(scene.scene_id + ": no parseable refs in selection answer, skipped");
    return out;
  }
  {
    std::set<std::string> ids;
    for (const ObjectRef& ref : refs) {
      if (!ids.insert(ref.id).second) {
        out.log.push_back(scene.scene_id + ": duplicate node id '" + ref.id + "', skipped");
        return out;
      }
    }
  }
  out.records.push_back(make_record("sel", selection_prompt, selection_answer,
                                    QuestionCategory::NodeSelection));

  std::vector<std::pair<ObjectRef, std::string>> node_answers;
  std::vector<Node> probe_nodes;
  for (const ObjectRef& ref : refs) {
    std::string cls = class_for_ref(ref, scene.boxes, options.class_match_radius);
    node_answers.emplace_back(ref, cls);
    probe_nodes.push_back(Node{ref, cls, {}});
  }

  // Attribution questions per node.
  std::vector<AttributionAnswer> attribution_answers;
  for (const auto& [ref, cls] : node_answers) {
    for (AttributionKind kind : kAllAttributionKinds) {
      if (!attribution_applicable(kind, cls)) continue;
      std::string question = attribution_prompt(kind, ref, cls);
      try {
        std::string answer = ask(question);
        attribution_answers.push_back(AttributionAnswer{ref.id, kind, answer});
        out.records.push_back(make_record(ref.id + "_" + std::string(attribution_kind_name(kind)),
                                          question, answer, category_of(kind)));
      } catch (const ClientError& e) {
        ++out.answers_dropped;
        out.log.push_back(scene.scene_id + ": dropped " + ref.id + "/" +
                          std::string(attribution_kind_name(kind)) + " (" + e.what() + ")");
      }
    }
  }

  // Edge questions per candidate pair.
  std::vector<EdgeAnswer> edge_answers;
  for (const auto& [from, to] :
       candidate_edge_pairs(probe_nodes, options.edge_threshold, options.sign_group_pairing)) {
    const Node* a = nullptr;
    const Node* b = nullptr;
    for (const Node& n : probe_nodes) {
      if (n.ref.id == from) a = &n;
      if (n.ref.id == to) b = &n;
    }
    for (EdgeKind kind : kAllEdgeKinds) {
      std::string question = edge_prompt(kind, a->ref, b->ref);
      try {
        std::string answer = ask(question);
        edge_answers.push_back(EdgeAnswer{from, to, kind, answer});
        out.records.push_back(make_record(from + "_" + to + "_" + std::string(edge_kind_name(kind)),
                                          question, answer, category_of(kind)));
      } catch (const ClientError& e) {
        ++out.answers_dropped;
        out.log.push_back(scene.scene_id + ": dropped edge " + from + "-" + to + "/" +
                          std::string(edge_kind_name(kind)) + " (" + e.what() + ")");
      }
    }
  }

  try {
    out.graph = build_graph(scene.scene_id, node_answers, attribution_answers, edge_answers,
                            &out.log);
  } catch (const Error& e) {
    out.log.push_back(scene.scene_id + ": graph build failed (" + e.what() + "), skipped");
    out.records.clear();
    out.answers_dropped = 0;
    return out;
  }
  return out;
}

}  // namespace detail

// Generates questions, pseudo-answers and one graph per scene. Scene-level
// failures isolate: the scene is skipped and logged, the batch continues.
inline GenerationResult generate_pseudo(std::vector<SceneInput> scenes, ModelClient& client,
                                        const GenerationOptions& options) {
  std::sort(scenes.begin(), scenes.end(),
            [](const SceneInput& a, const SceneInput& b) { return a.scene_id < b.scene_id; });

  auto per_scene = parallel_map<detail::SceneGeneration>(
      scenes.size(), options.workers,
      [&](size_t i) { return detail::generate_for_scene(scenes[i], client, options); });

  GenerationResult result;
  for (size_t i = 0; i < scenes.size(); ++i) {
    detail::SceneGeneration& gen = per_scene[i];
    result.log.insert(result.log.end(), gen.log.begin(), gen.log.end());
    result.answers_dropped += gen.answers_dropped;
    if (!gen.graph) {
      ++result.scenes_skipped;
      continue;
    }
    result.graphs.emplace(scenes[i].scene_id, std::move(*gen.graph));
    result.records.insert(result.records.end(), gen.records.begin(), gen.records.end());
  }
  return result;
}

// ---------------------------------------------------------------------------
// Configuration

struct PlanConfig {
  double eval_fraction = 0.2;
  double labeled_fraction = 0.05;
  std::vector<double> schedule = {0.20, 0.75};
  RefinementMode refinement = RefinementMode::score();
  size_t k = kDefaultHintCount;
  HintSource hint_source = HintSource::AttributionsAndEdges;

  void validate() const {
    if (eval_fraction < 0.0 || eval_fraction >= 1.0) throw Error("plan: bad eval_fraction");
    double total = labeled_fraction;
    for (double f : schedule) total += f;
    if (labeled_fraction <= 0.0 || total > 1.0 + 1e-9) {
      throw Error("plan: labeled fraction plus schedule must stay within 1");
    }
    if (k < 1) throw Error("plan: k must be >= 1");
  }
};

struct PipelineOptions {
  double edge_threshold = kDefaultEdgeThreshold;
  bool sign_group_pairing = true;
  unsigned workers = 2;
  size_t max_selected_nodes = 5;
  double class_match_radius = 32.0;
};

struct MetricsConfig {
  FinalScoreWeights weights;
  double match_delta = kDefaultMatchDelta;
  double rouge_beta = kRougeBeta;
  BleuMode bleu_mode = BleuMode::Sentence;

  ScoringOptions scoring() const { return ScoringOptions{match_delta, rouge_beta, bleu_mode}; }
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::string backend = "oracle";  // oracle | mock | remote
  PlanConfig plan;
  SimConfig sim;
  size_t num_scenes = 500;
  OracleConfig oracle;  // p0 / p_hint; seed is derived from the run seed
  PipelineOptions pipeline;
  MetricsConfig metrics;
  ClientConfig client;

  void validate() const {
    plan.validate();
    metrics.weights.validate();
    if (oracle.p0 < 0.0 || oracle.p0 > 1.0 || oracle.p_hint < 0.0 || oracle.p_hint > 1.0) {
      throw Error("oracle error probabilities must lie in [0,1]");
    }
    if (oracle.p_hint > oracle.p0) {
      throw Error("oracle premise requires p_hint <= p0");
    }
    if (num_scenes < 5) throw Error("simulator needs at least 5 scenes");
  }
};

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  c.seed = j.value("seed", std::uint64_t{0});
  c.backend = j.value("backend", std::string("oracle"));
  if (j.contains("plan")) {
    const auto& p = j.at("plan");
    c.plan.eval_fraction = p.value("eval_fraction", c.plan.eval_fraction);
    c.plan.labeled_fraction = p.value("labeled_fraction", c.plan.labeled_fraction);
    if (p.contains("schedule")) c.plan.schedule = p.at("schedule").get<std::vector<double>>();
    if (p.contains("refinement")) {
      const auto& r = p.at("refinement");
      auto mode = RefinementMode::parse(r.value("mode", std::string("score")),
                                        r.value("threshold", 0.8),
                                        r.value("reweight_kept", true));
      if (!mode) throw Error("unknown refinement mode");
      c.plan.refinement = *mode;
    }
    c.plan.k = p.value("k", c.plan.k);
    if (p.contains("hint_source")) {
      auto source = parse_hint_source(p.at("hint_source").get<std::string>());
      if (!source) throw Error("unknown hint source");
      c.plan.hint_source = *source;
    }
  }
  if (j.contains("simulator")) {
    const auto& s = j.at("simulator");
    c.num_scenes = s.value("num_scenes", c.num_scenes);
    c.sim.min_objects = s.value("min_objects", c.sim.min_objects);
    c.sim.max_objects = s.value("max_objects", c.sim.max_objects);
    c.sim.image_width = s.value("image_width", c.sim.image_width);
    c.sim.image_height = s.value("image_height", c.sim.image_height);
    c.sim.red_light_stop_prob = s.value("red_light_stop_prob", c.sim.red_light_stop_prob);
    c.oracle.p0 = s.value("p0", c.oracle.p0);
    c.oracle.p_hint = s.value("p_hint", c.oracle.p_hint);
  }
  if (j.contains("pipeline")) {
    const auto& p = j.at("pipeline");
    c.pipeline.edge_threshold = p.value("edge_threshold", c.pipeline.edge_threshold);
    c.pipeline.sign_group_pairing = p.value("sign_group_pairing", c.pipeline.sign_group_pairing);
    c.pipeline.workers = p.value("workers", c.pipeline.workers);
    c.pipeline.max_selected_nodes = p.value("max_selected_nodes", c.pipeline.max_selected_nodes);
    c.pipeline.class_match_radius = p.value("class_match_radius", c.pipeline.class_match_radius);
  }
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    if (m.contains("weights")) {
      const auto& w = m.at("weights");
      c.metrics.weights.accuracy = w.value("accuracy", c.metrics.weights.accuracy);
      c.metrics.weights.judge = w.value("judge", c.metrics.weights.judge);
      c.metrics.weights.language = w.value("language", c.metrics.weights.language);
      c.metrics.weights.match = w.value("match", c.metrics.weights.match);
    }
    c.metrics.weights.language_rule =
        m.value("language_rule", c.metrics.weights.language_rule);
    c.metrics.match_delta = m.value("match_delta", c.metrics.match_delta);
    c.metrics.rouge_beta = m.value("rouge_beta", c.metrics.rouge_beta);
    if (m.contains("bleu_mode")) {
      auto mode = parse_bleu_mode(m.at("bleu_mode").get<std::string>());
      if (!mode) throw Error("unknown bleu mode");
      c.metrics.bleu_mode = *mode;
    }
  }
  if (j.contains("client")) {
    const auto& cl = j.at("client");
    c.client.base_url = cl.value("base_url", c.client.base_url);
    c.client.model_name = cl.value("model_name", c.client.model_name);
    c.client.timeout_seconds = cl.value("timeout_seconds", c.client.timeout_seconds);
    c.client.max_retries = cl.value("max_retries", c.client.max_retries);
    c.client.max_concurrent_requests =
        cl.value("max_concurrent_requests", c.client.max_concurrent_requests);
    c.client.auth_token_env = cl.value("auth_token_env", c.client.auth_token_env);
    c.client.embeddings_path = cl.value("embeddings_path", c.client.embeddings_path);
    c.client.embedding_dim = cl.value("embedding_dim", c.client.embedding_dim);
    c.client.debug_log = cl.value("debug_log", c.client.debug_log);
  }
  c.validate();
  return c;
}

inline nlohmann::json pipeline_config_to_json(const PipelineConfig& c) {
  return {
      {"seed", c.seed},
      {"backend", c.backend},
      {"plan",
       {{"eval_fraction", c.plan.eval_fraction},
        {"labeled_fraction", c.plan.labeled_fraction},
        {"schedule", c.plan.schedule},
        {"refinement",
         {{"mode", std::string(c.plan.refinement.name())},
          {"threshold", c.plan.refinement.threshold},
          {"reweight_kept", c.plan.refinement.reweight_kept}}},
        {"k", c.plan.k},
        {"hint_source", std::string(hint_source_name(c.plan.hint_source))}}},
      {"simulator",
       {{"num_scenes", c.num_scenes},
        {"min_objects", c.sim.min_objects},
        {"max_objects", c.sim.max_objects},
        {"image_width", c.sim.image_width},
        {"image_height", c.sim.image_height},
        {"red_light_stop_prob", c.sim.red_light_stop_prob},
        {"p0", c.oracle.p0},
        {"p_hint", c.oracle.p_hint}}},
      {"pipeline",
       {{"edge_threshold", c.pipeline.edge_threshold},
        {"sign_group_pairing", c.pipeline.sign_group_pairing},
        {"workers", c.pipeline.workers},
        {"max_selected_nodes", c.pipeline.max_selected_nodes},
        {"class_match_radius", c.pipeline.class_match_radius}}},
      {"metrics",
       {{"weights",
         {{"accuracy", c.metrics.weights.accuracy},
          {"judge", c.metrics.weights.judge},
          {"language", c.metrics.weights.language},
          {"match", c.metrics.weights.match}}},
        {"language_rule", c.metrics.weights.language_rule},
        {"match_delta", c.metrics.match_delta},
        {"rouge_beta", c.metrics.rouge_beta},
        {"bleu_mode", std::string(bleu_mode_name(c.metrics.bleu_mode))}}},
      {"client",
       {{"base_url", c.client.base_url},
        {"model_name", c.client.model_name},
        {"timeout_seconds", c.client.timeout_seconds},
        {"max_retries", c.client.max_retries},
        {"max_concurrent_requests", c.client.max_concurrent_requests},
        {"auth_token_env", c.client.auth_token_env},
        {"embeddings_path", c.client.embeddings_path},
        {"embedding_dim", c.client.embedding_dim}}}};
}

// ---------------------------------------------------------------------------
// The loop

using ClientFactory =
    std::function<std::unique_ptr<ModelClient>(const SceneTable&, const OracleConfig&)>;

struct LoopResult {
  std::filesystem::path run_dir;
  nlohmann::json manifest;
};

inline std::string sim_scene_id(size_t index) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "scene-%04zu", index);
  return std::string(buffer);
}

inline SceneTable build_sim_world(const PipelineConfig& config) {
  SceneTable scenes;
  for (size_t i = 0; i < config.num_scenes; ++i) {
    std::string scene_id = sim_scene_id(i);
    scenes.emplace(scene_id,
                   generate_scene(config.sim, scene_id, derive_seed(config.seed, i)));
  }
  return scenes;
}

// Partition order: held-out eval, labeled seed, one tranche per schedule
// entry, then any unused remainder.
inline std::vector<std::vector<std::string>> plan_partitions(const PipelineConfig& config,
                                                             const SceneTable& scenes) {
  std::vector<std::string> scene_ids;
  scene_ids.reserve(scenes.size());
  for (const auto& [id, scene] : scenes) scene_ids.push_back(id);

  std::vector<double> fractions{config.plan.eval_fraction};
  double rest = 1.0 - config.plan.eval_fraction;
  fractions.push_back(rest * config.plan.labeled_fraction);
  for (double f : config.plan.schedule) fractions.push_back(rest * f);
  double assigned = 0.0;
  for (double f : fractions) assigned += f;
  fractions.push_back(std::max(0.0, 1.0 - assigned));
  return split_scene_ids(std::move(scene_ids), fractions, derive_seed(config.seed, 0x5011ull));
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

inline MetricsReport evaluate_learner(const ToyLearner& learner,
                                      const std::vector<VqaRecord>& eval_records,
                                      const SceneTable& scenes, ModelClient& client,
                                      const MetricsConfig& metrics) {
  std::vector<EvalPair> pairs;
  pairs.reserve(eval_records.size());
  for (const VqaRecord& record : eval_records) {
    EvalPair pair;
    pair.record_id = record.record_id;
    pair.category = record.category;
    pair.question = record.question;
    pair.gt = record.answer;
    pair.pred = learner.predict(record.question, scenes.at(record.scene_id));
    pairs.push_back(std::move(pair));
  }
  JudgeFn judge = [&client](const std::string& q, const std::string& gt, const std::string& pred) {
    return client.judge(q, gt, pred);
  };
  return evaluate(std::move(pairs), metrics.weights, judge,
                  "surrogate:" + client.embedder_id(), metrics.scoring());
}

}  // namespace detail

// Runs the configured schedule end to end. Only the oracle backend closes the
// loop (the toy learner needs ground-truth scenes for its context features);
// remote backends emit datasets through the generate/refine/mix subcommands
// instead. `factory` overrides client construction, which tests use for
// failure injection.
inline LoopResult run_loop(const PipelineConfig& config, const std::string& out_dir,
                           const ClientFactory& factory = {}) {
  namespace fs = std::filesystem;
  config.validate();
  if (config.backend != "oracle" && !factory) {
    throw Error("loop requires the oracle backend; use generate/refine/mix for '" +
                config.backend + "'");
  }

  fs::path run_dir(out_dir);
  if (fs::exists(run_dir / "manifest.json")) {
    throw Error(out_dir + " already holds a completed run");
  }
  fs::create_directories(run_dir);

  // World setup. All seeds derive from the run seed.
  SceneTable scenes = build_sim_world(config);

  OracleConfig oracle = config.oracle;
  oracle.seed = derive_seed(config.seed, 0xBACCull);
  std::unique_ptr<ModelClient> client =
      factory ? factory(scenes, oracle)
              : std::make_unique<OracleClient>(scenes, oracle, config.sim.image_width);

  auto partitions = plan_partitions(config, scenes);

  const std::vector<std::string>& eval_scenes = partitions[0];
  const std::vector<std::string>& labeled_scenes = partitions[1];

  std::vector<VqaRecord> eval_records;
  for (const std::string& id : eval_scenes) {
    auto scene_records =
        labeled_records(scenes.at(id), config.pipeline.edge_threshold, config.sim.image_width,
                        config.pipeline.sign_group_pairing);
    eval_records.insert(eval_records.end(), scene_records.begin(), scene_records.end());
  }

  std::vector<std::vector<VqaRecord>> datasets;
  datasets.emplace_back();
  for (const std::string& id : labeled_scenes) {
    auto scene_records =
        labeled_records(scenes.at(id), config.pipeline.edge_threshold, config.sim.image_width,
                        config.pipeline.sign_group_pairing);
    datasets[0].insert(datasets[0].end(), scene_records.begin(), scene_records.end());
  }

  detail::write_json(run_dir / "config.json", pipeline_config_to_json(config));
  save_jsonl((run_dir / "eval.jsonl").string(), eval_records);

  nlohmann::json manifest = {{"schema", "vqapipe.run.v1"},
                             {"config", pipeline_config_to_json(config)},
                             {"iterations", nlohmann::json::array()}};
  nlohmann::json timing = nlohmann::json::array();

  const size_t total_iterations = 1 + config.plan.schedule.size();
  for (size_t t = 0; t < total_iterations; ++t) {
    auto started = std::chrono::steady_clock::now();
    fs::path iter_dir = run_dir / ("iter-" + std::to_string(t));
    fs::path staging = run_dir / ("iter-" + std::to_string(t) + ".staging");
    if (fs::exists(iter_dir)) throw Error(iter_dir.string() + " already exists");

    try {
      fs::create_directories(staging);
      RefinementReport refinement;
      std::vector<VqaRecord> tranche;

      if (t == 0) {
        tranche = datasets[0];
        refinement.mode = "none";
        refinement.hint_source = std::string(hint_source_name(config.plan.hint_source));
        refinement.k = config.plan.k;
        refinement.threshold = config.plan.refinement.threshold;
        refinement.embedder_id = client->embedder_id();
        refinement.input = tranche.size();
        refinement.kept = tranche.size();
        for (const VqaRecord& r : tranche) refinement.count_score(r.s);
      } else {
        std::vector<SceneInput> inputs;
        for (const std::string& id : partitions[1 + t]) {
          inputs.push_back(scene_input_of(scenes.at(id)));
        }
        GenerationOptions gen_options;
        gen_options.iteration = static_cast<int>(t);
        gen_options.edge_threshold = config.pipeline.edge_threshold;
        gen_options.sign_group_pairing = config.pipeline.sign_group_pairing;
        gen_options.max_selected_nodes = config.pipeline.max_selected_nodes;
        gen_options.class_match_radius = config.pipeline.class_match_radius;
        gen_options.workers = config.pipeline.workers;
        GenerationResult generated = generate_pseudo(std::move(inputs), *client, gen_options);

        RefinementOptions refine_options;
        refine_options.mode = config.plan.refinement;
        refine_options.k = config.plan.k;
        refine_options.seed = derive_seed(config.seed, 0x3c07ull + t);
        refine_options.hint_source = config.plan.hint_source;
        refine_options.workers = config.pipeline.workers;
        auto [scored, report] =
            refine_dataset(*client, generated.graphs, generated.records, refine_options);
        refinement = std::move(report);

        tranche.reserve(scored.size());
        for (ScoredRecord& r : scored) tranche.push_back(std::move(r.record));

        std::string graphs_jsonl;
        for (const auto& [scene_id, graph] : generated.graphs) {
          graphs_jsonl += to_json(graph).dump();
          graphs_jsonl += '\n';
        }
        detail::write_text(staging / "graphs.jsonl", graphs_jsonl);
        datasets.push_back(tranche);
      }

      std::vector<VqaRecord> mixture = mix(datasets);
      ToyLearner learner;
      ToyLearner::TrainStats train_stats = learner.train(mixture, scenes);
      MetricsReport metrics_report = detail::evaluate_learner(learner, eval_records, scenes,
                                                              *client, config.metrics);

      save_jsonl((staging / "dataset.jsonl").string(), tranche);
      detail::write_json(staging / "refinement.json", refinement.to_json());
      detail::write_json(staging / "metrics.json", metrics_report.to_json());

      nlohmann::json entry = {
          {"t", t},
          {"scenes", t == 0 ? labeled_scenes.size() : partitions[1 + t].size()},
          {"dataset_digest", dataset_digest(tranche)},
          {"mixed_digest", dataset_digest(mixture)},
          {"mixed_records", mixture.size()},
          {"trained_records", train_stats.trained},
          {"refinement", refinement.to_json()},
          {"metrics", metrics_report.to_json()},
      };

      fs::rename(staging, iter_dir);  // commit point
      manifest["iterations"].push_back(std::move(entry));
      detail::write_json(run_dir / "manifest.json", manifest);
    } catch (...) {
      std::error_code ec;
      fs::remove_all(staging, ec);
      throw;
    }

    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - started)
                       .count();
    timing.push_back({{"t", t}, {"wall_clock_ms", elapsed}});
    detail::write_json(run_dir / "timing.json", timing);
  }

  return LoopResult{run_dir, manifest};
}

// Human-readable view of a run manifest for the `report` subcommand.
inline std::string render_manifest_table(const nlohmann::json& manifest) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-4s %-8s %-9s %-9s %-8s %-8s %-8s %-8s\n", "t",
                "records", "kept", "dropped", "acc", "judge", "match", "final");
  out += line;
  for (const auto& entry : manifest.at("iterations")) {
    const auto& metrics = entry.at("metrics");
    const auto& counts = entry.at("refinement").at("counts");
    std::snprintf(line, sizeof(line), "%-4lld %-8zu %-9zu %-9zu %-8.4f %-8.2f %-8.2f %-8.4f\n",
                  entry.at("t").get<long long>(), entry.at("mixed_records").get<size_t>(),
                  counts.at("kept").get<size_t>(), counts.at("dropped").get<size_t>(),
                  metrics.at("overall").at("accuracy").get<double>(),
                  metrics.at("overall").at("judge").get<double>(),
                  metrics.at("overall").at("match").get<double>(),
                  metrics.at("final").get<double>());
    out += line;
  }
  return out;
}

}  // namespace vqapipe

// Command-line front end: simulate, generate, refine, mix, eval, loop, report.
// Config precedence is flags > config file > built-in defaults. Exit codes:
// 0 success, 1 runtime failure, 2 usage error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vqapipe/datasets.hpp"
#include "vqapipe/http_client.hpp"
#include "vqapipe/httplib_transport.hpp"
#include "vqapipe/metrics.hpp"
#include "vqapipe/model_client.hpp"
#include "vqapipe/pipeline.hpp"
#include "vqapipe/prompts.hpp"
#include "vqapipe/scr.hpp"
#include "vqapipe/simworld.hpp"

namespace {

using nlohmann::json;

json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw vqapipe::Error("cannot open " + path);
  json j;
  in >> j;
  return j;
}

vqapipe::PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return vqapipe::PipelineConfig{};
  return vqapipe::pipeline_config_from_json(load_json_file(path));
}

std::vector<json> load_jsonl_docs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw vqapipe::Error("cannot open " + path);
  std::vector<json> docs;
  std::string line;
  while (std::getline(in, line)) {
    if (vqapipe::trim(line).empty()) continue;
    docs.push_back(json::parse(line));
  }
  return docs;
}

vqapipe::SceneTable load_truth(const std::string& path) {
  vqapipe::SceneTable scenes;
  for (const json& doc : load_jsonl_docs(path)) {
    vqapipe::GroundTruthScene scene = vqapipe::ground_truth_scene_from_json(doc);
    scenes.emplace(scene.scene_id, std::move(scene));
  }
  return scenes;
}

struct BackendBundle {
  // The world lives on the heap so the client's reference to it survives
  // moves of the bundle itself.
  std::shared_ptr<vqapipe::SceneTable> scenes;
  std::unique_ptr<vqapipe::ModelClient> client;
};

BackendBundle make_backend(const std::string& backend, const vqapipe::PipelineConfig& config,
                           const std::string& truth_path) {
  BackendBundle bundle;
  if (backend == "oracle") {
    if (truth_path.empty()) {
      throw vqapipe::Error("oracle backend requires --truth <ground-truth jsonl>");
    }
    bundle.scenes = std::make_shared<vqapipe::SceneTable>(load_truth(truth_path));
    vqapipe::OracleConfig oracle = config.oracle;
    oracle.seed = vqapipe::derive_seed(config.seed, 0xBACCull);
    bundle.client = std::make_unique<vqapipe::OracleClient>(*bundle.scenes, oracle,
                                                            config.sim.image_width);
  } else if (backend == "remote") {
    bundle.client = std::make_unique<vqapipe::RemoteClient>(
        config.client, std::make_shared<vqapipe::HttplibTransport>(config.client));
  } else {
    throw vqapipe::Error("unknown backend '" + backend + "' (expected oracle or remote)");
  }
  return bundle;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw vqapipe::Error("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 std::optional<size_t> scenes_override, std::optional<std::uint64_t> seed_override) {
  vqapipe::PipelineConfig config = load_config(config_path);
  if (scenes_override) config.num_scenes = *scenes_override;
  if (seed_override) config.seed = *seed_override;
  config.validate();

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::ofstream scenes_out(fs::path(out_dir) / "scenes.jsonl", std::ios::binary);
  std::ofstream truth_out(fs::path(out_dir) / "truth.jsonl", std::ios::binary);
  std::vector<vqapipe::VqaRecord> labeled;
  for (size_t i = 0; i < config.num_scenes; ++i) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "scene-%04zu", i);
    vqapipe::GroundTruthScene scene = vqapipe::generate_scene(
        config.sim, buffer, vqapipe::derive_seed(config.seed, i));
    scenes_out << vqapipe::to_json(vqapipe::scene_input_of(scene)).dump() << "\n";
    truth_out << vqapipe::to_json(scene).dump() << "\n";
    auto records = vqapipe::labeled_records(scene, config.pipeline.edge_threshold,
                                            config.sim.image_width);
    labeled.insert(labeled.end(), records.begin(), records.end());
  }
  vqapipe::save_jsonl((fs::path(out_dir) / "labeled.jsonl").string(), labeled);
  write_json_file((fs::path(out_dir) / "sim_manifest.json").string(),
                  {{"schema", "vqapipe.sim.v1"},
                   {"seed", config.seed},
                   {"num_scenes", config.num_scenes},
                   {"labeled_records", labeled.size()},
                   {"config", vqapipe::pipeline_config_to_json(config)}});
  std::cout << "simulated " << config.num_scenes << " scenes into " << out_dir << "\n";
  return 0;
}

int cmd_generate(const std::string& config_path, const std::string& scenes_path,
                 const std::string& backend, const std::string& truth_path, int iteration,
                 const std::string& records_out, const std::string& graphs_out) {
  vqapipe::PipelineConfig config = load_config(config_path);
  BackendBundle bundle = make_backend(backend, config, truth_path);

  std::vector<vqapipe::SceneInput> scenes;
  for (const json& doc : load_jsonl_docs(scenes_path)) {
    scenes.push_back(vqapipe::scene_input_from_json(doc));
  }
  vqapipe::GenerationOptions options;
  options.iteration = iteration;
  options.edge_threshold = config.pipeline.edge_threshold;
  options.max_selected_nodes = config.pipeline.max_selected_nodes;
  options.class_match_radius = config.pipeline.class_match_radius;
  options.workers = config.pipeline.workers;
  vqapipe::GenerationResult result =
      vqapipe::generate_pseudo(std::move(scenes), *bundle.client, options);

  vqapipe::save_jsonl(records_out, result.records);
  if (!graphs_out.empty()) {
    std::ofstream out(graphs_out, std::ios::binary);
    for (const auto& [scene_id, graph] : result.graphs) {
      out << vqapipe::to_json(graph).dump() << "\n";
    }
  }
  for (const std::string& line : result.log) std::cerr << line << "\n";
  std::cout << "generated " << result.records.size() << " records over "
            << result.graphs.size() << " scenes (" << result.scenes_skipped << " skipped)\n";
  return 0;
}

struct RefineFlags {
  std::optional<std::string> mode;
  std::optional<double> threshold;
  std::optional<size_t> k;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> hint_source;
};

int cmd_refine(const std::string& config_path, const std::string& records_path,
               const std::string& graphs_path, const std::string& backend,
               const std::string& truth_path, const RefineFlags& flags,
               const std::string& out_path, const std::string& report_path) {
  vqapipe::PipelineConfig config = load_config(config_path);
  BackendBundle bundle = make_backend(backend, config, truth_path);

  std::map<std::string, vqapipe::SceneGraph> graphs;
  for (const json& doc : load_jsonl_docs(graphs_path)) {
    vqapipe::SceneGraph graph = vqapipe::scene_graph_from_json(doc);
    graphs.emplace(graph.scene_id, std::move(graph));
  }

  // Flags win over the config file, which wins over defaults.
  vqapipe::RefinementOptions options;
  options.mode = config.plan.refinement;
  options.k = config.plan.k;
  options.seed = config.seed;
  options.hint_source = config.plan.hint_source;
  options.workers = config.pipeline.workers;
  if (flags.mode || flags.threshold) {
    std::string name = flags.mode.value_or(std::string(options.mode.name()));
    auto mode = vqapipe::RefinementMode::parse(name,
                                               flags.threshold.value_or(options.mode.threshold));
    if (!mode) throw vqapipe::Error("unknown refinement mode '" + name + "'");
    options.mode = *mode;
  }
  if (flags.k) options.k = *flags.k;
  if (flags.seed) options.seed = *flags.seed;
  if (flags.hint_source) {
    auto source = vqapipe::parse_hint_source(*flags.hint_source);
    if (!source) throw vqapipe::Error("unknown hint source '" + *flags.hint_source + "'");
    options.hint_source = *source;
  }

  auto [scored, report] = vqapipe::refine_dataset(*bundle.client, graphs,
                                                  vqapipe::load_jsonl(records_path), options);

  std::vector<vqapipe::VqaRecord> records;
  records.reserve(scored.size());
  for (vqapipe::ScoredRecord& r : scored) records.push_back(std::move(r.record));
  vqapipe::save_jsonl(out_path, records);
  if (!report_path.empty()) write_json_file(report_path, report.to_json());
  for (const std::string& line : report.log) std::cerr << line << "\n";
  std::cout << "kept " << report.kept << "/" << report.input << " records (dropped "
            << report.dropped << ", failed " << report.failed << ", empty pool "
            << report.empty_pool << ")\n";
  return 0;
}

int cmd_mix(const std::vector<std::string>& inputs, const std::string& out_path,
            const std::string& manifest_path) {
  std::vector<std::vector<vqapipe::VqaRecord>> datasets;
  std::vector<std::string> digests;
  for (const std::string& path : inputs) {
    datasets.push_back(vqapipe::load_jsonl(path));
    digests.push_back(vqapipe::dataset_digest(datasets.back()));
  }
  std::vector<vqapipe::VqaRecord> mixed = vqapipe::mix(datasets);
  vqapipe::save_jsonl(out_path, mixed);
  if (!manifest_path.empty()) {
    vqapipe::DatasetManifest manifest;
    manifest.name = out_path;
    manifest.source_digests = digests;
    manifest.record_count = mixed.size();
    manifest.refinement_mode = "-";
    manifest.digest = vqapipe::dataset_digest(mixed);
    write_json_file(manifest_path, manifest.to_json());
  }
  std::cout << "mixed " << mixed.size() << " records from " << inputs.size() << " datasets\n";
  return 0;
}

int cmd_eval(const std::string& gt_path, const std::string& pred_path,
             const std::string& config_path, bool table) {
  vqapipe::PipelineConfig config = load_config(config_path);
  std::vector<vqapipe::VqaRecord> gt = vqapipe::load_jsonl(gt_path);

  std::map<std::string, std::string> predictions;
  for (const json& doc : load_jsonl_docs(pred_path)) {
    if (!doc.contains("record_id") || !doc.contains("answer")) {
      throw vqapipe::SchemaError("$", "prediction lines need record_id and answer");
    }
    predictions[doc.at("record_id").get<std::string>()] = doc.at("answer").get<std::string>();
  }

  bool unmatched = false;
  std::vector<vqapipe::EvalPair> pairs;
  for (const vqapipe::VqaRecord& record : gt) {
    auto it = predictions.find(record.record_id);
    if (it == predictions.end()) {
      std::cerr << "missing prediction for record_id " << record.record_id << "\n";
      unmatched = true;
      continue;
    }
    pairs.push_back(vqapipe::EvalPair{record.record_id, record.category, record.question,
                                      record.answer, it->second});
    predictions.erase(it);
  }
  for (const auto& [record_id, answer] : predictions) {
    std::cerr << "prediction for unknown record_id " << record_id << "\n";
    unmatched = true;
  }

  vqapipe::MockClient embed_client(config.client.embedding_dim);
  vqapipe::JudgeFn judge = [&](const std::string& q, const std::string& g, const std::string& p) {
    return embed_client.judge(q, g, p);
  };
  vqapipe::MetricsReport report =
      vqapipe::evaluate(std::move(pairs), config.metrics.weights, judge,
                        "surrogate:" + embed_client.embedder_id(), config.metrics.scoring());
  std::cout << report.to_json().dump(2) << "\n";
  if (table) {
    std::fprintf(stderr, "accuracy %.4f | judge %.2f | bleu4 %.4f | rouge_l %.4f | cider %.4f | "
                         "match %.2f | final %.4f\n",
                 report.overall.accuracy, report.overall.judge, report.overall.bleu[3],
                 report.overall.rouge_l, report.overall.cider, report.overall.match,
                 report.final);
  }
  return unmatched ? 1 : 0;
}

int cmd_loop(const std::string& config_path, const std::string& out_dir) {
  vqapipe::PipelineConfig config = load_config(config_path);
  vqapipe::LoopResult result = vqapipe::run_loop(config, out_dir);
  std::cout << vqapipe::render_manifest_table(result.manifest);
  return 0;
}

int cmd_report(const std::string& run_dir, bool templates) {
  if (templates) {
    std::cout << vqapipe::prompt_catalog_json().dump(2) << "\n";
    return 0;
  }
  json manifest = load_json_file((std::filesystem::path(run_dir) / "manifest.json").string());
  std::cout << vqapipe::render_manifest_table(manifest);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised driving-VQA pseudo-label pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir, scenes_path, truth_path, backend = "oracle";
  std::string records_path, graphs_path, records_out, graphs_out, report_path;
  std::string gt_path, pred_path;
  std::string mix_out, mix_manifest, run_dir;
  std::vector<std::string> mix_inputs;
  RefineFlags refine_flags;
  int iteration = 1;
  bool eval_table = false, report_templates = false;
  std::optional<size_t> scenes_override;
  std::optional<std::uint64_t> seed_override;

  auto* simulate = app.add_subcommand("simulate", "emit synthetic scenes + ground truth");
  simulate->add_option("--config", config_path, "pipeline config JSON");
  simulate->add_option("--out", out_dir, "output directory")->required();
  simulate->add_option("--scenes", scenes_override, "override scene count");
  simulate->add_option("--seed", seed_override, "override run seed");

  auto* generate = app.add_subcommand("generate", "pseudo-label unlabeled scenes");
  generate->add_option("--config", config_path, "pipeline config JSON");
  generate->add_option("--scenes", scenes_path, "scene inputs JSONL")->required();
  generate->add_option("--backend", backend, "oracle | remote");
  generate->add_option("--truth", truth_path, "ground-truth JSONL (oracle backend)");
  generate->add_option("--iteration", iteration, "tranche index (>= 1)");
  generate->add_option("--out", records_out, "records JSONL output")->required();
  generate->add_option("--graphs", graphs_out, "scene-graph JSONL output");

  auto* refine = app.add_subcommand("refine", "self-consistency refinement");
  refine->add_option("--config", config_path, "pipeline config JSON");
  refine->add_option("--records", records_path, "records JSONL")->required();
  refine->add_option("--graphs", graphs_path, "scene graphs JSONL")->required();
  refine->add_option("--backend", backend, "oracle | remote");
  refine->add_option("--truth", truth_path, "ground-truth JSONL (oracle backend)");
  refine->add_option("--mode", refine_flags.mode, "none | filter | score");
  refine->add_option("--threshold", refine_flags.threshold, "filter threshold (drop s <= t)");
  refine->add_option("--k", refine_flags.k, "hints per re-ask");
  refine->add_option("--seed", refine_flags.seed, "sampling seed");
  refine->add_option("--hint-source", refine_flags.hint_source,
                     "attributions_edges | attributions | edges | none");
  refine->add_option("--out", records_out, "scored records JSONL output")->required();
  refine->add_option("--report", report_path, "refinement report JSON output");

  auto* mix = app.add_subcommand("mix", "concatenate datasets, checking record ids");
  mix->add_option("--out", mix_out, "mixed JSONL output")->required();
  mix->add_option("--manifest", mix_manifest, "dataset manifest JSON output");
  mix->add_option("inputs", mix_inputs, "input JSONL datasets")->required()->expected(-1);

  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  eval->add_option("--config", config_path, "pipeline config JSON (weights)");
  eval->add_option("--gt", gt_path, "ground-truth records JSONL")->required();
  eval->add_option("--pred", pred_path, "predictions JSONL (record_id + answer)")->required();
  eval->add_flag("--table", eval_table, "also print a one-line summary to stderr");

  auto* loop = app.add_subcommand("loop", "run the full iterative schedule");
  loop->add_option("--config", config_path, "pipeline config JSON")->required();
  loop->add_option("--out", out_dir, "run directory")->required();

  auto* report = app.add_subcommand("report", "render run manifests");
  report->add_option("--run", run_dir, "run directory");
  report->add_flag("--templates", report_templates, "print the prompt template catalog");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage errors exit 2; --help exits 0
  }

  try {
    if (simulate->parsed()) return cmd_simulate(config_path, out_dir, scenes_override, seed_override);
    if (generate->parsed()) {
      return cmd_generate(config_path, scenes_path, backend, truth_path, iteration, records_out,
                          graphs_out);
    }
    if (refine->parsed()) {
      return cmd_refine(config_path, records_path, graphs_path, backend, truth_path,
                        refine_flags, records_out, report_path);
    }
    if (mix->parsed()) return cmd_mix(mix_inputs, mix_out, mix_manifest);
    if (eval->parsed()) return cmd_eval(gt_path, pred_path, config_path, eval_table);
    if (loop->parsed()) return cmd_loop(config_path, out_dir);
    if (report->parsed()) {
      if (!report_templates && run_dir.empty()) {
        std::cerr << "report: need --run <dir> or --templates\n";
        return 2;
      }
      return cmd_report(run_dir, report_templates);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

#include "cadd/cli.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "cadd/evaluation.hpp"
#include "cadd/features.hpp"
#include "cadd/hard_classifier.hpp"
#include "cadd/plot.hpp"
#include "cadd/png_io.hpp"
#include "cadd/service.hpp"
#include "cadd/similarity_graph.hpp"
#include "cadd/trainers.hpp"

namespace cadd {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string variant;
  std::string data;
  std::string graph;
  std::string checkpoints;
  std::string report;
  std::optional<int> port;
  std::optional<int> iterations;
  std::optional<std::uint64_t> view_seed;
  std::string eval_data;
  std::string feature_kind;
  std::string static_dir;
  int pixels = 400;
  int frames = 50;
  int progress = 0;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

RunConfig resolve(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (const char* root = std::getenv("CADD_DATA_ROOT"); root && *root && o.data.empty()) c.paths.data = root;
  if (!o.data.empty()) c.paths.data = o.data;
  if (!o.graph.empty()) c.paths.graph = o.graph;
  if (!o.out.empty()) c.paths.out = o.out;
  if (o.seed) {
    c.scene.seed = *o.seed;
    c.graph.seed = *o.seed;
    c.train.seed = *o.seed;
    c.eval.seed = *o.seed;
  }
  if (o.view_seed) c.scene.view_seed = *o.view_seed;
  if (!o.variant.empty()) c.train.variant = variant_from_string(o.variant);
  if (o.iterations) c.train.iterations = *o.iterations;
  if (!o.feature_kind.empty()) c.graph.feature_kind = feature_kind_from_string(o.feature_kind);
  if (o.port) c.service.port = *o.port;
  if (!o.static_dir.empty()) c.service.static_dir = o.static_dir;
  c.validate();
  return c;
}

void print_config(std::ostream& out, const std::string& command, const RunConfig& c, const json& extra = {}) {
  json j = c.to_json();
  j["command"] = command;
  if (!extra.is_null()) j["arguments"] = extra;
  out << j.dump(2) << std::endl;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  return json::parse(f);
}

std::string model_name(const std::string& path) { return fs::path(path).stem().string(); }

std::vector<int> category_labels(const Dataset& d, bool instance_level) {
  std::map<std::string, int> ids;
  std::vector<int> out;
  for (const auto& s : d.sequences) {
    const auto& label = instance_level ? s.true_instance_class : s.true_category;
    if (!label) throw std::invalid_argument("sequence '" + s.sequence_id + "' has no ground-truth label");
    const int id = ids.emplace(*label, static_cast<int>(ids.size())).first->second;
    out.insert(out.end(), s.frames.size(), id);
  }
  return out;
}

int cmd_gen_data(const RunConfig& c, std::ostream& out) {
  const Dataset d = generate_synthetic_dataset(c.scene);
  save_dataset(d, c.paths.out);
  out << "wrote " << d.sequences.size() << " sequences, " << d.frame_count() << " frames to " << c.paths.out << '\n';
  return 0;
}

FeatureExtractor extractor_for(const GraphConfig& g, const std::string& checkpoint) {
  FeatureExtractor e;
  e.kind = g.feature_kind;
  e.target_size = g.feature_size;
  if (g.feature_kind != FeatureKind::raw_image) {
    if (checkpoint.empty()) throw ConfigError(to_string(g.feature_kind) + " features need --checkpoints <model.ckpt>");
    std::shared_ptr<const DescriptorModel> model = load_checkpoint(checkpoint).model;
    e.model = model;
    if (g.feature_kind == FeatureKind::pretrained_backbone) e.encoder = descriptor_grid_encoder(model);
  }
  return e;
}

int cmd_build_graph(const RunConfig& c, const Options& o, std::ostream& out) {
  const Dataset d = load_dataset(c.paths.data);
  const auto ckpts = split_list(o.checkpoints);
  const SimilarityGraph g = build_graph(d, c.graph, extractor_for(c.graph, ckpts.empty() ? "" : ckpts[0]));
  const fs::path path = o.out.empty() ? fs::path(c.paths.graph) : fs::path(o.out);
  write_text(path, g.to_json().dump(1));
  out << "wrote graph with " << g.size() << " nodes to " << path.string();
  if (g.global_clusters_clamped) out << " (global clusters clamped to " << g.effective_global_clusters << ")";
  out << '\n';
  return 0;
}

int cmd_train(const RunConfig& c, const Options& o, std::ostream& out) {
  const Dataset d = load_dataset(c.paths.data);
  const fs::path dir = c.paths.out;
  fs::create_directories(dir);
  const std::string stem = to_string(c.train.variant);
  std::ofstream log(dir / (stem + "_log.jsonl"));
  TrainHooks hooks{&log, o.progress};
  TrainResult r;
  if (c.train.variant == Variant::vanilla) {
    r = train_vanilla(d, c.train, hooks);
  } else {
    const SimilarityGraph g = SimilarityGraph::from_json(read_json(c.paths.graph));
    if (!g.dataset_hash.empty() && g.dataset_hash != dataset_hash(d))
      throw ConfigError("graph " + c.paths.graph + " was built from a different dataset");
    if (c.train.variant == Variant::soft) {
      r = train_soft(d, g, c.train, hooks);
    } else {
      const auto ckpts = split_list(o.checkpoints);
      r = train_hard(d, g, c.train, extractor_for(g.config, ckpts.empty() ? "" : ckpts[0]), hooks);
    }
  }
  save_checkpoint(r.checkpoint, dir / (stem + ".ckpt"));
  out << "trained " << stem << " for " << r.state.steps << " steps (" << r.state.skipped << " samples skipped); wrote "
      << (dir / (stem + ".ckpt")).string() << '\n';
  return 0;
}

int cmd_eval(const RunConfig& c, const Options& o, std::ostream& out) {
  const auto ckpts = split_list(o.checkpoints);
  if (ckpts.empty()) throw ConfigError("eval needs --checkpoints a.ckpt[,b.ckpt...]");
  const Dataset eval_data = o.eval_data.empty() ? held_out_views(load_dataset(c.paths.data), c.eval.view_seed)
                                                : load_dataset(o.eval_data);
  const json report = evaluation_report(ckpts, eval_data, c.eval);
  const fs::path path = o.report.empty() ? fs::path(c.paths.out) / "report.json" : fs::path(o.report);
  write_text(path, report.dump(2));

  std::vector<std::pair<std::string, CdfResult>> curves;
  std::ostringstream csv;
  csv << "model,error\n";
  for (const auto& m : report.at("models")) {
    CdfResult cdf;
    cdf.errors = m.at("errors").get<std::vector<double>>();
    for (double e : cdf.errors) csv << m.at("name").get<std::string>() << ',' << e << '\n';
    curves.emplace_back(m.at("name").get<std::string>(), std::move(cdf));
  }
  fs::path plot = path;
  plot.replace_filename(path.stem().string() + "_cdf.png");
  png::write8(plot, render_cdf_plot(curves, c.eval.auc_cutoff));
  fs::path errors = path;
  errors.replace_filename(path.stem().string() + "_errors.csv");
  write_text(errors, csv.str());
  for (const auto& m : report.at("models"))
    out << m.at("name").get<std::string>() << ": auc " << m.at("keypoint_transfer").at("auc").get<double>()
        << ", on-object " << m.at("on_object").at("rate").get<double>() << '\n';
  out << "wrote " << path.string() << ", " << plot.string() << '\n';
  return 0;
}

int cmd_export(const RunConfig& c, const Options& o, std::ostream& out) {
  const auto ckpts = split_list(o.checkpoints);
  if (ckpts.size() != 1) throw ConfigError("export needs exactly one checkpoint in --checkpoints");
  const Dataset d = load_dataset(c.paths.data);
  const Checkpoint ck = load_checkpoint(ckpts[0]);
  const fs::path path = o.out.empty() ? fs::path("descriptors.csv") : fs::path(o.out);
  std::ostringstream csv;
  export_descriptor_samples(model_descriptor_fn(ck.model), d, o.pixels, o.frames, c.eval.seed, csv);
  write_text(path, csv.str());
  out << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_serve(const RunConfig& c, const Options& o, std::ostream& out) {
  const auto ckpts = split_list(o.checkpoints);
  if (ckpts.empty()) throw ConfigError("serve needs at least one checkpoint in --checkpoints");
  std::vector<NamedModel> models;
  for (const auto& p : ckpts) models.push_back({model_name(p), load_checkpoint(p)});
  std::optional<SimilarityGraph> graph;
  if (fs::exists(c.paths.graph)) graph = SimilarityGraph::from_json(read_json(c.paths.graph));
  Dataset d = service_dataset(load_dataset(c.paths.data), c.service.composites, c.service.composite_seed);
  InferenceService service(std::move(d), std::move(models), std::move(graph), c.service);
  const int port = service.start(c.service.host, c.service.port);
  out << "serving on http://" << c.service.host << ':' << port << std::endl;
  service.wait();
  return 0;
}

}  // namespace

Dataset held_out_views(const Dataset& training, std::uint64_t view_seed) {
  if (!training.metadata.contains("scene"))
    throw std::invalid_argument("dataset carries no scene description; pass evaluation data explicitly");
  SceneSpec spec = SceneSpec::from_json(training.metadata.at("scene"));
  spec.view_seed = view_seed;
  return generate_synthetic_dataset(spec);
}

json evaluation_report(const std::vector<std::string>& checkpoint_paths, const Dataset& eval_data,
                       const EvalConfig& config) {
  const auto pairs = make_keypoint_pairs(eval_data, config.pairs_per_sequence, config.seed);
  CompositeOptions copts;
  copts.cases = config.composite_cases;
  copts.queries_per_case = config.queries_per_case;
  copts.same_instance = config.same_instance;
  copts.seed = config.seed + 1;
  const auto cases = make_composite_cases(eval_data, copts);

  json models = json::array();
  auto add = [&](const std::string& name, const DescriptorFn& fn, json extra) {
    const ModelMetrics m = evaluate_descriptors(name, fn, eval_data, pairs, cases);
    json j = m.to_json();
    j["keypoint_transfer"] = m.transfer.to_json(config.auc_cutoff);
    j["errors"] = m.transfer.errors;
    for (auto& [k, v] : extra.items()) j[k] = v;
    models.push_back(std::move(j));
  };
  add("gradient_histogram_baseline", gradient_histogram_descriptor_fn(), json::object());
  for (const auto& path : checkpoint_paths) {
    const Checkpoint ck = load_checkpoint(path);
    json extra = {{"checkpoint", fs::path(path).filename().string()},
                  {"variant", ck.metadata.value("variant", std::string("unknown"))}};
    if (ck.classifier) {
      const ProjectionNetwork net = ProjectionNetwork::from_json(ck.classifier->projection);
      const ClassModel classes = ClassModel::from_json(ck.classifier->classes);
      FeatureExtractor fx;
      fx.kind = feature_kind_from_string(ck.classifier->feature_kind);
      fx.target_size = ck.classifier->feature_size;
      if (fx.kind == FeatureKind::raw_image) {
        std::vector<int> predicted;
        for (const auto& s : eval_data.sequences)
          for (const auto& f : s.frames) predicted.push_back(assign_class(net, classes, fx(f)));
        const bool instance_level = classes.k() > 2;
        extra["clustering_accuracy"] = {{"k", classes.k()},
                                        {"accuracy", clustering_accuracy(predicted, category_labels(eval_data, instance_level))}};
      }
    }
    add(model_name(path), model_descriptor_fn(ck.model), extra);
  }
  return {{"format", "cadd-metrics-report"},
          {"eval", config.to_json()},
          {"dataset_hash", dataset_hash(eval_data)},
          {"keypoint_pairs", pairs.size()},
          {"composite_cases", cases.size()},
          {"models", models}};
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Class-aware dense object descriptors: data generation, training, evaluation and serving", "cadd"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration JSON")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override every seed in the configuration");
    sub->add_option("--out", o.out, "Output path");
    sub->add_option("--data", o.data, "Dataset directory (default: $CADD_DATA_ROOT or paths.data)");
  };
  CLI::App* gen = app.add_subcommand("gen-data", "Render the synthetic dataset");
  common(gen);
  gen->add_option("--view-seed", o.view_seed, "Camera orbit seed");
  CLI::App* graph = app.add_subcommand("build-graph", "Build the sequence similarity graph");
  common(graph);
  graph->add_option("--feature-kind", o.feature_kind, "raw_image | masked_descriptor | pretrained_backbone");
  graph->add_option("--checkpoints", o.checkpoints, "Descriptor model for learned feature kinds");
  CLI::App* train = app.add_subcommand("train", "Train a descriptor network");
  common(train);
  train->add_option("--variant", o.variant, "vanilla | hard | soft")
      ->check(CLI::IsMember({"vanilla", "hard", "soft"}));
  train->add_option("--graph", o.graph, "Similarity graph JSON (soft, hard)");
  train->add_option("--iterations", o.iterations, "Optimizer steps");
  train->add_option("--checkpoints", o.checkpoints, "Descriptor model for learned graph features (hard)");
  train->add_option("--progress", o.progress, "Print a progress line every N steps");
  CLI::App* eval = app.add_subcommand("eval", "Compare checkpoints on held-out views");
  common(eval);
  eval->add_option("--checkpoints", o.checkpoints, "Comma-separated checkpoint files")->required();
  eval->add_option("--report", o.report, "Report JSON path");
  eval->add_option("--eval-data", o.eval_data, "Evaluation dataset directory (default: held-out views)");
  CLI::App* exp = app.add_subcommand("export", "Export sampled on-object descriptors as CSV");
  common(exp);
  exp->add_option("--checkpoints", o.checkpoints, "Checkpoint file")->required();
  exp->add_option("--pixels", o.pixels, "Pixels per frame");
  exp->add_option("--frames", o.frames, "Frames per sequence");
  CLI::App* serve = app.add_subcommand("serve", "Serve descriptors and matches over HTTP");
  common(serve);
  serve->add_option("--checkpoints", o.checkpoints, "Comma-separated checkpoint files")->required();
  serve->add_option("--graph", o.graph, "Similarity graph JSON");
  serve->add_option("--port", o.port, "Listening port");
  serve->add_option("--static", o.static_dir, "Directory mounted at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  RunConfig config;
  try {
    config = resolve(o);
    if (name == "gen-data" && o.out.empty()) config.paths.out = config.paths.data;
    json args = {{"checkpoints", o.checkpoints}, {"report", o.report}};
    print_config(out, name, config, args);
  } catch (const std::exception& e) {
    err << "configuration error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (name == "gen-data") return cmd_gen_data(config, out);
    if (name == "build-graph") return cmd_build_graph(config, o, out);
    if (name == "train") return cmd_train(config, o, out);
    if (name == "eval") return cmd_eval(config, o, out);
    if (name == "export") return cmd_export(config, o, out);
    if (name == "serve") return cmd_serve(config, o, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace cadd

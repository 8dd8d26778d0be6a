#include "cadd/config.hpp"

#include <fstream>
#include <stdexcept>

namespace cadd {

using nlohmann::json;

void EvalConfig::validate() const {
  if (pairs_per_sequence < 1) throw std::invalid_argument("eval: pairs_per_sequence must be >= 1");
  if (composite_cases < 0) throw std::invalid_argument("eval: composite_cases must be >= 0");
  if (queries_per_case < 1) throw std::invalid_argument("eval: queries_per_case must be >= 1");
  if (!(auc_cutoff > 0.0)) throw std::invalid_argument("eval: auc_cutoff must be positive");
  if (classes < 2) throw std::invalid_argument("eval: classes must be >= 2");
}

json EvalConfig::to_json() const {
  return {{"pairs_per_sequence", pairs_per_sequence}, {"composite_cases", composite_cases},
          {"queries_per_case", queries_per_case},     {"same_instance", same_instance},
          {"auc_cutoff", auc_cutoff},                 {"view_seed", view_seed},
          {"seed", seed},                             {"classes", classes}};
}

EvalConfig EvalConfig::from_json(const json& j) {
  EvalConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "pairs_per_sequence") c.pairs_per_sequence = value.get<int>();
    else if (key == "composite_cases") c.composite_cases = value.get<int>();
    else if (key == "queries_per_case") c.queries_per_case = value.get<int>();
    else if (key == "same_instance") c.same_instance = value.get<bool>();
    else if (key == "auc_cutoff") c.auc_cutoff = value.get<double>();
    else if (key == "view_seed") c.view_seed = value.get<std::uint64_t>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "classes") c.classes = value.get<int>();
    else throw std::invalid_argument("eval config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

void ServiceConfig::validate() const {
  if (port < 0 || port > 65535) throw std::invalid_argument("service: port out of range");
  if (cache_frames < 1) throw std::invalid_argument("service: cache_frames must be >= 1");
  if (composites < 0) throw std::invalid_argument("service: composites must be >= 0");
}

json ServiceConfig::to_json() const {
  return {{"host", host},           {"port", port},         {"cache_frames", cache_frames},
          {"static_dir", static_dir}, {"composites", composites}, {"composite_seed", composite_seed}};
}

ServiceConfig ServiceConfig::from_json(const json& j) {
  ServiceConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "host") c.host = value.get<std::string>();
    else if (key == "port") c.port = value.get<int>();
    else if (key == "cache_frames") c.cache_frames = value.get<std::size_t>();
    else if (key == "static_dir") c.static_dir = value.get<std::string>();
    else if (key == "composites") c.composites = value.get<int>();
    else if (key == "composite_seed") c.composite_seed = value.get<std::uint64_t>();
    else throw std::invalid_argument("service config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

json PathsConfig::to_json() const { return {{"data", data}, {"graph", graph}, {"out", out}}; }

PathsConfig PathsConfig::from_json(const json& j) {
  PathsConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "data") c.data = value.get<std::string>();
    else if (key == "graph") c.graph = value.get<std::string>();
    else if (key == "out") c.out = value.get<std::string>();
    else throw std::invalid_argument("paths config: unknown key '" + key + "'");
  }
  return c;
}

void RunConfig::validate() const {
  scene.validate();
  graph.validate();
  train.validate();
  eval.validate();
  service.validate();
}

json RunConfig::to_json() const {
  json t = train.to_json();
  const json model = t["model"];
  t.erase("model");
  return {{"scene", scene.to_json()}, {"graph", graph.to_json()},     {"train", t},
          {"model", model},           {"eval", eval.to_json()},       {"service", service.to_json()},
          {"paths", paths.to_json()}};
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("run config: top level must be an object");
  RunConfig c;
  // Sections merge over the defaults so partial files stay valid.
  auto merged = [](json base, const json& over) {
    for (const auto& [k, v] : over.items()) base[k] = v;
    return base;
  };
  for (const auto& [key, value] : j.items()) {
    if (!value.is_object()) throw std::invalid_argument("run config: section '" + key + "' must be an object");
    if (key == "scene") c.scene = SceneSpec::from_json(merged(c.scene.to_json(), value));
    else if (key == "graph") c.graph = GraphConfig::from_json(merged(c.graph.to_json(), value));
    else if (key == "train") {
      const ModelConfig model = c.train.model;
      c.train = TrainConfig::from_json(merged(c.train.to_json(), value));
      if (!value.contains("model")) c.train.model = model;
    } else if (key == "model") {
      c.train.model = ModelConfig::from_json(merged(c.train.model.to_json(), value));
    } else if (key == "eval") c.eval = EvalConfig::from_json(value);
    else if (key == "service") c.service = ServiceConfig::from_json(value);
    else if (key == "paths") c.paths = PathsConfig::from_json(value);
    else throw std::invalid_argument("run config: unknown section '" + key + "'");
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config file " + path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

}  // namespace cadd

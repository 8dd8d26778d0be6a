#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "cadd/dataset.hpp"
#include "cadd/similarity_graph.hpp"
#include "cadd/trainers.hpp"

namespace cadd {

struct EvalConfig {
  int pairs_per_sequence = 10;
  int composite_cases = 20;
  int queries_per_case = 16;
  bool same_instance = false;
  double auc_cutoff = 0.2;
  std::uint64_t view_seed = 101;  // held-out views rendered for evaluation
  std::uint64_t seed = 5;
  int classes = 2;                // K for clustering accuracy of hard checkpoints

  void validate() const;
  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& j);
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t cache_frames = 64;
  std::string static_dir;
  int composites = 0;  // seeded two-object scenes exposed as an extra sequence
  std::uint64_t composite_seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ServiceConfig from_json(const nlohmann::json& j);
};

struct PathsConfig {
  std::string data = "data";
  std::string graph = "graph.json";
  std::string out = "out";

  nlohmann::json to_json() const;
  static PathsConfig from_json(const nlohmann::json& j);
};

/// Every pipeline setting in one place. JSON sections: scene, graph, train, model, eval, service, paths.
struct RunConfig {
  SceneSpec scene = SceneSpec::desk_default();
  GraphConfig graph;
  TrainConfig train;
  EvalConfig eval;
  ServiceConfig service;
  PathsConfig paths;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys throw std::invalid_argument.
  static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace cadd

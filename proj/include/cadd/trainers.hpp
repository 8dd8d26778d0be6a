#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadd/dataset.hpp"
#include "cadd/descriptor_model.hpp"
#include "cadd/geometry.hpp"
#include "cadd/hard_classifier.hpp"
#include "cadd/optimizer.hpp"
#include "cadd/similarity_graph.hpp"

namespace cadd {

enum class Variant { vanilla, soft, hard };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

struct TrainConfig {
  Variant variant = Variant::vanilla;
  int iterations = 3500;
  ModelConfig model;
  OptimizerConfig optimizer;
  double margin = 0.5;
  int n_matches = 512;
  int nonmatches_per_match = 16;
  double depth_tolerance = 0.003;  // metres
  double exclusion_radius = 5.0;   // pixels, within-sequence non-matches
  AugmentationSpec augmentation = AugmentationSpec::training_default();
  std::uint64_t seed = 0;
  int max_consecutive_skips = 1000;
  // DON+Hard
  int projection_steps = 500;
  int projection_hidden = 64;
  int projection_output = 16;
  int classes = 2;
  double same_sequence_probability = 0.5;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Images and pixel pairs for one optimization step. Pairs index the augmented images.
struct StepSample {
  RgbImage image_a;
  RgbImage image_b;
  std::optional<RgbImage> image_n;
  MatchBatch matches;               // a <-> b
  MatchBatch nonmatches;            // a <-> b
  MatchBatch negative_nonmatches;   // a <-> n
  double confidence = 0.0;
  std::string kind = "same_sequence";
};

struct StepLosses {
  double match = 0.0;
  double nonmatch = 0.0;
  double negative = 0.0;
  double confidence = 0.0;
  double total = 0.0;  // match + nonmatch + confidence * negative
};

/// Forward pass, losses and (optionally) accumulated parameter gradients for one sample.
StepLosses evaluate_step(DescriptorModel& model, const StepSample& sample, double margin, bool backprop);

struct StepRecord {
  long step = 0;
  std::string kind;
  StepLosses losses;
  double learning_rate = 0.0;
  long skipped_before = 0;  // samples rejected since the previous step

  nlohmann::json to_json() const;
};

struct TrainState {
  long steps = 0;
  long skipped = 0;
  std::vector<StepRecord> history;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainState state;
  std::vector<double> projection_losses;          // DON+Hard phase one
  std::vector<std::vector<int>> frame_classes;    // DON+Hard class per frame
};

/// Per-step log sink (one JSON object per line). May be null.
struct TrainHooks {
  std::ostream* log = nullptr;
  int progress_every = 0;  // print a summary line to stderr every N steps; 0 disables
};

TrainResult train_vanilla(const Dataset& dataset, const TrainConfig& config, const TrainHooks& hooks = {});

TrainResult train_soft(const Dataset& dataset, const SimilarityGraph& graph, const TrainConfig& config,
                       const TrainHooks& hooks = {});

/// Phase one trains the projection network on `extractor` features and clusters them into
/// `config.classes` classes; phase two trains the DON with class-filtered cross pairs.
/// A non-null `classifier` replaces phase one.
TrainResult train_hard(const Dataset& dataset, const SimilarityGraph& graph, const TrainConfig& config,
                       const FeatureExtractor& extractor, const TrainHooks& hooks = {},
                       const FrameClassifier& classifier = nullptr);

enum class HardPairKind { same_sequence, cross_sequence, skip };

struct HardPair {
  HardPairKind kind = HardPairKind::skip;
  std::size_t seq_a = 0, frame_a = 0;
  std::size_t seq_b = 0, frame_b = 0;
};

/// Phase-two pair: same-sequence with probability p, else a cross-sequence pair that is
/// kept only when the classifier assigns the two frames different classes.
HardPair sample_pair_hard_phase2(const Dataset& dataset, const FrameClassifier& classifier, double p_same, Rng& rng);

/// Training config of a loaded checkpoint, when it was saved by one of the trainers.
std::optional<TrainConfig> checkpoint_train_config(const Checkpoint& ckpt);

}  // namespace cadd

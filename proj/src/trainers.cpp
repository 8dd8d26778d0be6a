#include "cadd/trainers.hpp"

#include <cmath>
#include <iostream>
#include <map>
#include <random>
#include <stdexcept>

#include "cadd/losses.hpp"

namespace cadd {

namespace {

using nlohmann::json;

json augmentation_to_json(const AugmentationSpec& a) {
  return {{"background_randomization", a.background_randomization},
          {"brightness", a.brightness},
          {"contrast", a.contrast},
          {"saturation", a.saturation},
          {"hue", a.hue},
          {"scale_min", a.scale_min},
          {"scale_max", a.scale_max},
          {"min_visible_mask", a.min_visible_mask}};
}

AugmentationSpec augmentation_from_json(const json& j) {
  AugmentationSpec a = AugmentationSpec::identity();
  for (const auto& [key, value] : j.items()) {
    if (key == "background_randomization") a.background_randomization = value.get<bool>();
    else if (key == "brightness") a.brightness = value.get<double>();
    else if (key == "contrast") a.contrast = value.get<double>();
    else if (key == "saturation") a.saturation = value.get<double>();
    else if (key == "hue") a.hue = value.get<double>();
    else if (key == "scale_min") a.scale_min = value.get<double>();
    else if (key == "scale_max") a.scale_max = value.get<double>();
    else if (key == "min_visible_mask") a.min_visible_mask = value.get<double>();
    else throw std::invalid_argument("augmentation: unknown key '" + key + "'");
  }
  a.validate();
  return a;
}

Eigen::MatrixXd gather(const DescriptorImage& d, const std::vector<Pixel>& pixels) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(pixels.size()), d.dim());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const float* x = d.at(pixels[i].u, pixels[i].v);
    for (int c = 0; c < d.dim(); ++c) out(static_cast<Eigen::Index>(i), c) = x[c];
  }
  return out;
}

void scatter(Image<float>& grad, const std::vector<Pixel>& pixels, const Eigen::MatrixXd& g, double weight) {
  for (std::size_t i = 0; i < pixels.size(); ++i)
    for (int c = 0; c < grad.channels(); ++c)
      grad(pixels[i].u, pixels[i].v, c) += static_cast<float>(weight * g(static_cast<Eigen::Index>(i), c));
}

std::size_t uniform_index(std::size_t n, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// Two distinct frame indices of one sequence.
std::pair<std::size_t, std::size_t> frame_pair(std::size_t n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("training: every sequence needs at least two frames");
  const std::size_t a = uniform_index(n, rng);
  std::size_t b = uniform_index(n - 1, rng);
  if (b >= a) ++b;
  return {a, b};
}

std::size_t nonmatch_count(const TrainConfig& c) {
  return static_cast<std::size_t>(c.n_matches) * static_cast<std::size_t>(c.nonmatches_per_match);
}

// Samples pairs on the raw frames, augments both images and moves the pairs along.
// Returns false when the sample has to be rejected.
bool build_same_sequence(const Frame& fa, const Frame& fb, const TrainConfig& c, Rng& rng, StepSample& s,
                         PixelRemap* remap_a = nullptr) {
  s.matches = find_matches(fa, fb, static_cast<std::size_t>(c.n_matches), c.depth_tolerance, rng);
  if (s.matches.empty()) return false;
  s.nonmatches = sample_nonmatches(fa, fb, nonmatch_count(c), NonMatchMode::anywhere, c.exclusion_radius, rng);
  AugmentedImage aa, ab;
  try {
    aa = apply_augmentations(fa, c.augmentation, rng);
    ab = apply_augmentations(fb, c.augmentation, rng);
  } catch (const std::runtime_error&) {
    return false;
  }
  transport_pairs(s.matches, aa.remap, ab.remap, fa.width(), fa.height());
  transport_pairs(s.nonmatches, aa.remap, ab.remap, fa.width(), fa.height());
  if (s.matches.empty()) return false;
  s.image_a = std::move(aa.rgb);
  s.image_b = std::move(ab.rgb);
  if (remap_a) *remap_a = aa.remap;
  return true;
}

struct Trainer {
  const Dataset& dataset;
  const TrainConfig& config;
  const TrainHooks& hooks;
  Checkpoint ckpt;
  Rng rng;
  TrainState state;

  Trainer(const Dataset& d, const TrainConfig& c, const TrainHooks& h) : dataset(d), config(c), hooks(h), rng(c.seed) {
    config.validate();
    dataset.validate();
    if (dataset.sequences.empty()) throw std::invalid_argument("training: dataset has no sequences");
    ckpt.config = config.model;
    ckpt.model = std::make_shared<DescriptorModel>(config.model);
  }

  // `draw` fills a sample and returns false to reject it.
  template <typename Draw>
  void run(Draw draw) {
    Optimizer opt(config.optimizer, ckpt.model->parameters());
    long consecutive = 0;
    while (state.steps < config.iterations) {
      StepSample sample;
      if (!draw(sample)) {
        ++state.skipped;
        if (++consecutive > config.max_consecutive_skips)
          throw std::runtime_error("training: " + std::to_string(consecutive) +
                                   " consecutive samples rejected; check masks, depth and pose data");
        continue;
      }
      StepRecord rec;
      rec.step = state.steps;
      rec.kind = sample.kind;
      rec.learning_rate = opt.current_learning_rate();
      rec.skipped_before = consecutive;
      rec.losses = evaluate_step(*ckpt.model, sample, config.margin, true);
      if (!std::isfinite(rec.losses.total))
        throw std::runtime_error("training: non-finite loss at step " + std::to_string(state.steps));
      opt.step();
      consecutive = 0;
      if (hooks.log) *hooks.log << rec.to_json().dump() << '\n';
      if (hooks.progress_every > 0 && (state.steps + 1) % hooks.progress_every == 0)
        std::cerr << "step " << state.steps + 1 << "/" << config.iterations << " loss " << rec.losses.total
                  << " lr " << rec.learning_rate << '\n';
      state.history.push_back(std::move(rec));
      ++state.steps;
    }
    if (hooks.log) hooks.log->flush();
  }

  TrainResult finish(const std::string& graph_hash) {
    ckpt.metadata = {{"variant", to_string(config.variant)},
                     {"steps", state.steps},
                     {"skipped", state.skipped},
                     {"train_config", config.to_json()},
                     {"dataset_hash", dataset_hash(dataset)}};
    if (!graph_hash.empty()) ckpt.metadata["graph_dataset_hash"] = graph_hash;
    TrainResult r;
    r.checkpoint = std::move(ckpt);
    r.state = std::move(state);
    return r;
  }
};

std::vector<int> graph_nodes_for(const Dataset& dataset, const SimilarityGraph& graph) {
  std::vector<int> nodes;
  for (const auto& s : dataset.sequences) {
    const int n = graph.index_of(s.sequence_id);
    if (n < 0) throw std::invalid_argument("training: sequence '" + s.sequence_id + "' is not a node of the graph");
    nodes.push_back(n);
  }
  if (graph.size() != dataset.sequences.size())
    throw std::invalid_argument("training: graph nodes do not match the dataset sequences");
  return nodes;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::vanilla: return "vanilla";
    case Variant::soft: return "soft";
    case Variant::hard: return "hard";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& name) {
  if (name == "vanilla") return Variant::vanilla;
  if (name == "soft") return Variant::soft;
  if (name == "hard") return Variant::hard;
  throw std::invalid_argument("unknown variant '" + name + "' (expected vanilla, soft or hard)");
}

void TrainConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("train: iterations must be >= 0");
  if (!(margin > 0.0)) throw std::invalid_argument("train: margin must be positive");
  if (n_matches < 1) throw std::invalid_argument("train: n_matches must be >= 1");
  if (nonmatches_per_match < 1) throw std::invalid_argument("train: nonmatches_per_match must be >= 1");
  if (!(depth_tolerance > 0.0)) throw std::invalid_argument("train: depth_tolerance must be positive");
  if (exclusion_radius < 0.0) throw std::invalid_argument("train: exclusion_radius must be >= 0");
  if (max_consecutive_skips < 1) throw std::invalid_argument("train: max_consecutive_skips must be >= 1");
  if (projection_steps < 0) throw std::invalid_argument("train: projection_steps must be >= 0");
  if (classes < 2) throw std::invalid_argument("train: classes must be >= 2");
  if (!(same_sequence_probability >= 0.0 && same_sequence_probability <= 1.0))
    throw std::invalid_argument("train: same_sequence_probability must lie in [0, 1]");
  model.validate();
  optimizer.validate();
  augmentation.validate();
}

json TrainConfig::to_json() const {
  return {{"variant", to_string(variant)},
          {"iterations", iterations},
          {"model", model.to_json()},
          {"optimizer", optimizer.to_json()},
          {"margin", margin},
          {"n_matches", n_matches},
          {"nonmatches_per_match", nonmatches_per_match},
          {"depth_tolerance", depth_tolerance},
          {"exclusion_radius", exclusion_radius},
          {"augmentation", augmentation_to_json(augmentation)},
          {"seed", seed},
          {"max_consecutive_skips", max_consecutive_skips},
          {"projection_steps", projection_steps},
          {"projection_hidden", projection_hidden},
          {"projection_output", projection_output},
          {"classes", classes},
          {"same_sequence_probability", same_sequence_probability}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "variant") c.variant = variant_from_string(value.get<std::string>());
    else if (key == "iterations") c.iterations = value.get<int>();
    else if (key == "model") c.model = ModelConfig::from_json(value);
    else if (key == "optimizer") c.optimizer = OptimizerConfig::from_json(value);
    else if (key == "margin") c.margin = value.get<double>();
    else if (key == "n_matches") c.n_matches = value.get<int>();
    else if (key == "nonmatches_per_match") c.nonmatches_per_match = value.get<int>();
    else if (key == "depth_tolerance") c.depth_tolerance = value.get<double>();
    else if (key == "exclusion_radius") c.exclusion_radius = value.get<double>();
    else if (key == "augmentation") c.augmentation = augmentation_from_json(value);
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "max_consecutive_skips") c.max_consecutive_skips = value.get<int>();
    else if (key == "projection_steps") c.projection_steps = value.get<int>();
    else if (key == "projection_hidden") c.projection_hidden = value.get<int>();
    else if (key == "projection_output") c.projection_output = value.get<int>();
    else if (key == "classes") c.classes = value.get<int>();
    else if (key == "same_sequence_probability") c.same_sequence_probability = value.get<double>();
    else throw std::invalid_argument("train config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

json StepRecord::to_json() const {
  return {{"step", step},
          {"kind", kind},
          {"match", losses.match},
          {"nonmatch", losses.nonmatch},
          {"negative_nonmatch", losses.negative},
          {"confidence", losses.confidence},
          {"total", losses.total},
          {"lr", learning_rate},
          {"skipped_before", skipped_before}};
}

StepLosses evaluate_step(DescriptorModel& model, const StepSample& s, double margin, bool backprop) {
  ForwardTape ta, tb, tn;
  const DescriptorImage da = model.forward(s.image_a, backprop ? &ta : nullptr);
  const DescriptorImage db = model.forward(s.image_b, backprop ? &tb : nullptr);
  std::optional<DescriptorImage> dn;
  if (s.image_n) dn = model.forward(*s.image_n, backprop ? &tn : nullptr);

  StepLosses out;
  out.confidence = s.confidence;
  Image<float> ga, gb, gn;
  if (backprop) {
    ga = Image<float>(da.width(), da.height(), da.dim());
    gb = Image<float>(db.width(), db.height(), db.dim());
    if (dn) gn = Image<float>(dn->width(), dn->height(), dn->dim());
  }

  const PairLoss lm = match_loss(gather(da, s.matches.pixels_a), gather(db, s.matches.pixels_b), backprop);
  const PairLoss ln =
      nonmatch_loss(gather(da, s.nonmatches.pixels_a), gather(db, s.nonmatches.pixels_b), margin, backprop);
  out.match = lm.value;
  out.nonmatch = ln.value;
  if (backprop) {
    if (!s.matches.empty()) {
      scatter(ga, s.matches.pixels_a, lm.grad_a, 1.0);
      scatter(gb, s.matches.pixels_b, lm.grad_b, 1.0);
    }
    if (!s.nonmatches.empty()) {
      scatter(ga, s.nonmatches.pixels_a, ln.grad_a, 1.0);
      scatter(gb, s.nonmatches.pixels_b, ln.grad_b, 1.0);
    }
  }
  if (dn && !s.negative_nonmatches.empty()) {
    const PairLoss lneg = nonmatch_loss(gather(da, s.negative_nonmatches.pixels_a),
                                        gather(*dn, s.negative_nonmatches.pixels_b), margin, backprop);
    out.negative = lneg.value;
    if (backprop && s.confidence != 0.0) {
      scatter(ga, s.negative_nonmatches.pixels_a, lneg.grad_a, s.confidence);
      scatter(gn, s.negative_nonmatches.pixels_b, lneg.grad_b, s.confidence);
    }
  }
  out.total = soft_total_loss(out.match, out.nonmatch, out.negative, s.confidence);

  if (backprop) {
    model.backward(ga, ta);
    model.backward(gb, tb);
    if (dn) model.backward(gn, tn);
  }
  return out;
}

TrainResult train_vanilla(const Dataset& dataset, const TrainConfig& config, const TrainHooks& hooks) {
  Trainer t(dataset, config, hooks);
  t.run([&](StepSample& s) {
    const Sequence& seq = dataset.sequences[uniform_index(dataset.sequences.size(), t.rng)];
    const auto [a, b] = frame_pair(seq.frames.size(), t.rng);
    return build_same_sequence(seq.frames[a], seq.frames[b], config, t.rng, s);
  });
  return t.finish("");
}

TrainResult train_soft(const Dataset& dataset, const SimilarityGraph& graph, const TrainConfig& config,
                       const TrainHooks& hooks) {
  if (dataset.sequences.size() < 2) throw std::invalid_argument("train_soft: needs at least two sequences");
  const std::vector<int> nodes = graph_nodes_for(dataset, graph);
  std::map<int, std::size_t> seq_of_node;
  for (std::size_t i = 0; i < nodes.size(); ++i) seq_of_node[nodes[i]] = i;

  Trainer t(dataset, config, hooks);
  t.run([&](StepSample& s) {
    const std::size_t anchor = uniform_index(dataset.sequences.size(), t.rng);
    const NegativeSample neg = sample_negative(graph, nodes[anchor], t.rng);
    const Sequence& seq = dataset.sequences[anchor];
    const Sequence& nseq = dataset.sequences[seq_of_node.at(neg.node)];
    const auto [a, b] = frame_pair(seq.frames.size(), t.rng);
    const Frame& fn = nseq.frames[uniform_index(nseq.frames.size(), t.rng)];
    const Frame& fa = seq.frames[a];
    MatchBatch neg_pairs = sample_nonmatches(fa, fn, nonmatch_count(config), NonMatchMode::on_object, 0.0, t.rng);
    PixelRemap remap_a;
    if (!build_same_sequence(fa, seq.frames[b], config, t.rng, s, &remap_a)) return false;
    AugmentedImage an;
    try {
      an = apply_augmentations(fn, config.augmentation, t.rng);
    } catch (const std::runtime_error&) {
      return false;
    }
    transport_pairs(neg_pairs, remap_a, an.remap, fa.width(), fa.height());
    s.image_n = std::move(an.rgb);
    s.negative_nonmatches = std::move(neg_pairs);
    s.confidence = neg.confidence;
    s.kind = "soft";
    return true;
  });
  return t.finish(graph.dataset_hash);
}

HardPair sample_pair_hard_phase2(const Dataset& dataset, const FrameClassifier& classifier, double p_same, Rng& rng) {
  HardPair p;
  const std::size_t n = dataset.sequences.size();
  const bool same = n < 2 || std::bernoulli_distribution(p_same)(rng);
  p.seq_a = uniform_index(n, rng);
  if (same) {
    p.kind = HardPairKind::same_sequence;
    p.seq_b = p.seq_a;
    std::tie(p.frame_a, p.frame_b) = frame_pair(dataset.sequences[p.seq_a].frames.size(), rng);
    return p;
  }
  p.seq_b = uniform_index(n - 1, rng);
  if (p.seq_b >= p.seq_a) ++p.seq_b;
  p.frame_a = uniform_index(dataset.sequences[p.seq_a].frames.size(), rng);
  p.frame_b = uniform_index(dataset.sequences[p.seq_b].frames.size(), rng);
  p.kind = classifier(p.seq_a, p.frame_a) == classifier(p.seq_b, p.frame_b) ? HardPairKind::skip
                                                                            : HardPairKind::cross_sequence;
  return p;
}

TrainResult train_hard(const Dataset& dataset, const SimilarityGraph& graph, const TrainConfig& config,
                       const FeatureExtractor& extractor, const TrainHooks& hooks, const FrameClassifier& classifier) {
  graph_nodes_for(dataset, graph);
  FrameClassifier classify = classifier;
  std::optional<HardClassifierState> state;
  std::vector<double> projection_losses;
  std::vector<std::vector<int>> labels;
  if (!classify) {
    // Graph nodes in dataset order.
    std::vector<Eigen::MatrixXd> features = sequence_features(dataset, extractor);
    std::vector<Eigen::MatrixXd> by_node(graph.size());
    for (std::size_t i = 0; i < dataset.sequences.size(); ++i)
      by_node[static_cast<std::size_t>(graph.index_of(dataset.sequences[i].sequence_id))] = features[i];
    ProjectionTrainConfig pc;
    pc.steps = config.projection_steps;
    pc.hidden_dim = config.projection_hidden;
    pc.output_dim = config.projection_output;
    pc.margin = config.margin;
    pc.optimizer = OptimizerConfig{};
    pc.seed = config.seed ^ 0x5bd1e995ull;
    ProjectionTrainResult proj = train_projection(graph, by_node, pc);
    const ClassModel classes = fit_classes(proj.network, features, config.classes, config.seed + 17);
    labels = classify_frames(proj.network, classes, features);
    classify = table_classifier(labels);
    projection_losses = std::move(proj.losses);
    state = HardClassifierState{proj.network.to_json(), classes.to_json(), to_string(extractor.kind),
                                extractor.target_size};
  }

  Trainer t(dataset, config, hooks);
  t.run([&](StepSample& s) {
    const HardPair p = sample_pair_hard_phase2(dataset, classify, config.same_sequence_probability, t.rng);
    if (p.kind == HardPairKind::skip) return false;
    const Frame& fa = dataset.sequences[p.seq_a].frames[p.frame_a];
    const Frame& fb = dataset.sequences[p.seq_b].frames[p.frame_b];
    if (p.kind == HardPairKind::same_sequence) return build_same_sequence(fa, fb, config, t.rng, s);
    s.nonmatches = sample_nonmatches(fa, fb, nonmatch_count(config), NonMatchMode::on_object, 0.0, t.rng);
    AugmentedImage aa, ab;
    try {
      aa = apply_augmentations(fa, config.augmentation, t.rng);
      ab = apply_augmentations(fb, config.augmentation, t.rng);
    } catch (const std::runtime_error&) {
      return false;
    }
    transport_pairs(s.nonmatches, aa.remap, ab.remap, fa.width(), fa.height());
    if (s.nonmatches.empty()) return false;
    s.image_a = std::move(aa.rgb);
    s.image_b = std::move(ab.rgb);
    s.kind = "cross_sequence";
    return true;
  });
  TrainResult r = t.finish(graph.dataset_hash);
  r.checkpoint.classifier = state;
  r.projection_losses = std::move(projection_losses);
  r.frame_classes = std::move(labels);
  return r;
}

std::optional<TrainConfig> checkpoint_train_config(const Checkpoint& ckpt) {
  if (!ckpt.metadata.contains("train_config")) return std::nullopt;
  return TrainConfig::from_json(ckpt.metadata.at("train_config"));
}

}  // namespace cadd

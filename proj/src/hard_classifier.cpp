#include "cadd/hard_classifier.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "cadd/clustering.hpp"
#include "cadd/losses.hpp"

namespace cadd {

namespace {

using nlohmann::json;
using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

nn::Parameter make_param(std::string name, std::vector<int> shape) {
  nn::Parameter p;
  p.name = std::move(name);
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(s);
  p.shape = std::move(shape);
  p.value.assign(n, 0.0f);
  p.grad.assign(n, 0.0f);
  return p;
}

Eigen::Map<const MatF> as_matrix(const nn::Parameter& p) { return {p.value.data(), p.shape[0], p.shape[1]}; }
Eigen::Map<MatF> grad_matrix(nn::Parameter& p) { return {p.grad.data(), p.shape[0], p.shape[1]}; }
Eigen::Map<const Eigen::VectorXf> as_vector(const nn::Parameter& p) {
  return {p.value.data(), static_cast<Eigen::Index>(p.value.size())};
}
Eigen::Map<Eigen::VectorXf> grad_vector(nn::Parameter& p) {
  return {p.grad.data(), static_cast<Eigen::Index>(p.grad.size())};
}

void load_param(nn::Parameter& p, const json& values) {
  const auto v = values.get<std::vector<float>>();
  if (v.size() != p.value.size()) throw std::invalid_argument("projection network: parameter '" + p.name + "' has wrong size");
  p.value.assign(v.begin(), v.end());
}

int uniform_index(int n, Rng& rng) { return std::uniform_int_distribution<int>(0, n - 1)(rng); }

}  // namespace

ProjectionNetwork::ProjectionNetwork(int input_dim, int hidden_dim, int output_dim, std::uint64_t seed)
    : input_dim_(input_dim),
      hidden_dim_(hidden_dim),
      output_dim_(output_dim),
      w1_(make_param("proj.fc1.weight", {hidden_dim, input_dim})),
      b1_(make_param("proj.fc1.bias", {hidden_dim})),
      w2_(make_param("proj.fc2.weight", {output_dim, hidden_dim})),
      b2_(make_param("proj.fc2.bias", {output_dim})) {
  if (input_dim < 1 || hidden_dim < 1 || output_dim < 1)
    throw std::invalid_argument("projection network: dimensions must be positive");
  Rng rng(seed);
  std::normal_distribution<float> n1(0.0f, std::sqrt(2.0f / static_cast<float>(input_dim)));
  for (float& w : w1_.value) w = n1(rng);
  std::normal_distribution<float> n2(0.0f, std::sqrt(1.0f / static_cast<float>(hidden_dim)));
  for (float& w : w2_.value) w = n2(rng);
}

Eigen::VectorXd ProjectionNetwork::forward(const Eigen::VectorXd& x, Cache* cache) const {
  if (x.size() != input_dim_)
    throw std::invalid_argument("projection network: expected input of size " + std::to_string(input_dim_) + ", got " +
                                std::to_string(x.size()));
  const Eigen::VectorXd pre =
      as_matrix(w1_).cast<double>() * x + as_vector(b1_).cast<double>();
  const Eigen::VectorXd h = pre.cwiseMax(0.0);
  if (cache) {
    cache->input = x;
    cache->hidden_pre = pre;
  }
  return as_matrix(w2_).cast<double>() * h + as_vector(b2_).cast<double>();
}

void ProjectionNetwork::backward(const Eigen::VectorXd& grad_out, const Cache& cache) {
  const Eigen::VectorXd h = cache.hidden_pre.cwiseMax(0.0);
  grad_matrix(w2_) += (grad_out * h.transpose()).cast<float>();
  grad_vector(b2_) += grad_out.cast<float>();
  Eigen::VectorXd gh = as_matrix(w2_).cast<double>().transpose() * grad_out;
  for (Eigen::Index i = 0; i < gh.size(); ++i)
    if (cache.hidden_pre[i] <= 0.0) gh[i] = 0.0;
  grad_matrix(w1_) += (gh * cache.input.transpose()).cast<float>();
  grad_vector(b1_) += gh.cast<float>();
}

json ProjectionNetwork::to_json() const {
  return {{"input_dim", input_dim_}, {"hidden_dim", hidden_dim_}, {"output_dim", output_dim_},
          {"fc1_weight", w1_.value}, {"fc1_bias", b1_.value},     {"fc2_weight", w2_.value},
          {"fc2_bias", b2_.value}};
}

ProjectionNetwork ProjectionNetwork::from_json(const json& j) {
  ProjectionNetwork net(j.at("input_dim").get<int>(), j.at("hidden_dim").get<int>(), j.at("output_dim").get<int>(), 0);
  load_param(net.w1_, j.at("fc1_weight"));
  load_param(net.b1_, j.at("fc1_bias"));
  load_param(net.w2_, j.at("fc2_weight"));
  load_param(net.b2_, j.at("fc2_bias"));
  return net;
}

ProjectionTrainResult train_projection(const SimilarityGraph& graph, const std::vector<Eigen::MatrixXd>& features,
                                       const ProjectionTrainConfig& config) {
  if (features.size() != graph.size()) throw std::invalid_argument("train_projection: one feature matrix per node required");
  if (graph.size() < 2) throw std::invalid_argument("train_projection: graph needs at least two nodes");
  for (const auto& f : features)
    if (f.rows() == 0) throw std::invalid_argument("train_projection: sequence without frames");

  ProjectionTrainResult result;
  result.network = ProjectionNetwork(static_cast<int>(features[0].cols()), config.hidden_dim, config.output_dim,
                                     config.seed);
  Optimizer opt(config.optimizer, result.network.parameters());
  Rng rng(config.seed + 1);
  const int n = static_cast<int>(graph.size());
  for (int step = 0; step < config.steps; ++step) {
    const int a = uniform_index(n, rng);
    const int p = sample_positive(graph, a, rng);
    const NegativeSample neg = sample_negative(graph, a, rng);
    const auto frame = [&](int node) {
      const auto& f = features[static_cast<std::size_t>(node)];
      return Eigen::VectorXd(f.row(uniform_index(static_cast<int>(f.rows()), rng)).transpose());
    };
    const Eigen::VectorXd xa = frame(a), xp = frame(p), xn = frame(neg.node);
    ProjectionNetwork::Cache ca, cp, cn;
    const Eigen::VectorXd ya = result.network.forward(xa, &ca);
    const Eigen::VectorXd yp = result.network.forward(xp, &cp);
    const Eigen::VectorXd yn = result.network.forward(xn, &cn);
    const TripletLoss loss = hard_triplet_loss(ya, yp, yn, neg.confidence, config.margin, true);
    if (!std::isfinite(loss.value))
      throw std::runtime_error("train_projection: non-finite loss at step " + std::to_string(step));
    result.losses.push_back(loss.value);
    result.network.backward(loss.grad_anchor, ca);
    result.network.backward(loss.grad_positive, cp);
    result.network.backward(loss.grad_negative, cn);
    opt.step();
  }
  return result;
}

json ClassModel::to_json() const {
  json rows = json::array();
  for (Eigen::Index r = 0; r < centroids.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(centroids.cols()));
    for (Eigen::Index c = 0; c < centroids.cols(); ++c) row[static_cast<std::size_t>(c)] = centroids(r, c);
    rows.push_back(row);
  }
  return {{"centroids", rows}};
}

ClassModel ClassModel::from_json(const json& j) {
  const auto rows = j.at("centroids").get<std::vector<std::vector<double>>>();
  ClassModel m;
  if (rows.empty()) throw std::invalid_argument("class model: no centroids");
  m.centroids.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) throw std::invalid_argument("class model: ragged centroids");
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m.centroids(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

ClassModel fit_classes(const ProjectionNetwork& net, const std::vector<Eigen::MatrixXd>& features, int k,
                       std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("fit_classes: K must be at least 2");
  Eigen::Index total = 0;
  for (const auto& f : features) total += f.rows();
  if (k > total)
    throw std::invalid_argument("fit_classes: K=" + std::to_string(k) + " exceeds the " + std::to_string(total) +
                                " training samples");
  Eigen::MatrixXd projected(total, net.output_dim());
  Eigen::Index row = 0;
  for (const auto& f : features)
    for (Eigen::Index i = 0; i < f.rows(); ++i) projected.row(row++) = net.forward(f.row(i).transpose()).transpose();
  ClassModel m;
  KMeansOptions o;
  o.restarts = 10;
  m.centroids = kmeans(projected, k, seed, o).centroids;
  return m;
}

int assign_class(const ProjectionNetwork& net, const ClassModel& classes, const Eigen::VectorXd& feature) {
  return nearest_centroid(classes.centroids, net.forward(feature));
}

FrameClassifier table_classifier(std::vector<std::vector<int>> labels) {
  return [labels = std::move(labels)](std::size_t seq, std::size_t frame) { return labels.at(seq).at(frame); };
}

std::vector<std::vector<int>> classify_frames(const ProjectionNetwork& net, const ClassModel& classes,
                                              const std::vector<Eigen::MatrixXd>& features) {
  std::vector<std::vector<int>> out;
  for (const auto& f : features) {
    std::vector<int> labels;
    for (Eigen::Index i = 0; i < f.rows(); ++i) labels.push_back(assign_class(net, classes, f.row(i).transpose()));
    out.push_back(std::move(labels));
  }
  return out;
}

}  // namespace cadd

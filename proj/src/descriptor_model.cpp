#include "cadd/descriptor_model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

namespace cadd {

using nlohmann::json;

Eigen::VectorXd descriptor_at(const DescriptorImage& d, const Pixel& p) {
  if (!d.values.in_bounds(p.u, p.v))
    throw std::out_of_range("descriptor_at: pixel (" + std::to_string(p.u) + "," + std::to_string(p.v) +
                            ") outside " + std::to_string(d.width()) + "x" + std::to_string(d.height()));
  Eigen::VectorXd out(d.dim());
  const float* src = d.at(p.u, p.v);
  for (int i = 0; i < d.dim(); ++i) out[i] = src[i];
  return out;
}

// ---------------------------------------------------------------------------
// ModelConfig

ModelConfig ModelConfig::resnet34_s8(int base_width) {
  ModelConfig c;
  c.backbone = Backbone::resnet34_s8;
  c.widths = {base_width, base_width * 2, base_width * 4, base_width * 8};
  return c;
}

int ModelConfig::stride() const { return backbone == Backbone::small_fcn ? 4 : 8; }

void ModelConfig::validate() const {
  if (descriptor_dim < 2) throw std::invalid_argument("ModelConfig: descriptor_dim must be at least 2");
  if (widths.size() != 4) throw std::invalid_argument("ModelConfig: expected 4 block widths");
  for (int w : widths)
    if (w <= 0) throw std::invalid_argument("ModelConfig: widths must be positive");
  if (upsampling != "bilinear") throw std::invalid_argument("ModelConfig: only bilinear upsampling is supported");
}

json ModelConfig::to_json() const {
  return {{"descriptor_dim", descriptor_dim},
          {"backbone", backbone == Backbone::small_fcn ? "small_fcn" : "resnet34_s8"},
          {"widths", widths},
          {"upsampling", upsampling},
          {"init_seed", init_seed}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  static const std::set<std::string> kKeys = {"descriptor_dim", "backbone", "widths", "upsampling", "init_seed"};
  for (const auto& [key, _] : j.items())
    if (!kKeys.contains(key)) throw std::invalid_argument("model: unknown key '" + key + "'");
  ModelConfig c;
  const std::string backbone = j.value("backbone", std::string("small_fcn"));
  if (backbone == "small_fcn") c.backbone = Backbone::small_fcn;
  else if (backbone == "resnet34_s8") c = resnet34_s8();
  else throw std::invalid_argument("model: unknown backbone '" + backbone + "'");
  c.descriptor_dim = j.value("descriptor_dim", c.descriptor_dim);
  if (j.contains("widths")) c.widths = j.at("widths").get<std::vector<int>>();
  c.upsampling = j.value("upsampling", c.upsampling);
  c.init_seed = j.value("init_seed", c.init_seed);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// DescriptorModel

DescriptorModel::DescriptorModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.init_seed);
  const auto& w = config_.widths;
  auto conv = [&](const std::string& name, int in, int out, int k, int stride) {
    auto layer = std::make_unique<nn::Conv2d>(name, in, out, k, stride, k / 2);
    layer->init_he(rng);
    return layer;
  };
  auto block = [&](const std::string& name, int in, int out, int stride) {
    auto layer = std::make_unique<nn::ResidualBlock>(name, in, out, stride);
    layer->init_he(rng);
    return layer;
  };

  int channels = 0;
  if (config_.backbone == Backbone::small_fcn) {
    net_.add(conv("block1", 3, w[0], 3, 2));
    net_.add(std::make_unique<nn::Relu>());
    net_.add(conv("block2", w[0], w[1], 3, 2));
    net_.add(std::make_unique<nn::Relu>());
    net_.add(conv("block3", w[1], w[2], 3, 1));
    net_.add(std::make_unique<nn::Relu>());
    net_.add(conv("block4", w[2], w[3], 3, 1));
    net_.add(std::make_unique<nn::Relu>());
    channels = w[3];
  } else {
    // 34-layer layout: stem, then [3, 4, 6, 3] basic blocks; total stride 8.
    net_.add(conv("stem", 3, w[0], 7, 2));
    net_.add(std::make_unique<nn::Relu>());
    static constexpr int kBlocks[4] = {3, 4, 6, 3};
    static constexpr int kStrides[4] = {1, 2, 2, 1};
    int in = w[0];
    for (int stage = 0; stage < 4; ++stage) {
      for (int b = 0; b < kBlocks[stage]; ++b) {
        const std::string name = "stage" + std::to_string(stage + 1) + "." + std::to_string(b);
        net_.add(block(name, in, w[static_cast<std::size_t>(stage)], b == 0 ? kStrides[stage] : 1));
        in = w[static_cast<std::size_t>(stage)];
      }
    }
    channels = in;
  }
  auto head = std::make_unique<nn::Conv2d>("head", channels, config_.descriptor_dim, 1, 1, 0);
  head->init_he(rng);
  net_.add(std::move(head));
  net_.add(std::make_unique<nn::BilinearUpsample>(config_.stride()));
}

std::vector<const nn::Parameter*> DescriptorModel::parameters() const {
  auto* self = const_cast<DescriptorModel*>(this);
  std::vector<const nn::Parameter*> out;
  for (auto* p : self->net_.parameters()) out.push_back(p);
  return out;
}

std::size_t DescriptorModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

void DescriptorModel::zero_grad() {
  for (auto* p : net_.parameters()) p->zero_grad();
}

std::vector<std::string> DescriptorModel::describe() const {
  std::vector<std::string> out;
  for (const auto& l : net_.layers()) out.push_back(l->describe());
  return out;
}

nn::Tensor normalize_input(const RgbImage& rgb, int padded_width, int padded_height) {
  nn::Tensor t(3, padded_height, padded_width, 0.0f);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < rgb.height(); ++y)
      for (int x = 0; x < rgb.width(); ++x) t.at(c, y, x) = (rgb(x, y, c) / 255.0f - 0.5f) / 0.25f;
  return t;
}

DescriptorImage DescriptorModel::forward(const RgbImage& rgb, ForwardTape* tape) const {
  if (rgb.channels() != 3 || rgb.empty()) throw std::invalid_argument("forward: expected a non-empty RGB image");
  const int s = config_.stride();
  const int ph = (rgb.height() + s - 1) / s * s;
  const int pw = (rgb.width() + s - 1) / s * s;
  const nn::Tensor out = net_.forward(normalize_input(rgb, pw, ph), tape ? &tape->caches : nullptr);
  if (tape) {
    tape->input_height = rgb.height();
    tape->input_width = rgb.width();
    tape->padded_height = ph;
    tape->padded_width = pw;
  }
  DescriptorImage d;
  d.padded = ph != rgb.height() || pw != rgb.width();
  const int dim = config_.descriptor_dim;
  d.values = Image<float>(rgb.width(), rgb.height(), dim);
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x)
      for (int c = 0; c < dim; ++c) {
        const float v = out.at(c, y, x);
        if (!std::isfinite(v))
          throw std::runtime_error("forward: non-finite descriptor at (" + std::to_string(x) + "," +
                                   std::to_string(y) + ") channel " + std::to_string(c));
        d.values(x, y, c) = v;
      }
  return d;
}

void DescriptorModel::backward(const Image<float>& grad, const ForwardTape& tape) {
  if (grad.width() != tape.input_width || grad.height() != tape.input_height ||
      grad.channels() != config_.descriptor_dim)
    throw std::invalid_argument("backward: gradient shape does not match the forward pass");
  nn::Tensor g(config_.descriptor_dim, tape.padded_height, tape.padded_width, 0.0f);
  for (int y = 0; y < grad.height(); ++y)
    for (int x = 0; x < grad.width(); ++x)
      for (int c = 0; c < config_.descriptor_dim; ++c) g.at(c, y, x) = grad(x, y, c);
  net_.backward(g, tape.caches);
}

// ---------------------------------------------------------------------------
// Checkpoint archive

namespace {
constexpr char kMagic[8] = {'C', 'A', 'D', 'D', 'C', 'K', 'P', 'T'};
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (!ckpt.model) throw std::invalid_argument("save_checkpoint: no model");
  json header = {{"schema_version", Checkpoint::kSchemaVersion},
                 {"model_config", ckpt.config.to_json()},
                 {"metadata", ckpt.metadata}};
  if (ckpt.classifier) {
    header["hard_classifier"] = {{"projection", ckpt.classifier->projection},
                                 {"classes", ckpt.classifier->classes},
                                 {"feature_kind", ckpt.classifier->feature_kind},
                                 {"feature_size", ckpt.classifier->feature_size}};
  }
  json table = json::array();
  std::uint64_t offset = 0;
  const auto params = static_cast<const DescriptorModel&>(*ckpt.model).parameters();
  for (const auto* p : params) {
    table.push_back({{"name", p->name}, {"shape", p->shape}, {"offset", offset}, {"count", p->size()}});
    offset += p->size();
  }
  header["parameters"] = table;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path.string());
  const std::uint32_t version = Checkpoint::kSchemaVersion;
  const std::uint64_t len = text.size();
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* p : params)
    out.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(p->size() * sizeof(float)));
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: " + path.string() + " is not a checkpoint archive");
  if (version != Checkpoint::kSchemaVersion)
    throw std::runtime_error("load_checkpoint: unsupported schema version " + std::to_string(version));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const json header = json::parse(text);

  Checkpoint ckpt;
  ckpt.config = ModelConfig::from_json(header.at("model_config"));
  ckpt.metadata = header.value("metadata", json::object());
  if (header.contains("hard_classifier")) {
    const auto& h = header["hard_classifier"];
    ckpt.classifier = HardClassifierState{h.at("projection"), h.at("classes"), h.at("feature_kind").get<std::string>(),
                                          h.at("feature_size").get<int>()};
  }
  ckpt.model = std::make_shared<DescriptorModel>(ckpt.config);
  auto params = ckpt.model->parameters();
  const auto& table = header.at("parameters");
  if (table.size() != params.size())
    throw std::runtime_error("load_checkpoint: parameter table does not match the model architecture");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (table[i].at("name").get<std::string>() != params[i]->name ||
        table[i].at("count").get<std::size_t>() != params[i]->size())
      throw std::runtime_error("load_checkpoint: parameter mismatch at " + params[i]->name);
    in.read(reinterpret_cast<char*>(params[i]->value.data()),
            static_cast<std::streamsize>(params[i]->size() * sizeof(float)));
  }
  if (!in) throw std::runtime_error("load_checkpoint: truncated parameter data in " + path.string());
  return ckpt;
}

}  // namespace cadd

#include "cadd/service.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <list>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cadd/png_io.hpp"

namespace cadd {

namespace {

using nlohmann::json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

struct HeatmapRequest {
  std::string model;
  FrameRef source;
  Pixel pixel;
  FrameRef target;
};

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, {{"error", message}, {"status", status}}, status);
}

template <typename T>
T field(const json& body, const char* name) {
  if (!body.contains(name)) throw ServiceError(400, std::string("missing field '") + name + "'");
  try {
    return body.at(name).get<T>();
  } catch (const json::exception&) {
    throw ServiceError(400, std::string("field '") + name + "' has the wrong type");
  }
}

FrameRef frame_field(const json& body, const char* name) {
  const json obj = field<json>(body, name);
  return {field<std::string>(obj, "seq"), field<int>(obj, "frame")};
}

}  // namespace

Image<std::uint8_t> encode_heatmap(const Image<float>& d) {
  Image<std::uint8_t> out(d.width(), d.height(), 1);
  if (d.size() == 0) return out;
  const auto [lo_it, hi_it] = std::minmax_element(d.values().begin(), d.values().end());
  const double lo = *lo_it, hi = *hi_it;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double v = d.values()[i];
    if (v == lo || !(hi > lo)) {
      out.values()[i] = 0;
    } else {
      const double n = (v - lo) / (hi - lo);
      out.values()[i] = static_cast<std::uint8_t>(1 + std::min(253.0, std::floor(254.0 * n)));
    }
  }
  return out;
}

Dataset service_dataset(Dataset dataset, int composites, std::uint64_t seed) {
  if (composites <= 0) return dataset;
  CompositeOptions opts;
  opts.cases = composites;
  opts.seed = seed;
  std::vector<CompositeCase> cases = make_composite_cases(dataset, opts);
  Sequence seq;
  seq.sequence_id = "composites";
  for (std::size_t i = 0; i < cases.size(); ++i) {
    Frame f = cases[i].composite.frame;
    f.frame_id = static_cast<int>(i);
    seq.frames.push_back(std::move(f));
  }
  dataset.sequences.push_back(std::move(seq));
  return dataset;
}

struct InferenceService::Impl {
  Dataset dataset;
  std::map<std::string, Checkpoint> models;
  std::vector<std::string> model_order;
  std::optional<SimilarityGraph> graph;
  ServiceConfig config;

  using CacheKey = std::tuple<std::string, std::string, int>;
  mutable std::mutex cache_mutex;
  mutable std::list<std::pair<CacheKey, std::shared_ptr<const DescriptorImage>>> lru;
  mutable std::map<CacheKey, decltype(lru)::iterator> index;
  mutable std::size_t hits = 0;

  mutable std::mutex heatmap_mutex;
  mutable std::map<std::string, HeatmapRequest> heatmaps;

  httplib::Server server;
  std::thread thread;

  const Checkpoint& model(const std::string& name) const {
    const auto it = models.find(name);
    if (it == models.end()) throw ServiceError(404, "unknown model '" + name + "'");
    return it->second;
  }

  const Frame& frame(const FrameRef& ref) const {
    const auto idx = dataset.index_of(ref.sequence);
    if (!idx) throw ServiceError(404, "unknown sequence '" + ref.sequence + "'");
    for (const auto& f : dataset.sequences[*idx].frames)
      if (f.frame_id == ref.frame) return f;
    throw ServiceError(404, "sequence '" + ref.sequence + "' has no frame " + std::to_string(ref.frame));
  }

  std::shared_ptr<const DescriptorImage> descriptors(const std::string& name, const FrameRef& ref) const {
    const Checkpoint& ckpt = model(name);
    const Frame& f = frame(ref);
    const CacheKey key{name, ref.sequence, ref.frame};
    std::lock_guard lock(cache_mutex);
    if (const auto it = index.find(key); it != index.end()) {
      lru.splice(lru.begin(), lru, it->second);
      ++hits;
      return it->second->second;
    }
    DescriptorImage d = ckpt.model->forward(f.rgb);
    d.source_frame_id = f.frame_id;
    auto ptr = std::make_shared<const DescriptorImage>(std::move(d));
    lru.emplace_front(key, ptr);
    index[key] = lru.begin();
    while (lru.size() > config.cache_frames) {
      index.erase(lru.back().first);
      lru.pop_back();
    }
    return ptr;
  }

  static void check_pixel(const DescriptorImage& d, const Pixel& p) {
    if (p.u < 0 || p.v < 0 || p.u >= d.width() || p.v >= d.height())
      throw ServiceError(422, "pixel (" + std::to_string(p.u) + ", " + std::to_string(p.v) + ") is outside the " +
                                  std::to_string(d.width()) + "x" + std::to_string(d.height()) + " image");
  }

  MatchReply match(const std::string& name, const FrameRef& source, const Pixel& p, const FrameRef& target) const {
    model(name);
    const auto sd = descriptors(name, source);
    check_pixel(*sd, p);
    const Eigen::VectorXd q = descriptor_at(*sd, p);
    const auto td = descriptors(name, target);
    const MatchResult m = best_match(q, *td);
    const Image<float> h = distance_heatmap(q, *td);
    const auto [lo, hi] = std::minmax_element(h.values().begin(), h.values().end());
    const json key = {name, source.sequence, source.frame, p.u, p.v, target.sequence, target.frame};
    MatchReply r{m.pixel, m.distance, hex64(fnv1a(key.dump())), *lo, *hi};
    std::lock_guard lock(heatmap_mutex);
    heatmaps[r.heatmap_id] = HeatmapRequest{name, source, p, target};
    return r;
  }

  Image<float> heatmap(const std::string& id) const {
    HeatmapRequest hr;
    {
      std::lock_guard lock(heatmap_mutex);
      const auto it = heatmaps.find(id);
      if (it == heatmaps.end()) throw ServiceError(404, "unknown heatmap '" + id + "'");
      hr = it->second;
    }
    const auto sd = descriptors(hr.model, hr.source);
    return distance_heatmap(descriptor_at(*sd, hr.pixel), *descriptors(hr.model, hr.target));
  }

  void routes();
};

InferenceService::InferenceService(Dataset dataset, std::vector<NamedModel> models, std::optional<SimilarityGraph> graph,
                                   ServiceConfig config)
    : impl_(std::make_unique<Impl>()) {
  config.validate();
  if (models.empty()) throw std::invalid_argument("service: at least one model is required");
  impl_->dataset = std::move(dataset);
  for (auto& m : models) {
    if (!m.checkpoint.model) throw std::invalid_argument("service: model '" + m.name + "' has no network");
    if (!impl_->models.emplace(m.name, std::move(m.checkpoint)).second)
      throw std::invalid_argument("service: duplicate model name '" + m.name + "'");
    impl_->model_order.push_back(m.name);
  }
  impl_->graph = std::move(graph);
  impl_->config = std::move(config);
  impl_->routes();
}

InferenceService::~InferenceService() { stop(); }

const Dataset& InferenceService::dataset() const { return impl_->dataset; }
std::vector<std::string> InferenceService::model_names() const { return impl_->model_order; }

std::shared_ptr<const DescriptorImage> InferenceService::descriptors(const std::string& model,
                                                                     const FrameRef& frame) const {
  return impl_->descriptors(model, frame);
}

Eigen::VectorXd InferenceService::query_descriptor(const std::string& model, const FrameRef& frame,
                                                   const Pixel& p) const {
  const auto d = impl_->descriptors(model, frame);
  Impl::check_pixel(*d, p);
  return descriptor_at(*d, p);
}

MatchReply InferenceService::match(const std::string& model, const FrameRef& source, const Pixel& p,
                                   const FrameRef& target) const {
  return impl_->match(model, source, p, target);
}

Image<float> InferenceService::heatmap(const std::string& id) const { return impl_->heatmap(id); }

std::size_t InferenceService::cache_size() const {
  std::lock_guard lock(impl_->cache_mutex);
  return impl_->lru.size();
}

std::size_t InferenceService::cache_hits() const {
  std::lock_guard lock(impl_->cache_mutex);
  return impl_->hits;
}

void InferenceService::Impl::routes() {
  auto guarded = [](auto handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const ServiceError& e) {
        send_error(res, e.status(), e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, std::string("malformed request: ") + e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    };
  };

  server.Get("/api/models", guarded([this](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& name : model_order) {
      const Checkpoint& c = models.at(name);
      out.push_back({{"name", name},
                     {"variant", c.metadata.value("variant", std::string("unknown"))},
                     {"descriptor_dim", c.config.descriptor_dim},
                     {"parameters", c.model->parameter_count()},
                     {"has_classifier", c.classifier.has_value()}});
    }
    send_json(res, out);
  }));

  server.Get("/api/sequences", guarded([this](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& s : dataset.sequences) {
      json e = {{"id", s.sequence_id}, {"frames", s.frames.size()}};
      if (s.true_category) e["category"] = *s.true_category;
      if (!s.frames.empty()) {
        e["width"] = s.frames[0].width();
        e["height"] = s.frames[0].height();
      }
      out.push_back(std::move(e));
    }
    send_json(res, out);
  }));

  server.Get("/api/frames", guarded([this](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("seq")) throw ServiceError(400, "missing query parameter 'seq'");
    const std::string seq = req.get_param_value("seq");
    const auto idx = dataset.index_of(seq);
    if (!idx) throw ServiceError(404, "unknown sequence '" + seq + "'");
    json ids = json::array();
    for (const auto& f : dataset.sequences[*idx].frames) ids.push_back(f.frame_id);
    send_json(res, {{"sequence", seq}, {"frames", ids}});
  }));

  server.Get(R"(/api/image/([^/]+)/(-?\d+)\.png)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const Frame& f = frame({req.matches[1].str(), std::stoi(req.matches[2].str())});
    const auto bytes = png::encode8(f.rgb);
    res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
  }));

  server.Get(R"(/api/mask/([^/]+)/(-?\d+)\.png)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const Frame& f = frame({req.matches[1].str(), std::stoi(req.matches[2].str())});
    MaskImage m = f.mask;
    for (auto& v : m.values()) v = v ? 255 : 0;
    const auto bytes = png::encode8(m);
    res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
  }));

  server.Post("/api/descriptor", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body);
    const std::string name = field<std::string>(body, "model");
    const FrameRef ref{field<std::string>(body, "seq"), field<int>(body, "frame")};
    const Pixel p{field<int>(body, "u"), field<int>(body, "v")};
    const auto d = descriptors(name, ref);
    check_pixel(*d, p);
    std::vector<float> values(d->at(p.u, p.v), d->at(p.u, p.v) + d->dim());
    send_json(res, {{"model", name}, {"descriptor", values}});
  }));

  server.Post("/api/match", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body);
    const std::string name = field<std::string>(body, "model");
    const json src = field<json>(body, "source");
    const FrameRef source{field<std::string>(src, "seq"), field<int>(src, "frame")};
    const Pixel p{field<int>(src, "u"), field<int>(src, "v")};
    const FrameRef target = frame_field(body, "target");
    const MatchReply reply = match(name, source, p, target);
    send_json(res, {{"pixel", {{"u", reply.pixel.u}, {"v", reply.pixel.v}}},
                    {"distance", reply.distance},
                    {"heatmap_id", reply.heatmap_id},
                    {"heatmap", {{"id", reply.heatmap_id}, {"min", reply.heatmap_min}, {"max", reply.heatmap_max}}}});
  }));

  server.Get(R"(/api/heatmap/([0-9a-f]+)\.png)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const Image<float> h = heatmap(req.matches[1].str());
    if (req.has_param("format") && req.get_param_value("format") == "f32") {
      std::string raw(h.size() * sizeof(float), '\0');
      std::memcpy(raw.data(), h.data(), raw.size());
      res.set_header("X-Width", std::to_string(h.width()));
      res.set_header("X-Height", std::to_string(h.height()));
      res.set_content(std::move(raw), "application/octet-stream");
      return;
    }
    const auto bytes = png::encode8(encode_heatmap(h));
    res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
  }));

  server.Get("/api/graph", guarded([this](const httplib::Request&, httplib::Response& res) {
    if (!graph) throw ServiceError(404, "no similarity graph loaded");
    send_json(res, graph->to_json());
  }));

  if (!config.static_dir.empty() && !server.set_mount_point("/", config.static_dir))
    throw std::invalid_argument("service: static directory '" + config.static_dir + "' does not exist");
}

int InferenceService::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw std::runtime_error("service: cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void InferenceService::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void InferenceService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace cadd

#include "cadd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

#include "cadd/clustering.hpp"
#include "cadd/features.hpp"
#include "cadd/geometry.hpp"

namespace cadd {

namespace {

std::size_t uniform_index(std::size_t n, Rng& rng) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

std::vector<Pixel> mask_pixel_list(const MaskImage& mask) {
  std::vector<Pixel> out;
  for (int v = 0; v < mask.height(); ++v)
    for (int u = 0; u < mask.width(); ++u)
      if (mask(u, v)) out.push_back({u, v});
  return out;
}

// Box sum of one channel via an integral image.
class BoxSum {
 public:
  BoxSum(const std::vector<double>& plane, int w, int h) : w_(w), h_(h), s_(static_cast<std::size_t>(w + 1) * (h + 1)) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        s_[idx(x + 1, y + 1)] = plane[static_cast<std::size_t>(y) * w + x] + s_[idx(x, y + 1)] + s_[idx(x + 1, y)] -
                                s_[idx(x, y)];
  }
  double operator()(int cx, int cy, int r) const {
    const int x0 = std::clamp(cx - r, 0, w_), x1 = std::clamp(cx + r + 1, 0, w_);
    const int y0 = std::clamp(cy - r, 0, h_), y1 = std::clamp(cy + r + 1, 0, h_);
    if (x1 <= x0 || y1 <= y0) return 0.0;
    return s_[idx(x1, y1)] - s_[idx(x0, y1)] - s_[idx(x1, y0)] + s_[idx(x0, y0)];
  }

 private:
  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * (w_ + 1) + x; }
  int w_, h_;
  std::vector<double> s_;
};

}  // namespace

MatchResult best_match(const Eigen::VectorXd& query, const DescriptorImage& target, const MaskImage* mask) {
  if (query.size() != target.dim())
    throw std::invalid_argument("best_match: query has " + std::to_string(query.size()) + " dims, target has " +
                                std::to_string(target.dim()));
  if (mask && (mask->width() != target.width() || mask->height() != target.height()))
    throw std::invalid_argument("best_match: mask size differs from the descriptor image");
  MatchResult best{{-1, -1}, std::numeric_limits<double>::infinity()};
  const int d = target.dim();
  for (int v = 0; v < target.height(); ++v)
    for (int u = 0; u < target.width(); ++u) {
      if (mask && !(*mask)(u, v)) continue;
      const float* x = target.at(u, v);
      double s = 0.0;
      for (int c = 0; c < d; ++c) {
        const double diff = x[c] - query[c];
        s += diff * diff;
      }
      if (s < best.distance) best = {{u, v}, s};
    }
  if (best.pixel.u < 0) throw std::invalid_argument("best_match: no eligible target pixel");
  best.distance = std::sqrt(best.distance);
  return best;
}

Image<float> distance_heatmap(const Eigen::VectorXd& query, const DescriptorImage& target) {
  if (query.size() != target.dim()) throw std::invalid_argument("distance_heatmap: dimension mismatch");
  Image<float> out(target.width(), target.height(), 1);
  for (int v = 0; v < target.height(); ++v)
    for (int u = 0; u < target.width(); ++u) {
      const float* x = target.at(u, v);
      double s = 0.0;
      for (int c = 0; c < target.dim(); ++c) s += (x[c] - query[c]) * (x[c] - query[c]);
      out(u, v) = static_cast<float>(std::sqrt(s));
    }
  return out;
}

DescriptorFn model_descriptor_fn(std::shared_ptr<const DescriptorModel> model) {
  return [model](const RgbImage& rgb) { return model->forward(rgb); };
}

DescriptorFn gradient_histogram_descriptor_fn(int ring_radius, int bins) {
  return [ring_radius, bins](const RgbImage& rgb) {
    const int w = rgb.width(), h = rgb.height();
    std::vector<double> gray(static_cast<std::size_t>(w) * h);
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u)
        gray[static_cast<std::size_t>(v) * w + u] = (0.299 * rgb(u, v, 0) + 0.587 * rgb(u, v, 1) + 0.114 * rgb(u, v, 2)) / 255.0;
    auto g = [&](int u, int v) { return gray[static_cast<std::size_t>(std::clamp(v, 0, h - 1)) * w + std::clamp(u, 0, w - 1)]; };
    std::vector<std::vector<double>> planes(static_cast<std::size_t>(bins), std::vector<double>(gray.size(), 0.0));
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u) {
        const double gx = g(u + 1, v) - g(u - 1, v), gy = g(u, v + 1) - g(u, v - 1);
        const double mag = std::hypot(gx, gy);
        if (mag == 0.0) continue;
        double a = std::atan2(gy, gx) / (2.0 * std::numbers::pi);
        if (a < 0.0) a += 1.0;
        const double pos = a * bins;
        const int b0 = static_cast<int>(std::floor(pos)) % bins;
        const double f = pos - std::floor(pos);
        planes[static_cast<std::size_t>(b0)][static_cast<std::size_t>(v) * w + u] += mag * (1.0 - f);
        planes[static_cast<std::size_t>((b0 + 1) % bins)][static_cast<std::size_t>(v) * w + u] += mag * f;
      }
    std::vector<BoxSum> sums;
    for (const auto& p : planes) sums.emplace_back(p, w, h);
    const int offsets[5][2] = {{0, 0}, {ring_radius, 0}, {0, ring_radius}, {-ring_radius, 0}, {0, -ring_radius}};
    DescriptorImage out;
    out.values = Image<float>(w, h, 5 * bins);
    const int r = std::max(1, ring_radius / 2);
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u) {
        double norm = 0.0;
        for (int o = 0; o < 5; ++o)
          for (int b = 0; b < bins; ++b) {
            const double s = sums[static_cast<std::size_t>(b)](u + offsets[o][0], v + offsets[o][1], r);
            out.values(u, v, o * bins + b) = static_cast<float>(s);
            norm += s * s;
          }
        norm = std::sqrt(norm);
        if (norm > 0.0)
          for (int c = 0; c < 5 * bins; ++c) out.values(u, v, c) = static_cast<float>(out.values(u, v, c) / norm);
      }
    return out;
  };
}

double CdfResult::fraction_within(double t) const {
  if (errors.empty()) return 0.0;
  const auto it = std::upper_bound(errors.begin(), errors.end(), t);
  return static_cast<double>(it - errors.begin()) / static_cast<double>(errors.size());
}

double CdfResult::auc(double cutoff) const {
  if (errors.empty() || !(cutoff > 0.0)) return 0.0;
  // (1/cutoff) * integral_0^cutoff F(t) dt = mean over errors of max(0, cutoff - e) / cutoff.
  double s = 0.0;
  for (double e : errors) s += std::max(0.0, cutoff - e);
  return s / (cutoff * static_cast<double>(errors.size()));
}

nlohmann::json CdfResult::to_json(double cutoff) const {
  nlohmann::json curve = nlohmann::json::array();
  for (int i = 0; i <= 20; ++i) {
    const double t = cutoff * i / 20.0;
    curve.push_back({t, fraction_within(t)});
  }
  return {{"count", errors.size()},
          {"excluded", excluded},
          {"auc", auc(cutoff)},
          {"auc_cutoff", cutoff},
          {"median", errors.empty() ? 0.0 : errors[errors.size() / 2]},
          {"curve", curve}};
}

CdfResult keypoint_transfer_errors(const DescriptorFn& descriptors, const KeypointAnnotations& annotations,
                                   const std::vector<KeypointPair>& pairs) {
  CdfResult r;
  std::map<const Frame*, DescriptorImage> cache;
  auto desc = [&](const Frame* f) -> const DescriptorImage& {
    auto it = cache.find(f);
    if (it == cache.end()) it = cache.emplace(f, descriptors(f->rgb)).first;
    return it->second;
  };
  for (const auto& p : pairs) {
    const auto labeled = annotations.in_frame(p.query_sequence, p.query->frame_id);
    if (labeled.empty()) continue;
    const double diagonal = std::hypot(p.target->width(), p.target->height());
    for (const auto& [name, qpix] : labeled) {
      const auto tpix = annotations.find(p.target_sequence, p.target->frame_id, name);
      if (!tpix) {
        ++r.excluded;
        continue;
      }
      const MatchResult m = best_match(descriptor_at(desc(p.query), qpix), desc(p.target));
      r.errors.push_back(std::hypot(m.pixel.u - tpix->u, m.pixel.v - tpix->v) / diagonal);
    }
  }
  std::sort(r.errors.begin(), r.errors.end());
  return r;
}

std::vector<KeypointPair> make_keypoint_pairs(const Dataset& dataset, int pairs_per_sequence, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<KeypointPair> out;
  for (const auto& s : dataset.sequences) {
    if (s.frames.size() < 2) continue;
    for (int i = 0; i < pairs_per_sequence; ++i) {
      const std::size_t a = uniform_index(s.frames.size(), rng);
      std::size_t b = uniform_index(s.frames.size() - 1, rng);
      if (b >= a) ++b;
      out.push_back({s.sequence_id, &s.frames[a], s.sequence_id, &s.frames[b]});
    }
  }
  return out;
}

std::vector<CompositeCase> make_composite_cases(const Dataset& dataset, const CompositeOptions& options) {
  std::map<std::string, std::vector<std::size_t>> by_category;
  for (std::size_t i = 0; i < dataset.sequences.size(); ++i) {
    const auto& s = dataset.sequences[i];
    if (!s.true_category) throw std::invalid_argument("composites: sequence '" + s.sequence_id + "' has no category label");
    by_category[*s.true_category].push_back(i);
  }
  if (by_category.size() < 2) throw std::invalid_argument("composites: need at least two categories");
  std::vector<std::string> categories;
  for (const auto& [name, seqs] : by_category) categories.push_back(name);

  Rng rng(options.seed);
  std::vector<CompositeCase> out;
  for (int k = 0; k < options.cases; ++k) {
    const std::string& cat = categories[uniform_index(categories.size(), rng)];
    const auto& same = by_category.at(cat);
    if (!options.same_instance && same.size() < 2)
      throw std::invalid_argument("composites: category '" + cat + "' has a single instance");
    std::string other_cat;
    do other_cat = categories[uniform_index(categories.size(), rng)];
    while (other_cat == cat);
    const auto& other = by_category.at(other_cat);

    const std::size_t q = same[uniform_index(same.size(), rng)];
    std::size_t t = q;
    while (!options.same_instance && t == q) t = same[uniform_index(same.size(), rng)];
    const std::size_t o = other[uniform_index(other.size(), rng)];

    const Sequence& qs = dataset.sequences[q];
    const std::size_t qf = uniform_index(qs.frames.size(), rng);
    std::size_t tf = uniform_index(dataset.sequences[t].frames.size(), rng);
    if (t == q && qs.frames.size() > 1)
      while (tf == qf) tf = uniform_index(qs.frames.size(), rng);
    const Frame& f_same = dataset.sequences[t].frames[tf];
    const Frame& f_other = dataset.sequences[o].frames[uniform_index(dataset.sequences[o].frames.size(), rng)];

    const int w = f_same.width(), h = f_same.height();
    const int canvas_w = 2 * w;
    const std::vector<const Frame*> frames = {&f_same, &f_other};
    const bool same_left = std::bernoulli_distribution(0.5)(rng);
    std::vector<Placement> layout;
    for (std::size_t i = 0; i < 2; ++i) {
      const BoundingBox box = mask_bounds(frames[i]->mask);
      const bool left = (i == 0) == same_left;
      const int cx = (left ? w / 2 : 3 * w / 2) + std::uniform_int_distribution<int>(-4, 4)(rng);
      const int cy = h / 2 + std::uniform_int_distribution<int>(-4, 4)(rng);
      int du = cx - (box.u0 + box.u1) / 2;
      int dv = cy - (box.v0 + box.v1) / 2;
      du = std::clamp(du, -box.u0, canvas_w - 1 - box.u1);
      dv = std::clamp(dv, -box.v0, h - 1 - box.v1);
      layout.push_back({i, du, dv});
    }
    CompositeCase c;
    c.composite = composite_multi_object(frames, layout, random_background(canvas_w, h, rng));
    c.source_labels = {cat, other_cat};
    c.query = &qs.frames[qf];
    c.query_sequence = qs.sequence_id;
    c.query_label = cat;
    std::vector<Pixel> pool = mask_pixel_list(c.query->mask);
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min(pool.size(), static_cast<std::size_t>(options.queries_per_case)));
    c.query_pixels = std::move(pool);
    out.push_back(std::move(c));
  }
  return out;
}

nlohmann::json OnObjectResult::to_json() const {
  return {{"rate", rate()}, {"correct", correct}, {"wrong_object", wrong_object}, {"background", background}};
}

OnObjectResult on_object_match_rate(const DescriptorFn& descriptors, const std::vector<CompositeCase>& cases) {
  OnObjectResult r;
  std::map<const Frame*, DescriptorImage> query_cache;
  for (const auto& c : cases) {
    auto it = query_cache.find(c.query);
    if (it == query_cache.end()) it = query_cache.emplace(c.query, descriptors(c.query->rgb)).first;
    const DescriptorImage target = descriptors(c.composite.frame.rgb);
    for (const Pixel& p : c.query_pixels) {
      const MatchResult m = best_match(descriptor_at(it->second, p), target);
      const int src = c.composite.provenance(m.pixel.u, m.pixel.v);
      if (src < 0) ++r.background;
      else if (c.source_labels.at(static_cast<std::size_t>(src)) == c.query_label) ++r.correct;
      else ++r.wrong_object;
    }
  }
  return r;
}

double clustering_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("clustering_accuracy: label lists differ in length");
  if (predicted.empty()) return 0.0;
  std::map<int, int> pi, ti;
  for (int p : predicted) pi.emplace(p, static_cast<int>(pi.size()));
  for (int t : truth) ti.emplace(t, static_cast<int>(ti.size()));
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pi.size()), static_cast<Eigen::Index>(ti.size()));
  for (std::size_t i = 0; i < predicted.size(); ++i) counts(pi.at(predicted[i]), ti.at(truth[i])) += 1.0;
  const Assignment a = min_cost_assignment(-counts);
  return -a.total_cost / static_cast<double>(predicted.size());
}

void export_descriptor_samples(const DescriptorFn& descriptors, const Dataset& dataset, int pixels_per_frame,
                               int frames_per_sequence, std::uint64_t seed, std::ostream& out) {
  Rng rng(seed);
  bool header = false;
  for (const auto& s : dataset.sequences) {
    std::vector<std::size_t> frames(s.frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = i;
    std::shuffle(frames.begin(), frames.end(), rng);
    frames.resize(std::min(frames.size(), static_cast<std::size_t>(frames_per_sequence)));
    std::sort(frames.begin(), frames.end());
    for (std::size_t fi : frames) {
      const Frame& f = s.frames[fi];
      const DescriptorImage d = descriptors(f.rgb);
      if (!header) {
        out << "sequence_id,frame_id,u,v,category";
        for (int c = 0; c < d.dim(); ++c) out << ",d" << c;
        out << '\n';
        header = true;
      }
      std::vector<Pixel> pool = mask_pixel_list(f.mask);
      std::shuffle(pool.begin(), pool.end(), rng);
      pool.resize(std::min(pool.size(), static_cast<std::size_t>(pixels_per_frame)));
      for (const Pixel& p : pool) {
        out << s.sequence_id << ',' << f.frame_id << ',' << p.u << ',' << p.v << ',' << s.true_category.value_or("");
        for (int c = 0; c < d.dim(); ++c) out << ',' << d.values(p.u, p.v, c);
        out << '\n';
      }
    }
  }
}

nlohmann::json ModelMetrics::to_json() const {
  return {{"name", name}, {"keypoint_transfer", transfer.to_json()}, {"on_object", on_object.to_json()}};
}

ModelMetrics evaluate_descriptors(const std::string& name, const DescriptorFn& descriptors, const Dataset& dataset,
                                  const std::vector<KeypointPair>& pairs, const std::vector<CompositeCase>& cases) {
  ModelMetrics m;
  m.name = name;
  m.transfer = keypoint_transfer_errors(descriptors, dataset.keypoints, pairs);
  m.on_object = on_object_match_rate(descriptors, cases);
  return m;
}

}  // namespace cadd

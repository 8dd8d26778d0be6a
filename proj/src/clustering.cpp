#include "cadd/clustering.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <stdexcept>

namespace cadd {

Assignment min_cost_assignment(const Eigen::MatrixXd& cost) {
  Assignment out;
  if (cost.rows() == 0 || cost.cols() == 0) return out;
  if (!cost.allFinite()) throw std::invalid_argument("min_cost_assignment: costs must be finite");
  const bool transposed = cost.rows() > cost.cols();
  const Eigen::MatrixXd a = transposed ? Eigen::MatrixXd(cost.transpose()) : cost;
  const int n = static_cast<int>(a.rows());  // n <= m
  const int m = static_cast<int>(a.cols());
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // 1-based potentials; p[j] is the row matched to column j (0 = none).
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(m) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(m) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = a(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  for (int j = 1; j <= m; ++j) {
    const int i = p[static_cast<std::size_t>(j)];
    if (i == 0) continue;
    const int row = transposed ? j - 1 : i - 1;
    const int col = transposed ? i - 1 : j - 1;
    out.pairs.emplace_back(row, col);
    out.total_cost += cost(row, col);
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

int nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& x) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c).transpose() - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

namespace {

KMeansResult kmeans_once(const Eigen::MatrixXd& points, int k, std::uint64_t seed, const KMeansOptions& options) {
  const auto n = static_cast<int>(points.rows());
  if (k < 1) throw std::invalid_argument("kmeans: k must be at least 1");
  if (k > n)
    throw std::invalid_argument("kmeans: k=" + std::to_string(k) + " exceeds the number of points " + std::to_string(n));
  std::mt19937_64 rng(seed);
  KMeansResult r;
  r.centroids.resize(k, points.cols());

  // k-means++ seeding.
  std::uniform_int_distribution<int> first(0, n - 1);
  r.centroids.row(0) = points.row(first(rng));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = (points.row(i) - r.centroids.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : d2) total += d;
    int chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> unit(0.0, total);
      double target = unit(rng);
      chosen = n - 1;
      for (int i = 0; i < n; ++i) {
        target -= d2[static_cast<std::size_t>(i)];
        if (target < 0.0 && d2[static_cast<std::size_t>(i)] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = first(rng);
    }
    r.centroids.row(c) = points.row(chosen);
    for (int i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], (points.row(i) - r.centroids.row(c)).squaredNorm());
  }

  r.assignments.assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      const int c = nearest_centroid(r.centroids, points.row(i).transpose());
      r.assignments[static_cast<std::size_t>(i)] = c;
      inertia += (points.row(i) - r.centroids.row(c)).squaredNorm();
    }
    r.inertia.push_back(inertia);
    r.iterations = iter + 1;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      sums.row(r.assignments[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(r.assignments[static_cast<std::size_t>(i)])];
    }
    Eigen::MatrixXd next = r.centroids;
    std::vector<char> taken(static_cast<std::size_t>(n), 0);
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        next.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
        continue;
      }
      // Empty cluster: move it onto the point worst served by its current centroid.
      int worst = -1;
      double worst_d = -1.0;
      for (int i = 0; i < n; ++i) {
        if (taken[static_cast<std::size_t>(i)]) continue;
        const double d = (points.row(i) - r.centroids.row(r.assignments[static_cast<std::size_t>(i)])).squaredNorm();
        if (d > worst_d) {
          worst_d = d;
          worst = i;
        }
      }
      taken[static_cast<std::size_t>(worst)] = 1;
      next.row(c) = points.row(worst);
    }
    const double shift = (next - r.centroids).rowwise().norm().maxCoeff();
    r.centroids = next;
    if (shift <= options.tolerance) {
      r.converged = true;
      break;
    }
  }
  // Final assignment against the final centroids.
  double inertia = 0.0;
  for (int i = 0; i < n; ++i) {
    const int c = nearest_centroid(r.centroids, points.row(i).transpose());
    r.assignments[static_cast<std::size_t>(i)] = c;
    inertia += (points.row(i) - r.centroids.row(c)).squaredNorm();
  }
  r.inertia.push_back(inertia);
  return r;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, const KMeansOptions& options) {
  if (options.restarts < 1) throw std::invalid_argument("kmeans: restarts must be at least 1");
  KMeansResult best = kmeans_once(points, k, seed, options);
  for (int r = 1; r < options.restarts; ++r) {
    KMeansResult next = kmeans_once(points, k, seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(r), options);
    if (next.inertia.back() < best.inertia.back()) best = std::move(next);
  }
  return best;
}

}  // namespace cadd

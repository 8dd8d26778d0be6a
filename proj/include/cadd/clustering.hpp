#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace cadd {

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, column), sorted by row
  double total_cost = 0.0;
};

/// Optimal one-to-one assignment of min(m, n) rows and columns minimizing summed cost
/// (shortest augmenting paths with dual potentials, O(min^2 * max)).
Assignment min_cost_assignment(const Eigen::MatrixXd& cost);

struct KMeansResult {
  Eigen::MatrixXd centroids;        // k x d
  std::vector<int> assignments;     // per input row
  std::vector<double> inertia;      // after every assignment step
  int iterations = 0;
  bool converged = false;

  double final_inertia() const { return inertia.empty() ? 0.0 : inertia.back(); }
};

struct KMeansOptions {
  double tolerance = 1e-6;  // max centroid shift
  int max_iterations = 300;
  int restarts = 1;  // independent seedings; the lowest final inertia wins
};

/// k-means++ seeding followed by Lloyd iterations. Rows of `points` are samples.
/// Throws std::invalid_argument when k < 1 or k exceeds the number of rows.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, const KMeansOptions& options = {});

/// Index of the nearest centroid row; ties resolve to the lowest index.
int nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& x);

}  // namespace cadd

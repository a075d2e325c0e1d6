#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace pathopaint {

/// Row-major point set view: n points of dimension d.
struct PointMatrix {
  std::span<const double> values;
  std::size_t n = 0;
  std::size_t d = 0;

  std::span<const double> row(std::size_t i) const { return values.subspan(i * d, d); }
};

struct KMeansResult {
  std::vector<std::int32_t> assignments;  // size n, each in [0,k)
  std::vector<double> centroids;          // k*d, row-major
  // Inertia after every assignment step, measured against the centroids used for that step.
  std::vector<double> inertia_history;
  int iterations = 0;
  bool converged = false;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

/// Nearest centroid per point; ties go to the lowest centroid index.
std::vector<std::int32_t> assign_nearest(const PointMatrix& points, std::span<const double> centroids, std::size_t k);

/// Sum of squared distances from points to their assigned centroid.
double inertia(const PointMatrix& points, std::span<const double> centroids, std::span<const std::int32_t> assignments);

/// Per-cluster means of the assigned points; clusters with no members keep `previous`.
std::vector<double> update_centroids(const PointMatrix& points, std::span<const std::int32_t> assignments,
                                     std::size_t k, std::span<const double> previous);

/// k-means++ seeding (D^2 sampling).
std::vector<double> kmeans_plus_plus(const PointMatrix& points, std::size_t k, std::uint64_t seed);

/// Lloyd iterations from k-means++ seeds until the assignment is stable or max_iters is hit.
/// On return every point is assigned to its nearest centroid.
KMeansResult kmeans(const PointMatrix& points, std::size_t k, std::uint64_t seed, int max_iters);

}  // namespace pathopaint

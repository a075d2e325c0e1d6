#include "pathopaint/kmeans.hpp"

#include <limits>
#include <random>

#include "pathopaint/errors.hpp"

namespace pathopaint {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

std::vector<std::int32_t> assign_nearest(const PointMatrix& points, std::span<const double> centroids, std::size_t k) {
  std::vector<std::int32_t> out(points.n, 0);
  for (std::size_t i = 0; i < points.n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double dist = squared_distance(points.row(i), centroids.subspan(c * points.d, points.d));
      if (dist < best) {
        best = dist;
        out[i] = static_cast<std::int32_t>(c);
      }
    }
  }
  return out;
}

double inertia(const PointMatrix& points, std::span<const double> centroids, std::span<const std::int32_t> assignments) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.n; ++i) {
    total += squared_distance(points.row(i),
                              centroids.subspan(static_cast<std::size_t>(assignments[i]) * points.d, points.d));
  }
  return total;
}

std::vector<double> update_centroids(const PointMatrix& points, std::span<const std::int32_t> assignments,
                                     std::size_t k, std::span<const double> previous) {
  std::vector<double> sums(k * points.d, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.n; ++i) {
    const auto c = static_cast<std::size_t>(assignments[i]);
    ++counts[c];
    const auto r = points.row(i);
    for (std::size_t j = 0; j < points.d; ++j) sums[c * points.d + j] += r[j];
  }
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < points.d; ++j) {
      auto& v = sums[c * points.d + j];
      v = counts[c] == 0 ? previous[c * points.d + j] : v / static_cast<double>(counts[c]);
    }
  }
  return sums;
}

std::vector<double> kmeans_plus_plus(const PointMatrix& points, std::size_t k, std::uint64_t seed) {
  if (k == 0 || k > points.n) throw ParameterError("k-means++: need 1 <= k <= number of points");
  std::mt19937_64 rng(seed);
  std::vector<double> centroids;
  centroids.reserve(k * points.d);
  std::vector<bool> chosen(points.n, false);
  auto take = [&](std::size_t i) {
    chosen[i] = true;
    const auto r = points.row(i);
    centroids.insert(centroids.end(), r.begin(), r.end());
  };
  take(std::uniform_int_distribution<std::size_t>(0, points.n - 1)(rng));

  std::vector<double> dist(points.n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    const auto last = std::span<const double>(centroids).subspan((c - 1) * points.d, points.d);
    double total = 0.0;
    for (std::size_t i = 0; i < points.n; ++i) {
      dist[i] = std::min(dist[i], squared_distance(points.row(i), last));
      total += dist[i];
    }
    std::size_t pick = points.n;
    if (total > 0.0) {
      double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t i = 0; i < points.n; ++i) {
        if (dist[i] <= 0.0) continue;
        pick = i;
        target -= dist[i];
        if (target < 0.0) break;
      }
    } else {
      // All remaining points coincide with a chosen centroid.
      for (std::size_t i = 0; i < points.n; ++i) {
        if (!chosen[i]) {
          pick = i;
          break;
        }
      }
    }
    take(pick);
  }
  return centroids;
}

KMeansResult kmeans(const PointMatrix& points, std::size_t k, std::uint64_t seed, int max_iters) {
  if (points.n == 0 || points.d == 0) throw ParameterError("k-means: empty point set");
  if (k == 0 || k > points.n) throw ParameterError("k-means: bank smaller than k");
  if (max_iters < 1) throw ParameterError("k-means: max_iters must be >= 1");

  KMeansResult r;
  r.centroids = kmeans_plus_plus(points, k, seed);
  for (int it = 0; it < max_iters; ++it) {
    auto next = assign_nearest(points, r.centroids, k);
    r.inertia_history.push_back(inertia(points, r.centroids, next));
    const bool stable = it > 0 && next == r.assignments;
    r.assignments = std::move(next);
    r.iterations = it + 1;
    if (stable) {
      r.converged = true;
      return r;
    }
    r.centroids = update_centroids(points, r.assignments, k, r.centroids);
  }
  // Iteration budget exhausted: leave every point on its nearest centroid.
  auto final_assign = assign_nearest(points, r.centroids, k);
  r.inertia_history.push_back(inertia(points, r.centroids, final_assign));
  r.converged = final_assign == r.assignments;
  r.assignments = std::move(final_assign);
  return r;
}

}  // namespace pathopaint

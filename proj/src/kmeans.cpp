#include "protoclass/kmeans.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "protoclass/error.hpp"
#include "protoclass/rng.hpp"
#include "protoclass/simd/kernels.hpp"

namespace protoclass {
namespace {

Matrix<double> widen(const Matrix<float>& points) {
  Matrix<double> out(points.rows(), points.cols());
  auto src = points.flat();
  auto dst = out.flat();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!std::isfinite(src[i]))
      throw DataError("kmeans: non-finite value at point " +
                      std::to_string(i / points.cols()));
    dst[i] = src[i];
  }
  return out;
}

Matrix<double> init_random_points(const Matrix<double>& x, std::size_t k,
                                  Rng& rng) {
  // Partial Fisher-Yates: first k entries are a uniform k-subset.
  std::vector<std::size_t> order(x.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_below(order.size() - i));
    std::swap(order[i], order[j]);
  }
  Matrix<double> c(k, x.cols());
  for (std::size_t i = 0; i < k; ++i)
    std::copy_n(x.row(order[i]).begin(), x.cols(), c.row(i).begin());
  return c;
}

Matrix<double> init_plus_plus(const Matrix<double>& x, std::size_t k,
                              Rng& rng) {
  const std::size_t n = x.rows();
  Matrix<double> c(k, x.cols());
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);

  std::size_t pick = static_cast<std::size_t>(rng.uniform_below(n));
  for (std::size_t ci = 0; ci < k; ++ci) {
    if (ci > 0) {
      double total = 0.0;
      for (double d : nearest) total += d;
      if (total > 0.0) {
        // D^2 sampling; chosen points carry zero weight.
        const double target = rng.uniform01() * total;
        double acc = 0.0;
        pick = n;
        for (std::size_t i = 0; i < n; ++i) {
          acc += nearest[i];
          if (nearest[i] > 0.0 && acc > target) {
            pick = i;
            break;
          }
        }
        if (pick == n) {
          for (std::size_t i = n; i-- > 0;)
            if (nearest[i] > 0.0) { pick = i; break; }
        }
      } else {
        // Every remaining point coincides with a centroid.
        std::vector<std::size_t> free;
        for (std::size_t i = 0; i < n; ++i)
          if (!chosen[i]) free.push_back(i);
        pick = free[static_cast<std::size_t>(rng.uniform_below(free.size()))];
      }
    }
    chosen[pick] = true;
    std::copy_n(x.row(pick).begin(), x.cols(), c.row(ci).begin());
    for (std::size_t i = 0; i < n; ++i)
      nearest[i] = std::min(nearest[i], simd::squared_distance(x.row(i), c.row(ci)));
  }
  return c;
}

// Returns inertia; writes assignment and distance per point.
double assign(const Matrix<double>& x, const Matrix<double>& centroids,
              std::vector<std::uint32_t>& assignment,
              std::vector<double>& distance) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_c = 0;
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      const double d = simd::squared_distance(x.row(i), centroids.row(c));
      if (d < best) {
        best = d;
        best_c = static_cast<std::uint32_t>(c);
      }
    }
    assignment[i] = best_c;
    distance[i] = best;
    inertia += best;
  }
  return inertia;
}

}  // namespace

const char* to_string(KMeansInit init) noexcept {
  return init == KMeansInit::kPlusPlus ? "plus_plus" : "random_points";
}

KMeansInit parse_kmeans_init(std::string_view text) {
  if (text == "plus_plus") return KMeansInit::kPlusPlus;
  if (text == "random_points") return KMeansInit::kRandomPoints;
  throw ValidationError("kmeans init must be 'plus_plus' or 'random_points', got '" +
                        std::string(text) + "'");
}

void KMeansConfig::validate() const {
  if (k < 1) throw ValidationError("kmeans: k must be at least 1");
  if (max_iters < 1) throw ValidationError("kmeans: max_iters must be at least 1");
  if (!(tol >= 0.0)) throw ValidationError("kmeans: tol must be non-negative");
}

Clustering kmeans(const Matrix<float>& points, const KMeansConfig& config) {
  config.validate();
  if (points.rows() == 0) throw ValidationError("kmeans: no points");
  const Matrix<double> x = widen(points);
  const std::size_t n = x.rows();
  const std::size_t dim = x.cols();

  Clustering out;
  std::size_t k = config.k;
  if (k > n) {
    k = n;
    out.k_clamped = true;
  }

  Rng rng(config.seed);
  Matrix<double> centroids = config.init == KMeansInit::kPlusPlus
                                 ? init_plus_plus(x, k, rng)
                                 : init_random_points(x, k, rng);

  std::vector<std::uint32_t> assignment(n, 0);
  std::vector<double> distance(n, 0.0);
  std::vector<std::size_t> counts(k, 0);
  double inertia = assign(x, centroids, assignment, distance);
  out.inertia_history.push_back(inertia);

  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    // Update step: centroids move to the means of their points.
    Matrix<double> sums(k, dim, 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      simd::axpy(1.0, x.row(i), sums.row(assignment[i]));
      ++counts[assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      const double inv = 1.0 / static_cast<double>(counts[c]);
      for (std::size_t j = 0; j < dim; ++j) centroids(c, j) = sums(c, j) * inv;
    }
    for (std::size_t i = 0; i < n; ++i)
      distance[i] = simd::squared_distance(x.row(i), centroids.row(assignment[i]));

    // Re-seed empty clusters with the farthest points, never reusing one.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[assignment[i]] > 1 && distance[i] > far_d) {
          far_d = distance[i];
          far = i;
        }
      }
      if (far == n) continue;  // no point can be spared
      --counts[assignment[far]];
      assignment[far] = static_cast<std::uint32_t>(c);
      counts[c] = 1;
      distance[far] = 0.0;
      std::copy_n(x.row(far).begin(), dim, centroids.row(c).begin());
      ++out.reseeded_clusters;
    }

    const double previous = inertia;
    inertia = assign(x, centroids, assignment, distance);
    out.inertia_history.push_back(inertia);
    out.iterations = iter + 1;
    if (inertia == 0.0 || previous - inertia < config.tol * previous) break;
  }

  std::fill(counts.begin(), counts.end(), 0);
  for (auto a : assignment) ++counts[a];
  out.centroids = std::move(centroids);
  out.assignments = std::move(assignment);
  out.counts = std::move(counts);
  out.inertia = inertia;
  return out;
}

double clustering_inertia(const Matrix<float>& points,
                          const Matrix<double>& centroids,
                          std::span<const std::uint32_t> assignments) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const auto p = points.row(i);
    const auto c = centroids.row(assignments[i]);
    for (std::size_t j = 0; j < p.size(); ++j) {
      const long double diff = static_cast<long double>(p[j]) - c[j];
      total += diff * diff;
    }
  }
  return static_cast<double>(total);
}

}  // namespace protoclass

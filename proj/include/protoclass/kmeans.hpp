#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "protoclass/tensor.hpp"

namespace protoclass {

enum class KMeansInit { kRandomPoints, kPlusPlus };

const char* to_string(KMeansInit init) noexcept;
KMeansInit parse_kmeans_init(std::string_view text);

struct KMeansConfig {
  std::size_t k = 16;
  std::size_t max_iters = 100;
  double tol = 1e-4;  // relative inertia improvement
  KMeansInit init = KMeansInit::kPlusPlus;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Clustering {
  Matrix<double> centroids;              // min(k, n) x D
  std::vector<std::uint32_t> assignments;
  std::vector<std::size_t> counts;       // points per centroid
  double inertia = 0.0;                  // sum of squared distances
  std::vector<double> inertia_history;   // one entry per assignment pass
  std::size_t iterations = 0;
  bool k_clamped = false;                // requested k exceeded n
  std::size_t reseeded_clusters = 0;
};

/// Lloyd's algorithm on raw (unnormalized) points.
///
/// Each pass assigns points to the nearest centroid by Euclidean distance
/// (ties go to the lowest centroid index) and then moves every centroid to
/// the mean of its points. A cluster that ends up empty is re-seeded with the
/// point farthest from its own centroid. Iteration stops once the relative
/// inertia improvement drops below `tol` or after `max_iters` passes.
/// Throws DataError on non-finite input.
Clustering kmeans(const Matrix<float>& points, const KMeansConfig& config);

/// Sum of squared distances from each point to its assigned centroid.
double clustering_inertia(const Matrix<float>& points,
                          const Matrix<double>& centroids,
                          std::span<const std::uint32_t> assignments);

}  // namespace protoclass

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "protoclass/error.hpp"
#include "protoclass/kmeans.hpp"
#include "support.hpp"

namespace {

using namespace protoclass;
using testing_support::random_matrix;

KMeansConfig config(std::size_t k, std::uint64_t seed,
                    KMeansInit init = KMeansInit::kPlusPlus) {
  KMeansConfig c;
  c.k = k;
  c.seed = seed;
  c.init = init;
  return c;
}

std::vector<long double> column_means(const Matrix<float>& x) {
  std::vector<long double> mean(x.cols(), 0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t d = 0; d < x.cols(); ++d) mean[d] += x(i, d);
  for (auto& m : mean) m /= static_cast<long double>(x.rows());
  return mean;
}

TEST(KMeans, OneClusterIsTheMean) {
  Rng rng(1);
  const Matrix<float> x = random_matrix(57, 6, rng);
  const Clustering c = kmeans(x, config(1, 3));
  const auto mean = column_means(x);
  for (std::size_t d = 0; d < 6; ++d)
    EXPECT_NEAR(c.centroids(0, d), static_cast<double>(mean[d]), 1e-6);
  EXPECT_EQ(c.counts[0], 57u);
}

TEST(KMeans, KEqualsNGivesZeroInertia) {
  Rng rng(2);
  const Matrix<float> x = random_matrix(12, 4, rng);
  for (KMeansInit init : {KMeansInit::kPlusPlus, KMeansInit::kRandomPoints}) {
    const Clustering c = kmeans(x, config(12, 4, init));
    EXPECT_EQ(c.inertia, 0.0);
    std::vector<std::uint32_t> sorted = c.assignments;
    std::sort(sorted.begin(), sorted.end());
    for (std::uint32_t i = 0; i < 12; ++i) EXPECT_EQ(sorted[i], i);
  }
}

TEST(KMeans, KLargerThanNIsClamped) {
  Rng rng(3);
  const Matrix<float> x = random_matrix(3, 2, rng);
  const Clustering c = kmeans(x, config(8, 0));
  EXPECT_TRUE(c.k_clamped);
  EXPECT_EQ(c.centroids.rows(), 3u);
  EXPECT_EQ(c.inertia, 0.0);
}

TEST(KMeans, RecoversTwoSeparatedBlobs) {
  Rng rng(4);
  const std::size_t n = 200, d = 5;
  Matrix<float> x(n, d);
  std::vector<int> blob(n);
  for (std::size_t i = 0; i < n; ++i) {
    blob[i] = rng.uniform01() < 0.5 ? 0 : 1;
    for (std::size_t j = 0; j < d; ++j)
      x(i, j) = static_cast<float>((j == 0 ? (blob[i] ? 10.0 : -10.0) : 0.0) +
                                   0.1 * rng.normal());
  }
  const Clustering c = kmeans(x, config(2, 5));
  for (std::size_t k = 0; k < 2; ++k) {
    const double target = c.centroids(k, 0) > 0 ? 10.0 : -10.0;
    long double dist = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double t = j == 0 ? target : 0.0;
      dist += (c.centroids(k, j) - t) * (c.centroids(k, j) - t);
    }
    EXPECT_LT(std::sqrt(dist), 0.2);
  }
  // Brute-force nearest-mean oracle: each point belongs to the centroid on
  // its side of the origin.
  for (std::size_t i = 0; i < n; ++i) {
    const bool positive_centroid = c.centroids(c.assignments[i], 0) > 0;
    EXPECT_EQ(positive_centroid, blob[i] == 1);
  }
}

TEST(KMeans, InertiaIsMonotoneAndMatchesRecomputation) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Matrix<float> x = random_matrix(150, 3, rng);
    const Clustering c = kmeans(x, config(6, seed));
    for (std::size_t i = 1; i < c.inertia_history.size(); ++i)
      EXPECT_LE(c.inertia_history[i], c.inertia_history[i - 1] * (1 + 1e-12));
    EXPECT_NEAR(c.inertia, clustering_inertia(x, c.centroids, c.assignments),
                1e-5 * c.inertia);
  }
}

TEST(KMeans, EveryPointIsAssignedToItsNearestCentroid) {
  Rng rng(9);
  const Matrix<float> x = random_matrix(120, 4, rng);
  const Clustering c = kmeans(x, config(5, 1));
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto dist = [&](std::size_t k) {
      long double s = 0;
      for (std::size_t d = 0; d < x.cols(); ++d) {
        const long double diff = x(i, d) - c.centroids(k, d);
        s += diff * diff;
      }
      return s;
    };
    for (std::size_t k = 0; k < c.centroids.rows(); ++k)
      EXPECT_LE(dist(c.assignments[i]), dist(k) * (1 + 1e-12) + 1e-12);
  }
}

TEST(KMeans, SameSeedIsDeterministic) {
  Rng rng(10);
  const Matrix<float> x = random_matrix(80, 3, rng);
  const Clustering a = kmeans(x, config(4, 77));
  const Clustering b = kmeans(x, config(4, 77));
  EXPECT_EQ(a.centroids, b.centroids);
  EXPECT_EQ(a.assignments, b.assignments);
}

// Two distinct values cannot fill three clusters under nearest assignment;
// the run must still terminate with finite centroids covering both values.
TEST(KMeans, DuplicatePointsConvergeToZeroInertia) {
  Matrix<float> x(10, 2, 1.0f);
  x(9, 0) = 5.0f;
  for (KMeansInit init : {KMeansInit::kRandomPoints, KMeansInit::kPlusPlus}) {
    const Clustering c = kmeans(x, config(3, 0, init));
    EXPECT_EQ(c.inertia, 0.0);
    for (double v : c.centroids.flat()) EXPECT_TRUE(std::isfinite(v));
    EXPECT_EQ(std::accumulate(c.counts.begin(), c.counts.end(), std::size_t{0}), 10u);
    EXPECT_NE(c.assignments[0], c.assignments[9]);
  }
}

TEST(KMeans, ConfigValidation) {
  KMeansConfig c;
  c.k = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.max_iters = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.tol = -1;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_EQ(parse_kmeans_init("random_points"), KMeansInit::kRandomPoints);
  EXPECT_THROW(parse_kmeans_init("forgy"), ValidationError);
}

}  // namespace

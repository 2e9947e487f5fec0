#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "protoclass/prototypes.hpp"
#include "protoclass/tensor.hpp"

namespace protoclass {

/// Weights of the probability ensemble alpha*p_v + beta*p_tmax + gamma*p_tavg.
struct EnsembleWeights {
  double alpha = 0.3;
  double beta = 0.5;
  double gamma = 0.5;

  void validate() const;  // non-negative, not all zero
};

struct ScoringConfig {
  double temperature = 0.01;  // shared by all three heads
  EnsembleWeights ensemble;
  bool clamp_cosine = false;  // clamp similarities to [0, 1]

  void validate() const;
};

struct ScoreVector {
  std::vector<double> p_v;     // empty for text-only banks
  std::vector<double> p_tmax;  // empty for visual-only banks
  std::vector<double> p_tavg;
  std::vector<double> p_fused;
  std::size_t predicted_class = 0;
};

/// Numerically stable softmax (max-shifted, double precision).
std::vector<double> softmax(std::span<const double> logits);
/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values) noexcept;

/// Visual head: softmax_m( sum_k cos(x, V[m][k]) / tau ).
std::vector<double> score_visual(std::span<const float> x,
                                 const Tensor3<float>& visual, double tau,
                                 bool clamp_cosine = false);
/// Text-max head: softmax_m( max_j cos(x, T[m][j]) / tau ).
std::vector<double> score_text_max(std::span<const float> x,
                                   const Tensor3<float>& textual, double tau,
                                   bool clamp_cosine = false);
/// Text-average head: softmax_m( sum_j cos(x, T[m][j]) / (tau * J) ).
std::vector<double> score_text_avg(std::span<const float> x,
                                   const Tensor3<float>& textual, double tau,
                                   bool clamp_cosine = false);

struct FusedPrediction {
  std::vector<double> probabilities;
  std::size_t predicted_class = 0;
};

/// Weighted sum of the heads present in `scores`. A head with non-zero
/// weight must be present.
FusedPrediction fuse(const ScoreVector& scores, const EnsembleWeights& weights);

/// All available heads plus the fused prediction for one query.
ScoreVector score_query(std::span<const float> x, const PrototypeBank& bank,
                        const ScoringConfig& config);

/// Row-wise score_query. Prototype norms are computed once and shared, and
/// each row produces exactly the single-query result.
std::vector<ScoreVector> score_batch(const Matrix<float>& queries,
                                     const PrototypeBank& bank,
                                     const ScoringConfig& config,
                                     unsigned threads = 1);

}  // namespace protoclass

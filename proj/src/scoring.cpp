#include "protoclass/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "protoclass/error.hpp"
#include "protoclass/parallel.hpp"
#include "protoclass/simd/kernels.hpp"

namespace protoclass {
namespace {

// Reciprocal L2 norms of every prototype row, validated once per bank.
std::vector<double> prototype_norms(const Tensor3<float>& t, const char* which) {
  std::vector<double> norms;
  norms.reserve(t.classes() * t.slots());
  for (std::size_t m = 0; m < t.classes(); ++m) {
    for (std::size_t s = 0; s < t.slots(); ++s) {
      const auto row = t.at(m, s);
      const double norm = std::sqrt(simd::dot(row, row));
      if (!(norm > 0.0) || !std::isfinite(norm))
        throw DataError(std::string(which) + " prototype " + std::to_string(s) +
                        " of class " + std::to_string(m) +
                        " has zero or non-finite norm");
      norms.push_back(norm);
    }
  }
  return norms;
}

double query_norm(std::span<const float> x) {
  const double norm = std::sqrt(simd::dot(x, x));
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw DataError("query vector has zero or non-finite norm");
  return norm;
}

void check_dims(std::span<const float> x, const Tensor3<float>& t) {
  if (x.size() != t.dim())
    throw ValidationError("query dimension " + std::to_string(x.size()) +
                          " does not match prototype dimension " +
                          std::to_string(t.dim()));
}

// cos(x, t[m][s]) laid out as [m * slots + s].
std::vector<double> similarities(std::span<const float> x, double x_norm,
                                 const Tensor3<float>& t,
                                 std::span<const double> norms, bool clamp) {
  std::vector<double> sims(t.classes() * t.slots());
  for (std::size_t m = 0; m < t.classes(); ++m) {
    for (std::size_t s = 0; s < t.slots(); ++s) {
      const std::size_t idx = m * t.slots() + s;
      double c = simd::dot(x, t.at(m, s)) / (x_norm * norms[idx]);
      if (clamp) c = std::max(0.0, c);
      sims[idx] = c;
    }
  }
  return sims;
}

enum class Reduce { kSum, kMax, kMean };

std::vector<double> head(std::span<const double> sims, std::size_t classes,
                         std::size_t slots, double tau, Reduce reduce) {
  std::vector<double> logits(classes);
  for (std::size_t m = 0; m < classes; ++m) {
    const auto row = sims.subspan(m * slots, slots);
    switch (reduce) {
      case Reduce::kSum: {
        double acc = 0.0;
        for (double c : row) acc += c;
        logits[m] = acc / tau;
        break;
      }
      case Reduce::kMax:
        logits[m] = *std::max_element(row.begin(), row.end()) / tau;
        break;
      case Reduce::kMean: {
        double acc = 0.0;
        for (double c : row) acc += c;
        logits[m] = acc / (tau * static_cast<double>(slots));
        break;
      }
    }
  }
  return softmax(logits);
}

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw ValidationError("temperature must be positive and finite");
}

std::vector<double> score_one_head(std::span<const float> x,
                                   const Tensor3<float>& t, double tau,
                                   bool clamp, Reduce reduce, const char* which) {
  check_tau(tau);
  check_dims(x, t);
  const auto norms = prototype_norms(t, which);
  const auto sims = similarities(x, query_norm(x), t, norms, clamp);
  return head(sims, t.classes(), t.slots(), tau, reduce);
}

struct PreparedBank {
  std::vector<double> visual_norms;
  std::vector<double> textual_norms;
};

PreparedBank prepare(const PrototypeBank& bank) {
  PreparedBank p;
  if (bank.has_visual()) p.visual_norms = prototype_norms(bank.visual, "visual");
  if (bank.has_textual())
    p.textual_norms = prototype_norms(bank.textual, "textual");
  return p;
}

ScoreVector score_prepared(std::span<const float> x, const PrototypeBank& bank,
                           const PreparedBank& prepared,
                           const ScoringConfig& config) {
  if (x.size() != bank.dim())
    throw ValidationError("query dimension " + std::to_string(x.size()) +
                          " does not match bank dimension " +
                          std::to_string(bank.dim()));
  const double x_norm = query_norm(x);
  const double tau = config.temperature;
  ScoreVector out;
  if (bank.has_visual()) {
    const auto sims = similarities(x, x_norm, bank.visual,
                                   prepared.visual_norms, config.clamp_cosine);
    out.p_v = head(sims, bank.visual.classes(), bank.visual.slots(), tau,
                   Reduce::kSum);
  }
  if (bank.has_textual()) {
    const auto sims = similarities(x, x_norm, bank.textual,
                                   prepared.textual_norms, config.clamp_cosine);
    out.p_tmax = head(sims, bank.textual.classes(), bank.textual.slots(), tau,
                      Reduce::kMax);
    out.p_tavg = head(sims, bank.textual.classes(), bank.textual.slots(), tau,
                      Reduce::kMean);
  }
  auto fused = fuse(out, config.ensemble);
  out.p_fused = std::move(fused.probabilities);
  out.predicted_class = fused.predicted_class;
  return out;
}

}  // namespace

void EnsembleWeights::validate() const {
  for (double w : {alpha, beta, gamma})
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ValidationError("ensemble weights must be non-negative and finite");
  if (!(alpha + beta + gamma > 0.0))
    throw ValidationError("ensemble weights must not all be zero");
}

void ScoringConfig::validate() const {
  check_tau(temperature);
  ensemble.validate();
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

std::size_t argmax(std::span<const double> values) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

std::vector<double> score_visual(std::span<const float> x,
                                 const Tensor3<float>& visual, double tau,
                                 bool clamp_cosine) {
  return score_one_head(x, visual, tau, clamp_cosine, Reduce::kSum, "visual");
}

std::vector<double> score_text_max(std::span<const float> x,
                                   const Tensor3<float>& textual, double tau,
                                   bool clamp_cosine) {
  return score_one_head(x, textual, tau, clamp_cosine, Reduce::kMax, "textual");
}

std::vector<double> score_text_avg(std::span<const float> x,
                                   const Tensor3<float>& textual, double tau,
                                   bool clamp_cosine) {
  return score_one_head(x, textual, tau, clamp_cosine, Reduce::kMean, "textual");
}

FusedPrediction fuse(const ScoreVector& scores, const EnsembleWeights& weights) {
  weights.validate();
  struct Term {
    double weight;
    const std::vector<double>* probs;
    const char* name;
  };
  const Term terms[] = {{weights.alpha, &scores.p_v, "visual"},
                        {weights.beta, &scores.p_tmax, "text-max"},
                        {weights.gamma, &scores.p_tavg, "text-avg"}};
  std::size_t m = 0;
  for (const auto& t : terms) {
    if (t.weight == 0.0) continue;
    if (t.probs->empty())
      throw ValidationError(std::string("ensemble weight on the ") + t.name +
                            " head is non-zero but the head is unavailable");
    if (m != 0 && t.probs->size() != m)
      throw ValidationError("head probability vectors differ in length");
    m = t.probs->size();
  }
  FusedPrediction out;
  out.probabilities.assign(m, 0.0);
  for (const auto& t : terms) {
    if (t.weight == 0.0) continue;
    for (std::size_t i = 0; i < m; ++i)
      out.probabilities[i] += t.weight * (*t.probs)[i];
  }
  out.predicted_class = argmax(out.probabilities);
  return out;
}

ScoreVector score_query(std::span<const float> x, const PrototypeBank& bank,
                        const ScoringConfig& config) {
  config.validate();
  return score_prepared(x, bank, prepare(bank), config);
}

std::vector<ScoreVector> score_batch(const Matrix<float>& queries,
                                     const PrototypeBank& bank,
                                     const ScoringConfig& config,
                                     unsigned threads) {
  config.validate();
  if (queries.rows() > 0 && queries.cols() != bank.dim())
    throw ValidationError("query dimension " + std::to_string(queries.cols()) +
                          " does not match bank dimension " +
                          std::to_string(bank.dim()));
  const PreparedBank prepared = prepare(bank);
  std::vector<ScoreVector> out(queries.rows());
  parallel_for(queries.rows(), threads, [&](std::size_t i) {
    out[i] = score_prepared(queries.row(i), bank, prepared, config);
  });
  return out;
}

}  // namespace protoclass

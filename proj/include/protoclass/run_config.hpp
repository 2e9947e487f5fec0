#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "protoclass/embedding_store.hpp"
#include "protoclass/evaluation.hpp"
#include "protoclass/kmeans.hpp"
#include "protoclass/scoring.hpp"
#include "protoclass/training.hpp"

namespace protoclass {

/// Everything one CLI invocation needs. JSON layout:
///   { "seed", "threads",
///     "kmeans":  { "k", "max_iters", "tol", "init" },
///     "train":   { "lambda1", "lambda2", "epochs", "batch_size", "base_lr",
///                  "schedule", "optimizer", "weight_decay", "beta1",
///                  "beta2", "eps" },
///     "scoring": { "temperature", "clamp_cosine",
///                  "ensemble": { "alpha", "beta", "gamma" } },
///     "split":   { "ratios": [train, val, test] },
///     "mode":    { "name", "shots", "neighbors" } }
/// Unknown keys are rejected; missing keys keep their defaults.
struct RunConfig {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  KMeansConfig kmeans;
  TrainConfig train;
  ScoringConfig scoring;
  SplitRatios split;
  ModeSpec mode;

  /// Propagates `seed` and `threads` into the nested configs.
  void sync();
  void validate() const;
  nlohmann::json to_json() const;
};

/// Overlays `doc` onto `base`. Throws ValidationError naming the offending
/// key path.
RunConfig apply_config_json(RunConfig base, const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base);

/// PROTOCLASS_SEED, when set to an unsigned integer.
std::optional<std::uint64_t> seed_from_env();

}  // namespace protoclass

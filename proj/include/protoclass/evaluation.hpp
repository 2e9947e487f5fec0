#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "protoclass/embedding_store.hpp"
#include "protoclass/kmeans.hpp"
#include "protoclass/metrics.hpp"
#include "protoclass/prototypes.hpp"
#include "protoclass/scoring.hpp"
#include "protoclass/training.hpp"

namespace protoclass {

enum class ModeKind {
  kFullySupervised,
  kFewShot,
  kTrainingFreeVisual,
  kZeroShotText,
  kKnn,
};

struct ModeSpec {
  ModeKind kind = ModeKind::kFullySupervised;
  std::size_t shots = 16;      // few_shot
  std::size_t neighbors = 16;  // knn

  static ModeSpec parse(std::string_view name, std::size_t shots = 16,
                        std::size_t neighbors = 16);
  std::string name() const;
  void validate() const;
};

struct EvalReport {
  ModeSpec mode;
  ClassManifest classes;
  ConfusionMatrix confusion;
  MetricBundle metrics;
  std::vector<std::uint32_t> predictions;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
  std::string per_class_csv() const;
  std::string confusion_csv() const;
};

/// What a mode is allowed to see. zero_shot_text reads only bank->textual,
/// training_free_visual only bank->visual, knn only `train`.
struct EvalInputs {
  const PrototypeBank* bank = nullptr;
  const EmbeddingSet* train = nullptr;
};

/// Predicts every row of `test` and scores the predictions.
///   fully_supervised / few_shot: argmax of the weighted ensemble
///   training_free_visual:        argmax of the visual head
///   zero_shot_text:              argmax of (beta*p_tmax + gamma*p_tavg),
///                                weights renormalized to sum to 1
///   knn:                         cosine kNN majority vote
/// Throws ValidationError when the inputs do not fit the mode.
EvalReport evaluate(const EvalInputs& inputs, const EmbeddingSet& test,
                    const ModeSpec& mode, const ScoringConfig& scoring,
                    unsigned threads = 1);

/// Majority vote among the `neighbors` train-tagged rows closest by cosine
/// distance. Distance ties go to the lower row index and vote ties to the
/// smaller label.
std::vector<std::uint32_t> knn_predict(const EmbeddingSet& train,
                                       const Matrix<float>& queries,
                                       std::size_t neighbors,
                                       unsigned threads = 1);

struct ExperimentConfig {
  KMeansConfig kmeans;
  TrainConfig train;
  ScoringConfig scoring;
  std::uint64_t seed = 0;  // few-shot sampling
  unsigned threads = 1;
};

struct ExperimentResult {
  EvalReport report;
  std::optional<PrototypeBank> bank;
  std::optional<TrainReport> train_report;
  std::vector<std::string> notes;
};

/// Full pipeline for one mode on a split dataset: sample (few_shot), build
/// prototypes, train (fully_supervised / few_shot), then evaluate on the
/// test-tagged rows.
ExperimentResult run_experiment(const EmbeddingSet& data,
                                const PromptSet* prompts, const ModeSpec& mode,
                                const ExperimentConfig& config);

}  // namespace protoclass

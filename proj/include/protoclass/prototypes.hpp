#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoclass/embedding_store.hpp"
#include "protoclass/kmeans.hpp"
#include "protoclass/tensor.hpp"

namespace protoclass {

struct BankProvenance {
  std::uint64_t kmeans_seed = 0;
  std::size_t requested_k = 0;
  std::string kmeans_init;
  std::string features_crc32;  // of the training rows used for clustering
  std::string prompts_crc32;
  std::size_t trained_epochs = 0;
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const BankProvenance&) const = default;
};

/// Visual prototypes V (M x K x D) and textual prototypes T (M x J x D).
/// A text-only bank (zero-shot) has an empty visual tensor.
struct PrototypeBank {
  ClassManifest classes;
  Tensor3<float> visual;
  Tensor3<float> textual;
  BankProvenance provenance;

  std::size_t class_count() const noexcept { return classes.size(); }
  std::size_t dim() const noexcept {
    return textual.empty() ? visual.dim() : textual.dim();
  }
  bool has_visual() const noexcept { return !visual.empty(); }
  bool has_textual() const noexcept { return !textual.empty(); }

  /// Throws DataError on shape mismatch or non-finite entries.
  void validate() const;

  bool operator==(const PrototypeBank&) const = default;
};

struct VisualPrototypes {
  Tensor3<float> tensor;
  std::vector<std::string> notes;  // padding and clamping reports
};

/// Per-class K-means over the train-tagged rows. Each class clusters with its
/// own seed stream derived from (kcfg.seed, class id). Classes with fewer than
/// K rows repeat their centroids cyclically to fill K slots.
VisualPrototypes build_visual_prototypes(const EmbeddingSet& train,
                                         const KMeansConfig& kcfg,
                                         unsigned threads = 1);

struct TextualPrototypes {
  Tensor3<float> tensor;
  std::vector<std::string> notes;
};

/// Copies prompt embeddings verbatim. Ragged classes are padded to the
/// largest J by repeating their last prompt embedding.
TextualPrototypes build_textual_prototypes(const PromptSet& prompts,
                                           std::size_t expected_dim = 0);

/// Directory with bank_manifest.json, visual.bin and textual.bin. Each
/// payload uses the features.bin layout (rows = M*K or M*J) and its CRC-32
/// is recorded in the manifest.
void save_bank(const PrototypeBank& bank, const std::filesystem::path& dir);
PrototypeBank load_bank(const std::filesystem::path& dir);

/// CRC-32 over the visual then textual payload bytes, as hex.
std::string bank_hash(const PrototypeBank& bank);

}  // namespace protoclass

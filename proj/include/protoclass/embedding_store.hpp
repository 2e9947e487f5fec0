#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "protoclass/tensor.hpp"

namespace protoclass {

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

const char* to_string(Split split) noexcept;

/// Ordered class names; the index of a name is its class id.
class ClassManifest {
 public:
  ClassManifest() = default;
  /// Throws DataError on empty or duplicate names.
  explicit ClassManifest(std::vector<std::string> names);

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(std::size_t id) const { return names_.at(id); }
  std::optional<std::uint32_t> find(std::string_view name) const;

  bool operator==(const ClassManifest&) const = default;

 private:
  std::vector<std::string> names_;
};

/// N feature rows of dimension D with class labels and optional split tags.
/// Immutable once constructed; the constructor enforces every invariant
/// (labels in range, no zero or non-finite rows, tags cover every row).
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  EmbeddingSet(Matrix<float> features, std::vector<std::uint32_t> labels,
               ClassManifest classes, std::vector<Split> splits = {},
               nlohmann::json metadata = nlohmann::json::object());

  const Matrix<float>& features() const noexcept { return features_; }
  std::span<const float> row(std::size_t i) const noexcept {
    return features_.row(i);
  }
  const std::vector<std::uint32_t>& labels() const noexcept { return labels_; }
  const ClassManifest& classes() const noexcept { return classes_; }
  const std::vector<Split>& splits() const noexcept { return splits_; }
  /// Extra manifest keys (e.g. encoder provenance) carried through save.
  const nlohmann::json& metadata() const noexcept { return metadata_; }

  std::size_t size() const noexcept { return features_.rows(); }
  std::size_t dim() const noexcept { return features_.cols(); }
  std::size_t class_count() const noexcept { return classes_.size(); }
  bool has_split_tags() const noexcept { return !splits_.empty(); }
  /// Untagged sets treat every row as training data.
  Split split_of(std::size_t i) const noexcept {
    return splits_.empty() ? Split::kTrain : splits_[i];
  }

  std::vector<std::size_t> rows_in(Split split) const;
  std::vector<std::size_t> class_counts() const;

  /// Rows in the given order; split tags travel with their rows.
  EmbeddingSet subset(std::span<const std::size_t> rows) const;
  /// Only the rows tagged `split`, in original order.
  EmbeddingSet only(Split split) const;
  EmbeddingSet with_splits(std::vector<Split> splits) const;

  bool operator==(const EmbeddingSet&) const = default;

 private:
  Matrix<float> features_;
  std::vector<std::uint32_t> labels_;
  ClassManifest classes_;
  std::vector<Split> splits_;
  nlohmann::json metadata_ = nlohmann::json::object();
};

/// Reads an embedding directory (manifest.json + features/labels/splits).
EmbeddingSet load_embedding_set(const std::filesystem::path& dir);
/// Writes the directory, creating it if needed. Splits are written only
/// when the set carries tags.
void save_embedding_set(const EmbeddingSet& set,
                        const std::filesystem::path& dir);

/// A bare features.bin file, e.g. a prediction query.
Matrix<float> load_feature_file(const std::filesystem::path& path);
void save_feature_file(const Matrix<float>& features,
                       const std::filesystem::path& path);

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

/// Parses "0.7,0.1,0.2". Throws ValidationError naming --ratios.
SplitRatios parse_split_ratios(std::string_view text);
void validate_split_ratios(const SplitRatios& ratios);

/// Stratified split: each class is shuffled with its own stream of `seed`
/// and cut into train/val/test blocks whose sizes are rounded from the
/// ratios. Every class receives at least one row in each split, so classes
/// with fewer than 3 rows are rejected.
EmbeddingSet split_dataset(const EmbeddingSet& set, const SplitRatios& ratios,
                           std::uint64_t seed);

struct ClassShortage {
  std::uint32_t class_id;
  std::size_t available;
  std::size_t requested;
};

struct FewShotSample {
  EmbeddingSet subset;  // train rows only, original order
  std::vector<ClassShortage> shortages;
};

/// Keeps min(shots, available) train rows per class. With a fixed seed the
/// rows kept for a smaller `shots` are a subset of those for a larger one.
FewShotSample sample_few_shot(const EmbeddingSet& set, std::size_t shots,
                              std::uint64_t seed);

/// Per-class prompt texts and/or prompt embeddings (J_m rows per class).
struct PromptSet {
  ClassManifest classes;
  std::vector<std::vector<std::string>> texts;
  std::vector<Matrix<float>> embeddings;
  nlohmann::json metadata = nlohmann::json::object();

  bool has_embeddings() const noexcept { return !embeddings.empty(); }
  std::size_t dim() const noexcept {
    return embeddings.empty() ? 0 : embeddings.front().cols();
  }
  /// Throws DataError when embeddings are missing for a class or disagree
  /// on dimension.
  void validate() const;
};

/// JSON object mapping class name to an array of prompt strings. Classes
/// keep file order unless `order` is given, in which case every class in
/// `order` must be present.
PromptSet load_prompt_texts(const std::filesystem::path& path,
                            const ClassManifest* order = nullptr);

/// Prompt embedding directory: the embedding layout with rows grouped by
/// class and a "prompt_index" array of {class, offset, count} entries.
PromptSet load_prompt_embeddings(const std::filesystem::path& dir);
void save_prompt_embeddings(const PromptSet& prompts,
                            const std::filesystem::path& dir);

}  // namespace protoclass

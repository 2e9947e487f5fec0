#include "protoclass/embedding_store.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "protoclass/binary_format.hpp"
#include "protoclass/error.hpp"
#include "protoclass/rng.hpp"

namespace protoclass {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kFeaturesFile = "features.bin";
constexpr const char* kLabelsFile = "labels.bin";
constexpr const char* kSplitsFile = "splits.bin";

// Keys owned by the format; anything else is carried as metadata.
const std::set<std::string>& reserved_keys() {
  static const std::set<std::string> keys{
      "format_version", "n",           "d",           "classes",
      "labels_file",    "features_file", "splits_file", "dtype",
      "prompt_index"};
  return keys;
}

template <typename T>
T require(const json& manifest, const char* key, const fs::path& where) {
  if (!manifest.contains(key))
    throw DataError(where.string() + ": manifest missing '" + key + "'");
  try {
    return manifest.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError(where.string() + ": manifest key '" + key +
                    "' has the wrong type");
  }
}

// Payload paths must stay inside the directory.
fs::path payload_path(const fs::path& dir, const std::string& name) {
  const fs::path rel(name);
  if (name.empty() || rel.is_absolute() ||
      std::find(rel.begin(), rel.end(), "..") != rel.end())
    throw DataError(dir.string() + ": invalid payload file name '" + name + "'");
  return dir / rel;
}

struct RawDirectory {
  Matrix<float> features;
  std::vector<std::uint32_t> labels;
  std::vector<Split> splits;
  ClassManifest classes;
  json manifest;
};

RawDirectory read_directory(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestFile;
  if (!fs::exists(manifest_path))
    throw DataError(manifest_path.string() + ": missing file");
  RawDirectory raw;
  raw.manifest = io::read_json(manifest_path);
  const json& m = raw.manifest;
  if (!m.is_object()) throw DataError(manifest_path.string() + ": not an object");

  const auto version = require<std::uint32_t>(m, "format_version", manifest_path);
  if (version != io::kFormatVersion)
    throw DataError(manifest_path.string() + ": unsupported format_version " +
                    std::to_string(version));
  const auto dtype = require<std::string>(m, "dtype", manifest_path);
  if (dtype != "f32le")
    throw DataError(manifest_path.string() + ": unsupported dtype '" + dtype + "'");
  const auto n = require<std::uint64_t>(m, "n", manifest_path);
  const auto d = require<std::uint64_t>(m, "d", manifest_path);
  raw.classes = ClassManifest(
      require<std::vector<std::string>>(m, "classes", manifest_path));

  const fs::path features_path =
      payload_path(dir, require<std::string>(m, "features_file", manifest_path));
  raw.features = io::decode_features(io::read_file(features_path),
                                     features_path.string());
  if (raw.features.cols() != d)
    throw DataError(features_path.string() + ": dimension mismatch, manifest d=" +
                    std::to_string(d) + " but payload d=" +
                    std::to_string(raw.features.cols()));
  if (raw.features.rows() != n)
    throw DataError(features_path.string() + ": row count mismatch, manifest n=" +
                    std::to_string(n) + " but payload n=" +
                    std::to_string(raw.features.rows()));

  const fs::path labels_path =
      payload_path(dir, require<std::string>(m, "labels_file", manifest_path));
  raw.labels = io::decode_labels(io::read_file(labels_path), labels_path.string());
  if (raw.labels.size() != n)
    throw DataError(labels_path.string() + ": expected " + std::to_string(n) +
                    " labels, found " + std::to_string(raw.labels.size()));

  if (m.contains("splits_file") && !m.at("splits_file").is_null()) {
    const fs::path splits_path =
        payload_path(dir, require<std::string>(m, "splits_file", manifest_path));
    const auto tags = io::decode_splits(io::read_file(splits_path),
                                        splits_path.string());
    if (tags.size() != n)
      throw DataError(splits_path.string() + ": expected " + std::to_string(n) +
                      " split tags, found " + std::to_string(tags.size()));
    raw.splits.reserve(tags.size());
    for (auto t : tags) raw.splits.push_back(static_cast<Split>(t));
  }
  return raw;
}

json extra_keys(const json& manifest) {
  json extra = json::object();
  for (auto it = manifest.begin(); it != manifest.end(); ++it)
    if (!reserved_keys().contains(it.key())) extra[it.key()] = it.value();
  return extra;
}

json base_manifest(std::size_t n, std::size_t d, const ClassManifest& classes,
                   bool with_splits, const json& metadata) {
  json m = metadata.is_object() ? metadata : json::object();
  m["format_version"] = io::kFormatVersion;
  m["n"] = n;
  m["d"] = d;
  m["classes"] = classes.names();
  m["features_file"] = kFeaturesFile;
  m["labels_file"] = kLabelsFile;
  if (with_splits) m["splits_file"] = kSplitsFile;
  m["dtype"] = "f32le";
  return m;
}

void write_payloads(const fs::path& dir, const Matrix<float>& features,
                    const std::vector<std::uint32_t>& labels,
                    const std::vector<Split>& splits) {
  io::write_file(dir / kFeaturesFile, io::encode_features(features));
  io::write_file(dir / kLabelsFile, io::encode_labels(labels));
  if (!splits.empty()) {
    std::vector<std::uint8_t> tags;
    tags.reserve(splits.size());
    for (Split s : splits) tags.push_back(static_cast<std::uint8_t>(s));
    io::write_file(dir / kSplitsFile, io::encode_splits(tags));
  }
}

}  // namespace

const char* to_string(Split split) noexcept {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "unknown";
}

ClassManifest::ClassManifest(std::vector<std::string> names)
    : names_(std::move(names)) {
  std::set<std::string_view> seen;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty())
      throw DataError("class name at index " + std::to_string(i) + " is empty");
    if (!seen.insert(names_[i]).second)
      throw DataError("duplicate class name '" + names_[i] + "'");
  }
}

std::optional<std::uint32_t> ClassManifest::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<std::uint32_t>(i);
  return std::nullopt;
}

EmbeddingSet::EmbeddingSet(Matrix<float> features,
                           std::vector<std::uint32_t> labels,
                           ClassManifest classes, std::vector<Split> splits,
                           json metadata)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      classes_(std::move(classes)),
      splits_(std::move(splits)),
      metadata_(std::move(metadata)) {
  if (features_.cols() == 0 && features_.rows() > 0)
    throw DataError("feature dimension must be at least 1");
  if (labels_.size() != features_.rows())
    throw DataError("label count " + std::to_string(labels_.size()) +
                    " does not match row count " +
                    std::to_string(features_.rows()));
  if (!splits_.empty() && splits_.size() != features_.rows())
    throw DataError("split tag count does not match row count");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] >= classes_.size())
      throw DataError("label " + std::to_string(labels_[i]) + " at row " +
                      std::to_string(i) + " is out of range for " +
                      std::to_string(classes_.size()) + " classes");
  }
  for (std::size_t i = 0; i < features_.rows(); ++i) {
    bool nonzero = false;
    for (float v : features_.row(i)) {
      if (!std::isfinite(v))
        throw DataError("non-finite feature value at row " + std::to_string(i));
      nonzero = nonzero || v != 0.0f;
    }
    if (!nonzero)
      throw DataError("feature row " + std::to_string(i) +
                      " is all zeros; cosine similarity is undefined");
  }
  if (!metadata_.is_object()) metadata_ = json::object();
}

std::vector<std::size_t> EmbeddingSet::rows_in(Split split) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < size(); ++i)
    if (split_of(i) == split) rows.push_back(i);
  return rows;
}

std::vector<std::size_t> EmbeddingSet::class_counts() const {
  std::vector<std::size_t> counts(class_count(), 0);
  for (auto label : labels_) ++counts[label];
  return counts;
}

EmbeddingSet EmbeddingSet::subset(std::span<const std::size_t> rows) const {
  Matrix<float> features(rows.size(), dim());
  std::vector<std::uint32_t> labels;
  std::vector<Split> splits;
  labels.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t src = rows[r];
    if (src >= size()) throw ValidationError("subset row out of range");
    std::copy_n(row(src).begin(), dim(), features.row(r).begin());
    labels.push_back(labels_[src]);
    if (!splits_.empty()) splits.push_back(splits_[src]);
  }
  return EmbeddingSet(std::move(features), std::move(labels), classes_,
                      std::move(splits), metadata_);
}

EmbeddingSet EmbeddingSet::only(Split split) const {
  const auto rows = rows_in(split);
  return subset(rows);
}

EmbeddingSet EmbeddingSet::with_splits(std::vector<Split> splits) const {
  return EmbeddingSet(features_, labels_, classes_, std::move(splits),
                      metadata_);
}

EmbeddingSet load_embedding_set(const fs::path& dir) {
  RawDirectory raw = read_directory(dir);
  json extra = extra_keys(raw.manifest);
  return EmbeddingSet(std::move(raw.features), std::move(raw.labels),
                      std::move(raw.classes), std::move(raw.splits),
                      std::move(extra));
}

void save_embedding_set(const EmbeddingSet& set, const fs::path& dir) {
  fs::create_directories(dir);
  write_payloads(dir, set.features(), set.labels(), set.splits());
  io::write_json(dir / kManifestFile,
                 base_manifest(set.size(), set.dim(), set.classes(),
                               set.has_split_tags(), set.metadata()));
}

Matrix<float> load_feature_file(const fs::path& path) {
  return io::decode_features(io::read_file(path), path.string());
}

void save_feature_file(const Matrix<float>& features, const fs::path& path) {
  io::write_file(path, io::encode_features(features));
}

void validate_split_ratios(const SplitRatios& r) {
  if (!(r.train > 0.0 && r.val > 0.0 && r.test > 0.0))
    throw ValidationError("--ratios: every ratio must be positive");
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9)
    throw ValidationError("--ratios: ratios must sum to 1");
}

SplitRatios parse_split_ratios(std::string_view text) {
  std::vector<double> parts;
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("--ratios: cannot parse '" + item + "'");
    }
  }
  if (parts.size() != 3)
    throw ValidationError("--ratios: expected three comma-separated values");
  SplitRatios ratios{parts[0], parts[1], parts[2]};
  validate_split_ratios(ratios);
  return ratios;
}

EmbeddingSet split_dataset(const EmbeddingSet& set, const SplitRatios& ratios,
                           std::uint64_t seed) {
  validate_split_ratios(ratios);
  std::vector<std::vector<std::size_t>> by_class(set.class_count());
  for (std::size_t i = 0; i < set.size(); ++i)
    by_class[set.labels()[i]].push_back(i);

  std::vector<Split> tags(set.size(), Split::kTrain);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& rows = by_class[c];
    if (rows.empty()) continue;
    const std::size_t count = rows.size();
    if (count < 3)
      throw DataError("class '" + set.classes().name(c) + "' has " +
                      std::to_string(count) +
                      " samples; at least 3 are needed for train/val/test");
    auto n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(ratios.val * count)));
    auto n_test = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(ratios.test * count)));
    while (n_val + n_test >= count) {
      if (n_val >= n_test) --n_val; else --n_test;
    }
    Rng rng = Rng::stream(seed, c);
    rng.shuffle(std::span(rows));
    const std::size_t n_train = count - n_val - n_test;
    for (std::size_t r = 0; r < count; ++r) {
      tags[rows[r]] = r < n_train            ? Split::kTrain
                      : r < n_train + n_val  ? Split::kVal
                                             : Split::kTest;
    }
  }
  return set.with_splits(std::move(tags));
}

FewShotSample sample_few_shot(const EmbeddingSet& set, std::size_t shots,
                              std::uint64_t seed) {
  if (shots < 1) throw ValidationError("--shots must be at least 1");
  std::vector<std::vector<std::size_t>> by_class(set.class_count());
  for (std::size_t i = 0; i < set.size(); ++i)
    if (set.split_of(i) == Split::kTrain) by_class[set.labels()[i]].push_back(i);

  FewShotSample out;
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& rows = by_class[c];
    if (rows.size() < shots)
      out.shortages.push_back({static_cast<std::uint32_t>(c), rows.size(), shots});
    // Shuffle the full pool so prefixes nest across different `shots`.
    Rng rng = Rng::stream(seed, c);
    rng.shuffle(std::span(rows));
    const std::size_t take = std::min(shots, rows.size());
    keep.insert(keep.end(), rows.begin(), rows.begin() + take);
  }
  std::sort(keep.begin(), keep.end());
  out.subset = set.subset(keep);
  return out;
}

void PromptSet::validate() const {
  if (!texts.empty() && texts.size() != classes.size())
    throw DataError("prompt texts cover " + std::to_string(texts.size()) +
                    " classes, expected " + std::to_string(classes.size()));
  if (embeddings.empty()) return;
  if (embeddings.size() != classes.size())
    throw DataError("prompt embeddings cover " +
                    std::to_string(embeddings.size()) + " classes, expected " +
                    std::to_string(classes.size()));
  const std::size_t d = embeddings.front().cols();
  for (std::size_t c = 0; c < embeddings.size(); ++c) {
    if (embeddings[c].rows() == 0)
      throw DataError("class '" + classes.name(c) + "' has no prompt embeddings");
    if (embeddings[c].cols() != d)
      throw DataError("class '" + classes.name(c) +
                      "' prompt embeddings have dimension " +
                      std::to_string(embeddings[c].cols()) + ", expected " +
                      std::to_string(d));
  }
}

PromptSet load_prompt_texts(const fs::path& path, const ClassManifest* order) {
  const auto doc = nlohmann::ordered_json::parse(io::read_file(path), nullptr,
                                                 /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object())
    throw DataError(path.string() + ": expected a JSON object of class -> prompts");
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> texts;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!it.value().is_array())
      throw DataError(path.string() + ": prompts for '" + it.key() +
                      "' must be an array of strings");
    std::vector<std::string> prompts;
    for (const auto& p : it.value()) {
      if (!p.is_string() || p.get<std::string>().empty())
        throw DataError(path.string() + ": class '" + it.key() +
                        "' has an empty or non-string prompt");
      prompts.push_back(p.get<std::string>());
    }
    names.push_back(it.key());
    texts.push_back(std::move(prompts));
  }
  PromptSet out;
  if (order == nullptr) {
    out.classes = ClassManifest(std::move(names));
    out.texts = std::move(texts);
    return out;
  }
  out.classes = *order;
  out.texts.resize(order->size());
  for (std::size_t c = 0; c < order->size(); ++c) {
    auto it = std::find(names.begin(), names.end(), order->name(c));
    if (it == names.end())
      throw DataError(path.string() + ": missing prompts for class '" +
                      order->name(c) + "'");
    out.texts[c] = texts[static_cast<std::size_t>(it - names.begin())];
  }
  return out;
}

PromptSet load_prompt_embeddings(const fs::path& dir) {
  RawDirectory raw = read_directory(dir);
  const std::size_t m = raw.classes.size();
  std::vector<std::pair<std::size_t, std::size_t>> ranges(m, {0, 0});
  if (raw.manifest.contains("prompt_index")) {
    const json& index = raw.manifest.at("prompt_index");
    if (!index.is_array() || index.size() != m)
      throw DataError(dir.string() + ": prompt_index must list every class");
    for (std::size_t c = 0; c < m; ++c) {
      const json& entry = index[c];
      if (!entry.is_object() || entry.value("class", "") != raw.classes.name(c))
        throw DataError(dir.string() + ": prompt_index entry " +
                        std::to_string(c) + " does not match class order");
      ranges[c] = {entry.at("offset").get<std::size_t>(),
                   entry.at("count").get<std::size_t>()};
    }
  } else {
    // Derive contiguous ranges from labels.
    std::size_t row = 0;
    for (std::size_t c = 0; c < m; ++c) {
      ranges[c].first = row;
      while (row < raw.labels.size() && raw.labels[row] == c) ++row;
      ranges[c].second = row - ranges[c].first;
    }
    if (row != raw.labels.size())
      throw DataError(dir.string() + ": prompt rows must be grouped by class");
  }
  PromptSet out;
  out.classes = raw.classes;
  out.metadata = extra_keys(raw.manifest);
  out.embeddings.reserve(m);
  for (std::size_t c = 0; c < m; ++c) {
    const auto [offset, count] = ranges[c];
    if (offset + count > raw.features.rows())
      throw DataError(dir.string() + ": prompt_index range for class '" +
                      raw.classes.name(c) + "' exceeds the payload");
    Matrix<float> rows(count, raw.features.cols());
    for (std::size_t j = 0; j < count; ++j) {
      if (raw.labels[offset + j] != c)
        throw DataError(dir.string() + ": prompt row " +
                        std::to_string(offset + j) +
                        " is labelled with a different class than its index");
      std::copy_n(raw.features.row(offset + j).begin(), raw.features.cols(),
                  rows.row(j).begin());
    }
    out.embeddings.push_back(std::move(rows));
  }
  out.validate();
  return out;
}

void save_prompt_embeddings(const PromptSet& prompts, const fs::path& dir) {
  prompts.validate();
  if (!prompts.has_embeddings())
    throw ValidationError("prompt set has no embeddings to save");
  Matrix<float> all;
  std::vector<std::uint32_t> labels;
  json index = json::array();
  for (std::size_t c = 0; c < prompts.embeddings.size(); ++c) {
    const auto& rows = prompts.embeddings[c];
    index.push_back({{"class", prompts.classes.name(c)},
                     {"offset", labels.size()},
                     {"count", rows.rows()}});
    for (std::size_t j = 0; j < rows.rows(); ++j) {
      all.append_row(rows.row(j));
      labels.push_back(static_cast<std::uint32_t>(c));
    }
  }
  fs::create_directories(dir);
  write_payloads(dir, all, labels, {});
  json manifest = base_manifest(all.rows(), all.cols(), prompts.classes, false,
                                prompts.metadata);
  manifest["prompt_index"] = std::move(index);
  io::write_json(dir / kManifestFile, manifest);
}

}  // namespace protoclass

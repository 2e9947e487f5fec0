#include "protoclass/prototypes.hpp"

#include <cmath>

#include "protoclass/binary_format.hpp"
#include "protoclass/error.hpp"
#include "protoclass/parallel.hpp"
#include "protoclass/rng.hpp"

namespace protoclass {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifestFile = "bank_manifest.json";
constexpr const char* kVisualFile = "visual.bin";
constexpr const char* kTextualFile = "textual.bin";

// Empty tensors encode as 0 rows of the bank dimension.
Matrix<float> as_rows(const Tensor3<float>& t, std::size_t dim) {
  if (t.empty()) return Matrix<float>(0, dim);
  return Matrix<float>(t.classes() * t.slots(), t.dim(),
                       std::vector<float>(t.flat().begin(), t.flat().end()));
}

Tensor3<float> from_rows(const Matrix<float>& rows, std::size_t classes,
                         std::size_t slots, const std::string& source) {
  if (classes == 0 || slots == 0) {
    if (rows.rows() != 0)
      throw DataError(source + ": payload has rows but manifest declares none");
    return {};
  }
  if (rows.rows() != classes * slots)
    throw DataError(source + ": expected " + std::to_string(classes * slots) +
                    " rows, found " + std::to_string(rows.rows()));
  Tensor3<float> t(classes, slots, rows.cols());
  std::copy(rows.flat().begin(), rows.flat().end(), t.flat().begin());
  return t;
}

json provenance_to_json(const BankProvenance& p) {
  return {{"kmeans_seed", p.kmeans_seed},
          {"requested_k", p.requested_k},
          {"kmeans_init", p.kmeans_init},
          {"features_crc32", p.features_crc32},
          {"prompts_crc32", p.prompts_crc32},
          {"trained_epochs", p.trained_epochs},
          {"extra", p.extra}};
}

BankProvenance provenance_from_json(const json& j) {
  BankProvenance p;
  p.kmeans_seed = j.value("kmeans_seed", std::uint64_t{0});
  p.requested_k = j.value("requested_k", std::size_t{0});
  p.kmeans_init = j.value("kmeans_init", std::string{});
  p.features_crc32 = j.value("features_crc32", std::string{});
  p.prompts_crc32 = j.value("prompts_crc32", std::string{});
  p.trained_epochs = j.value("trained_epochs", std::size_t{0});
  p.extra = j.value("extra", json::object());
  return p;
}

}  // namespace

void PrototypeBank::validate() const {
  const std::size_t m = classes.size();
  if (!has_visual() && !has_textual())
    throw DataError("prototype bank has neither visual nor textual prototypes");
  if (has_visual() && visual.classes() != m)
    throw DataError("visual prototypes cover " + std::to_string(visual.classes()) +
                    " classes, manifest has " + std::to_string(m));
  if (has_textual() && textual.classes() != m)
    throw DataError("textual prototypes cover " +
                    std::to_string(textual.classes()) + " classes, manifest has " +
                    std::to_string(m));
  if (has_visual() && has_textual() && visual.dim() != textual.dim())
    throw DataError("visual and textual prototype dimensions differ");
  for (const auto* t : {&visual, &textual})
    for (float v : t->flat())
      if (!std::isfinite(v)) throw DataError("prototype bank has non-finite entries");
}

VisualPrototypes build_visual_prototypes(const EmbeddingSet& train,
                                         const KMeansConfig& kcfg,
                                         unsigned threads) {
  kcfg.validate();
  const std::size_t m = train.class_count();
  std::vector<std::vector<std::size_t>> rows(m);
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train.split_of(i) == Split::kTrain) rows[train.labels()[i]].push_back(i);
  for (std::size_t c = 0; c < m; ++c)
    if (rows[c].empty())
      throw DataError("class '" + train.classes().name(c) +
                      "' has no training rows for prototype construction");

  VisualPrototypes out;
  out.tensor = Tensor3<float>(m, kcfg.k, train.dim());
  std::vector<std::string> class_notes(m);
  parallel_for(m, threads, [&](std::size_t c) {
    Matrix<float> pts(rows[c].size(), train.dim());
    for (std::size_t r = 0; r < rows[c].size(); ++r)
      std::copy_n(train.row(rows[c][r]).begin(), train.dim(), pts.row(r).begin());
    KMeansConfig cfg = kcfg;
    cfg.seed = Rng::stream(kcfg.seed, c).next_u64();
    const Clustering cl = kmeans(pts, cfg);
    const std::size_t got = cl.centroids.rows();
    for (std::size_t s = 0; s < kcfg.k; ++s) {
      auto src = cl.centroids.row(s % got);
      auto dst = out.tensor.at(c, s);
      for (std::size_t j = 0; j < dst.size(); ++j)
        dst[j] = static_cast<float>(src[j]);
    }
    if (got < kcfg.k)
      class_notes[c] = "class '" + train.classes().name(c) + "' has " +
                       std::to_string(got) + " training rows; " +
                       std::to_string(kcfg.k - got) +
                       " visual prototypes duplicated to reach K=" +
                       std::to_string(kcfg.k);
  });
  for (auto& note : class_notes)
    if (!note.empty()) out.notes.push_back(std::move(note));
  return out;
}

TextualPrototypes build_textual_prototypes(const PromptSet& prompts,
                                           std::size_t expected_dim) {
  if (!prompts.has_embeddings())
    throw DataError("prompt set has no embeddings");
  prompts.validate();
  const std::size_t d = prompts.dim();
  if (expected_dim != 0 && d != expected_dim)
    throw DataError("prompt embedding dimension " + std::to_string(d) +
                    " does not match feature dimension " +
                    std::to_string(expected_dim));
  std::size_t j_max = 0;
  for (const auto& e : prompts.embeddings) j_max = std::max(j_max, e.rows());

  TextualPrototypes out;
  out.tensor = Tensor3<float>(prompts.classes.size(), j_max, d);
  for (std::size_t c = 0; c < prompts.embeddings.size(); ++c) {
    const auto& e = prompts.embeddings[c];
    for (std::size_t j = 0; j < j_max; ++j) {
      auto src = e.row(std::min(j, e.rows() - 1));
      std::copy(src.begin(), src.end(), out.tensor.at(c, j).begin());
    }
    if (e.rows() < j_max)
      out.notes.push_back("class '" + prompts.classes.name(c) + "' has " +
                          std::to_string(e.rows()) +
                          " prompts; padded to J=" + std::to_string(j_max) +
                          " by repeating the last prompt");
  }
  return out;
}

void save_bank(const PrototypeBank& bank, const fs::path& dir) {
  bank.validate();
  fs::create_directories(dir);
  const std::string visual = io::encode_features(as_rows(bank.visual, bank.dim()));
  const std::string textual = io::encode_features(as_rows(bank.textual, bank.dim()));
  io::write_file(dir / kVisualFile, visual);
  io::write_file(dir / kTextualFile, textual);
  json manifest = {
      {"format_version", io::kFormatVersion},
      {"dtype", "f32le"},
      {"m", bank.class_count()},
      {"k", bank.visual.slots()},
      {"j", bank.textual.slots()},
      {"d", bank.dim()},
      {"classes", bank.classes.names()},
      {"visual_file", kVisualFile},
      {"textual_file", kTextualFile},
      {"visual_crc32", io::crc32_hex(visual)},
      {"textual_crc32", io::crc32_hex(textual)},
      {"provenance", provenance_to_json(bank.provenance)},
  };
  io::write_json(dir / kManifestFile, manifest);
}

PrototypeBank load_bank(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestFile;
  if (!fs::exists(manifest_path))
    throw DataError(manifest_path.string() + ": missing file");
  const json manifest = io::read_json(manifest_path);
  PrototypeBank bank;
  try {
    const auto version = manifest.at("format_version").get<std::uint32_t>();
    if (version != io::kFormatVersion)
      throw DataError(manifest_path.string() + ": unsupported format_version " +
                      std::to_string(version));
    if (manifest.at("dtype").get<std::string>() != "f32le")
      throw DataError(manifest_path.string() + ": unsupported dtype");
    const auto m = manifest.at("m").get<std::size_t>();
    const auto k = manifest.at("k").get<std::size_t>();
    const auto j = manifest.at("j").get<std::size_t>();
    const auto d = manifest.at("d").get<std::size_t>();
    bank.classes =
        ClassManifest(manifest.at("classes").get<std::vector<std::string>>());
    if (bank.classes.size() != m)
      throw DataError(manifest_path.string() + ": class list length differs from m");

    auto read_payload = [&](const char* file_key, const char* crc_key,
                            std::size_t slots) {
      const fs::path path = dir / manifest.at(file_key).get<std::string>();
      const std::string bytes = io::read_file(path);
      if (io::crc32_hex(bytes) != manifest.at(crc_key).get<std::string>())
        throw DataError(path.string() + ": checksum mismatch (corrupt payload)");
      const Matrix<float> rows = io::decode_features(bytes, path.string());
      if (slots > 0 && rows.cols() != d)
        throw DataError(path.string() + ": dimension mismatch with manifest");
      return from_rows(rows, m, slots, path.string());
    };
    bank.visual = read_payload("visual_file", "visual_crc32", k);
    bank.textual = read_payload("textual_file", "textual_crc32", j);
    bank.provenance =
        provenance_from_json(manifest.value("provenance", json::object()));
  } catch (const json::exception& e) {
    throw DataError(manifest_path.string() + ": malformed manifest: " + e.what());
  }
  bank.validate();
  return bank;
}

std::string bank_hash(const PrototypeBank& bank) {
  const std::string bytes = io::encode_features(as_rows(bank.visual, bank.dim())) +
                            io::encode_features(as_rows(bank.textual, bank.dim()));
  return io::crc32_hex(bytes);
}

}  // namespace protoclass

#include "protoclass/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "protoclass/binary_format.hpp"
#include "protoclass/error.hpp"
#include "protoclass/parallel.hpp"
#include "protoclass/simd/kernels.hpp"

namespace protoclass {
using nlohmann::json;

namespace {

json scoring_json(const ScoringConfig& s) {
  return {{"temperature", s.temperature},
          {"clamp_cosine", s.clamp_cosine},
          {"ensemble",
           {{"alpha", s.ensemble.alpha},
            {"beta", s.ensemble.beta},
            {"gamma", s.ensemble.gamma}}}};
}

std::vector<std::uint32_t> predict_with(const PrototypeBank& bank,
                                        const EmbeddingSet& test,
                                        const ScoringConfig& scoring,
                                        unsigned threads) {
  const auto scores = score_batch(test.features(), bank, scoring, threads);
  std::vector<std::uint32_t> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    out[i] = static_cast<std::uint32_t>(scores[i].predicted_class);
  return out;
}

void require_same_classes(const ClassManifest& a, const ClassManifest& b,
                          const char* what) {
  if (a != b)
    throw ValidationError(std::string(what) +
                          " class list does not match the test set classes");
}

}  // namespace

ModeSpec ModeSpec::parse(std::string_view name, std::size_t shots,
                         std::size_t neighbors) {
  ModeSpec spec;
  spec.shots = shots;
  spec.neighbors = neighbors;
  if (name == "fully_supervised") spec.kind = ModeKind::kFullySupervised;
  else if (name == "few_shot") spec.kind = ModeKind::kFewShot;
  else if (name == "training_free_visual") spec.kind = ModeKind::kTrainingFreeVisual;
  else if (name == "zero_shot_text") spec.kind = ModeKind::kZeroShotText;
  else if (name == "knn") spec.kind = ModeKind::kKnn;
  else
    throw ValidationError("--mode: unknown mode '" + std::string(name) +
                          "' (expected fully_supervised, few_shot, "
                          "training_free_visual, zero_shot_text or knn)");
  spec.validate();
  return spec;
}

std::string ModeSpec::name() const {
  switch (kind) {
    case ModeKind::kFullySupervised:
      return "fully_supervised";
    case ModeKind::kFewShot:
      return "few_shot";
    case ModeKind::kTrainingFreeVisual:
      return "training_free_visual";
    case ModeKind::kZeroShotText:
      return "zero_shot_text";
    case ModeKind::kKnn:
      return "knn";
  }
  return "unknown";
}

void ModeSpec::validate() const {
  if (kind == ModeKind::kFewShot && shots < 1)
    throw ValidationError("--shots must be at least 1");
  if (kind == ModeKind::kKnn && neighbors < 1)
    throw ValidationError("--neighbors must be at least 1");
}

json EvalReport::to_json() const {
  json per_class = json::array();
  for (std::size_t c = 0; c < metrics.per_class.size(); ++c) {
    const auto& cm = metrics.per_class[c];
    per_class.push_back({{"class", classes.name(c)},
                         {"precision", cm.precision},
                         {"recall", cm.recall},
                         {"f1", cm.f1},
                         {"support", cm.support},
                         {"predicted", cm.predicted}});
  }
  json matrix = json::array();
  for (std::size_t t = 0; t < confusion.classes(); ++t) {
    json row = json::array();
    for (std::size_t p = 0; p < confusion.classes(); ++p) row.push_back(confusion.at(t, p));
    matrix.push_back(std::move(row));
  }
  json mode_json = {{"name", mode.name()}};
  if (mode.kind == ModeKind::kFewShot) mode_json["shots"] = mode.shots;
  if (mode.kind == ModeKind::kKnn) mode_json["neighbors"] = mode.neighbors;
  return {{"mode", mode_json},
          {"test_size", confusion.total()},
          {"accuracy", metrics.accuracy},
          {"macro_precision", metrics.macro_precision},
          {"macro_recall", metrics.macro_recall},
          {"macro_f1", metrics.macro_f1},
          {"per_class", per_class},
          {"zero_prediction_classes", metrics.zero_prediction_classes},
          {"absent_classes", metrics.absent_classes},
          {"confusion", matrix},
          {"config", config},
          {"notes", notes}};
}

std::string EvalReport::per_class_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "class,precision,recall,f1,support,predicted\n";
  for (std::size_t c = 0; c < metrics.per_class.size(); ++c) {
    const auto& cm = metrics.per_class[c];
    out << classes.name(c) << ',' << cm.precision << ',' << cm.recall << ','
        << cm.f1 << ',' << cm.support << ',' << cm.predicted << '\n';
  }
  return out.str();
}

std::string EvalReport::confusion_csv() const {
  std::ostringstream out;
  out << "truth\\predicted";
  for (const auto& name : classes.names()) out << ',' << name;
  out << '\n';
  for (std::size_t t = 0; t < confusion.classes(); ++t) {
    out << classes.name(t);
    for (std::size_t p = 0; p < confusion.classes(); ++p) out << ',' << confusion.at(t, p);
    out << '\n';
  }
  return out.str();
}

std::vector<std::uint32_t> knn_predict(const EmbeddingSet& train,
                                       const Matrix<float>& queries,
                                       std::size_t neighbors,
                                       unsigned threads) {
  if (neighbors < 1) throw ValidationError("--neighbors must be at least 1");
  const auto rows = train.rows_in(Split::kTrain);
  if (rows.empty()) throw ValidationError("knn requires labelled train features");
  if (queries.rows() > 0 && queries.cols() != train.dim())
    throw ValidationError("query dimension does not match train features");
  const std::size_t n = std::min(neighbors, rows.size());

  std::vector<double> norms(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto f = train.row(rows[r]);
    norms[r] = std::sqrt(simd::dot(f, f));
  }

  std::vector<std::uint32_t> out(queries.rows());
  parallel_for(queries.rows(), threads, [&](std::size_t q) {
    const auto x = queries.row(q);
    const double x_norm = std::sqrt(simd::dot(x, x));
    if (!(x_norm > 0.0)) throw DataError("knn query has zero norm");
    std::vector<std::pair<double, std::size_t>> dist(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
      dist[r] = {1.0 - simd::dot(x, train.row(rows[r])) / (x_norm * norms[r]), r};
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(n),
                      dist.end());
    std::vector<std::size_t> votes(train.class_count(), 0);
    for (std::size_t i = 0; i < n; ++i) ++votes[train.labels()[rows[dist[i].second]]];
    out[q] = static_cast<std::uint32_t>(
        std::max_element(votes.begin(), votes.end()) - votes.begin());
  });
  return out;
}

EvalReport evaluate(const EvalInputs& inputs, const EmbeddingSet& test,
                    const ModeSpec& mode, const ScoringConfig& scoring,
                    unsigned threads) {
  mode.validate();
  scoring.validate();
  if (test.size() == 0) throw ValidationError("test set is empty");

  EvalReport report;
  report.mode = mode;
  report.classes = test.classes();
  report.config = {{"scoring", scoring_json(scoring)}, {"mode", mode.name()}};

  switch (mode.kind) {
    case ModeKind::kFullySupervised:
    case ModeKind::kFewShot: {
      if (inputs.bank == nullptr)
        throw ValidationError(mode.name() + " evaluation requires a prototype bank");
      require_same_classes(inputs.bank->classes, test.classes(), "bank");
      report.predictions = predict_with(*inputs.bank, test, scoring, threads);
      break;
    }
    case ModeKind::kTrainingFreeVisual: {
      if (inputs.bank == nullptr || !inputs.bank->has_visual())
        throw ValidationError("training_free_visual requires visual prototypes");
      require_same_classes(inputs.bank->classes, test.classes(), "bank");
      PrototypeBank visual_only;
      visual_only.classes = inputs.bank->classes;
      visual_only.visual = inputs.bank->visual;
      ScoringConfig s = scoring;
      s.ensemble = {1.0, 0.0, 0.0};
      report.predictions = predict_with(visual_only, test, s, threads);
      break;
    }
    case ModeKind::kZeroShotText: {
      if (inputs.bank == nullptr || !inputs.bank->has_textual())
        throw ValidationError("zero_shot_text requires textual prototypes");
      require_same_classes(inputs.bank->classes, test.classes(), "bank");
      const double total = scoring.ensemble.beta + scoring.ensemble.gamma;
      if (!(total > 0.0))
        throw ValidationError("zero_shot_text needs beta + gamma > 0");
      PrototypeBank text_only;
      text_only.classes = inputs.bank->classes;
      text_only.textual = inputs.bank->textual;
      ScoringConfig s = scoring;
      s.ensemble = {0.0, scoring.ensemble.beta / total,
                    scoring.ensemble.gamma / total};
      report.predictions = predict_with(text_only, test, s, threads);
      break;
    }
    case ModeKind::kKnn: {
      if (inputs.train == nullptr)
        throw ValidationError("knn requires labelled train features");
      require_same_classes(inputs.train->classes(), test.classes(), "train set");
      const std::size_t available = inputs.train->rows_in(Split::kTrain).size();
      if (mode.neighbors > available)
        report.notes.push_back("knn neighbors clamped from " +
                               std::to_string(mode.neighbors) + " to " +
                               std::to_string(available));
      report.predictions =
          knn_predict(*inputs.train, test.features(), mode.neighbors, threads);
      report.config["knn_neighbors"] = mode.neighbors;
      break;
    }
  }

  report.confusion = ConfusionMatrix(test.class_count());
  for (std::size_t i = 0; i < test.size(); ++i)
    report.confusion.add(test.labels()[i], report.predictions[i]);
  report.metrics = compute_metrics(report.confusion);
  for (auto c : report.metrics.zero_prediction_classes)
    report.notes.push_back("class '" + test.classes().name(c) +
                           "' was never predicted; precision set to 0");
  for (auto c : report.metrics.absent_classes)
    report.notes.push_back("class '" + test.classes().name(c) +
                           "' has no test rows; recall set to 0");
  return report;
}

ExperimentResult run_experiment(const EmbeddingSet& data,
                                const PromptSet* prompts, const ModeSpec& mode,
                                const ExperimentConfig& config) {
  mode.validate();
  const EmbeddingSet test = data.only(Split::kTest);
  ExperimentResult result;

  auto textual_bank = [&](PrototypeBank& bank) {
    if (prompts == nullptr) return;
    auto tp = build_textual_prototypes(*prompts, data.dim());
    if (prompts->classes != data.classes())
      throw ValidationError("prompt classes do not match the dataset classes");
    bank.textual = std::move(tp.tensor);
    result.notes.insert(result.notes.end(), tp.notes.begin(), tp.notes.end());
  };

  switch (mode.kind) {
    case ModeKind::kZeroShotText: {
      if (prompts == nullptr)
        throw ValidationError("zero_shot_text requires prompt embeddings");
      PrototypeBank bank;
      bank.classes = data.classes();
      textual_bank(bank);
      result.report = evaluate({&bank, nullptr}, test, mode, config.scoring,
                               config.threads);
      result.bank = std::move(bank);
      break;
    }
    case ModeKind::kKnn: {
      const EmbeddingSet train = data.only(Split::kTrain);
      result.report = evaluate({nullptr, &train}, test, mode, config.scoring,
                               config.threads);
      break;
    }
    case ModeKind::kTrainingFreeVisual:
    case ModeKind::kFullySupervised:
    case ModeKind::kFewShot: {
      EmbeddingSet train = data.only(Split::kTrain);
      if (mode.kind == ModeKind::kFewShot) {
        FewShotSample sample = sample_few_shot(train, mode.shots, config.seed);
        for (const auto& s : sample.shortages)
          result.notes.push_back("class '" + data.classes().name(s.class_id) +
                                 "' has only " + std::to_string(s.available) +
                                 " train rows (requested " +
                                 std::to_string(s.requested) + ")");
        train = std::move(sample.subset);
      }
      PrototypeBank bank;
      bank.classes = data.classes();
      auto vp = build_visual_prototypes(train, config.kmeans, config.threads);
      bank.visual = std::move(vp.tensor);
      result.notes.insert(result.notes.end(), vp.notes.begin(), vp.notes.end());
      bank.provenance.kmeans_seed = config.kmeans.seed;
      bank.provenance.requested_k = config.kmeans.k;
      bank.provenance.kmeans_init = to_string(config.kmeans.init);
      bank.provenance.features_crc32 =
          io::crc32_hex(io::encode_features(train.features()));
      if (mode.kind != ModeKind::kTrainingFreeVisual) {
        textual_bank(bank);
        const EmbeddingSet val = data.only(Split::kVal);
        TrainResult trained =
            ::protoclass::train(bank, train, &val, config.train, config.scoring);
        bank = std::move(trained.bank);
        result.train_report = std::move(trained.report);
      }
      result.report = evaluate({&bank, nullptr}, test, mode, config.scoring,
                               config.threads);
      result.bank = std::move(bank);
      break;
    }
  }
  result.report.notes.insert(result.report.notes.begin(), result.notes.begin(),
                             result.notes.end());
  return result;
}

}  // namespace protoclass

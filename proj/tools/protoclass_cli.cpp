// protoclass: command-line front end for the prototype classification engine.
//
//   protoclass synth   --out DIR [--m --modes --d --n --sigma --seed]
//   protoclass split   --data DIR --ratios 0.7,0.1,0.2 --seed S --out DIR
//   protoclass build   [--data DIR] [--prompts DIR] --k K --seed S --out BANK
//   protoclass train   --data DIR --bank BANK [--config FILE] --out BANK
//   protoclass eval    --data DIR [--bank BANK] --mode MODE --out report.json
//   protoclass knn     --data DIR --neighbors N --out report.json
//   protoclass predict --bank BANK --query features.bin [--topk 1]
//
// Exit codes: 0 ok, 2 validation error, 3 data error, 4 numeric divergence.
// Failures print {"error": {...}} on stderr; every command prints its
// effective configuration on stderr as {"effective_config": {...}}.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "protoclass/binary_format.hpp"
#include "protoclass/embedding_store.hpp"
#include "protoclass/error.hpp"
#include "protoclass/evaluation.hpp"
#include "protoclass/parallel.hpp"
#include "protoclass/prototypes.hpp"
#include "protoclass/run_config.hpp"
#include "protoclass/scoring.hpp"
#include "protoclass/synth.hpp"
#include "protoclass/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace protoclass;

namespace {

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "RunConfig JSON file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", flags.seed,
                  "Global seed (falls back to config, then PROTOCLASS_SEED)");
  cmd->add_option("--threads", flags.threads,
                  "Worker threads (default: available cores)");
}

// Defaults < config file < PROTOCLASS_SEED (seed only, when unset) < flags.
RunConfig resolve(const CommonFlags& flags) {
  RunConfig cfg;
  cfg.threads = default_thread_count();
  bool seed_from_file = false;
  if (flags.config) {
    const json doc = [&] {
      try {
        return json::parse(io::read_file(*flags.config));
      } catch (const json::exception& e) {
        throw ValidationError("--config: invalid JSON: " + std::string(e.what()));
      }
    }();
    seed_from_file = doc.is_object() && doc.contains("seed");
    cfg = apply_config_json(cfg, doc);
  }
  if (flags.seed) {
    cfg.seed = *flags.seed;
  } else if (!seed_from_file) {
    if (auto env = seed_from_env()) cfg.seed = *env;
  }
  if (flags.threads) cfg.threads = *flags.threads;
  return cfg;
}

void echo_config(const std::string& command, const RunConfig& cfg,
                 json extra = json::object()) {
  json doc = {{"command", command}, {"effective_config", cfg.to_json()}};
  if (!extra.empty()) doc["inputs"] = std::move(extra);
  std::cerr << doc.dump() << '\n';
}

void emit_notes(const std::vector<std::string>& notes) {
  for (const auto& n : notes) std::cerr << json{{"warning", n}}.dump() << '\n';
}

EmbeddingSet test_rows(const EmbeddingSet& data) {
  EmbeddingSet test = data.has_split_tags() ? data.only(Split::kTest) : data;
  if (test.size() == 0) throw DataError("--data has no test-tagged rows");
  return test;
}

void write_eval_outputs(const EvalReport& report, const std::string& out,
                        const std::optional<std::string>& csv_prefix) {
  const fs::path path(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_json(path, report.to_json());
  if (csv_prefix) {
    io::write_file(*csv_prefix + "_per_class.csv", report.per_class_csv());
    io::write_file(*csv_prefix + "_confusion.csv", report.confusion_csv());
  }
}

int fail(ErrorKind kind, const std::string& message) {
  std::cerr << json{{"error", {{"kind", to_string(kind)}, {"message", message}}}}.dump()
            << '\n';
  return static_cast<int>(kind);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-prototype multimodal classifier over precomputed embeddings"};
  app.require_subcommand(1);
  std::function<void()> action;

  // synth
  CommonFlags synth_common;
  SynthConfig synth_cfg;
  std::string synth_out;
  std::optional<std::string> synth_prompts_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic embedding set");
  add_common(synth, synth_common);
  synth->add_option("--m", synth_cfg.classes, "Number of classes");
  synth->add_option("--modes", synth_cfg.modes_per_class, "Modes per class");
  synth->add_option("--d", synth_cfg.dim, "Embedding dimension");
  synth->add_option("--n", synth_cfg.samples_per_class, "Samples per class");
  synth->add_option("--sigma", synth_cfg.sigma, "Gaussian noise scale");
  synth->add_option("--prompts-per-class", synth_cfg.prompts_per_class,
                    "Prompt embeddings per class (0: one per mode)");
  synth->add_option("--prompt-sigma", synth_cfg.prompt_sigma,
                    "Prompt noise scale (negative: same as --sigma)");
  synth->add_option("--out", synth_out, "Output embedding directory")->required();
  synth->add_option("--prompts-out", synth_prompts_out,
                    "Prompt embedding directory (default: OUT/prompts)");
  synth->callback([&] {
    action = [&] {
      RunConfig cfg = resolve(synth_common);
      cfg.sync();
      synth_cfg.seed = cfg.seed;
      echo_config("synth", cfg,
                  {{"m", synth_cfg.classes},
                   {"modes", synth_cfg.modes_per_class},
                   {"d", synth_cfg.dim},
                   {"n", synth_cfg.samples_per_class},
                   {"sigma", synth_cfg.sigma}});
      const SynthData data = synth_generate(synth_cfg);
      save_embedding_set(data.data, synth_out);
      save_prompt_embeddings(data.prompts,
                             synth_prompts_out.value_or(synth_out + "/prompts"));
    };
  });

  // split
  CommonFlags split_common;
  std::string split_data, split_out;
  std::optional<std::string> split_ratios;
  auto* split = app.add_subcommand("split", "Stratified train/val/test split");
  add_common(split, split_common);
  split->add_option("--data", split_data, "Embedding directory")->required();
  split->add_option("--ratios", split_ratios, "train,val,test fractions");
  split->add_option("--out", split_out, "Output embedding directory")->required();
  split->callback([&] {
    action = [&] {
      RunConfig cfg = resolve(split_common);
      if (split_ratios) cfg.split = parse_split_ratios(*split_ratios);
      cfg.sync();
      cfg.validate();
      echo_config("split", cfg, {{"data", split_data}});
      if (fs::weakly_canonical(split_data) == fs::weakly_canonical(split_out))
        throw ValidationError("--out must differ from --data");
      const EmbeddingSet data = load_embedding_set(split_data);
      save_embedding_set(split_dataset(data, cfg.split, cfg.seed), split_out);
    };
  });

  // build
  CommonFlags build_common;
  std::optional<std::string> build_data, build_prompts, build_init;
  std::optional<std::size_t> build_k, build_shots;
  std::string build_out;
  auto* build = app.add_subcommand("build", "Construct visual and textual prototypes");
  add_common(build, build_common);
  build->add_option("--data", build_data, "Embedding directory (train rows)");
  build->add_option("--prompts", build_prompts, "Prompt embedding directory");
  build->add_option("--k", build_k, "Visual prototypes per class");
  build->add_option("--init", build_init, "K-means init: plus_plus or random_points");
  build->add_option("--shots", build_shots, "Few-shot: train rows per class");
  build->add_option("--out", build_out, "Output bank directory")->required();
  build->callback([&] {
    action = [&] {
      RunConfig cfg = resolve(build_common);
      if (build_k) cfg.kmeans.k = *build_k;
      if (build_init) cfg.kmeans.init = parse_kmeans_init(*build_init);
      cfg.sync();
      cfg.validate();
      if (!build_data && !build_prompts)
        throw ValidationError("build needs --data, --prompts, or both");
      echo_config("build", cfg,
                  {{"data", build_data.value_or("")},
                   {"prompts", build_prompts.value_or("")},
                   {"shots", build_shots ? json(*build_shots) : json(nullptr)}});
      PrototypeBank bank;
      std::vector<std::string> notes;
      std::optional<PromptSet> prompts;
      if (build_prompts) prompts = load_prompt_embeddings(*build_prompts);
      if (build_data) {
        EmbeddingSet train = load_embedding_set(*build_data).only(Split::kTrain);
        if (build_shots) {
          FewShotSample sample = sample_few_shot(train, *build_shots, cfg.seed);
          for (const auto& s : sample.shortages)
            notes.push_back("class '" + train.classes().name(s.class_id) +
                            "' has only " + std::to_string(s.available) +
                            " train rows");
          train = std::move(sample.subset);
        }
        bank.classes = train.classes();
        auto vp = build_visual_prototypes(train, cfg.kmeans, cfg.threads);
        bank.visual = std::move(vp.tensor);
        notes.insert(notes.end(), vp.notes.begin(), vp.notes.end());
        bank.provenance.features_crc32 =
            io::crc32_hex(io::encode_features(train.features()));
      } else {
        bank.classes = prompts->classes;
      }
      if (prompts) {
        if (prompts->classes != bank.classes)
          throw DataError("prompt classes do not match the data classes");
        auto tp = build_textual_prototypes(*prompts, build_data ? bank.dim() : 0);
        bank.textual = std::move(tp.tensor);
        notes.insert(notes.end(), tp.notes.begin(), tp.notes.end());
        std::string prompt_bytes;
        for (const auto& e : prompts->embeddings) prompt_bytes += io::encode_features(e);
        bank.provenance.prompts_crc32 = io::crc32_hex(prompt_bytes);
      }
      bank.provenance.kmeans_seed = cfg.kmeans.seed;
      bank.provenance.requested_k = bank.has_visual() ? cfg.kmeans.k : 0;
      bank.provenance.kmeans_init = bank.has_visual() ? to_string(cfg.kmeans.init) : "";
      if (build_shots) bank.provenance.extra["few_shot"] = *build_shots;
      emit_notes(notes);
      save_bank(bank, build_out);
    };
  });

  // train
  CommonFlags train_common;
  std::string train_data, train_bank, train_out;
  std::optional<std::string> train_report;
  std::optional<std::size_t> train_epochs, train_batch, train_shots;
  std::optional<double> train_lr, train_tau, train_l1, train_l2;
  auto* train_cmd = app.add_subcommand("train", "Optimize a prototype bank");
  add_common(train_cmd, train_common);
  train_cmd->add_option("--data", train_data, "Embedding directory")->required();
  train_cmd->add_option("--bank", train_bank, "Input bank directory")->required();
  train_cmd->add_option("--out", train_out, "Output bank directory")->required();
  train_cmd->add_option("--report", train_report,
                        "JSON-lines report (default: OUT/train_report.jsonl)");
  train_cmd->add_option("--epochs", train_epochs, "Training epochs");
  train_cmd->add_option("--batch-size", train_batch, "Mini-batch size");
  train_cmd->add_option("--lr", train_lr, "Initial learning rate");
  train_cmd->add_option("--temperature", train_tau, "Softmax temperature");
  train_cmd->add_option("--lambda1", train_l1, "Text-max loss weight");
  train_cmd->add_option("--lambda2", train_l2, "Text-average loss weight");
  train_cmd->add_option("--shots", train_shots, "Few-shot: train rows per class");
  train_cmd->callback([&] {
    action = [&] {
      RunConfig cfg = resolve(train_common);
      if (train_epochs) cfg.train.epochs = *train_epochs;
      if (train_batch) cfg.train.batch_size = *train_batch;
      if (train_lr) cfg.train.base_lr = *train_lr;
      if (train_tau) cfg.scoring.temperature = *train_tau;
      if (train_l1) cfg.train.lambda1 = *train_l1;
      if (train_l2) cfg.train.lambda2 = *train_l2;
      cfg.sync();
      cfg.validate();
      echo_config("train", cfg, {{"data", train_data}, {"bank", train_bank}});
      if (fs::weakly_canonical(train_bank) == fs::weakly_canonical(train_out))
        throw ValidationError("--out must differ from --bank");
      const EmbeddingSet data = load_embedding_set(train_data);
      EmbeddingSet rows = data.only(Split::kTrain);
      if (train_shots) rows = sample_few_shot(rows, *train_shots, cfg.seed).subset;
      const EmbeddingSet val = data.only(Split::kVal);
      const PrototypeBank bank = load_bank(train_bank);
      TrainResult result = protoclass::train(bank, rows, val.size() ? &val : nullptr,
                                             cfg.train, cfg.scoring);
      save_bank(result.bank, train_out);
      io::write_file(train_report.value_or(train_out + "/train_report.jsonl"),
                     result.report.to_jsonl());
    };
  });

  // eval + knn share the evaluation path.
  CommonFlags eval_common;
  std::string eval_data, eval_out, eval_mode = "fully_supervised";
  std::optional<std::string> eval_bank, eval_csv;
  std::optional<std::size_t> eval_neighbors, eval_shots;
  std::optional<double> eval_tau, eval_alpha, eval_beta, eval_gamma;
  bool eval_clamp = false;
  auto run_eval = [&](const std::string& command, const std::string& mode_name) {
    RunConfig cfg = resolve(eval_common);
    if (eval_tau) cfg.scoring.temperature = *eval_tau;
    if (eval_alpha) cfg.scoring.ensemble.alpha = *eval_alpha;
    if (eval_beta) cfg.scoring.ensemble.beta = *eval_beta;
    if (eval_gamma) cfg.scoring.ensemble.gamma = *eval_gamma;
    if (eval_clamp) cfg.scoring.clamp_cosine = true;
    cfg.mode = ModeSpec::parse(mode_name, eval_shots.value_or(cfg.mode.shots),
                               eval_neighbors.value_or(cfg.mode.neighbors));
    cfg.sync();
    cfg.validate();
    echo_config(command, cfg,
                {{"data", eval_data}, {"bank", eval_bank.value_or("")}});
    const EmbeddingSet data = load_embedding_set(eval_data);
    const EmbeddingSet test = test_rows(data);
    std::optional<PrototypeBank> bank;
    std::optional<EmbeddingSet> train;
    if (cfg.mode.kind == ModeKind::kKnn) {
      train = data.only(Split::kTrain);
      if (train->size() == 0) throw DataError("knn needs train-tagged rows in --data");
    } else {
      if (!eval_bank) throw ValidationError("--bank is required for mode " + mode_name);
      bank = load_bank(*eval_bank);
    }
    EvalReport report =
        evaluate({bank ? &*bank : nullptr, train ? &*train : nullptr}, test,
                 cfg.mode, cfg.scoring, cfg.threads);
    report.config = cfg.to_json();
    emit_notes(report.notes);
    write_eval_outputs(report, eval_out, eval_csv);
  };
  auto add_eval_flags = [&](CLI::App* cmd) {
    add_common(cmd, eval_common);
    cmd->add_option("--data", eval_data, "Embedding directory")->required();
    cmd->add_option("--out", eval_out, "Report JSON path")->required();
    cmd->add_option("--csv", eval_csv,
                    "Also write PREFIX_per_class.csv and PREFIX_confusion.csv");
    cmd->add_option("--neighbors", eval_neighbors, "knn: neighbours per vote");
  };
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate on the test split");
  add_eval_flags(eval_cmd);
  eval_cmd->add_option("--bank", eval_bank, "Bank directory");
  eval_cmd->add_option("--mode", eval_mode,
                       "fully_supervised | few_shot | training_free_visual | "
                       "zero_shot_text | knn");
  eval_cmd->add_option("--shots", eval_shots, "few_shot: shots (recorded only)");
  eval_cmd->add_option("--temperature", eval_tau, "Softmax temperature");
  eval_cmd->add_option("--alpha", eval_alpha, "Visual head weight");
  eval_cmd->add_option("--beta", eval_beta, "Text-max head weight");
  eval_cmd->add_option("--gamma", eval_gamma, "Text-average head weight");
  eval_cmd->add_flag("--clamp-cosine", eval_clamp, "Clamp similarities to [0, 1]");
  eval_cmd->callback([&] { action = [&] { run_eval("eval", eval_mode); }; });

  auto* knn_cmd = app.add_subcommand("knn", "Cosine kNN baseline on the test split");
  add_eval_flags(knn_cmd);
  knn_cmd->callback([&] { action = [&] { run_eval("knn", "knn"); }; });

  // predict
  CommonFlags predict_common;
  std::string predict_bank, predict_query;
  std::optional<std::string> predict_out;
  std::size_t predict_topk = 1;
  std::optional<double> predict_tau;
  auto* predict = app.add_subcommand("predict", "Score query features");
  add_common(predict, predict_common);
  predict->add_option("--bank", predict_bank, "Bank directory")->required();
  predict->add_option("--query", predict_query, "features.bin with query rows")
      ->required();
  predict->add_option("--topk", predict_topk, "Classes reported per query")
      ->check(CLI::PositiveNumber);
  predict->add_option("--temperature", predict_tau, "Softmax temperature");
  predict->add_option("--out", predict_out, "Write JSON lines here instead of stdout");
  predict->callback([&] {
    action = [&] {
      RunConfig cfg = resolve(predict_common);
      if (predict_tau) cfg.scoring.temperature = *predict_tau;
      cfg.sync();
      cfg.validate();
      echo_config("predict", cfg, {{"bank", predict_bank}, {"query", predict_query}});
      const PrototypeBank bank = load_bank(predict_bank);
      ScoringConfig scoring = cfg.scoring;
      if (!bank.has_visual()) scoring.ensemble.alpha = 0.0;
      if (!bank.has_textual()) scoring.ensemble.beta = scoring.ensemble.gamma = 0.0;
      const Matrix<float> queries = load_feature_file(predict_query);
      const auto scores = score_batch(queries, bank, scoring, cfg.threads);
      std::string lines;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto& p = scores[i].p_fused;
        std::vector<std::size_t> order(p.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
        const std::size_t k = std::min(predict_topk, order.size());
        if (k == 1) {
          lines += json{{"index", i},
                        {"class", bank.classes.name(order[0])},
                        {"class_id", order[0]},
                        {"p_fused", p[order[0]]}}
                       .dump();
        } else {
          json top = json::array();
          for (std::size_t r = 0; r < k; ++r)
            top.push_back({{"class", bank.classes.name(order[r])},
                           {"class_id", order[r]},
                           {"p_fused", p[order[r]]}});
          lines += json{{"index", i}, {"class", bank.classes.name(order[0])},
                        {"class_id", order[0]}, {"p_fused", p[order[0]]},
                        {"topk", top}}
                       .dump();
        }
        lines += '\n';
      }
      if (predict_out) io::write_file(*predict_out, lines);
      else std::cout << lines;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(ErrorKind::kValidation, e.what());
  }

  try {
    action();
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(ErrorKind::kData, e.what());
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"kind", "internal"}, {"message", e.what()}}}}.dump()
              << '\n';
    return 1;
  }
  return 0;
}

#include "protoclass/run_config.hpp"

#include <cstdlib>
#include <set>

#include "protoclass/binary_format.hpp"
#include "protoclass/error.hpp"

namespace protoclass {
using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
  if (!obj.is_object())
    throw ValidationError("config: '" + where + "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.contains(it.key()))
      throw ValidationError("config: unknown key '" +
                            (where.empty() ? it.key() : where + "." + it.key()) +
                            "'");
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config: '" + where + "." + key +
                          "' has the wrong type");
  }
}

}  // namespace

void RunConfig::sync() {
  kmeans.seed = seed;
  train.seed = seed;
  train.threads = threads;
}

void RunConfig::validate() const {
  if (threads < 1) throw ValidationError("--threads must be at least 1");
  kmeans.validate();
  train.validate();
  scoring.validate();
  validate_split_ratios(split);
  mode.validate();
}

json RunConfig::to_json() const {
  return {
      {"seed", seed},
      {"threads", threads},
      {"kmeans",
       {{"k", kmeans.k},
        {"max_iters", kmeans.max_iters},
        {"tol", kmeans.tol},
        {"init", to_string(kmeans.init)}}},
      {"train",
       {{"lambda1", train.lambda1},
        {"lambda2", train.lambda2},
        {"epochs", train.epochs},
        {"batch_size", train.batch_size},
        {"base_lr", train.base_lr},
        {"schedule", to_string(train.schedule)},
        {"optimizer", train.optimizer},
        {"weight_decay", train.weight_decay},
        {"beta1", train.beta1},
        {"beta2", train.beta2},
        {"eps", train.eps}}},
      {"scoring",
       {{"temperature", scoring.temperature},
        {"clamp_cosine", scoring.clamp_cosine},
        {"ensemble",
         {{"alpha", scoring.ensemble.alpha},
          {"beta", scoring.ensemble.beta},
          {"gamma", scoring.ensemble.gamma}}}}},
      {"split", {{"ratios", {split.train, split.val, split.test}}}},
      {"mode",
       {{"name", mode.name()}, {"shots", mode.shots}, {"neighbors", mode.neighbors}}},
  };
}

RunConfig apply_config_json(RunConfig cfg, const json& doc) {
  reject_unknown(doc, {"seed", "threads", "kmeans", "train", "scoring", "split", "mode"},
                 "");
  read(doc, "seed", cfg.seed, "");
  read(doc, "threads", cfg.threads, "");

  if (doc.contains("kmeans")) {
    const json& k = doc.at("kmeans");
    reject_unknown(k, {"k", "max_iters", "tol", "init"}, "kmeans");
    read(k, "k", cfg.kmeans.k, "kmeans");
    read(k, "max_iters", cfg.kmeans.max_iters, "kmeans");
    read(k, "tol", cfg.kmeans.tol, "kmeans");
    std::string init = to_string(cfg.kmeans.init);
    read(k, "init", init, "kmeans");
    cfg.kmeans.init = parse_kmeans_init(init);
  }
  if (doc.contains("train")) {
    const json& t = doc.at("train");
    reject_unknown(t,
                   {"lambda1", "lambda2", "epochs", "batch_size", "base_lr",
                    "schedule", "optimizer", "weight_decay", "beta1", "beta2",
                    "eps"},
                   "train");
    read(t, "lambda1", cfg.train.lambda1, "train");
    read(t, "lambda2", cfg.train.lambda2, "train");
    read(t, "epochs", cfg.train.epochs, "train");
    read(t, "batch_size", cfg.train.batch_size, "train");
    read(t, "base_lr", cfg.train.base_lr, "train");
    std::string schedule = to_string(cfg.train.schedule);
    read(t, "schedule", schedule, "train");
    cfg.train.schedule = parse_lr_schedule(schedule);
    read(t, "optimizer", cfg.train.optimizer, "train");
    read(t, "weight_decay", cfg.train.weight_decay, "train");
    read(t, "beta1", cfg.train.beta1, "train");
    read(t, "beta2", cfg.train.beta2, "train");
    read(t, "eps", cfg.train.eps, "train");
  }
  if (doc.contains("scoring")) {
    const json& s = doc.at("scoring");
    reject_unknown(s, {"temperature", "clamp_cosine", "ensemble"}, "scoring");
    read(s, "temperature", cfg.scoring.temperature, "scoring");
    read(s, "clamp_cosine", cfg.scoring.clamp_cosine, "scoring");
    if (s.contains("ensemble")) {
      const json& e = s.at("ensemble");
      reject_unknown(e, {"alpha", "beta", "gamma"}, "scoring.ensemble");
      read(e, "alpha", cfg.scoring.ensemble.alpha, "scoring.ensemble");
      read(e, "beta", cfg.scoring.ensemble.beta, "scoring.ensemble");
      read(e, "gamma", cfg.scoring.ensemble.gamma, "scoring.ensemble");
    }
  }
  if (doc.contains("split")) {
    const json& s = doc.at("split");
    reject_unknown(s, {"ratios"}, "split");
    std::vector<double> ratios;
    read(s, "ratios", ratios, "split");
    if (s.contains("ratios")) {
      if (ratios.size() != 3)
        throw ValidationError("config: 'split.ratios' needs three values");
      cfg.split = {ratios[0], ratios[1], ratios[2]};
    }
  }
  if (doc.contains("mode")) {
    const json& m = doc.at("mode");
    reject_unknown(m, {"name", "shots", "neighbors"}, "mode");
    std::string name = cfg.mode.name();
    read(m, "name", name, "mode");
    std::size_t shots = cfg.mode.shots;
    std::size_t neighbors = cfg.mode.neighbors;
    read(m, "shots", shots, "mode");
    read(m, "neighbors", neighbors, "mode");
    cfg.mode = ModeSpec::parse(name, shots, neighbors);
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  json doc;
  try {
    doc = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError("--config: " + path.string() + " is not valid JSON: " +
                          e.what());
  }
  return apply_config_json(std::move(base), doc);
}

std::optional<std::uint64_t> seed_from_env() {
  const char* raw = std::getenv("PROTOCLASS_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(raw, &end, 10);
  if (end == raw || *end != '\0')
    throw ValidationError("PROTOCLASS_SEED must be an unsigned integer");
  return static_cast<std::uint64_t>(v);
}

}  // namespace protoclass

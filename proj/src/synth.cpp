#include "protoclass/synth.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "protoclass/error.hpp"
#include "protoclass/rng.hpp"

namespace protoclass {
namespace {

std::string class_name(std::size_t c, std::size_t total) {
  const int width = static_cast<int>(std::to_string(total > 0 ? total - 1 : 0).size());
  char buf[32];
  std::snprintf(buf, sizeof(buf), "class_%0*zu", width, c);
  return buf;
}

void noisy_copy(std::span<const double> center, double sigma, Rng& rng,
                std::span<float> out) {
  for (std::size_t j = 0; j < center.size(); ++j)
    out[j] = static_cast<float>(center[j] + sigma * rng.normal());
}

}  // namespace

void SynthConfig::validate() const {
  if (classes < 1 || modes_per_class < 1 || dim < 1 || samples_per_class < 1)
    throw ValidationError("synth: all counts must be at least 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw ValidationError("synth: sigma must be non-negative");
}

SynthData synth_generate(const SynthConfig& config) {
  config.validate();
  const std::size_t m = config.classes;
  const std::size_t modes = config.modes_per_class;
  const std::size_t d = config.dim;
  const double prompt_sigma =
      config.prompt_sigma < 0.0 ? config.sigma : config.prompt_sigma;
  const std::size_t prompts_per_class =
      config.prompts_per_class == 0 ? modes : config.prompts_per_class;

  SynthData out;
  out.centers = Tensor3<double>(m, modes, d);
  Rng center_rng = Rng::stream(config.seed, 0);
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t k = 0; k < modes; ++k) {
      auto v = out.centers.at(c, k);
      double norm = 0.0;
      while (!(norm > 0.0)) {
        norm = 0.0;
        for (double& x : v) {
          x = center_rng.normal();
          norm += x * x;
        }
        norm = std::sqrt(norm);
      }
      for (double& x : v) x /= norm;
    }

  std::vector<std::string> names;
  for (std::size_t c = 0; c < m; ++c) names.push_back(class_name(c, m));
  ClassManifest classes(names);

  Rng feature_rng = Rng::stream(config.seed, 1);
  Matrix<float> features(m * config.samples_per_class, d);
  std::vector<std::uint32_t> labels;
  labels.reserve(features.rows());
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t i = 0; i < config.samples_per_class; ++i) {
      const std::size_t row = c * config.samples_per_class + i;
      noisy_copy(out.centers.at(c, i % modes), config.sigma, feature_rng,
                 features.row(row));
      labels.push_back(static_cast<std::uint32_t>(c));
    }
  nlohmann::json metadata = {{"generator", "synth"},
                             {"synth",
                              {{"classes", m},
                               {"modes_per_class", modes},
                               {"dim", d},
                               {"samples_per_class", config.samples_per_class},
                               {"sigma", config.sigma},
                               {"seed", config.seed}}}};
  out.data = EmbeddingSet(std::move(features), std::move(labels), classes, {},
                          metadata);

  Rng prompt_rng = Rng::stream(config.seed, 2);
  out.prompts.classes = classes;
  out.prompts.metadata = metadata;
  for (std::size_t c = 0; c < m; ++c) {
    Matrix<float> rows(prompts_per_class, d);
    std::vector<std::string> texts;
    for (std::size_t j = 0; j < prompts_per_class; ++j) {
      noisy_copy(out.centers.at(c, j % modes), prompt_sigma, prompt_rng,
                 rows.row(j));
      texts.push_back("synthetic prompt " + std::to_string(j) + " for " +
                      names[c]);
    }
    out.prompts.embeddings.push_back(std::move(rows));
    out.prompts.texts.push_back(std::move(texts));
  }
  return out;
}

}  // namespace protoclass

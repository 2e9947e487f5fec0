#pragma once

#include <cstdint>

#include "protoclass/embedding_store.hpp"
#include "protoclass/tensor.hpp"

namespace protoclass {

/// Controlled stand-in for encoder features: each class owns a few unit-norm
/// mode centres, images are centre + isotropic Gaussian noise, and prompt
/// embeddings are centre + independent noise.
struct SynthConfig {
  std::size_t classes = 10;
  std::size_t modes_per_class = 3;
  std::size_t dim = 32;
  std::size_t samples_per_class = 120;
  double sigma = 0.15;
  std::uint64_t seed = 0;
  std::size_t prompts_per_class = 0;  // 0 means one prompt per mode
  double prompt_sigma = -1.0;         // negative means `sigma`

  void validate() const;
};

struct SynthData {
  EmbeddingSet data;        // untagged; sample i of a class uses mode i % modes
  PromptSet prompts;        // prompt j of a class uses mode j % modes
  Tensor3<double> centers;  // classes x modes x dim
};

SynthData synth_generate(const SynthConfig& config);

}  // namespace protoclass

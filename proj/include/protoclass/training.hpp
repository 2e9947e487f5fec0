#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protoclass/embedding_store.hpp"
#include "protoclass/prototypes.hpp"
#include "protoclass/scoring.hpp"
#include "protoclass/tensor.hpp"

namespace protoclass {

enum class LrSchedule { kCosine, kConstant };

const char* to_string(LrSchedule schedule) noexcept;
LrSchedule parse_lr_schedule(std::string_view text);

struct TrainConfig {
  double lambda1 = 0.1;  // text-max loss weight
  double lambda2 = 0.1;  // text-average loss weight
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double base_lr = 0.003;
  LrSchedule schedule = LrSchedule::kCosine;
  std::string optimizer = "adamw";
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const;
};

/// Trainable double-precision copy of a bank.
struct PrototypeParams {
  Tensor3<double> visual;
  Tensor3<double> textual;

  static PrototypeParams from_bank(const PrototypeBank& bank);
  void write_to(PrototypeBank& bank) const;
};

struct LossTerms {
  double loss_v = 0.0;
  double loss_tmax = 0.0;
  double loss_tavg = 0.0;
};

struct LossAndGrads {
  double loss = 0.0;  // loss_v + lambda1 * loss_tmax + lambda2 * loss_tavg
  LossTerms terms;    // batch means of each head's cross-entropy
  Tensor3<double> grad_visual;
  Tensor3<double> grad_textual;
};

struct LossOptions {
  double temperature = 0.01;
  double lambda1 = 0.1;
  double lambda2 = 0.1;
  bool clamp_cosine = false;
  unsigned threads = 1;
  std::size_t batch_index = 0;  // only used in error messages
};

/// Mean cross-entropy of the three heads over `rows` of `features` and its
/// exact gradient with respect to both prototype tensors.
///
/// For a query x and prototype w, with c = cos(x, w) and r = |w|:
///   dc/dw = (x/|x| - c * w/r) / r
/// and each head's logit gradient is (p - onehot(y)) scaled by 1/tau
/// (visual and text-max) or 1/(tau*J) (text-average). The text-max head
/// routes its gradient only to the most similar prototype of each class,
/// ties to the lowest index. Samples are summed in fixed chunks and the
/// chunks are combined by a pairwise tree, so the result does not depend
/// on the thread count. Throws DivergenceError on a non-finite loss.
LossAndGrads loss_and_grads(const Matrix<float>& features,
                            std::span<const std::uint32_t> labels,
                            std::span<const std::size_t> rows,
                            const PrototypeParams& params,
                            const LossOptions& options);

/// Half-cosine decay from base_lr at step 0 to 0 at total_steps.
double lr_at(std::size_t step, std::size_t total_steps, double base_lr);

/// Decoupled-weight-decay Adam state for one tensor.
class AdamW {
 public:
  AdamW(std::size_t size, const TrainConfig& config);
  void step(std::span<double> params, std::span<const double> grads,
            double lr);

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::uint64_t t_ = 0;
  std::vector<double> m_, v_;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  LossTerms terms;
  std::optional<double> val_accuracy;
  double last_lr = 0.0;
  double wall_ms = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double initial_loss = 0.0;  // full train set, before the first update
  std::string final_bank_hash;
  std::string train_features_crc32;

  /// One JSON object per epoch followed by a summary line. Wall-clock
  /// fields are omitted when include_timing is false.
  std::string to_jsonl(bool include_timing = true) const;
};

struct TrainResult {
  PrototypeBank bank;
  TrainReport report;
};

/// Optimizes the prototypes on the train-tagged rows of `train_set` with
/// shuffled mini-batches, AdamW and the configured schedule. The input
/// features are never modified. Aborts with DivergenceError when a batch
/// loss exceeds ten times the first batch loss.
TrainResult train(const PrototypeBank& bank, const EmbeddingSet& train_set,
                  const EmbeddingSet* val_set, const TrainConfig& config,
                  const ScoringConfig& scoring);

}  // namespace protoclass

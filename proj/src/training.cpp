#include "protoclass/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "protoclass/binary_format.hpp"
#include "protoclass/error.hpp"
#include "protoclass/parallel.hpp"
#include "protoclass/rng.hpp"
#include "protoclass/simd/kernels.hpp"

namespace protoclass {
namespace {

// Samples per partial sum. Depends only on the batch size.
std::size_t chunk_size_for(std::size_t n) {
  constexpr std::size_t kMinChunk = 16;
  constexpr std::size_t kMaxChunks = 64;
  return std::max(kMinChunk, (n + kMaxChunks - 1) / kMaxChunks);
}

struct Partial {
  double loss_v = 0.0;
  double loss_tmax = 0.0;
  double loss_tavg = 0.0;
  Tensor3<double> grad_visual;
  Tensor3<double> grad_textual;

  void add(const Partial& other) {
    loss_v += other.loss_v;
    loss_tmax += other.loss_tmax;
    loss_tavg += other.loss_tavg;
    simd::axpy(1.0, other.grad_visual.flat(), grad_visual.flat());
    simd::axpy(1.0, other.grad_textual.flat(), grad_textual.flat());
  }
};

std::vector<double> norms_of(const Tensor3<double>& t) {
  std::vector<double> out(t.classes() * t.slots());
  for (std::size_t m = 0; m < t.classes(); ++m)
    for (std::size_t s = 0; s < t.slots(); ++s) {
      const auto row = t.at(m, s);
      const double r = std::sqrt(simd::dot(row, row));
      if (!(r > 0.0) || !std::isfinite(r))
        throw DivergenceError("prototype " + std::to_string(s) + " of class " +
                              std::to_string(m) +
                              " has zero or non-finite norm");
      out[m * t.slots() + s] = r;
    }
  return out;
}

// Cross-entropy of softmax(logits) at `label`; overwrites logits with
// d(CE)/d(logits) = softmax - onehot.
double ce_and_grad(std::span<double> logits, std::size_t label) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - peak);
  const double lse = peak + std::log(total);
  const double loss = lse - logits[label];
  for (double& z : logits) z = std::exp(z - lse);
  logits[label] -= 1.0;
  return loss;
}

// Accumulates coeff * dc/dw into grad, where c = cos(x_hat, w).
void add_cosine_grad(double coeff, std::span<const double> x_hat,
                     std::span<const double> w, double r, double c,
                     std::span<double> grad) {
  simd::axpy(coeff / r, x_hat, grad);
  simd::axpy(-coeff * c / (r * r), w, grad);
}

struct Workspace {
  std::vector<double> x_hat;
  std::vector<double> sims;
  std::vector<double> raw;
  std::vector<double> logits;
  std::vector<std::size_t> best;
};

void accumulate_sample(std::span<const float> x, std::uint32_t label,
                       const PrototypeParams& params,
                       std::span<const double> v_norms,
                       std::span<const double> t_norms,
                       const LossOptions& opt, Workspace& ws, Partial& acc) {
  const std::size_t d = x.size();
  ws.x_hat.resize(d);
  double sq = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    ws.x_hat[j] = x[j];
    sq += ws.x_hat[j] * ws.x_hat[j];
  }
  const double inv = 1.0 / std::sqrt(sq);
  for (double& v : ws.x_hat) v *= inv;
  const double tau = opt.temperature;

  auto cosines = [&](const Tensor3<double>& t, std::span<const double> norms) {
    const std::size_t n = t.classes() * t.slots();
    ws.raw.resize(n);
    ws.sims.resize(n);
    for (std::size_t m = 0; m < t.classes(); ++m)
      for (std::size_t s = 0; s < t.slots(); ++s) {
        const std::size_t i = m * t.slots() + s;
        ws.raw[i] = simd::dot(std::span<const double>(ws.x_hat), t.at(m, s)) / norms[i];
        ws.sims[i] = opt.clamp_cosine ? std::max(0.0, ws.raw[i]) : ws.raw[i];
      }
  };
  // Clamped similarities have zero derivative below 0.
  auto live = [&](std::size_t i) { return !opt.clamp_cosine || ws.raw[i] > 0.0; };

  if (!params.visual.empty()) {
    const auto& V = params.visual;
    const std::size_t K = V.slots();
    cosines(V, v_norms);
    ws.logits.assign(V.classes(), 0.0);
    for (std::size_t m = 0; m < V.classes(); ++m) {
      double sum = 0.0;
      for (std::size_t k = 0; k < K; ++k) sum += ws.sims[m * K + k];
      ws.logits[m] = sum / tau;
    }
    acc.loss_v += ce_and_grad(ws.logits, label);
    for (std::size_t m = 0; m < V.classes(); ++m) {
      const double g = ws.logits[m] / tau;
      for (std::size_t k = 0; k < K; ++k) {
        const std::size_t i = m * K + k;
        if (live(i))
          add_cosine_grad(g, ws.x_hat, V.at(m, k), v_norms[i], ws.raw[i],
                          acc.grad_visual.at(m, k));
      }
    }
  }

  if (!params.textual.empty()) {
    const auto& T = params.textual;
    const std::size_t J = T.slots();
    cosines(T, t_norms);

    // Text-max head.
    ws.best.assign(T.classes(), 0);
    ws.logits.assign(T.classes(), 0.0);
    for (std::size_t m = 0; m < T.classes(); ++m) {
      std::size_t b = 0;
      for (std::size_t j = 1; j < J; ++j)
        if (ws.sims[m * J + j] > ws.sims[m * J + b]) b = j;
      ws.best[m] = b;
      ws.logits[m] = ws.sims[m * J + b] / tau;
    }
    acc.loss_tmax += ce_and_grad(ws.logits, label);
    if (opt.lambda1 != 0.0) {
      for (std::size_t m = 0; m < T.classes(); ++m) {
        const std::size_t i = m * J + ws.best[m];
        if (live(i))
          add_cosine_grad(opt.lambda1 * ws.logits[m] / tau, ws.x_hat,
                          T.at(m, ws.best[m]), t_norms[i], ws.raw[i],
                          acc.grad_textual.at(m, ws.best[m]));
      }
    }

    // Text-average head.
    const double scale = tau * static_cast<double>(J);
    ws.logits.assign(T.classes(), 0.0);
    for (std::size_t m = 0; m < T.classes(); ++m) {
      double sum = 0.0;
      for (std::size_t j = 0; j < J; ++j) sum += ws.sims[m * J + j];
      ws.logits[m] = sum / scale;
    }
    acc.loss_tavg += ce_and_grad(ws.logits, label);
    if (opt.lambda2 != 0.0) {
      for (std::size_t m = 0; m < T.classes(); ++m) {
        const double g = opt.lambda2 * ws.logits[m] / scale;
        for (std::size_t j = 0; j < J; ++j) {
          const std::size_t i = m * J + j;
          if (live(i))
            add_cosine_grad(g, ws.x_hat, T.at(m, j), t_norms[i], ws.raw[i],
                            acc.grad_textual.at(m, j));
        }
      }
    }
  }
}

Tensor3<double> zeros_like(const Tensor3<double>& t) {
  return Tensor3<double>(t.classes(), t.slots(), t.dim(), 0.0);
}

double accuracy_of(const PrototypeBank& bank, const EmbeddingSet& set,
                   const ScoringConfig& scoring, unsigned threads) {
  if (set.size() == 0) return 0.0;
  const auto scores = score_batch(set.features(), bank, scoring, threads);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    correct += scores[i].predicted_class == set.labels()[i];
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

}  // namespace

const char* to_string(LrSchedule schedule) noexcept {
  return schedule == LrSchedule::kCosine ? "cosine" : "constant";
}

LrSchedule parse_lr_schedule(std::string_view text) {
  if (text == "cosine") return LrSchedule::kCosine;
  if (text == "constant") return LrSchedule::kConstant;
  throw ValidationError("schedule must be 'cosine' or 'constant', got '" +
                        std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be at least 1");
  if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr))
    throw ValidationError("base_lr must be non-negative and finite");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0))
    throw ValidationError("lambda1 and lambda2 must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ValidationError("beta1 and beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw ValidationError("eps must be positive");
  if (!(weight_decay >= 0.0))
    throw ValidationError("weight_decay must be non-negative");
  if (optimizer != "adamw")
    throw ValidationError("optimizer must be 'adamw', got '" + optimizer + "'");
}

PrototypeParams PrototypeParams::from_bank(const PrototypeBank& bank) {
  return {tensor_cast<double>(bank.visual), tensor_cast<double>(bank.textual)};
}

void PrototypeParams::write_to(PrototypeBank& bank) const {
  bank.visual = tensor_cast<float>(visual);
  bank.textual = tensor_cast<float>(textual);
}

LossAndGrads loss_and_grads(const Matrix<float>& features,
                            std::span<const std::uint32_t> labels,
                            std::span<const std::size_t> rows,
                            const PrototypeParams& params,
                            const LossOptions& options) {
  if (!(options.temperature > 0.0))
    throw ValidationError("temperature must be positive");
  if (rows.empty()) throw ValidationError("loss_and_grads: empty batch");
  if (params.visual.empty() && params.textual.empty())
    throw ValidationError("loss_and_grads: no prototypes");
  const std::size_t m = params.visual.empty() ? params.textual.classes()
                                              : params.visual.classes();
  const std::size_t d = params.visual.empty() ? params.textual.dim()
                                              : params.visual.dim();
  if (features.cols() != d)
    throw ValidationError("feature dimension does not match prototypes");
  for (auto r : rows) {
    if (r >= features.rows() || r >= labels.size())
      throw ValidationError("loss_and_grads: row index out of range");
    if (labels[r] >= m) throw ValidationError("loss_and_grads: label out of range");
  }

  const auto v_norms = params.visual.empty() ? std::vector<double>{}
                                             : norms_of(params.visual);
  const auto t_norms = params.textual.empty() ? std::vector<double>{}
                                              : norms_of(params.textual);

  const std::size_t n = rows.size();
  const std::size_t chunk = chunk_size_for(n);
  const std::size_t chunks = (n + chunk - 1) / chunk;
  std::vector<Partial> partials(chunks);
  parallel_for(chunks, options.threads, [&](std::size_t c) {
    Partial& p = partials[c];
    p.grad_visual = zeros_like(params.visual);
    p.grad_textual = zeros_like(params.textual);
    Workspace ws;
    const std::size_t end = std::min(n, (c + 1) * chunk);
    for (std::size_t b = c * chunk; b < end; ++b)
      accumulate_sample(features.row(rows[b]), labels[rows[b]], params,
                        v_norms, t_norms, options, ws, p);
  });
  for (std::size_t stride = 1; stride < chunks; stride *= 2)
    for (std::size_t i = 0; i + stride < chunks; i += 2 * stride)
      partials[i].add(partials[i + stride]);

  Partial& total = partials.front();
  const double inv_n = 1.0 / static_cast<double>(n);
  LossAndGrads out;
  out.terms = {total.loss_v * inv_n, total.loss_tmax * inv_n,
               total.loss_tavg * inv_n};
  out.loss = out.terms.loss_v + options.lambda1 * out.terms.loss_tmax +
             options.lambda2 * out.terms.loss_tavg;
  if (!std::isfinite(out.loss))
    throw DivergenceError("non-finite loss in batch " +
                          std::to_string(options.batch_index));
  for (double& g : total.grad_visual.flat()) g *= inv_n;
  for (double& g : total.grad_textual.flat()) g *= inv_n;
  out.grad_visual = std::move(total.grad_visual);
  out.grad_textual = std::move(total.grad_textual);
  return out;
}

double lr_at(std::size_t step, std::size_t total_steps, double base_lr) {
  if (total_steps == 0) return base_lr;
  const double t = static_cast<double>(std::min(step, total_steps)) /
                   static_cast<double>(total_steps);
  return base_lr * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
}

AdamW::AdamW(std::size_t size, const TrainConfig& config)
    : beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.eps),
      weight_decay_(config.weight_decay),
      m_(size, 0.0),
      v_(size, 0.0) {}

void AdamW::step(std::span<double> params, std::span<const double> grads,
                 double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const double decay = 1.0 - lr * weight_decay_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] = params[i] * decay - lr * m_hat / (std::sqrt(v_hat) + eps_);
  }
}

std::string TrainReport::to_jsonl(bool include_timing) const {
  std::ostringstream out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["loss"] = e.loss;
    j["loss_v"] = e.terms.loss_v;
    j["loss_tmax"] = e.terms.loss_tmax;
    j["loss_tavg"] = e.terms.loss_tavg;
    j["val_accuracy"] = e.val_accuracy ? nlohmann::ordered_json(*e.val_accuracy)
                                       : nlohmann::ordered_json(nullptr);
    j["lr"] = e.last_lr;
    if (include_timing) j["wall_ms"] = e.wall_ms;
    out << j.dump() << '\n';
  }
  nlohmann::ordered_json summary;
  summary["summary"] = true;
  summary["epochs"] = epochs.size();
  summary["initial_loss"] = initial_loss;
  summary["final_bank_hash"] = final_bank_hash;
  summary["train_features_crc32"] = train_features_crc32;
  out << summary.dump() << '\n';
  return out.str();
}

TrainResult train(const PrototypeBank& bank, const EmbeddingSet& train_set,
                  const EmbeddingSet* val_set, const TrainConfig& config,
                  const ScoringConfig& scoring) {
  config.validate();
  scoring.validate();
  bank.validate();
  if (train_set.class_count() != bank.class_count())
    throw DataError("training set has " + std::to_string(train_set.class_count()) +
                    " classes, bank has " + std::to_string(bank.class_count()));
  if (train_set.dim() != bank.dim())
    throw DataError("training feature dimension does not match the bank");

  const std::vector<std::size_t> train_rows = train_set.rows_in(Split::kTrain);
  if (train_rows.empty()) throw DataError("no train-tagged rows to train on");

  TrainResult result{bank, {}};
  result.report.train_features_crc32 =
      io::crc32_hex(io::encode_features(train_set.features()));

  PrototypeParams params = PrototypeParams::from_bank(bank);
  AdamW opt_v(params.visual.size(), config);
  AdamW opt_t(params.textual.size(), config);

  const std::size_t batches_per_epoch =
      (train_rows.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = config.epochs * batches_per_epoch;

  LossOptions loss_opt;
  loss_opt.temperature = scoring.temperature;
  loss_opt.lambda1 = config.lambda1;
  loss_opt.lambda2 = config.lambda2;
  loss_opt.clamp_cosine = scoring.clamp_cosine;
  loss_opt.threads = config.threads;

  // Divergence is judged against the full-set loss before any update, floored
  // at the uniform-softmax loss so a near-zero start cannot trip the guard.
  const std::size_t m = bank.classes.size();
  const double chance_loss =
      (1.0 + config.lambda1 + config.lambda2) * std::log(static_cast<double>(m));
  {
    LossOptions full = loss_opt;
    full.batch_index = 0;
    result.report.initial_loss =
        loss_and_grads(train_set.features(), train_set.labels(), train_rows, params, full).loss;
  }
  const double divergence_limit = 10.0 * std::max(result.report.initial_loss, chance_loss);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::vector<std::size_t> order = train_rows;
    Rng rng = Rng::stream(config.seed, epoch);
    rng.shuffle(std::span(order));

    EpochRecord record;
    record.epoch = epoch + 1;
    double weighted_loss = 0.0;
    LossTerms weighted_terms;
    for (std::size_t b = 0; b < batches_per_epoch; ++b, ++step) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      loss_opt.batch_index = step;
      LossAndGrads lg = loss_and_grads(train_set.features(), train_set.labels(),
                                       batch, params, loss_opt);
      const double lr = config.schedule == LrSchedule::kCosine
                            ? lr_at(step, total_steps, config.base_lr)
                            : config.base_lr;
      if (!params.visual.empty())
        opt_v.step(params.visual.flat(), lg.grad_visual.flat(), lr);
      if (!params.textual.empty())
        opt_t.step(params.textual.flat(), lg.grad_textual.flat(), lr);

      const double w = static_cast<double>(batch.size());
      weighted_loss += w * lg.loss;
      weighted_terms.loss_v += w * lg.terms.loss_v;
      weighted_terms.loss_tmax += w * lg.terms.loss_tmax;
      weighted_terms.loss_tavg += w * lg.terms.loss_tavg;
      record.last_lr = lr;
    }
    const double n = static_cast<double>(order.size());
    record.loss = weighted_loss / n;
    record.terms = {weighted_terms.loss_v / n, weighted_terms.loss_tmax / n,
                    weighted_terms.loss_tavg / n};
    if (record.loss > divergence_limit)
      throw DivergenceError("mean loss " + std::to_string(record.loss) + " in epoch " +
                            std::to_string(record.epoch) + " exceeds 10x the initial loss " +
                            std::to_string(divergence_limit / 10.0));
    if (val_set != nullptr && val_set->size() > 0) {
      params.write_to(result.bank);
      record.val_accuracy =
          accuracy_of(result.bank, *val_set, scoring, config.threads);
    }
    record.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - started)
                         .count();
    result.report.epochs.push_back(record);
  }

  params.write_to(result.bank);
  result.bank.validate();
  result.bank.provenance.trained_epochs += config.epochs;
  result.report.final_bank_hash = bank_hash(result.bank);
  return result;
}

}  // namespace protoclass

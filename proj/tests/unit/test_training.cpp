#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "oracles/finite_difference.hpp"
#include "protoclass/error.hpp"
#include "protoclass/prototypes.hpp"
#include "protoclass/synth.hpp"
#include "protoclass/training.hpp"
#include "support.hpp"

namespace {

using namespace protoclass;

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

TEST(Loss, SymmetricBankGivesUniformCrossEntropy) {
  Rng rng(1);
  const std::size_t m = 5;
  const Matrix<float> x = testing_support::random_matrix(12, 6, rng);
  std::vector<std::uint32_t> labels(12);
  for (std::size_t i = 0; i < 12; ++i) labels[i] = static_cast<std::uint32_t>(i % m);
  PrototypeParams params;
  params.visual = Tensor3<double>(m, 2, 6);
  params.textual = Tensor3<double>(m, 3, 6);
  std::vector<double> proto(6);
  for (auto& v : proto) v = rng.normal();
  for (auto* t : {&params.visual, &params.textual})
    for (std::size_t c = 0; c < m; ++c)
      for (std::size_t s = 0; s < t->slots(); ++s)
        std::copy(proto.begin(), proto.end(), t->at(c, s).begin());
  const LossAndGrads lg = loss_and_grads(x, labels, all_rows(12), params, LossOptions{});
  EXPECT_NEAR(lg.loss, (1 + 0.1 + 0.1) * std::log(static_cast<double>(m)), 1e-12);
}

TEST(Loss, TextGradientVanishesWithoutTextWeights) {
  Rng rng(2);
  const Matrix<float> x = testing_support::random_matrix(9, 5, rng);
  std::vector<std::uint32_t> labels{0, 1, 2, 0, 1, 2, 0, 1, 2};
  PrototypeParams params;
  params.visual = Tensor3<double>(3, 2, 5);
  params.textual = Tensor3<double>(3, 2, 5);
  for (auto* t : {&params.visual, &params.textual})
    for (auto& v : t->flat()) v = rng.normal();
  LossOptions opt;
  opt.lambda1 = opt.lambda2 = 0.0;
  const LossAndGrads lg = loss_and_grads(x, labels, all_rows(9), params, opt);
  for (double g : lg.grad_textual.flat()) EXPECT_EQ(g, 0.0);
  double visual_norm = 0;
  for (double g : lg.grad_visual.flat()) visual_norm += g * g;
  EXPECT_GT(visual_norm, 0.0);
}

TEST(Loss, AnalyticGradientsMatchFiniteDifferences) {
  oracle::GradInstance g;
  g.h = 1e-5;  // truncation error scales as h^2 / tau^3
  g.floor = 1e-6;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const oracle::GradCheck r = oracle::check_gradients(g, seed);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed;
    EXPECT_LT(r.loss_abs_diff, 1e-9);
    EXPECT_GT(r.checked, 40u);
  }
}

TEST(Loss, FiniteDifferenceErrorShrinksQuadratically) {
  // A correct gradient leaves only the O(h^2) truncation term, so a 10x
  // smaller step cuts the worst error by roughly 100x. Ratios are only
  // comparable when both steps check the same coordinates.
  oracle::GradInstance g;
  g.tau = 1.0;
  g.floor = 1e-6;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    g.h = 1e-3;
    const oracle::GradCheck coarse = oracle::check_gradients(g, seed);
    g.h = 1e-4;
    const oracle::GradCheck fine = oracle::check_gradients(g, seed);
    ASSERT_EQ(coarse.checked, fine.checked) << "seed " << seed;
    EXPECT_GT(coarse.max_rel_error / fine.max_rel_error, 50.0) << "seed " << seed;
    EXPECT_LT(coarse.max_rel_error / fine.max_rel_error, 200.0) << "seed " << seed;
  }
}

TEST(Loss, NonFiniteParametersRaiseDivergence) {
  Rng rng(3);
  const Matrix<float> x = testing_support::random_matrix(4, 3, rng);
  std::vector<std::uint32_t> labels{0, 1, 0, 1};
  PrototypeParams params;
  params.visual = Tensor3<double>(2, 1, 3, 1.0);
  params.textual = Tensor3<double>(2, 1, 3, 1.0);
  params.visual.at(0, 0)[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(loss_and_grads(x, labels, all_rows(4), params, LossOptions{}),
               DivergenceError);
}

TEST(Loss, ThreadCountDoesNotChangeTheBits) {
  Rng rng(4);
  const Matrix<float> x = testing_support::random_matrix(300, 8, rng);
  std::vector<std::uint32_t> labels(300);
  for (auto& l : labels) l = static_cast<std::uint32_t>(rng.uniform_below(4));
  PrototypeParams params;
  params.visual = Tensor3<double>(4, 3, 8);
  params.textual = Tensor3<double>(4, 2, 8);
  for (auto* t : {&params.visual, &params.textual})
    for (auto& v : t->flat()) v = rng.normal();
  LossOptions one, many;
  many.threads = 4;
  const auto a = loss_and_grads(x, labels, all_rows(300), params, one);
  const auto b = loss_and_grads(x, labels, all_rows(300), params, many);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grad_visual, b.grad_visual);
  EXPECT_EQ(a.grad_textual, b.grad_textual);
}

TEST(Schedule, CosineEndpointsAndMidpoint) {
  EXPECT_DOUBLE_EQ(lr_at(0, 100, 0.003), 0.003);
  EXPECT_NEAR(lr_at(100, 100, 0.003), 0.0, 1e-18);
  EXPECT_NEAR(lr_at(50, 100, 0.003), 0.0015, 1e-15);
  EXPECT_NEAR(lr_at(25, 100, 1.0), (1 + std::cos(std::numbers::pi / 4)) / 2, 1e-15);
  for (std::size_t s = 1; s <= 100; ++s) EXPECT_LE(lr_at(s, 100, 1.0), lr_at(s - 1, 100, 1.0));
}

TEST(AdamW, FirstStepMovesEachCoordinateByLearningRate) {
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt(3, cfg);
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{0.3, -4.0, 1e-3};
  opt.step(p, g, 0.01);
  // Bias correction makes the first update lr * g / (|g| + eps').
  EXPECT_NEAR(p[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p[1], -2.0 + 0.01, 1e-9);
  EXPECT_NEAR(p[2], 0.5 - 0.01, 1e-7);
}

TEST(AdamW, WeightDecayIsDecoupled) {
  TrainConfig cfg;
  cfg.weight_decay = 0.5;
  AdamW opt(1, cfg);
  std::vector<double> p{2.0};
  const std::vector<double> g{0.0};
  opt.step(p, g, 0.1);
  EXPECT_DOUBLE_EQ(p[0], 2.0 * (1 - 0.1 * 0.5));
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.optimizer = "sgd";
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

struct Fixture {
  SynthData data;
  EmbeddingSet train_rows;
  EmbeddingSet val_rows;
  PrototypeBank bank;
};

Fixture make_fixture(std::size_t classes, std::size_t modes, std::size_t dim,
                     double sigma, std::size_t k, std::uint64_t seed) {
  SynthConfig sc;
  sc.classes = classes;
  sc.modes_per_class = modes;
  sc.dim = dim;
  sc.samples_per_class = 40;
  sc.sigma = sigma;
  sc.seed = seed;
  Fixture f{synth_generate(sc), {}, {}, {}};
  const EmbeddingSet split = split_dataset(f.data.data, {}, seed);
  f.train_rows = split.only(Split::kTrain);
  f.val_rows = split.only(Split::kVal);
  KMeansConfig kc;
  kc.k = k;
  kc.seed = seed;
  f.bank.classes = split.classes();
  f.bank.visual = build_visual_prototypes(f.train_rows, kc).tensor;
  f.bank.textual = build_textual_prototypes(f.data.prompts, dim).tensor;
  return f;
}

TEST(Train, ZeroLearningRateLeavesTheBankUnchanged) {
  const Fixture f = make_fixture(3, 2, 6, 0.1, 2, 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.base_lr = 0.0;
  const TrainResult r = train(f.bank, f.train_rows, nullptr, cfg, ScoringConfig{});
  EXPECT_EQ(r.bank.visual, f.bank.visual);
  EXPECT_EQ(r.bank.textual, f.bank.textual);
}

double fused_accuracy(const PrototypeBank& bank, const EmbeddingSet& set) {
  const auto scores = score_batch(set.features(), bank, ScoringConfig{});
  std::size_t hits = 0;
  for (std::size_t i = 0; i < set.size(); ++i)
    hits += scores[i].predicted_class == set.labels()[i];
  return static_cast<double>(hits) / static_cast<double>(set.size());
}

TEST(Train, LinearlySeparableSetIsFitPerfectly) {
  const Fixture f = make_fixture(3, 1, 8, 0.05, 2, 2);
  std::vector<std::size_t> labels(f.train_rows.labels().begin(), f.train_rows.labels().end());
  ASSERT_TRUE(oracle::linearly_separable(testing_support::to_rows(f.train_rows.features()),
                                         labels, 3));
  TrainConfig cfg;
  cfg.epochs = 30;
  const TrainResult r = train(f.bank, f.train_rows, nullptr, cfg, ScoringConfig{});
  EXPECT_EQ(fused_accuracy(r.bank, f.train_rows), 1.0);
}

TEST(Train, SameSeedSameReportAndBank) {
  const Fixture f = make_fixture(4, 2, 8, 0.15, 2, 3);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  cfg.seed = 11;
  const TrainResult a = train(f.bank, f.train_rows, &f.val_rows, cfg, ScoringConfig{});
  cfg.threads = 3;
  const TrainResult b = train(f.bank, f.train_rows, &f.val_rows, cfg, ScoringConfig{});
  EXPECT_EQ(a.report.to_jsonl(false), b.report.to_jsonl(false));
  EXPECT_EQ(a.report.final_bank_hash, b.report.final_bank_hash);
  EXPECT_EQ(a.bank, b.bank);
  cfg.seed = 12;
  const TrainResult c = train(f.bank, f.train_rows, &f.val_rows, cfg, ScoringConfig{});
  EXPECT_NE(a.report.final_bank_hash, c.report.final_bank_hash);
}

TEST(Train, FeaturesStayFrozen) {
  const Fixture f = make_fixture(3, 2, 6, 0.1, 2, 4);
  const EmbeddingSet before = f.train_rows;
  TrainConfig cfg;
  cfg.epochs = 3;
  const TrainResult r = train(f.bank, f.train_rows, nullptr, cfg, ScoringConfig{});
  EXPECT_EQ(f.train_rows, before);
  EXPECT_NE(r.bank.visual, f.bank.visual);
}

// Noise is large enough that the loss does not underflow to zero yet the set
// stays certifiably separable.
TEST(Train, LossDecreasesOnSeparableData) {
  const Fixture f = make_fixture(3, 1, 8, 0.2, 1, 5);
  std::vector<std::size_t> labels(f.train_rows.labels().begin(), f.train_rows.labels().end());
  ASSERT_TRUE(oracle::linearly_separable(testing_support::to_rows(f.train_rows.features()),
                                         labels, 3));
  TrainConfig cfg;
  cfg.epochs = 5;
  const TrainResult r = train(f.bank, f.train_rows, nullptr, cfg, ScoringConfig{});
  ASSERT_EQ(r.report.epochs.size(), 5u);
  EXPECT_GT(r.report.epochs[0].loss, 0.0);
  EXPECT_LT(r.report.epochs[4].loss, r.report.epochs[0].loss);
  for (const auto& e : r.report.epochs) EXPECT_TRUE(std::isfinite(e.loss));
}

TEST(Train, ReportHasOneLinePerEpochPlusSummary) {
  const Fixture f = make_fixture(3, 2, 6, 0.1, 2, 6);
  TrainConfig cfg;
  cfg.epochs = 4;
  TrainResult r = train(f.bank, f.train_rows, &f.val_rows, cfg, ScoringConfig{});
  const std::string text = r.report.to_jsonl(false);
  std::size_t lines = 0;
  for (char ch : text) lines += ch == '\n';
  EXPECT_EQ(lines, 5u);
  EXPECT_EQ(text.find("wall_ms"), std::string::npos);
  EXPECT_NE(r.report.to_jsonl(true).find("wall_ms"), std::string::npos);
  EXPECT_EQ(r.report.final_bank_hash, bank_hash(r.bank));
  EXPECT_EQ(r.bank.provenance.trained_epochs, 4u);
  for (const auto& e : r.report.epochs) EXPECT_TRUE(e.val_accuracy.has_value());
}

TEST(Train, TextOnlyBankTrainsTextualPrototypes) {
  Fixture f = make_fixture(3, 2, 6, 0.1, 2, 7);
  f.bank.visual = {};
  TrainConfig cfg;
  cfg.epochs = 2;
  ScoringConfig sc;
  sc.ensemble = {0.0, 0.5, 0.5};
  const TrainResult r = train(f.bank, f.train_rows, nullptr, cfg, sc);
  EXPECT_FALSE(r.bank.has_visual());
  EXPECT_NE(r.bank.textual, f.bank.textual);
}

}  // namespace

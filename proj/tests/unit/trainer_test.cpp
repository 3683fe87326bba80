#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lsgc/errors.hpp"
#include "lsgc/ops.hpp"
#include "lsgc/trainer.hpp"

using namespace lsgc;
using namespace lsgc::train;

namespace {

std::vector<NamedParam<double>> one_param(double value, double grad) {
  auto t = num::Tensor<double>::from({1}, {value}, true);
  t.grad_buffer()[0] = grad;
  return {{"theta", t}};
}

ModelConfig small_model() {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 32;
  c.d_ff = 64;
  c.max_seq_len = 512;
  return c;
}

TrainConfig small_cfg(Mode mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.model = small_model();
  cfg.lora = LoraConfig::with_rank(4);
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.seed = 3;
  cfg.adam.lr = 1e-3;
  cfg.budget.max_new_tokens = 4;
  return cfg;
}

// Covers are lowercase letters, stegos uppercase: trivially separable.
std::vector<data::LabeledExample> toy_set(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<data::LabeledExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool stego = i % 2 == 1;
    std::string s(24, ' ');
    for (char& c : s) c = static_cast<char>((stego ? 'A' : 'a') + rng() % 26);
    out.push_back({s, stego ? Label::kStego : Label::kCover, "toy", stego ? 1.0 : 0.0});
  }
  return out;
}

std::vector<std::vector<float>> snapshot(std::vector<NamedParam<float>> params) {
  std::vector<std::vector<float>> out;
  for (auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

}  // namespace

TEST(AdamW, FirstStepHandValue) {
  auto p = one_param(1.0, 0.5);
  AdamState<double> st;
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  adamw_step<double>(p, st, cfg);
  // m_hat = 0.5, v_hat = 0.25 after bias correction.
  EXPECT_NEAR(p[0].tensor[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p[0].tensor[0], 0.9, 1e-7);
  EXPECT_EQ(st.step, 1u);
}

TEST(AdamW, ZeroGradientOnlyDecays) {
  auto p = one_param(2.0, 0.0);
  AdamState<double> st;
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  adamw_step<double>(p, st, cfg);
  EXPECT_DOUBLE_EQ(p[0].tensor[0], 2.0 * (1.0 - 0.1 * 0.01));
}

TEST(AdamW, MatchesIndependentRecurrenceOverManySteps) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  auto p = one_param(0.3, 0.0);
  AdamState<double> st;
  AdamConfig cfg;
  cfg.lr = 0.01;
  double theta = 0.3, m = 0, v = 0;
  for (int t = 1; t <= 50; ++t) {
    const double g = nd(rng);
    p[0].tensor.grad_buffer()[0] = g;
    adamw_step<double>(p, st, cfg);
    theta -= cfg.lr * cfg.weight_decay * theta;
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mh = m / (1 - std::pow(cfg.beta1, t)), vh = v / (1 - std::pow(cfg.beta2, t));
    theta -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
  }
  EXPECT_NEAR(p[0].tensor[0], theta, 1e-12);
}

TEST(AdamW, NonFiniteGradientNamesParameter) {
  auto p = one_param(1.0, std::nan(""));
  AdamState<double> st;
  try {
    adamw_step<double>(p, st, AdamConfig{});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("theta"), std::string::npos) << e.what();
  }
  EXPECT_DOUBLE_EQ(p[0].tensor[0], 1.0);
}

TEST(AdamW, ConfigValidation) {
  AdamConfig c;
  c.lr = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.beta2 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  TrainConfig t;
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  EXPECT_NO_THROW(TrainConfig{}.validate());
  EXPECT_EQ(TrainConfig{}.epochs, 5u);
  EXPECT_EQ(TrainConfig{}.batch_size, 10u);
  EXPECT_DOUBLE_EQ(TrainConfig{}.adam.lr, 5e-5);
}

TEST(ClipGradNorm, PostClipNormBounded) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0, 10);
  for (int trial = 0; trial < 100; ++trial) {
    auto a = num::Tensor<double>::zeros({7}, true), b = num::Tensor<double>::zeros({3, 2}, true);
    double pre = 0;
    for (auto* t : {&a, &b}) {
      for (double& g : t->grad_buffer()) {
        g = nd(rng) * (trial % 3 == 0 ? 0.01 : 1.0);
        pre += g * g;
      }
    }
    const std::vector<NamedParam<double>> params{{"a", a}, {"b", b}};
    EXPECT_NEAR(clip_grad_norm<double>(params, 1.0), std::sqrt(pre), 1e-9);
    double post = 0;
    for (auto* t : {&a, &b}) {
      for (double g : t->grad()) post += g * g;
    }
    EXPECT_LE(std::sqrt(post), 1.0 + 1e-6);
    if (std::sqrt(pre) <= 1.0) EXPECT_NEAR(std::sqrt(post), std::sqrt(pre), 1e-12);
  }
}

TEST(Train, EmptyDataIsDataError) {
  auto cfg = small_cfg(Mode::kClassification);
  auto model = build_model(cfg);
  EXPECT_THROW(train::train(model, {}, {}, cfg), DataError);
}

TEST(Train, BuildModelFreezesBase) {
  auto cfg = small_cfg(Mode::kClassification);
  auto model = build_model(cfg);
  EXPECT_TRUE(model.has_classifier_head());
  for (auto& p : model.base_parameters()) EXPECT_FALSE(p.tensor.requires_grad()) << p.name;
  auto gen = build_model(small_cfg(Mode::kGeneration));
  EXPECT_FALSE(gen.has_classifier_head());
}

TEST(Train, SeededRunsAreBitwiseIdenticalAndBaseStaysFrozen) {
  auto cfg = small_cfg(Mode::kClassification);
  cfg.epochs = 25;  // 16 examples / batch 4 = 4 steps per epoch, 100 steps
  cfg.validate_each_epoch = false;
  const auto data = toy_set(16, 1);
  auto a = build_model(cfg), b = build_model(cfg);
  const auto base_before = snapshot(a.base_parameters());
  const auto sa = train::train(a, data, {}, cfg);
  const auto sb = train::train(b, data, {}, cfg);
  EXPECT_EQ(sa.steps, 100u);
  EXPECT_EQ(sa.epoch_loss, sb.epoch_loss);
  EXPECT_EQ(snapshot(a.parameters()), snapshot(b.parameters()));
  EXPECT_EQ(snapshot(a.base_parameters()), base_before);
  EXPECT_GT(sa.total_seconds, 0.0);
  for (double l : sa.epoch_loss) EXPECT_TRUE(std::isfinite(l));
}

TEST(Train, ClassificationCountsOneForwardPerExamplePerEpoch) {
  auto cfg = small_cfg(Mode::kClassification);
  cfg.epochs = 3;
  cfg.validate_each_epoch = false;
  const auto data = toy_set(10, 2);
  auto model = build_model(cfg);
  const auto stats = train::train(model, data, {}, cfg);
  EXPECT_EQ(stats.train_forward_passes, 30u);
  EXPECT_EQ(stats.steps, 9u);  // batches of 4, 4, 2
  const auto ev = evaluate(model, data, cfg);
  EXPECT_EQ(ev.forward_passes, data.size());
  EXPECT_EQ(ev.confusion.total(), data.size());
}

TEST(Train, GenerationInferenceLoopsPerToken) {
  auto cfg = small_cfg(Mode::kGeneration);
  cfg.epochs = 1;
  cfg.validate_each_epoch = false;
  const auto data = toy_set(6, 3);
  auto model = build_model(cfg);
  const auto stats = train::train(model, data, {}, cfg);
  EXPECT_EQ(stats.train_forward_passes, data.size());  // teacher forcing: one pass per sequence
  const auto ev = evaluate(model, data, cfg);
  EXPECT_EQ(ev.predictions.size(), data.size());
  EXPECT_GE(ev.forward_passes, data.size());
  EXPECT_LE(ev.forward_passes, data.size() * 4);
  EXPECT_EQ(ev.confusion.total(), data.size());
  EXPECT_EQ(ev.unparseable, static_cast<std::size_t>(std::count(ev.predictions.begin(), ev.predictions.end(),
                                                                  Verdict::kUnparseable)));
}

TEST(Train, BestValidationEpochIsRestored) {
  auto cfg = small_cfg(Mode::kClassification);
  cfg.epochs = 4;
  const auto data = toy_set(12, 4), val = toy_set(8, 5);
  auto model = build_model(cfg);
  const auto stats = train::train(model, data, val, cfg);
  ASSERT_EQ(stats.val_accuracy.size(), 4u);
  ASSERT_GE(stats.best_epoch, 1u);
  const double best = *std::max_element(stats.val_accuracy.begin(), stats.val_accuracy.end());
  const auto first = std::find(stats.val_accuracy.begin(), stats.val_accuracy.end(), best);
  EXPECT_EQ(stats.best_epoch, static_cast<std::size_t>(first - stats.val_accuracy.begin()) + 1);
  EXPECT_DOUBLE_EQ(metrics::accuracy(evaluate(model, val, cfg).confusion), best);
}

TEST(Train, MemorizesTwentyExamples) {
  TrainConfig cfg;  // default model size
  cfg.mode = Mode::kClassification;
  cfg.lora = LoraConfig::with_rank(8);
  cfg.adam.lr = 1e-3;
  cfg.epochs = 100;  // 20 examples / batch 10 = 200 steps
  cfg.validate_each_epoch = false;
  cfg.seed = 1;
  // Random printable strings with random labels: nothing to learn but the examples.
  std::mt19937_64 rng(7);
  std::vector<data::LabeledExample> data;
  for (int i = 0; i < 20; ++i) {
    std::string s(32, ' ');
    for (char& c : s) c = static_cast<char>(33 + rng() % 90);
    data.push_back({s, rng() % 2 ? Label::kStego : Label::kCover, "mem", 0.0});
  }
  auto model = build_model(cfg);
  const auto stats = train::train(model, data, {}, cfg);
  EXPECT_EQ(stats.steps, 200u);
  const auto it = std::find_if(stats.epoch_loss.begin(), stats.epoch_loss.end(), [](double l) { return l < 0.1; });
  EXPECT_NE(it, stats.epoch_loss.end()) << "final loss " << stats.epoch_loss.back();
  EXPECT_DOUBLE_EQ(metrics::accuracy(evaluate(model, data, cfg).confusion), 1.0);
}

TEST(Bench, ReductionIsPositiveFraction) {
  auto gen = small_cfg(Mode::kGeneration), cls = small_cfg(Mode::kClassification);
  gen.epochs = cls.epochs = 1;
  const auto data = toy_set(8, 6);
  const auto r = benchmark_modes(data, gen, cls);
  EXPECT_GT(r.t_gen, 0.0);
  EXPECT_GT(r.t_cls, 0.0);
  EXPECT_LT(r.t_cls, r.t_gen);
  EXPECT_GT(r.reduction, 0.0);
  EXPECT_LT(r.reduction, 1.0);
  EXPECT_DOUBLE_EQ(r.reduction, (r.t_gen - r.t_cls) / r.t_gen);
}

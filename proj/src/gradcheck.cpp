#include "lsgc/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>

#include "lsgc/clsmode.hpp"
#include "lsgc/genmode.hpp"
#include "lsgc/lora.hpp"
#include "lsgc/model.hpp"
#include "lsgc/ops.hpp"

namespace lsgc::gradcheck {
namespace {

using Tensor = num::Tensor<double>;
using LossFn = std::function<Tensor()>;

struct Input {
  std::string name;
  Tensor tensor;
};

Tensor random_tensor(num::Shape shape, std::mt19937_64& rng, bool grad = true, double stddev = 1.0) {
  std::normal_distribution<double> nd(0.0, stddev);
  std::vector<double> v(num::shape_numel(shape));
  for (auto& x : v) x = nd(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Collapses an op output to a scalar with fixed random weights so every
// output entry contributes.
Tensor project(const Tensor& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto w = random_tensor(out.shape(), rng, false);
  return num::sum(num::mul(out, w));
}

CaseResult check(const std::string& name, const std::vector<Input>& inputs, const LossFn& loss_fn, const Options& opts,
                 std::size_t coords_limit) {
  CaseResult res;
  res.name = name;
  for (const auto& in : inputs) {
    auto t = in.tensor;
    t.zero_grad();
  }
  {
    num::Tape<double> tape;
    num::TapeScope<double> scope(tape);
    tape.backward(loss_fn());
  }
  std::mt19937_64 rng(opts.seed);
  for (const auto& in : inputs) {
    auto t = in.tensor;
    const auto analytic = t.grad_values();
    std::vector<std::size_t> coords(t.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords_limit && coords.size() > coords_limit) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(coords_limit);
    }
    for (std::size_t i : coords) {
      auto d = t.data();
      const double orig = d[i];
      d[i] = orig + opts.step;
      const double fp = loss_fn().item();
      d[i] = orig - opts.step;
      const double fm = loss_fn().item();
      d[i] = orig;
      const double numeric = (fp - fm) / (2.0 * opts.step);
      const double err = relative_error(analytic[i], numeric, opts.floor);
      ++res.checked;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_param = in.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  res.ok = res.max_rel_error <= opts.tolerance;
  return res;
}

Transformer<double> tiny_model(Mode mode, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.max_seq_len = 16;
  Transformer<double> model(cfg, seed);
  LoraConfig lc = LoraConfig::with_rank(2);
  lc.lora_dropout = 0.0;
  lc.targets = {LoraTarget::kQuery, LoraTarget::kKey, LoraTarget::kValue,
                LoraTarget::kOutput, LoraTarget::kFfUp, LoraTarget::kFfDown};
  model.attach_lora(lc, seed + 1);
  if (mode == Mode::kClassification) model.attach_classifier_head(seed + 2);
  // B starts at zero, which would hide the A gradients.
  std::mt19937_64 rng(seed + 3);
  std::normal_distribution<double> nd(0.0, 0.3);
  for (std::size_t l = 0; l < static_cast<std::size_t>(cfg.n_layers); ++l) {
    for (LoraTarget t : lc.targets) {
      for (double& b : model.block(l).linear(t).lora->B.data()) b = nd(rng);
    }
  }
  model.set_base_trainable(true);
  return model;
}

std::vector<Input> model_inputs(Transformer<double>& model) {
  std::vector<Input> out;
  for (auto& p : model.parameters()) {
    if (p.tensor.requires_grad()) out.push_back({p.name, p.tensor});
  }
  return out;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

bool Report::ok() const {
  return std::all_of(cases.begin(), cases.end(), [](const CaseResult& c) { return c.ok; });
}

std::vector<const CaseResult*> Report::failures() const {
  std::vector<const CaseResult*> out;
  for (const auto& c : cases) {
    if (!c.ok) out.push_back(&c);
  }
  return out;
}

Report run(const Options& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  Report report;
  std::mt19937_64 rng(opts.seed);
  auto add = [&](const std::string& name, std::vector<Input> inputs, LossFn fn, std::size_t limit = 0) {
    report.cases.push_back(check(name, inputs, fn, opts, limit));
  };

  {
    auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng);
    add("matmul", {{"a", a}, {"b", b}}, [=] { return project(num::matmul(a, b), 1); });
  }
  {
    auto a = random_tensor({3, 4}, rng), b = random_tensor({5, 4}, rng);
    add("matmul_nt", {{"a", a}, {"b", b}}, [=] { return project(num::matmul_nt(a, b), 2); });
  }
  {
    auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    add("add", {{"a", a}, {"b", b}}, [=] { return project(num::add(a, b), 3); });
    add("mul", {{"a", a}, {"b", b}}, [=] { return project(num::mul(a, b), 4); });
  }
  {
    auto x = random_tensor({3, 4}, rng), bias = random_tensor({4}, rng);
    add("add_bias", {{"x", x}, {"bias", bias}}, [=] { return project(num::add_bias(x, bias), 5); });
    add("scale", {{"x", x}}, [=] { return project(num::scale(x, 0.7), 6); });
    add("gelu", {{"x", x}}, [=] { return project(num::gelu(x), 7); });
    add("softmax", {{"x", x}}, [=] { return project(num::softmax(x, -1), 8); });
    add("softmax_axis0", {{"x", x}}, [=] { return project(num::softmax(x, 0), 9); });
    add("reshape", {{"x", x}}, [=] { return project(num::reshape(x, {2, 6}), 10); });
    add("sum", {{"x", x}}, [=] { return num::sum(x); });
    add("mean", {{"x", x}}, [=] { return num::mean(x); });
    add("dropout", {{"x", x}}, [=] { return project(num::dropout(x, 0.3, 99, true), 11); });
  }
  {
    auto x = random_tensor({3, 6}, rng), gain = random_tensor({6}, rng), bias = random_tensor({6}, rng);
    add("layer_norm", {{"x", x}, {"gain", gain}, {"bias", bias}},
        [=] { return project(num::layer_norm(x, gain, bias), 12); });
  }
  {
    auto logits = random_tensor({4, 5}, rng);
    add("cross_entropy", {{"logits", logits}}, [=] {
      const std::int32_t t[] = {0, 4, 2, 2};
      return num::cross_entropy(logits, std::span<const std::int32_t>(t));
    });
  }
  {
    auto table = random_tensor({7, 3}, rng);
    add("embedding", {{"table", table}}, [=] {
      const std::int32_t ids[] = {1, 3, 3, 6};
      return project(num::embedding(table, std::span<const std::int32_t>(ids)), 13);
    });
    add("select_rows", {{"x", table}}, [=] {
      const std::size_t rows[] = {0, 2, 2, 5};
      return project(num::select_rows(table, std::span<const std::size_t>(rows)), 14);
    });
  }
  {
    auto q = random_tensor({6, 4}, rng), k = random_tensor({6, 4}, rng), v = random_tensor({6, 4}, rng);
    add("causal_attention", {{"q", q}, {"k", k}, {"v", v}}, [=] {
      const std::uint8_t mask[] = {1, 1, 1, 1, 1, 0};
      return project(num::causal_attention(q, k, v, 2, 3, 2, std::span<const std::uint8_t>(mask)), 15);
    });
  }
  {
    auto base = random_tensor({6, 4}, rng, false);  // [k x d]
    LoraConfig lc = LoraConfig::with_rank(2);
    lc.lora_dropout = 0.0;
    auto adapter = attach(base, lc, 21);
    for (double& b : adapter.B.data()) b = std::normal_distribution<double>(0.0, 0.5)(rng);
    auto x = random_tensor({3, 6}, rng);
    add("lora_delta", {{"A", adapter.A}, {"B", adapter.B}, {"x", x}},
        [=] { return project(lora_delta(adapter, x, false, 0), 16); });
  }

  const std::size_t limit = opts.coords_per_param;
  {
    auto model = tiny_model(Mode::kClassification, opts.seed);
    const auto a = build_cls_input("cls?", "abc de", 16);
    const auto b = build_cls_input("cls?", "xy", 16);
    add("model/classification", model_inputs(model), [&model, a, b] {
      const ClsInput inputs[] = {a, b};
      const Label labels[] = {Label::kStego, Label::kCover};
      return cls_batch_loss(model, std::span<const ClsInput>(inputs), std::span<const Label>(labels));
    }, limit);
  }
  {
    auto model = tiny_model(Mode::kGeneration, opts.seed + 10);
    const std::vector<std::vector<TokenId>> prompts = {encode("in: ab", true, false), encode("in: xyz!", true, false)};
    const std::vector<std::vector<TokenId>> responses = {encode("no", false, false), encode("yes", false, false)};
    add("model/generation", model_inputs(model), [&model, prompts, responses] {
      return genmode_batch_loss(model, std::span<const std::vector<TokenId>>(prompts),
                                std::span<const std::vector<TokenId>>(responses));
    }, limit);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace lsgc::gradcheck

#include "lsgc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "lsgc/errors.hpp"
#include "lsgc/parallel.hpp"
#include "lsgc/tokenizer.hpp"

namespace lsgc::train {
namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<NamedParam<float>> trainable(Model& model) {
  std::vector<NamedParam<float>> out;
  for (auto& p : model.parameters()) {
    if (p.tensor.requires_grad()) out.push_back(p);
  }
  return out;
}

// Inputs for one mode, built once per run.
struct Prepared {
  std::vector<ClsInput> cls;
  std::vector<std::vector<TokenId>> prompts;
  std::vector<std::vector<TokenId>> responses;
  std::vector<Label> labels;
};

Prepared prepare(const std::vector<data::LabeledExample>& examples, const TrainConfig& cfg) {
  Prepared p;
  const auto max_len = static_cast<std::size_t>(cfg.model.max_seq_len);
  for (const auto& ex : examples) {
    p.labels.push_back(ex.label);
    if (cfg.mode == Mode::kClassification) {
      p.cls.push_back(build_cls_input(cfg.cls_instruction, ex.text, max_len));
    } else {
      p.prompts.push_back(build_prompt(cfg.prompt, ex.text, max_len, cfg.budget));
      p.responses.push_back(response_tokens(ex.label));
    }
  }
  return p;
}

num::Tensor<float> batch_loss(const Model& model, const Prepared& data, std::span<const std::size_t> idx,
                              const TrainConfig& cfg, const ForwardOptions& opts) {
  if (cfg.mode == Mode::kClassification) {
    std::vector<ClsInput> inputs;
    std::vector<Label> labels;
    for (auto i : idx) {
      inputs.push_back(data.cls[i]);
      labels.push_back(data.labels[i]);
    }
    return cls_batch_loss(model, std::span<const ClsInput>(inputs), std::span<const Label>(labels), opts);
  }
  std::vector<std::vector<TokenId>> prompts, responses;
  for (auto i : idx) {
    prompts.push_back(data.prompts[i]);
    responses.push_back(data.responses[i]);
  }
  return genmode_batch_loss(model, std::span<const std::vector<TokenId>>(prompts),
                            std::span<const std::vector<TokenId>>(responses), opts);
}

}  // namespace

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in (0, 1)");
  if (!(eps > 0.0)) throw ConfigError("Adam eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
}

template <typename T>
void adamw_step(std::span<const NamedParam<T>> params, AdamState<T>& state, const AdamConfig& cfg) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), T(0));
      state.v.emplace_back(p.tensor.numel(), T(0));
    }
  }
  if (state.m.size() != params.size()) throw ContractError("optimizer state does not match the parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].tensor.numel()) {
      throw ShapeError("optimizer state for " + params[i].name + " has the wrong size");
    }
    for (T g : params[i].tensor.grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("non-finite gradient in " + params[i].name + " at step " + std::to_string(state.step + 1));
      }
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto tensor = params[i].tensor;
    const auto g = tensor.grad_values();
    auto w = tensor.data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j];
      m[j] = static_cast<T>(cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj);
      v[j] = static_cast<T>(cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj);
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      double wj = w[j];
      wj -= cfg.lr * cfg.weight_decay * wj;
      wj -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      w[j] = static_cast<T>(wj);
    }
  }
}

template <typename T>
double clip_grad_norm(std::span<const NamedParam<T>> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (T g : p.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / (norm + 1e-6);
    for (const auto& p : params) {
      auto t = p.tensor;
      if (!t.has_grad()) continue;
      for (T& g : t.grad_buffer()) g = static_cast<T>(g * s);
    }
  }
  return norm;
}

template void adamw_step(std::span<const NamedParam<float>>, AdamState<float>&, const AdamConfig&);
template void adamw_step(std::span<const NamedParam<double>>, AdamState<double>&, const AdamConfig&);
template double clip_grad_norm(std::span<const NamedParam<float>>, double);
template double clip_grad_norm(std::span<const NamedParam<double>>, double);

void TrainConfig::validate() const {
  model.validate();
  lora.validate(static_cast<std::size_t>(model.d_model), static_cast<std::size_t>(model.d_model));
  adam.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  if (eval_batch < 1) throw ConfigError("eval_batch must be at least 1");
}

Model build_model(const TrainConfig& cfg) {
  cfg.validate();
  Model model(cfg.model, cfg.seed);
  model.attach_lora(cfg.lora, mix(cfg.seed, 1));
  if (cfg.mode == Mode::kClassification) model.attach_classifier_head(mix(cfg.seed, 2));
  return model;
}

double EvalResult::parse_rate() const {
  return predictions.empty() ? 0.0 : 1.0 - static_cast<double>(unparseable) / static_cast<double>(predictions.size());
}

EvalResult evaluate(const Model& model, const std::vector<data::LabeledExample>& examples, const TrainConfig& cfg) {
  EvalResult out;
  out.predictions.assign(examples.size(), Verdict::kUnparseable);
  const auto before = model.forward_count();
  const auto max_len = static_cast<std::size_t>(cfg.model.max_seq_len);
  if (cfg.mode == Mode::kClassification) {
    const std::size_t chunks = (examples.size() + cfg.eval_batch - 1) / cfg.eval_batch;
    parallel_for(chunks, [&](std::size_t c) {
      const std::size_t lo = c * cfg.eval_batch, hi = std::min(examples.size(), lo + cfg.eval_batch);
      std::vector<ClsInput> inputs;
      for (std::size_t i = lo; i < hi; ++i) inputs.push_back(build_cls_input(cfg.cls_instruction, examples[i].text, max_len));
      const auto logits = model.classify(to_batch(inputs));
      const auto d = logits.data();
      for (std::size_t i = lo; i < hi; ++i) {
        const auto pred = prediction_from_logits(d.subspan(2 * (i - lo), 2));
        out.predictions[i] = to_verdict(pred.label);
      }
    });
  } else {
    const TransformerLm lm(model);
    parallel_for(examples.size(), [&](std::size_t i) {
      const auto prompt = build_prompt(cfg.prompt, examples[i].text, max_len, cfg.budget);
      const auto gen = generate(lm, prompt, cfg.budget);
      out.predictions[i] = parse_label(decode(gen.tokens));
    });
  }
  out.forward_passes = model.forward_count() - before;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    out.confusion.add(out.predictions[i], examples[i].label);
    out.unparseable += out.predictions[i] == Verdict::kUnparseable;
  }
  return out;
}

TrainRunStats train(Model& model, const std::vector<data::LabeledExample>& train_set,
                    const std::vector<data::LabeledExample>& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  if (cfg.mode == Mode::kClassification && !model.has_classifier_head()) {
    throw ContractError("classification training needs a classifier head");
  }
  const bool validate = cfg.validate_each_epoch && !val_set.empty();
  const auto data = prepare(train_set, cfg);
  auto params = trainable(model);
  if (params.empty()) throw ContractError("model has no trainable parameters");

  TrainRunStats stats;
  AdamState<float> state;
  std::mt19937_64 rng(mix(cfg.seed, 3));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<float>> best;
  double best_acc = -1.0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    const auto fc0 = model.forward_count();
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      num::Tape<float> tape;
      num::TapeScope<float> scope(tape);
      const ForwardOptions opts{true, mix(cfg.seed, 1000 + stats.steps)};
      auto loss = batch_loss(model, data, idx, cfg, opts);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(stats.steps + 1));
      }
      tape.backward(loss);
      clip_grad_norm<float>(params, cfg.grad_clip);
      adamw_step<float>(params, state, cfg.adam);
      for (auto& p : params) p.tensor.zero_grad();
      loss_sum += lv;
      ++batches;
      ++stats.steps;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    stats.train_forward_passes += model.forward_count() - fc0;
    stats.epoch_seconds.push_back(secs);
    stats.total_seconds += secs;
    stats.epoch_loss.push_back(loss_sum / static_cast<double>(batches));

    if (validate) {
      const auto ev = evaluate(model, val_set, cfg);
      const double acc = metrics::accuracy(ev.confusion);
      stats.val_accuracy.push_back(acc);
      if (acc > best_acc) {
        best_acc = acc;
        stats.best_epoch = epoch;
        best.clear();
        for (const auto& p : params) best.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
      }
    }
  }
  if (!best.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) std::copy(best[i].begin(), best[i].end(), params[i].tensor.data().begin());
  }
  return stats;
}

BenchResult benchmark_modes(const std::vector<data::LabeledExample>& train_set, const TrainConfig& gen_cfg,
                            const TrainConfig& cls_cfg) {
  if (gen_cfg.mode != Mode::kGeneration || cls_cfg.mode != Mode::kClassification) {
    throw ConfigError("benchmark needs one generation-mode and one classification-mode config");
  }
  if (!(gen_cfg.model == cls_cfg.model) || gen_cfg.epochs != cls_cfg.epochs) {
    throw ConfigError("benchmark modes must share model size and epoch count");
  }
  BenchResult r;
  auto gen_cfg_nv = gen_cfg;
  auto cls_cfg_nv = cls_cfg;
  gen_cfg_nv.validate_each_epoch = false;
  cls_cfg_nv.validate_each_epoch = false;
  {
    auto model = build_model(gen_cfg_nv);
    r.gen = train(model, train_set, {}, gen_cfg_nv);
  }
  {
    auto model = build_model(cls_cfg_nv);
    r.cls = train(model, train_set, {}, cls_cfg_nv);
  }
  r.t_gen = r.gen.total_seconds;
  r.t_cls = r.cls.total_seconds;
  r.reduction = metrics::reduction(r.t_gen, r.t_cls);
  return r;
}

}  // namespace lsgc::train

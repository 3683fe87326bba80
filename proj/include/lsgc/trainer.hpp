#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lsgc/clsmode.hpp"
#include "lsgc/datapipe.hpp"
#include "lsgc/genmode.hpp"
#include "lsgc/metrics.hpp"
#include "lsgc/model.hpp"

namespace lsgc::train {

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const;
};

template <typename T>
struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m, v;
};

// Decoupled weight decay, then the bias-corrected Adam update, applied to
// every parameter using its accumulated gradient. Throws NumericError naming
// the parameter when a gradient is not finite.
template <typename T>
void adamw_step(std::span<const NamedParam<T>> params, AdamState<T>& state, const AdamConfig& cfg);

// Scales gradients so their global L2 norm is at most max_norm; returns the
// norm before clipping.
template <typename T>
double clip_grad_norm(std::span<const NamedParam<T>> params, double max_norm);

struct TrainConfig {
  Mode mode = Mode::kClassification;
  ModelConfig model;
  LoraConfig lora;
  AdamConfig adam;
  std::size_t batch_size = 10;
  std::size_t epochs = 5;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  std::string cls_instruction = std::string(kDefaultClsInstruction);
  PromptTemplate prompt = PromptTemplate::default_template();
  GenerationBudget budget;
  std::size_t eval_batch = 32;
  bool validate_each_epoch = true;

  void validate() const;
};

// Fresh base (seeded), LoRA adapters on top and, in classification mode,
// the linear head. Only adapters and head are trainable.
Model build_model(const TrainConfig& cfg);

struct EvalResult {
  metrics::Confusion confusion;
  std::vector<Verdict> predictions;
  std::uint64_t forward_passes = 0;
  std::size_t unparseable = 0;

  double parse_rate() const;
};

// Inference over examples, in parallel across LSGC_THREADS workers.
EvalResult evaluate(const Model& model, const std::vector<data::LabeledExample>& examples, const TrainConfig& cfg);

struct TrainRunStats {
  std::vector<double> epoch_loss;     // mean batch loss per epoch
  std::vector<double> epoch_seconds;  // training region only
  std::vector<double> val_accuracy;   // per epoch when validation is on
  double total_seconds = 0.0;
  std::uint64_t train_forward_passes = 0;  // sequences through the network while training
  std::uint64_t steps = 0;
  std::size_t best_epoch = 0;             // 1-based; 0 when never validated
  std::optional<EvalResult> final_eval;   // filled by callers that evaluate after training
};

// Trains the adapters (and head) of `model` in place. When validation is on,
// the trainable weights from the best validation epoch are restored at the
// end; ties keep the earlier epoch.
TrainRunStats train(Model& model, const std::vector<data::LabeledExample>& train_set,
                    const std::vector<data::LabeledExample>& val_set, const TrainConfig& cfg);

struct BenchResult {
  double t_gen = 0.0;
  double t_cls = 0.0;
  double reduction = 0.0;
  TrainRunStats gen, cls;
};

// Trains both modes on the same data, model size and epoch count, timing the
// training region only.
BenchResult benchmark_modes(const std::vector<data::LabeledExample>& train_set, const TrainConfig& gen_cfg,
                            const TrainConfig& cls_cfg);

}  // namespace lsgc::train

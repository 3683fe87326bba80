#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lsgc/lora.hpp"
#include "lsgc/tensor.hpp"
#include "lsgc/tokenizer.hpp"

namespace lsgc {

struct ModelConfig {
  int n_layers = 4;
  int n_heads = 4;
  int d_model = 128;
  int d_ff = 512;
  int vocab_size = static_cast<int>(vocab::kSize);
  int max_seq_len = 512;
  double dropout = 0.0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class Mode { kGeneration, kClassification };
std::string to_string(Mode mode);
Mode mode_from_string(const std::string& name);

// Right-padded token sequences. mask[i] == 1 marks a real token.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> mask;

  static TokenBatch pad(std::span<const std::vector<TokenId>> sequences);
  static TokenBatch single(std::span<const TokenId> tokens, std::span<const std::uint8_t> pad_mask = {});
};

// Index of the last real token of a right-padded mask: count(true) - 1.
// Throws ContractError for an all-pad or non-contiguous mask.
std::size_t pool_index(std::span<const std::uint8_t> pad_mask);

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

template <typename T>
struct NamedParam {
  std::string name;
  num::Tensor<T> tensor;
};

// Activations E^0..E^L of one forward pass; E^0 is the embedding sum and the
// final layer norm is applied on top of E^L for both heads.
template <typename T>
struct HiddenStates {
  std::vector<num::Tensor<T>> layers;
  num::Tensor<T> top;
};

// Pre-norm decoder-only transformer with a causal LM head and an optional
// two-way classifier head on the last real token.
template <typename T>
class Transformer {
 public:
  struct Linear {
    num::Tensor<T> weight;  // [in x out]
    num::Tensor<T> bias;    // [out]
    std::optional<LoraAdapter<T>> lora;
  };

  struct Block {
    num::Tensor<T> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    Linear q, k, v, o, ff_up, ff_down;

    Linear& linear(LoraTarget target);
    const Linear& linear(LoraTarget target) const;
  };

  struct ClassifierHead {
    num::Tensor<T> weight;  // [d_model x 2]
    num::Tensor<T> bias;    // [2]
  };

  Transformer(ModelConfig cfg, std::uint64_t seed);

  Transformer(const Transformer&) = delete;
  Transformer& operator=(const Transformer&) = delete;
  Transformer(Transformer&& other) noexcept;
  Transformer& operator=(Transformer&&) = delete;

  const ModelConfig& config() const { return cfg_; }

  void attach_lora(const LoraConfig& cfg, std::uint64_t seed);
  bool has_lora() const { return lora_cfg_.has_value(); }
  const std::optional<LoraConfig>& lora_config() const { return lora_cfg_; }
  // Folds every adapter into its base weight and drops the adapters.
  void merge_lora();
  bool merged() const { return merged_; }

  // Gaussian(0, 0.02) weight, zero bias.
  void attach_classifier_head(std::uint64_t seed);
  bool has_classifier_head() const { return head_.has_value(); }
  const ClassifierHead& classifier_head() const { return *head_; }
  ClassifierHead& classifier_head() { return *head_; }

  std::vector<NamedParam<T>> base_parameters();
  std::vector<NamedParam<T>> adapter_parameters();
  std::vector<NamedParam<T>> head_parameters();
  // Everything, in a stable order: base, adapters, head.
  std::vector<NamedParam<T>> parameters();
  // Adapters plus head, or every parameter when no adapter is attached and
  // nothing was frozen.
  std::vector<num::Tensor<T>> trainable_parameters();

  // Marks every base parameter frozen (requires_grad = false) or trainable.
  void set_base_trainable(bool trainable);

  Block& block(std::size_t i) { return blocks_.at(i); }
  const Block& block(std::size_t i) const { return blocks_.at(i); }

  HiddenStates<T> hidden_states(const TokenBatch& batch, const ForwardOptions& opts = {}) const;
  // One transformer layer applied to E^{l-1}; exposed for the layer-stacking law.
  num::Tensor<T> block_forward(std::size_t layer, const num::Tensor<T>& x, const TokenBatch& batch,
                               const ForwardOptions& opts = {}) const;

  // [seq_len x vocab] next-token logits.
  num::Tensor<T> forward_causal_lm(std::span<const TokenId> tokens, const ForwardOptions& opts = {}) const;
  // LM logits for the selected flattened rows of a batch: [rows x vocab].
  num::Tensor<T> lm_logits(const TokenBatch& batch, std::span<const std::size_t> rows,
                           const ForwardOptions& opts = {}) const;

  // [2] logits of the classifier head at the last real token.
  num::Tensor<T> forward_sequence_classification(std::span<const TokenId> tokens,
                                                 std::span<const std::uint8_t> pad_mask,
                                                 const ForwardOptions& opts = {}) const;
  // [batch x 2]
  num::Tensor<T> classify(const TokenBatch& batch, const ForwardOptions& opts = {}) const;

  // Sequences pushed through the network since construction (one per row of a batch).
  std::uint64_t forward_count() const { return forward_count_.load(std::memory_order_relaxed); }
  void reset_forward_count() { forward_count_.store(0, std::memory_order_relaxed); }

  // Restores a parameter by name, used by checkpoint loading.
  num::Tensor<T>* find_parameter(const std::string& name);
  void set_merged_flag(bool merged) { merged_ = merged; }
  void set_lora_config(std::optional<LoraConfig> cfg) { lora_cfg_ = std::move(cfg); }

 private:
  num::Tensor<T> linear_forward(const Linear& lin, const num::Tensor<T>& x, const ForwardOptions& opts,
                                std::uint64_t site) const;
  num::Tensor<T> embed(const TokenBatch& batch) const;
  void check_batch(const TokenBatch& batch) const;

  ModelConfig cfg_;
  num::Tensor<T> tok_emb_;  // [vocab x d]
  num::Tensor<T> pos_emb_;  // [max_seq x d]
  std::vector<Block> blocks_;
  num::Tensor<T> lnf_gain_, lnf_bias_;
  Linear lm_head_;  // [d x vocab]
  std::optional<ClassifierHead> head_;
  std::optional<LoraConfig> lora_cfg_;
  bool merged_ = false;
  mutable std::atomic<std::uint64_t> forward_count_{0};
};

using Model = Transformer<float>;

// Sum over adapted matrices of d*r + r*k, plus classifier head parameters
// in classification mode.
std::size_t trainable_param_count(const ModelConfig& model, const LoraConfig& lora, Mode mode);

template <typename T>
std::size_t trainable_param_count(const Transformer<T>& model, Mode mode);

extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace lsgc

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsgc/tensor.hpp"

namespace lsgc {

// Adaptable projections inside a transformer block.
enum class LoraTarget { kQuery, kKey, kValue, kOutput, kFfUp, kFfDown };

std::string to_string(LoraTarget target);
LoraTarget lora_target_from_string(const std::string& name);

struct LoraConfig {
  int r = 64;
  double lora_alpha = 128.0;
  double lora_dropout = 0.5;
  std::vector<LoraTarget> targets = {LoraTarget::kQuery, LoraTarget::kValue};

  // alpha = 2r, the usual pairing.
  static LoraConfig with_rank(int r) {
    LoraConfig cfg;
    cfg.r = r;
    cfg.lora_alpha = 2.0 * r;
    return cfg;
  }

  double scale() const { return lora_alpha / static_cast<double>(r); }

  // Throws ConfigError unless 1 <= r <= min(d, k) / 2, alpha > 0 and dropout in [0, 1).
  void validate(std::size_t d, std::size_t k) const;
};

// Low-rank delta beside a frozen base weight. In the math, W0 is [d x k]
// (d outputs, k inputs), B is [d x r] and A is [r x k]. The base tensor itself
// is stored input-major, [k x d], so a row vector x maps to x . W0^T.
template <typename T>
struct LoraAdapter {
  num::Tensor<T> base;  // frozen, never written by training
  num::Tensor<T> A;     // [r x k], Gaussian with variance 1/r
  num::Tensor<T> B;     // [d x r], zeros
  int r = 0;
  double alpha = 0.0;
  double dropout = 0.0;

  double scale() const { return alpha / static_cast<double>(r); }
  std::size_t d() const { return B.dim(0); }
  std::size_t k() const { return A.dim(1); }
  std::size_t param_count() const { return A.numel() + B.numel(); }
};

template <typename T>
LoraAdapter<T> attach(const num::Tensor<T>& base, const LoraConfig& cfg, std::uint64_t seed);

// W0 + (alpha / r) . B A, returned in the base tensor's [k x d] layout.
// Dropout plays no part in the merged form.
template <typename T>
num::Tensor<T> merge(const LoraAdapter<T>& adapter);

// Adapter branch for a batch of rows: scale . dropout(x) A^T B^T.
template <typename T>
num::Tensor<T> lora_delta(const LoraAdapter<T>& adapter, const num::Tensor<T>& x, bool training,
                          std::uint64_t dropout_seed);

}  // namespace lsgc

#include "lsgc/lora.hpp"

#include <cmath>
#include <random>

#include "lsgc/ops.hpp"

namespace lsgc {

std::string to_string(LoraTarget target) {
  switch (target) {
    case LoraTarget::kQuery: return "q";
    case LoraTarget::kKey: return "k";
    case LoraTarget::kValue: return "v";
    case LoraTarget::kOutput: return "o";
    case LoraTarget::kFfUp: return "ff_up";
    case LoraTarget::kFfDown: return "ff_down";
  }
  return "?";
}

LoraTarget lora_target_from_string(const std::string& name) {
  for (auto t : {LoraTarget::kQuery, LoraTarget::kKey, LoraTarget::kValue, LoraTarget::kOutput, LoraTarget::kFfUp,
                 LoraTarget::kFfDown}) {
    if (to_string(t) == name) return t;
  }
  throw ConfigError("unknown LoRA target '" + name + "' (expected q, k, v, o, ff_up or ff_down)");
}

void LoraConfig::validate(std::size_t d, std::size_t k) const {
  if (r < 1) throw ConfigError("LoRA rank r must be at least 1, got " + std::to_string(r));
  const std::size_t limit = std::min(d, k) / 2;
  if (static_cast<std::size_t>(r) > limit) {
    throw ConfigError("LoRA rank r=" + std::to_string(r) + " exceeds min(d, k)/2 = " + std::to_string(limit) +
                      " for a " + std::to_string(d) + "x" + std::to_string(k) + " matrix");
  }
  if (!(lora_alpha > 0.0) || !std::isfinite(scale())) throw ConfigError("lora_alpha must be positive and finite");
  if (!(lora_dropout >= 0.0 && lora_dropout < 1.0)) throw ConfigError("lora_dropout must lie in [0, 1)");
}

template <typename T>
LoraAdapter<T> attach(const num::Tensor<T>& base, const LoraConfig& cfg, std::uint64_t seed) {
  if (base.rank() != 2) throw ShapeError("LoRA base must be a matrix, got " + num::shape_string(base.shape()));
  const std::size_t k = base.dim(0);
  const std::size_t d = base.dim(1);
  cfg.validate(d, k);
  const auto r = static_cast<std::size_t>(cfg.r);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(r)));
  std::vector<T> a(r * k);
  for (T& v : a) v = static_cast<T>(gauss(rng));

  LoraAdapter<T> adapter;
  adapter.base = base;
  adapter.A = num::Tensor<T>::from({r, k}, std::move(a), true);
  adapter.B = num::Tensor<T>::zeros({d, r}, true);
  adapter.r = cfg.r;
  adapter.alpha = cfg.lora_alpha;
  adapter.dropout = cfg.lora_dropout;
  return adapter;
}

template <typename T>
num::Tensor<T> merge(const LoraAdapter<T>& adapter) {
  const std::size_t k = adapter.k(), d = adapter.d(), r = static_cast<std::size_t>(adapter.r);
  auto merged = num::Tensor<T>::from(adapter.base.shape(),
                                     std::vector<T>(adapter.base.data().begin(), adapter.base.data().end()));
  auto out = merged.data();
  const auto a = adapter.A.data();
  const auto b = adapter.B.data();
  const T s = static_cast<T>(adapter.scale());
  // merged[i][j] (input i, output j) += s * sum_t B[j][t] * A[t][i]
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      T acc = 0;
      for (std::size_t t = 0; t < r; ++t) acc += b[j * r + t] * a[t * k + i];
      out[i * d + j] += s * acc;
    }
  }
  return merged;
}

template <typename T>
num::Tensor<T> lora_delta(const LoraAdapter<T>& adapter, const num::Tensor<T>& x, bool training,
                          std::uint64_t dropout_seed) {
  auto u = num::dropout(x, adapter.dropout, dropout_seed, training);
  auto low = num::matmul_nt(u, adapter.A);
  return num::scale(num::matmul_nt(low, adapter.B), static_cast<T>(adapter.scale()));
}

template LoraAdapter<float> attach(const num::Tensor<float>&, const LoraConfig&, std::uint64_t);
template LoraAdapter<double> attach(const num::Tensor<double>&, const LoraConfig&, std::uint64_t);
template num::Tensor<float> merge(const LoraAdapter<float>&);
template num::Tensor<double> merge(const LoraAdapter<double>&);
template num::Tensor<float> lora_delta(const LoraAdapter<float>&, const num::Tensor<float>&, bool, std::uint64_t);
template num::Tensor<double> lora_delta(const LoraAdapter<double>&, const num::Tensor<double>&, bool,
                                        std::uint64_t);

}  // namespace lsgc

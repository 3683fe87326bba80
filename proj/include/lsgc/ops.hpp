#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lsgc/tensor.hpp"

namespace lsgc::num {

// Differentiable ops. Each records an adjoint on the active tape when any input
// requires grad. Explicitly instantiated for float and double.

// [m x k] . [k x n] -> [m x n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// [m x k] . [n x k]^T -> [m x n]
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

// Elementwise product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

// x[m x n] + bias[n] broadcast over rows.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

// Normalizes each row of x to zero mean / unit variance, then applies gain and bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5));

// Softmax along `axis` (negative counts from the end). Max-subtracted.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1);

// Mean over rows of -log softmax(row)[target]. A 1-D logits tensor is one row.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets);

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::int32_t target) {
  const std::int32_t t[1] = {target};
  return cross_entropy(logits, std::span<const std::int32_t>(t, 1));
}

// Rows of table[V x d] gathered by ids -> [len x d].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids);

// Rows of x gathered by index -> [len x n].
template <typename T>
Tensor<T> select_rows(const Tensor<T>& x, std::span<const std::size_t> rows);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

// Inverted dropout with a mask drawn from `seed`. Identity when !training or p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, std::uint64_t seed, bool training);

// Multi-head causal self-attention over `batch` sequences of `seq` rows each.
// q, k, v: [batch*seq x d_model], heads split along columns. key_mask (batch*seq,
// may be empty) marks real tokens; padded keys receive no attention weight.
template <typename T>
Tensor<T> causal_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t batch,
                           std::size_t seq, std::size_t heads, std::span<const std::uint8_t> key_mask = {});

}  // namespace lsgc::num

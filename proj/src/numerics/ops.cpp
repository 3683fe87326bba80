#include "lsgc/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace lsgc::num {
namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<Mat<T>>;
template <typename T>
using MapC = Eigen::Map<const Mat<T>>;
template <typename T>
using StridedM = Eigen::Map<Mat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using StridedC = Eigen::Map<const Mat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
bool tracking(std::initializer_list<const Tensor<T>*> inputs) {
  if (Tape<T>::active() == nullptr) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
void record(std::string_view op, const Tensor<T>& out, typename Tape<T>::Adjoint adjoint) {
  Tape<T>::active()->record(op, out, std::move(adjoint));
}

template <typename T>
MapC<T> as_matrix(const Tensor<T>& t) {
  return MapC<T>(t.data().data(), t.rows(), t.cols());
}

template <typename T>
MapM<T> grad_matrix(const Tensor<T>& t) {
  return MapM<T>(t.grad_buffer().data(), t.rows(), t.cols());
}

template <typename T>
MapC<T> out_grad_matrix(const Tensor<T>& t) {
  return MapC<T>(t.grad().data(), t.rows(), t.cols());
}

template <typename T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* op) {
  for (T v : t.data()) {
    if (std::isnan(v)) throw NumericError(std::string(op) + ": NaN input");
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions differ between " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const bool track = tracking<T>({&a, &b});
  auto out = Tensor<T>::zeros({a.dim(0), b.dim(1)}, track);
  MapM<T>(out.data().data(), a.dim(0), b.dim(1)).noalias() = as_matrix(a) * as_matrix(b);
  if (track) {
    record<T>("matmul", out, [a, b, out]() mutable {
      const auto g = out_grad_matrix(out);
      if (a.requires_grad()) grad_matrix(a).noalias() += g * as_matrix(b).transpose();
      if (b.requires_grad()) grad_matrix(b).noalias() += as_matrix(a).transpose() * g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.dim(1) != b.dim(1)) {
    throw ShapeError("matmul_nt: inner dimensions differ between " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()) + "^T");
  }
  const bool track = tracking<T>({&a, &b});
  auto out = Tensor<T>::zeros({a.dim(0), b.dim(0)}, track);
  MapM<T>(out.data().data(), a.dim(0), b.dim(0)).noalias() = as_matrix(a) * as_matrix(b).transpose();
  if (track) {
    record<T>("matmul_nt", out, [a, b, out]() mutable {
      const auto g = out_grad_matrix(out);
      if (a.requires_grad()) grad_matrix(a).noalias() += g * as_matrix(b);
      if (b.requires_grad()) grad_matrix(b).noalias() += g.transpose() * as_matrix(a);
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) + " differ");
  }
  const bool track = tracking<T>({&a, &b});
  auto out = Tensor<T>::zeros(a.shape(), track);
  auto o = out.data();
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (track) {
    record<T>("add", out, [a, b, out]() mutable {
      const auto g = out.grad();
      for (const Tensor<T>* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto dst = t->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) + " differ");
  }
  const bool track = tracking<T>({&a, &b});
  auto out = Tensor<T>::zeros(a.shape(), track);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * b[i];
  if (track) {
    record<T>("mul", out, [a, b, out]() mutable {
      const auto g = out.grad();
      if (a.requires_grad()) {
        auto da = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b[i];
      }
      if (b.requires_grad()) {
        auto db = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (bias.rank() != 1 || bias.dim(0) != x.cols()) {
    throw ShapeError("add_bias: bias " + shape_string(bias.shape()) + " does not fit " + shape_string(x.shape()));
  }
  const bool track = tracking<T>({&x, &bias});
  auto out = Tensor<T>::zeros(x.shape(), track);
  const std::size_t m = x.rows(), n = x.cols();
  auto o = out.data();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) o[r * n + c] = x[r * n + c] + bias[c];
  }
  if (track) {
    record<T>("add_bias", out, [x, bias, out, m, n]() mutable {
      const auto g = out.grad();
      if (x.requires_grad()) {
        auto dx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto db = bias.grad_buffer();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < n; ++c) db[c] += g[r * n + c];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  const bool track = tracking<T>({&x});
  auto out = Tensor<T>::zeros(x.shape(), track);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  if (track) {
    record<T>("scale", out, [x, out, factor]() mutable {
      const auto g = out.grad();
      auto dx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * factor;
    });
  }
  return out;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const bool track = tracking<T>({&x});
  auto out = Tensor<T>::zeros(x.shape(), track);
  auto o = out.data();
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * inv_sqrt2));
  if (track) {
    record<T>("gelu", out, [x, out, inv_sqrt2]() mutable {
      const auto g = out.grad();
      auto dx = x.grad_buffer();
      const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T v = x[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
        dx[i] += g[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.numel() != n || bias.numel() != n) {
    throw ShapeError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " + shape_string(bias.shape()) +
                     " do not fit " + shape_string(x.shape()));
  }
  if (!(eps > T(0))) throw ContractError("layer_norm: eps must be positive");
  const bool track = tracking<T>({&x, &gain, &bias});
  auto out = Tensor<T>::zeros(x.shape(), track);
  std::vector<T> xhat(x.numel());
  std::vector<T> rstd(m);
  auto o = out.data();
  for (std::size_t r = 0; r < m; ++r) {
    const T* row = x.data().data() + r * n;
    T mu = 0;
    for (std::size_t c = 0; c < n; ++c) mu += row[c];
    mu /= T(n);
    T var = 0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= T(n);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat[r * n + c] = (row[c] - mu) * rstd[r];
      o[r * n + c] = xhat[r * n + c] * gain[c] + bias[c];
    }
  }
  if (track) {
    record<T>("layer_norm", out,
              [x, gain, bias, out, m, n, xhat = std::move(xhat), rstd = std::move(rstd)]() mutable {
                const auto g = out.grad();
                if (gain.requires_grad()) {
                  auto dg = gain.grad_buffer();
                  for (std::size_t i = 0; i < g.size(); ++i) dg[i % n] += g[i] * xhat[i];
                }
                if (bias.requires_grad()) {
                  auto db = bias.grad_buffer();
                  for (std::size_t i = 0; i < g.size(); ++i) db[i % n] += g[i];
                }
                if (!x.requires_grad()) return;
                auto dx = x.grad_buffer();
                std::vector<T> dxhat(n);
                for (std::size_t r = 0; r < m; ++r) {
                  T mean_d = 0, mean_dx = 0;
                  for (std::size_t c = 0; c < n; ++c) {
                    dxhat[c] = g[r * n + c] * gain[c];
                    mean_d += dxhat[c];
                    mean_dx += dxhat[c] * xhat[r * n + c];
                  }
                  mean_d /= T(n);
                  mean_dx /= T(n);
                  for (std::size_t c = 0; c < n; ++c) {
                    dx[r * n + c] += rstd[r] * (dxhat[c] - mean_d - xhat[r * n + c] * mean_dx);
                  }
                }
              });
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int rank = static_cast<int>(x.rank());
  const int ax = axis < 0 ? axis + rank : axis;
  if (ax < 0 || ax >= rank) throw ShapeError("softmax: axis out of range for " + shape_string(x.shape()));
  require_finite(x, "softmax");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= x.dim(static_cast<std::size_t>(i));
  for (int i = ax + 1; i < rank; ++i) inner *= x.dim(static_cast<std::size_t>(i));
  const std::size_t len = x.dim(static_cast<std::size_t>(ax));

  const bool track = tracking<T>({&x});
  auto out = Tensor<T>::zeros(x.shape(), track);
  auto o = out.data();
  for (std::size_t a = 0; a < outer; ++a) {
    for (std::size_t b = 0; b < inner; ++b) {
      const std::size_t base = a * len * inner + b;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, x[base + i * inner]);
      T total = 0;
      for (std::size_t i = 0; i < len; ++i) {
        o[base + i * inner] = std::exp(x[base + i * inner] - mx);
        total += o[base + i * inner];
      }
      for (std::size_t i = 0; i < len; ++i) o[base + i * inner] /= total;
    }
  }
  if (track) {
    record<T>("softmax", out, [x, out, outer, inner, len]() mutable {
      const auto g = out.grad();
      const auto y = out.data();
      auto dx = x.grad_buffer();
      for (std::size_t a = 0; a < outer; ++a) {
        for (std::size_t b = 0; b < inner; ++b) {
          const std::size_t base = a * len * inner + b;
          T dot = 0;
          for (std::size_t i = 0; i < len; ++i) dot += g[base + i * inner] * y[base + i * inner];
          for (std::size_t i = 0; i < len; ++i) {
            dx[base + i * inner] += y[base + i * inner] * (g[base + i * inner] - dot);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets) {
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_string(logits.shape()));
  }
  for (std::int32_t t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= n) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0, " + std::to_string(n) + ")");
    }
  }
  require_finite(logits, "cross_entropy");
  const bool track = tracking<T>({&logits});
  std::vector<T> probs(logits.numel());
  T loss = 0;
  for (std::size_t r = 0; r < m; ++r) {
    const T* row = logits.data().data() + r * n;
    const T mx = *std::max_element(row, row + n);
    T total = 0;
    for (std::size_t c = 0; c < n; ++c) {
      probs[r * n + c] = std::exp(row[c] - mx);
      total += probs[r * n + c];
    }
    for (std::size_t c = 0; c < n; ++c) probs[r * n + c] /= total;
    loss += std::log(total) + mx - row[targets[r]];
  }
  auto out = Tensor<T>::scalar(loss / T(m), track);
  if (track) {
    std::vector<std::int32_t> tg(targets.begin(), targets.end());
    record<T>("cross_entropy", out, [logits, out, m, n, probs = std::move(probs), tg = std::move(tg)]() mutable {
      const T g = out.grad()[0] / T(m);
      auto dx = logits.grad_buffer();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) dx[r * n + c] += g * probs[r * n + c];
        dx[r * n + static_cast<std::size_t>(tg[r])] -= g;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids) {
  require_matrix(table, "embedding");
  if (ids.empty()) throw ShapeError("embedding: empty id sequence");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("embedding: id " + std::to_string(id) + " outside table of " + std::to_string(vocab) + " rows");
    }
  }
  const bool track = tracking<T>({&table});
  auto out = Tensor<T>::zeros({ids.size(), d}, track);
  auto o = out.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(table.data().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(ids[i]) * d), d,
                o.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  if (track) {
    std::vector<std::int32_t> idv(ids.begin(), ids.end());
    record<T>("embedding", out, [table, out, d, idv = std::move(idv)]() mutable {
      const auto g = out.grad();
      auto dt = table.grad_buffer();
      for (std::size_t i = 0; i < idv.size(); ++i) {
        const std::size_t row = static_cast<std::size_t>(idv[i]) * d;
        for (std::size_t c = 0; c < d; ++c) dt[row + c] += g[i * d + c];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> select_rows(const Tensor<T>& x, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ShapeError("select_rows: no rows requested");
  const std::size_t m = x.rows(), n = x.cols();
  for (std::size_t r : rows) {
    if (r >= m) throw IndexError("select_rows: row " + std::to_string(r) + " outside " + shape_string(x.shape()));
  }
  const bool track = tracking<T>({&x});
  auto out = Tensor<T>::zeros({rows.size(), n}, track);
  auto o = out.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * n), n,
                o.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  if (track) {
    std::vector<std::size_t> rv(rows.begin(), rows.end());
    record<T>("select_rows", out, [x, out, n, rv = std::move(rv)]() mutable {
      const auto g = out.grad();
      auto dx = x.grad_buffer();
      for (std::size_t i = 0; i < rv.size(); ++i) {
        for (std::size_t c = 0; c < n; ++c) dx[rv[i] * n + c] += g[i * n + c];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  const bool track = tracking<T>({&x});
  std::vector<T> values(x.data().begin(), x.data().end());
  auto out = Tensor<T>::from(std::move(shape), std::move(values), track);
  if (track) {
    record<T>("reshape", out, [x, out]() mutable {
      const auto g = out.grad();
      auto dx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  const bool track = tracking<T>({&x});
  T total = 0;
  for (T v : x.data()) total += v;
  auto out = Tensor<T>::scalar(total, track);
  if (track) {
    record<T>("sum", out, [x, out]() mutable {
      const T g = out.grad()[0];
      for (T& d : x.grad_buffer()) d += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, std::uint64_t seed, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw ContractError("dropout: probability must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - p);
  const T kept_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (T& m : mask) m = keep(rng) ? kept_scale : T(0);
  const bool track = tracking<T>({&x});
  auto out = Tensor<T>::zeros(x.shape(), track);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * mask[i];
  if (track) {
    record<T>("dropout", out, [x, out, mask = std::move(mask)]() mutable {
      const auto g = out.grad();
      auto dx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * mask[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> causal_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t batch,
                           std::size_t seq, std::size_t heads, std::span<const std::uint8_t> key_mask) {
  require_matrix(q, "causal_attention");
  if (k.shape() != q.shape() || v.shape() != q.shape()) {
    throw ShapeError("causal_attention: q/k/v shapes differ: " + shape_string(q.shape()) + ", " +
                     shape_string(k.shape()) + ", " + shape_string(v.shape()));
  }
  const std::size_t d = q.dim(1);
  if (q.dim(0) != batch * seq) {
    throw ShapeError("causal_attention: " + shape_string(q.shape()) + " is not " + std::to_string(batch) + " x " +
                     std::to_string(seq) + " rows");
  }
  if (heads == 0 || d % heads != 0) throw ShapeError("causal_attention: d_model not divisible by head count");
  if (!key_mask.empty() && key_mask.size() != batch * seq) {
    throw ShapeError("causal_attention: key mask length does not match sequence rows");
  }
  const std::size_t dh = d / heads;
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(dh));
  const bool track = tracking<T>({&q, &k, &v});
  auto out = Tensor<T>::zeros(q.shape(), track);
  std::vector<T> probs(batch * heads * seq * seq, T(0));
  Mat<T> scores(seq, seq);

  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t row0 = b * seq;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = row0 * d + h * dh;
      StridedC<T> qh(q.data().data() + off, seq, dh, Eigen::OuterStride<>(d));
      StridedC<T> kh(k.data().data() + off, seq, dh, Eigen::OuterStride<>(d));
      StridedC<T> vh(v.data().data() + off, seq, dh, Eigen::OuterStride<>(d));
      scores.noalias() = (qh * kh.transpose()) * inv_scale;
      MapM<T> p(probs.data() + (b * heads + h) * seq * seq, seq, seq);
      for (std::size_t i = 0; i < seq; ++i) {
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
          if (key_mask.empty() || key_mask[row0 + j]) mx = std::max(mx, scores(i, j));
        }
        if (mx == -std::numeric_limits<T>::infinity()) continue;
        T total = 0;
        for (std::size_t j = 0; j <= i; ++j) {
          if (key_mask.empty() || key_mask[row0 + j]) {
            p(i, j) = std::exp(scores(i, j) - mx);
            total += p(i, j);
          }
        }
        for (std::size_t j = 0; j <= i; ++j) p(i, j) /= total;
      }
      StridedM<T> oh(out.data().data() + off, seq, dh, Eigen::OuterStride<>(d));
      oh.noalias() = p * vh;
    }
  }

  if (track) {
    record<T>("causal_attention", out,
              [q, k, v, out, batch, seq, heads, d, dh, inv_scale, probs = std::move(probs)]() mutable {
                const T* g = out.grad().data();
                Mat<T> dp(seq, seq), ds(seq, seq);
                for (std::size_t b = 0; b < batch; ++b) {
                  for (std::size_t h = 0; h < heads; ++h) {
                    const std::size_t off = b * seq * d + h * dh;
                    MapC<T> p(probs.data() + (b * heads + h) * seq * seq, seq, seq);
                    StridedC<T> go(g + off, seq, dh, Eigen::OuterStride<>(d));
                    StridedC<T> qh(q.data().data() + off, seq, dh, Eigen::OuterStride<>(d));
                    StridedC<T> kh(k.data().data() + off, seq, dh, Eigen::OuterStride<>(d));
                    StridedC<T> vh(v.data().data() + off, seq, dh, Eigen::OuterStride<>(d));
                    if (v.requires_grad()) {
                      StridedM<T> dv(v.grad_buffer().data() + off, seq, dh, Eigen::OuterStride<>(d));
                      dv.noalias() += p.transpose() * go;
                    }
                    if (!q.requires_grad() && !k.requires_grad()) continue;
                    dp.noalias() = go * vh.transpose();
                    for (std::size_t i = 0; i < seq; ++i) {
                      T dot = 0;
                      for (std::size_t j = 0; j <= i; ++j) dot += dp(i, j) * p(i, j);
                      for (std::size_t j = 0; j < seq; ++j) ds(i, j) = j <= i ? p(i, j) * (dp(i, j) - dot) : T(0);
                    }
                    ds *= inv_scale;
                    if (q.requires_grad()) {
                      StridedM<T> dq(q.grad_buffer().data() + off, seq, dh, Eigen::OuterStride<>(d));
                      dq.noalias() += ds * kh;
                    }
                    if (k.requires_grad()) {
                      StridedM<T> dk(k.grad_buffer().data() + off, seq, dh, Eigen::OuterStride<>(d));
                      dk.noalias() += ds.transpose() * qh;
                    }
                  }
                }
              });
  }
  return out;
}

#define LSGC_INSTANTIATE_OPS(T)                                                                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                               \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                               \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> scale(const Tensor<T>&, T);                                                            \
  template Tensor<T> gelu(const Tensor<T>&);                                                                \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                   \
  template Tensor<T> softmax(const Tensor<T>&, int);                                                        \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::int32_t>);                        \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const std::int32_t>);                            \
  template Tensor<T> select_rows(const Tensor<T>&, std::span<const std::size_t>);                           \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                      \
  template Tensor<T> sum(const Tensor<T>&);                                                                 \
  template Tensor<T> mean(const Tensor<T>&);                                                                \
  template Tensor<T> dropout(const Tensor<T>&, double, std::uint64_t, bool);                                \
  template Tensor<T> causal_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,    \
                                      std::size_t, std::size_t, std::span<const std::uint8_t>);

LSGC_INSTANTIATE_OPS(float)
LSGC_INSTANTIATE_OPS(double)

#undef LSGC_INSTANTIATE_OPS

}  // namespace lsgc::num

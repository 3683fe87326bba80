#include "lsgc/model.hpp"

#include <cmath>
#include <random>

#include "lsgc/ops.hpp"

namespace lsgc {

void ModelConfig::validate() const {
  if (n_layers < 1) throw ConfigError("n_layers must be at least 1");
  if (n_heads < 1) throw ConfigError("n_heads must be at least 1");
  if (d_model < 1 || d_model % n_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be a positive multiple of n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (d_ff < 1) throw ConfigError("d_ff must be positive");
  if (vocab_size != static_cast<int>(vocab::kSize)) {
    throw ConfigError("vocab_size must be " + std::to_string(vocab::kSize));
  }
  if (max_seq_len < 1) throw ConfigError("max_seq_len must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

std::string to_string(Mode mode) { return mode == Mode::kGeneration ? "generation" : "classification"; }

Mode mode_from_string(const std::string& name) {
  if (name == "gen" || name == "generation") return Mode::kGeneration;
  if (name == "cls" || name == "classification") return Mode::kClassification;
  throw ConfigError("unknown mode '" + name + "' (expected gen or cls)");
}

TokenBatch TokenBatch::pad(std::span<const std::vector<TokenId>> sequences) {
  if (sequences.empty()) throw ContractError("cannot build a batch from zero sequences");
  TokenBatch out;
  out.batch = sequences.size();
  for (const auto& s : sequences) out.seq = std::max(out.seq, s.size());
  if (out.seq == 0) throw ContractError("cannot build a batch of empty sequences");
  out.ids.assign(out.batch * out.seq, vocab::kPad);
  out.mask.assign(out.batch * out.seq, 0);
  for (std::size_t b = 0; b < out.batch; ++b) {
    for (std::size_t t = 0; t < sequences[b].size(); ++t) {
      out.ids[b * out.seq + t] = sequences[b][t];
      out.mask[b * out.seq + t] = 1;
    }
  }
  return out;
}

TokenBatch TokenBatch::single(std::span<const TokenId> tokens, std::span<const std::uint8_t> pad_mask) {
  TokenBatch out;
  out.batch = 1;
  out.seq = tokens.size();
  out.ids.assign(tokens.begin(), tokens.end());
  if (pad_mask.empty()) {
    out.mask.assign(tokens.size(), 1);
  } else {
    if (pad_mask.size() != tokens.size()) throw ContractError("pad mask length differs from token count");
    out.mask.assign(pad_mask.begin(), pad_mask.end());
  }
  return out;
}

std::size_t pool_index(std::span<const std::uint8_t> pad_mask) {
  std::size_t real = 0;
  while (real < pad_mask.size() && pad_mask[real]) ++real;
  for (std::size_t i = real; i < pad_mask.size(); ++i) {
    if (pad_mask[i]) throw ContractError("pad mask must be right-padded (real tokens first)");
  }
  if (real == 0) throw ContractError("pad mask marks no real token");
  return real - 1;
}

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename T>
num::Tensor<T> gaussian(num::Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> values(num::shape_numel(shape));
  for (T& v : values) v = static_cast<T>(dist(rng));
  return num::Tensor<T>::from(std::move(shape), std::move(values));
}

template <typename T>
typename Transformer<T>::Linear make_linear(std::size_t in, std::size_t out, double stddev, std::mt19937_64& rng) {
  typename Transformer<T>::Linear lin;
  lin.weight = gaussian<T>({in, out}, stddev, rng);
  lin.bias = num::Tensor<T>::zeros({out});
  return lin;
}

}  // namespace

template <typename T>
typename Transformer<T>::Linear& Transformer<T>::Block::linear(LoraTarget target) {
  switch (target) {
    case LoraTarget::kQuery: return q;
    case LoraTarget::kKey: return k;
    case LoraTarget::kValue: return v;
    case LoraTarget::kOutput: return o;
    case LoraTarget::kFfUp: return ff_up;
    case LoraTarget::kFfDown: return ff_down;
  }
  return q;
}

template <typename T>
const typename Transformer<T>::Linear& Transformer<T>::Block::linear(LoraTarget target) const {
  return const_cast<Block*>(this)->linear(target);
}

template <typename T>
Transformer<T>::Transformer(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const auto d = static_cast<std::size_t>(cfg_.d_model);
  const auto ff = static_cast<std::size_t>(cfg_.d_ff);
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(d));
  const double down_std = 1.0 / std::sqrt(static_cast<double>(ff) * 2.0 * cfg_.n_layers);

  tok_emb_ = gaussian<T>({vocab::kSize, d}, 1.0, rng);
  pos_emb_ = gaussian<T>({static_cast<std::size_t>(cfg_.max_seq_len), d}, 0.1, rng);
  blocks_.resize(static_cast<std::size_t>(cfg_.n_layers));
  for (auto& blk : blocks_) {
    blk.ln1_gain = num::Tensor<T>::full({d}, T(1));
    blk.ln1_bias = num::Tensor<T>::zeros({d});
    blk.ln2_gain = num::Tensor<T>::full({d}, T(1));
    blk.ln2_bias = num::Tensor<T>::zeros({d});
    blk.q = make_linear<T>(d, d, proj_std, rng);
    blk.k = make_linear<T>(d, d, proj_std, rng);
    blk.v = make_linear<T>(d, d, proj_std, rng);
    blk.o = make_linear<T>(d, d, proj_std / std::sqrt(2.0 * cfg_.n_layers), rng);
    blk.ff_up = make_linear<T>(d, ff, proj_std, rng);
    blk.ff_down = make_linear<T>(ff, d, down_std, rng);
  }
  lnf_gain_ = num::Tensor<T>::full({d}, T(1));
  lnf_bias_ = num::Tensor<T>::zeros({d});
  lm_head_ = make_linear<T>(d, vocab::kSize, proj_std, rng);
}

template <typename T>
Transformer<T>::Transformer(Transformer&& other) noexcept
    : cfg_(other.cfg_),
      tok_emb_(std::move(other.tok_emb_)),
      pos_emb_(std::move(other.pos_emb_)),
      blocks_(std::move(other.blocks_)),
      lnf_gain_(std::move(other.lnf_gain_)),
      lnf_bias_(std::move(other.lnf_bias_)),
      lm_head_(std::move(other.lm_head_)),
      head_(std::move(other.head_)),
      lora_cfg_(std::move(other.lora_cfg_)),
      merged_(other.merged_),
      forward_count_(other.forward_count_.load()) {}

template <typename T>
void Transformer<T>::attach_lora(const LoraConfig& cfg, std::uint64_t seed) {
  if (lora_cfg_) throw ContractError("LoRA adapters are already attached");
  if (cfg.targets.empty()) throw ConfigError("LoRA target set is empty");
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    for (std::size_t t = 0; t < cfg.targets.size(); ++t) {
      auto& lin = blocks_[l].linear(cfg.targets[t]);
      lin.lora = attach(lin.weight, cfg, mix_seed(seed, l * 16 + static_cast<std::size_t>(cfg.targets[t])));
    }
  }
  set_base_trainable(false);
  lora_cfg_ = cfg;
  merged_ = false;
}

template <typename T>
void Transformer<T>::merge_lora() {
  if (!lora_cfg_) throw ContractError("no LoRA adapters to merge");
  for (auto& blk : blocks_) {
    for (LoraTarget t : lora_cfg_->targets) {
      auto& lin = blk.linear(t);
      if (!lin.lora) continue;
      lin.weight = merge(*lin.lora);
      lin.lora.reset();
    }
  }
  merged_ = true;
}

template <typename T>
void Transformer<T>::attach_classifier_head(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ClassifierHead head;
  head.weight = gaussian<T>({static_cast<std::size_t>(cfg_.d_model), 2}, 0.02, rng);
  head.bias = num::Tensor<T>::zeros({2});
  head.weight.set_requires_grad(true);
  head.bias.set_requires_grad(true);
  head_ = std::move(head);
}

template <typename T>
std::vector<NamedParam<T>> Transformer<T>::base_parameters() {
  std::vector<NamedParam<T>> out;
  out.push_back({"tok_emb", tok_emb_});
  out.push_back({"pos_emb", pos_emb_});
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    auto& blk = blocks_[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    out.push_back({p + "ln1.gain", blk.ln1_gain});
    out.push_back({p + "ln1.bias", blk.ln1_bias});
    for (LoraTarget t : {LoraTarget::kQuery, LoraTarget::kKey, LoraTarget::kValue, LoraTarget::kOutput}) {
      out.push_back({p + "attn." + to_string(t) + ".weight", blk.linear(t).weight});
      out.push_back({p + "attn." + to_string(t) + ".bias", blk.linear(t).bias});
    }
    out.push_back({p + "ln2.gain", blk.ln2_gain});
    out.push_back({p + "ln2.bias", blk.ln2_bias});
    for (LoraTarget t : {LoraTarget::kFfUp, LoraTarget::kFfDown}) {
      out.push_back({p + "mlp." + to_string(t) + ".weight", blk.linear(t).weight});
      out.push_back({p + "mlp." + to_string(t) + ".bias", blk.linear(t).bias});
    }
  }
  out.push_back({"lnf.gain", lnf_gain_});
  out.push_back({"lnf.bias", lnf_bias_});
  out.push_back({"lm_head.weight", lm_head_.weight});
  out.push_back({"lm_head.bias", lm_head_.bias});
  return out;
}

template <typename T>
std::vector<NamedParam<T>> Transformer<T>::adapter_parameters() {
  std::vector<NamedParam<T>> out;
  if (!lora_cfg_) return out;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    for (LoraTarget t : lora_cfg_->targets) {
      auto& lin = blocks_[l].linear(t);
      if (!lin.lora) continue;
      const std::string p = "layers." + std::to_string(l) + ".lora." + to_string(t) + ".";
      out.push_back({p + "A", lin.lora->A});
      out.push_back({p + "B", lin.lora->B});
    }
  }
  return out;
}

template <typename T>
std::vector<NamedParam<T>> Transformer<T>::head_parameters() {
  std::vector<NamedParam<T>> out;
  if (head_) {
    out.push_back({"cls_head.weight", head_->weight});
    out.push_back({"cls_head.bias", head_->bias});
  }
  return out;
}

template <typename T>
std::vector<NamedParam<T>> Transformer<T>::parameters() {
  auto out = base_parameters();
  for (auto& p : adapter_parameters()) out.push_back(std::move(p));
  for (auto& p : head_parameters()) out.push_back(std::move(p));
  return out;
}

template <typename T>
std::vector<num::Tensor<T>> Transformer<T>::trainable_parameters() {
  std::vector<num::Tensor<T>> out;
  for (auto& p : parameters()) {
    if (p.tensor.requires_grad()) out.push_back(p.tensor);
  }
  return out;
}

template <typename T>
void Transformer<T>::set_base_trainable(bool trainable) {
  for (auto& p : base_parameters()) p.tensor.set_requires_grad(trainable);
}

template <typename T>
num::Tensor<T>* Transformer<T>::find_parameter(const std::string& name) {
  // parameters() returns handles; locate the member that owns the storage.
  num::Tensor<T>* found = nullptr;
  auto check = [&](num::Tensor<T>& t, const std::string& n) {
    if (n == name) found = &t;
  };
  check(tok_emb_, "tok_emb");
  check(pos_emb_, "pos_emb");
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    auto& blk = blocks_[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    check(blk.ln1_gain, p + "ln1.gain");
    check(blk.ln1_bias, p + "ln1.bias");
    check(blk.ln2_gain, p + "ln2.gain");
    check(blk.ln2_bias, p + "ln2.bias");
    for (LoraTarget t : {LoraTarget::kQuery, LoraTarget::kKey, LoraTarget::kValue, LoraTarget::kOutput,
                         LoraTarget::kFfUp, LoraTarget::kFfDown}) {
      const bool attn = t != LoraTarget::kFfUp && t != LoraTarget::kFfDown;
      auto& lin = blk.linear(t);
      const std::string lp = p + (attn ? "attn." : "mlp.") + to_string(t) + ".";
      check(lin.weight, lp + "weight");
      check(lin.bias, lp + "bias");
      if (lin.lora) {
        check(lin.lora->A, p + "lora." + to_string(t) + ".A");
        check(lin.lora->B, p + "lora." + to_string(t) + ".B");
      }
    }
  }
  check(lnf_gain_, "lnf.gain");
  check(lnf_bias_, "lnf.bias");
  check(lm_head_.weight, "lm_head.weight");
  check(lm_head_.bias, "lm_head.bias");
  if (head_) {
    check(head_->weight, "cls_head.weight");
    check(head_->bias, "cls_head.bias");
  }
  return found;
}

template <typename T>
void Transformer<T>::check_batch(const TokenBatch& batch) const {
  if (batch.batch == 0 || batch.seq == 0) throw ContractError("empty token batch");
  if (batch.seq > static_cast<std::size_t>(cfg_.max_seq_len)) {
    throw SequenceLengthError("sequence of " + std::to_string(batch.seq) + " tokens exceeds max_seq_len " +
                              std::to_string(cfg_.max_seq_len));
  }
  if (batch.ids.size() != batch.batch * batch.seq) throw ContractError("token batch has inconsistent size");
  if (!batch.mask.empty() && batch.mask.size() != batch.ids.size()) {
    throw ContractError("token batch mask has inconsistent size");
  }
}

template <typename T>
num::Tensor<T> Transformer<T>::embed(const TokenBatch& batch) const {
  std::vector<TokenId> positions(batch.ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<TokenId>(i % batch.seq);
  return num::add(num::embedding(tok_emb_, batch.ids), num::embedding(pos_emb_, positions));
}

template <typename T>
num::Tensor<T> Transformer<T>::linear_forward(const Linear& lin, const num::Tensor<T>& x, const ForwardOptions& opts,
                                              std::uint64_t site) const {
  auto y = num::add_bias(num::matmul(x, lin.weight), lin.bias);
  if (lin.lora) y = num::add(y, lora_delta(*lin.lora, x, opts.training, mix_seed(opts.dropout_seed, site)));
  return y;
}

template <typename T>
num::Tensor<T> Transformer<T>::block_forward(std::size_t layer, const num::Tensor<T>& x, const TokenBatch& batch,
                                             const ForwardOptions& opts) const {
  const auto& blk = blocks_.at(layer);
  const std::uint64_t site = layer * 16;
  auto h = num::layer_norm(x, blk.ln1_gain, blk.ln1_bias);
  auto q = linear_forward(blk.q, h, opts, site + 0);
  auto k = linear_forward(blk.k, h, opts, site + 1);
  auto v = linear_forward(blk.v, h, opts, site + 2);
  auto att = num::causal_attention(q, k, v, batch.batch, batch.seq, static_cast<std::size_t>(cfg_.n_heads),
                                   std::span<const std::uint8_t>(batch.mask));
  att = linear_forward(blk.o, att, opts, site + 3);
  att = num::dropout(att, cfg_.dropout, mix_seed(opts.dropout_seed, site + 6), opts.training);
  auto x1 = num::add(x, att);
  auto h2 = num::layer_norm(x1, blk.ln2_gain, blk.ln2_bias);
  auto f = num::gelu(linear_forward(blk.ff_up, h2, opts, site + 4));
  f = linear_forward(blk.ff_down, f, opts, site + 5);
  f = num::dropout(f, cfg_.dropout, mix_seed(opts.dropout_seed, site + 7), opts.training);
  return num::add(x1, f);
}

template <typename T>
HiddenStates<T> Transformer<T>::hidden_states(const TokenBatch& batch, const ForwardOptions& opts) const {
  check_batch(batch);
  forward_count_.fetch_add(batch.batch, std::memory_order_relaxed);
  HiddenStates<T> hs;
  hs.layers.reserve(blocks_.size() + 1);
  hs.layers.push_back(embed(batch));
  for (std::size_t l = 0; l < blocks_.size(); ++l) hs.layers.push_back(block_forward(l, hs.layers.back(), batch, opts));
  hs.top = num::layer_norm(hs.layers.back(), lnf_gain_, lnf_bias_);
  return hs;
}

template <typename T>
num::Tensor<T> Transformer<T>::forward_causal_lm(std::span<const TokenId> tokens, const ForwardOptions& opts) const {
  if (tokens.empty()) throw SequenceLengthError("causal LM needs at least one token");
  const auto batch = TokenBatch::single(tokens);
  auto hs = hidden_states(batch, opts);
  return num::add_bias(num::matmul(hs.top, lm_head_.weight), lm_head_.bias);
}

template <typename T>
num::Tensor<T> Transformer<T>::lm_logits(const TokenBatch& batch, std::span<const std::size_t> rows,
                                         const ForwardOptions& opts) const {
  auto hs = hidden_states(batch, opts);
  auto picked = num::select_rows(hs.top, rows);
  return num::add_bias(num::matmul(picked, lm_head_.weight), lm_head_.bias);
}

template <typename T>
num::Tensor<T> Transformer<T>::classify(const TokenBatch& batch, const ForwardOptions& opts) const {
  if (!head_) throw ContractError("classification needs an attached classifier head");
  check_batch(batch);
  std::vector<std::size_t> rows(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    const std::size_t idx =
        batch.mask.empty()
            ? batch.seq - 1
            : pool_index(std::span<const std::uint8_t>(batch.mask).subspan(b * batch.seq, batch.seq));
    rows[b] = b * batch.seq + idx;
  }
  auto hs = hidden_states(batch, opts);
  auto pooled = num::select_rows(hs.top, rows);
  return num::add_bias(num::matmul(pooled, head_->weight), head_->bias);
}

template <typename T>
num::Tensor<T> Transformer<T>::forward_sequence_classification(std::span<const TokenId> tokens,
                                                               std::span<const std::uint8_t> pad_mask,
                                                               const ForwardOptions& opts) const {
  auto logits = classify(TokenBatch::single(tokens, pad_mask), opts);
  return num::reshape(logits, {2});
}

std::size_t trainable_param_count(const ModelConfig& model, const LoraConfig& lora, Mode mode) {
  const auto d = static_cast<std::size_t>(model.d_model);
  const auto ff = static_cast<std::size_t>(model.d_ff);
  const auto r = static_cast<std::size_t>(lora.r);
  std::size_t per_layer = 0;
  for (LoraTarget t : lora.targets) {
    std::size_t in = d, out = d;
    if (t == LoraTarget::kFfUp) out = ff;
    if (t == LoraTarget::kFfDown) in = ff;
    per_layer += out * r + r * in;
  }
  std::size_t total = per_layer * static_cast<std::size_t>(model.n_layers);
  if (mode == Mode::kClassification) total += d * 2 + 2;
  return total;
}

template <typename T>
std::size_t trainable_param_count(const Transformer<T>& model, Mode mode) {
  auto& m = const_cast<Transformer<T>&>(model);
  std::size_t total = 0;
  for (auto& p : m.adapter_parameters()) total += p.tensor.numel();
  if (mode == Mode::kClassification) {
    for (auto& p : m.head_parameters()) total += p.tensor.numel();
  }
  return total;
}

template class Transformer<float>;
template class Transformer<double>;
template std::size_t trainable_param_count(const Transformer<float>&, Mode);
template std::size_t trainable_param_count(const Transformer<double>&, Mode);

}  // namespace lsgc

#include "lsgc/stegsynth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>

#include "lsgc/errors.hpp"

namespace lsgc::stego {
namespace {

std::uint64_t context_key(std::string_view ctx, std::size_t len) {
  std::uint64_t key = 0;
  for (std::size_t i = ctx.size() - len; i < ctx.size(); ++i) key = (key << 8) | static_cast<unsigned char>(ctx[i]);
  return key;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t sample_index(const std::vector<double>& probs, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // rounding left u above the last partial sum
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return 0;
}

}  // namespace

MarkovLM MarkovLM::train(std::string_view corpus, int order, double smoothing) {
  if (order < 0 || order > 7) throw ConfigError("Markov order must be in [0, 7]");
  if (!(smoothing > 0.0)) throw ConfigError("Markov smoothing must be positive");
  if (corpus.size() <= static_cast<std::size_t>(order)) throw DataError("seed corpus is shorter than the Markov order");

  MarkovLM lm;
  lm.order_ = order;
  lm.smoothing_ = smoothing;
  std::array<std::uint64_t, 256> freq{};
  for (unsigned char c : corpus) ++freq[c];
  lm.index_.fill(-1);
  for (int b = 0; b < 256; ++b) {
    if (freq[b] == 0) continue;
    lm.index_[b] = static_cast<int>(lm.alphabet_.size());
    lm.alphabet_.push_back(static_cast<unsigned char>(b));
  }
  const double denom = static_cast<double>(corpus.size() + lm.alphabet_.size());
  for (unsigned char b : lm.alphabet_) lm.unigram_.push_back(static_cast<double>(freq[b] + 1) / denom);

  lm.tables_.resize(order);
  for (int j = 1; j <= order; ++j) {
    std::unordered_map<std::uint64_t, std::unordered_map<std::uint16_t, std::uint32_t>> raw;
    for (std::size_t i = j; i < corpus.size(); ++i) {
      const auto key = context_key(corpus.substr(0, i), j);
      ++raw[key][static_cast<std::uint16_t>(lm.index_[static_cast<unsigned char>(corpus[i])])];
    }
    auto& table = lm.tables_[j - 1];
    table.reserve(raw.size());
    for (auto& [key, counts] : raw) {
      Row row;
      for (auto [sym, n] : counts) {
        row.counts.emplace_back(sym, n);
        row.total += n;
      }
      std::sort(row.counts.begin(), row.counts.end());
      table.emplace(key, std::move(row));
    }
  }
  return lm;
}

MarkovLM MarkovLM::from_file(const std::filesystem::path& path, int order, double smoothing) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read seed corpus: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  std::replace(text.begin(), text.end(), '\n', ' ');
  return train(text, order, smoothing);
}

std::size_t MarkovLM::symbol_index(unsigned char byte) const {
  const int idx = index_[byte];
  if (idx < 0) throw ExtractionError("byte " + std::to_string(byte) + " is outside the model alphabet");
  return static_cast<std::size_t>(idx);
}

std::vector<double> MarkovLM::distribution(std::string_view context) const {
  std::vector<double> p = unigram_;
  const std::size_t usable = std::min<std::size_t>(order_, context.size());
  for (std::size_t j = 1; j <= usable; ++j) {
    const auto& table = tables_[j - 1];
    const auto it = table.find(context_key(context, j));
    if (it == table.end()) continue;
    const Row& row = it->second;
    const double norm = 1.0 / (row.total + smoothing_);
    for (double& v : p) v *= smoothing_ * norm;
    for (auto [sym, n] : row.counts) p[sym] += n * norm;
  }
  return p;
}

CandidatePool CandidatePool::parse(const std::string& text) {
  if (text == "full") return full();
  try {
    std::size_t used = 0;
    const int h = std::stoi(text, &used);
    if (used != text.size() || h < 0 || h > 16) throw ConfigError("");
    return top(h);
  } catch (const std::exception&) {
    throw ConfigError("candidate pool must be 'full' or an exponent in [0, 16], got '" + text + "'");
  }
}

std::size_t HuffmanCodebook::match(std::string_view bits, std::size_t& code_len) const {
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const auto& code = codes[i];
    bool ok = true;
    for (std::size_t b = 0; b < code.size() && ok; ++b) ok = (b < bits.size() ? bits[b] : '0') == code[b];
    if (ok) {
      code_len = code.size();
      return i;
    }
  }
  throw ContractError("no code matches the bit stream; the codebook is incomplete");
}

std::optional<std::size_t> HuffmanCodebook::find_symbol(int symbol) const {
  const auto it = std::find(symbols.begin(), symbols.end(), symbol);
  if (it == symbols.end()) return std::nullopt;
  return static_cast<std::size_t>(it - symbols.begin());
}

double HuffmanCodebook::kraft_sum() const {
  double s = 0.0;
  for (const auto& c : codes) s += std::ldexp(1.0, -static_cast<int>(c.size()));
  return s;
}

bool HuffmanCodebook::prefix_free() const {
  std::vector<BitString> sorted = codes;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].compare(0, sorted[i - 1].size(), sorted[i - 1]) == 0) return false;
  }
  return true;
}

HuffmanCodebook build_huffman(std::span<const double> probs, CandidatePool pool) {
  std::vector<int> support;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) support.push_back(static_cast<int>(i));
  }
  if (support.empty()) throw ContractError("cannot build a Huffman code from an empty distribution");
  std::stable_sort(support.begin(), support.end(), [&](int a, int b) { return probs[a] > probs[b]; });

  std::size_t keep = support.size();
  if (pool.exponent) {
    if (*pool.exponent < 0 || *pool.exponent > 30) throw ContractError("candidate pool exponent out of range");
    const std::size_t want = std::size_t{1} << *pool.exponent;
    if (want > support.size()) {
      throw ContractError("candidate pool of " + std::to_string(want) + " exceeds the support size " +
                          std::to_string(support.size()));
    }
    keep = want;
  }
  support.resize(keep);

  HuffmanCodebook book;
  book.symbols = support;
  double mass = 0.0;
  for (int s : support) mass += probs[s];
  for (int s : support) book.probs.push_back(probs[s] / mass);
  book.codes.assign(keep, {});
  if (keep == 1) return book;

  struct Node {
    double p;
    int min_id;
    int left = -1, right = -1;  // children in `nodes`, -1 for leaves
    int leaf = -1;              // index into book.symbols
  };
  std::vector<Node> nodes;
  for (std::size_t i = 0; i < keep; ++i) nodes.push_back({book.probs[i], book.symbols[i], -1, -1, static_cast<int>(i)});
  auto later = [&](int a, int b) {
    if (nodes[a].p != nodes[b].p) return nodes[a].p > nodes[b].p;
    return nodes[a].min_id > nodes[b].min_id;
  };
  std::priority_queue<int, std::vector<int>, decltype(later)> heap(later);
  for (std::size_t i = 0; i < keep; ++i) heap.push(static_cast<int>(i));
  while (heap.size() > 1) {
    const int a = heap.top();
    heap.pop();
    const int b = heap.top();
    heap.pop();
    nodes.push_back({nodes[a].p + nodes[b].p, std::min(nodes[a].min_id, nodes[b].min_id), a, b, -1});
    heap.push(static_cast<int>(nodes.size() - 1));
  }
  std::vector<std::pair<int, BitString>> stack{{heap.top(), {}}};
  while (!stack.empty()) {
    auto [n, prefix] = std::move(stack.back());
    stack.pop_back();
    if (nodes[n].leaf >= 0) {
      book.codes[nodes[n].leaf] = prefix;
      continue;
    }
    stack.emplace_back(nodes[n].right, prefix + '1');
    stack.emplace_back(nodes[n].left, prefix + '0');
  }
  return book;
}

std::string sample_cover(const MarkovLM& lm, std::size_t length, std::uint64_t seed) {
  return embed(lm, {}, length, CandidatePool::full(), seed).text;
}

StegoRecord embed(const MarkovLM& lm, std::string_view bits, std::size_t length, CandidatePool pool,
                  std::uint64_t seed) {
  if (length < static_cast<std::size_t>(lm.order())) {
    throw ContractError("text length must be at least the Markov order");
  }
  for (char c : bits) {
    if (c != '0' && c != '1') throw ContractError("bit strings may only contain '0' and '1'");
  }
  std::mt19937_64 rng(seed);
  StegoRecord rec;
  rec.pool = pool;
  rec.text.reserve(length);
  std::size_t pos = 0;
  const auto& alphabet = lm.alphabet();
  for (std::size_t step = 0; step < length; ++step) {
    const auto ctx = std::string_view(rec.text).substr(rec.text.size() - std::min<std::size_t>(rec.text.size(), lm.order()));
    const auto dist = lm.distribution(ctx);
    std::size_t sym;
    if (pos < bits.size()) {
      const auto book = build_huffman(dist, pool);
      std::size_t len = 0;
      const std::size_t i = book.match(bits.substr(pos), len);
      sym = static_cast<std::size_t>(book.symbols[i]);
      pos = std::min(bits.size(), pos + len);
    } else {
      sym = sample_index(dist, rng);
    }
    rec.text.push_back(static_cast<char>(alphabet[sym]));
  }
  rec.bits_embedded = pos;
  rec.tokens = length;
  rec.bpw = length ? static_cast<double>(pos) / static_cast<double>(length) : 0.0;
  return rec;
}

BitString extract(const MarkovLM& lm, std::string_view text, std::size_t bit_count, CandidatePool pool) {
  BitString out;
  for (std::size_t step = 0; step < text.size() && out.size() < bit_count; ++step) {
    const auto ctx = text.substr(step - std::min<std::size_t>(step, lm.order()), std::min<std::size_t>(step, lm.order()));
    const auto book = build_huffman(lm.distribution(ctx), pool);
    const auto sym = lm.symbol_index(static_cast<unsigned char>(text[step]));
    const auto i = book.find_symbol(static_cast<int>(sym));
    if (!i) {
      throw ExtractionError("byte at offset " + std::to_string(step) + " lies outside the candidate pool (" +
                            pool.label() + ")");
    }
    out += book.codes[*i];
  }
  if (out.size() < bit_count) {
    throw ExtractionError("text carries " + std::to_string(out.size()) + " bits, fewer than the requested " +
                          std::to_string(bit_count));
  }
  out.resize(bit_count);
  return out;
}

bool verify_extraction(const MarkovLM& lm, const StegoRecord& record, std::string_view bits, CandidatePool pool) {
  try {
    return extract(lm, record.text, bits.size(), pool) == bits;
  } catch (const Error&) {
    return false;
  }
}

BitString random_bits(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BitString out(count, '0');
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < count; ++i) {
    if (i % 64 == 0) word = rng();
    out[i] = static_cast<char>('0' + ((word >> (i % 64)) & 1u));
  }
  return out;
}

}  // namespace lsgc::stego

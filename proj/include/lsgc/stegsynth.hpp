#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lsgc::stego {

// Bits are carried as '0'/'1' characters.
using BitString = std::string;

// Byte-level order-k Markov model. Each order interpolates with the next lower
// one through a Dirichlet prior of total mass `smoothing`; order 0 is add-one
// over the corpus alphabet, so every conditional has full support.
class MarkovLM {
 public:
  static MarkovLM train(std::string_view corpus, int order = 3, double smoothing = 2.0);
  static MarkovLM from_file(const std::filesystem::path& path, int order = 3, double smoothing = 2.0);

  int order() const { return order_; }
  double smoothing() const { return smoothing_; }
  // Bytes with nonzero probability, ascending.
  const std::vector<unsigned char>& alphabet() const { return alphabet_; }
  std::size_t symbol_index(unsigned char byte) const;

  // P(next symbol | the last min(order, |context|) bytes of context), indexed
  // like alphabet().
  std::vector<double> distribution(std::string_view context) const;
  const std::vector<double>& unigram() const { return unigram_; }

 private:
  struct Row {
    std::uint32_t total = 0;
    std::vector<std::pair<std::uint16_t, std::uint32_t>> counts;  // (symbol index, count)
  };

  int order_ = 3;
  double smoothing_ = 2.0;
  std::vector<unsigned char> alphabet_;
  std::array<int, 256> index_{};
  std::vector<double> unigram_;
  std::vector<std::unordered_map<std::uint64_t, Row>> tables_;  // tables_[j-1]: contexts of length j
};

// Top-2^h truncation of a conditional; `full` keeps the whole support.
struct CandidatePool {
  std::optional<int> exponent;

  static CandidatePool full() { return {}; }
  static CandidatePool top(int h) { return {h}; }
  std::string label() const { return exponent ? std::to_string(*exponent) : std::string("full"); }
  static CandidatePool parse(const std::string& text);
  bool operator==(const CandidatePool&) const = default;
};

struct HuffmanCodebook {
  std::vector<int> symbols;      // candidate symbols, by descending probability
  std::vector<double> probs;     // renormalized over the candidates
  std::vector<BitString> codes;  // codes[i] belongs to symbols[i]

  // Index into symbols of the unique code that prefixes `bits` once it is
  // padded with zeros; returns the code length in `code_len`.
  std::size_t match(std::string_view bits, std::size_t& code_len) const;
  std::optional<std::size_t> find_symbol(int symbol) const;
  double kraft_sum() const;
  bool prefix_free() const;
};

// Huffman code over the top-2^h symbols of `probs` (index = symbol). Ties in
// probability and in tree merges break toward the smaller symbol id, and the
// first node popped at each merge takes bit '0'.
HuffmanCodebook build_huffman(std::span<const double> probs, CandidatePool pool);

struct StegoRecord {
  std::string text;
  std::size_t bits_embedded = 0;
  std::size_t tokens = 0;
  double bpw = 0.0;
  CandidatePool pool;
};

std::string sample_cover(const MarkovLM& lm, std::size_t length, std::uint64_t seed);

// Walks the LM for `length` bytes; while bits remain, each byte is the symbol
// whose Huffman code prefixes the remaining bits, afterwards bytes are sampled
// exactly as sample_cover does.
StegoRecord embed(const MarkovLM& lm, std::string_view bits, std::size_t length, CandidatePool pool,
                  std::uint64_t seed);

// Replays the codebooks over `text` and returns the first bit_count bits.
// Throws ExtractionError when a byte falls outside the candidate pool.
BitString extract(const MarkovLM& lm, std::string_view text, std::size_t bit_count, CandidatePool pool);

// True only when extraction succeeds and reproduces `bits` exactly.
bool verify_extraction(const MarkovLM& lm, const StegoRecord& record, std::string_view bits, CandidatePool pool);

BitString random_bits(std::size_t count, std::uint64_t seed);

}  // namespace lsgc::stego

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lsgc/labels.hpp"
#include "lsgc/stegsynth.hpp"

namespace lsgc::data {

struct LabeledExample {
  std::string text;
  Label label = Label::kCover;
  std::string source;
  double bpw = 0.0;

  bool operator==(const LabeledExample&) const = default;
};

struct FilterRules {
  std::size_t min_len = 16;
  std::size_t max_len = 400;
  double min_printable = 0.95;  // printable ASCII plus \t \n \r
};

enum class FilterRule { kTooShort, kTooLong, kGarbled };
std::string to_string(FilterRule rule);

struct Rejection {
  std::size_t index;  // position in the input corpus
  FilterRule rule;
};

struct FilterResult {
  std::vector<LabeledExample> accepted;
  std::vector<Rejection> rejections;
};

double printable_fraction(std::string_view text);
// First failing rule, if any; length rules are checked before garbling.
std::optional<FilterRule> check(std::string_view text, const FilterRules& rules);
FilterResult filter(const std::vector<LabeledExample>& corpus, const FilterRules& rules = {});

// Seeded uniform subsample of n per class, shuffled together. Throws
// DataError naming the short class and its deficit.
std::vector<LabeledExample> balance(const std::vector<LabeledExample>& covers, const std::vector<LabeledExample>& stegos,
                                    std::size_t n_per_class, std::uint64_t seed);

struct SplitSpec {
  std::array<unsigned, 3> ratios{6, 2, 2};  // train:val:test
  std::uint64_t seed = 0;

  std::string ratio_string() const;
  static SplitSpec parse_ratios(const std::string& text, std::uint64_t seed);
};

struct Splits {
  std::vector<LabeledExample> train, val, test;
};

// Sizes floor(a/S*n), floor(b/S*n) and the remainder. Each class is shuffled
// on its own and the classes are interleaved in proportion before cutting, so
// every split keeps the class ratio within one example.
Splits split(const std::vector<LabeledExample>& examples, const SplitSpec& spec);

// One JSON object per line; lines starting with '#' are provenance comments.
void write_jsonl(const std::filesystem::path& path, const std::vector<LabeledExample>& examples,
                 const std::vector<std::string>& header = {});
std::vector<LabeledExample> read_jsonl(const std::filesystem::path& path);

// train.jsonl, val.jsonl and test.jsonl, each headed by the seed and ratios.
void write_splits(const std::filesystem::path& dir, const Splits& splits, const SplitSpec& spec);
Splits read_splits(const std::filesystem::path& dir);

struct SynthSpec {
  std::size_t covers = 1000;
  std::size_t stegos = 1000;
  std::size_t length = 64;  // bytes per text
  stego::CandidatePool pool = stego::CandidatePool::top(1);
  std::uint64_t seed = 0;
};

// Covers are free samples; stegos carry random bits through the whole text.
// Every record has its own derived seed, so the output depends only on spec.
std::vector<LabeledExample> synthesize(const stego::MarkovLM& lm, const SynthSpec& spec, Label label);

}  // namespace lsgc::data

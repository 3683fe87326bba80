#include "lsgc/datapipe.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lsgc/errors.hpp"

namespace lsgc::data {
namespace {

using nlohmann::json;

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::string to_string(FilterRule rule) {
  switch (rule) {
    case FilterRule::kTooShort: return "too_short";
    case FilterRule::kTooLong: return "too_long";
    case FilterRule::kGarbled: return "garbled";
  }
  return "unknown";
}

double printable_fraction(std::string_view text) {
  if (text.empty()) return 1.0;
  std::size_t ok = 0;
  for (unsigned char c : text) ok += (c >= 0x20 && c < 0x7f) || c == '\t' || c == '\n' || c == '\r';
  return static_cast<double>(ok) / static_cast<double>(text.size());
}

std::optional<FilterRule> check(std::string_view text, const FilterRules& rules) {
  if (text.size() < rules.min_len) return FilterRule::kTooShort;
  if (text.size() > rules.max_len) return FilterRule::kTooLong;
  if (printable_fraction(text) < rules.min_printable) return FilterRule::kGarbled;
  return std::nullopt;
}

FilterResult filter(const std::vector<LabeledExample>& corpus, const FilterRules& rules) {
  FilterResult out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (auto rule = check(corpus[i].text, rules)) {
      out.rejections.push_back({i, *rule});
    } else {
      out.accepted.push_back(corpus[i]);
    }
  }
  return out;
}

std::vector<LabeledExample> balance(const std::vector<LabeledExample>& covers, const std::vector<LabeledExample>& stegos,
                                    std::size_t n_per_class, std::uint64_t seed) {
  if (covers.size() < n_per_class) {
    throw DataError("cover class has " + std::to_string(covers.size()) + " examples, " +
                    std::to_string(n_per_class - covers.size()) + " short of " + std::to_string(n_per_class));
  }
  if (stegos.size() < n_per_class) {
    throw DataError("stego class has " + std::to_string(stegos.size()) + " examples, " +
                    std::to_string(n_per_class - stegos.size()) + " short of " + std::to_string(n_per_class));
  }
  std::mt19937_64 rng(seed);
  std::vector<LabeledExample> out;
  out.reserve(2 * n_per_class);
  for (const auto* cls : {&covers, &stegos}) {
    const auto idx = shuffled_indices(cls->size(), rng);
    for (std::size_t i = 0; i < n_per_class; ++i) out.push_back((*cls)[idx[i]]);
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::string SplitSpec::ratio_string() const {
  return std::to_string(ratios[0]) + ":" + std::to_string(ratios[1]) + ":" + std::to_string(ratios[2]);
}

SplitSpec SplitSpec::parse_ratios(const std::string& text, std::uint64_t seed) {
  SplitSpec spec;
  spec.seed = seed;
  std::istringstream in(text);
  std::string part;
  std::size_t i = 0;
  while (std::getline(in, part, ':')) {
    if (i >= 3) throw ConfigError("split ratios need exactly three parts, got '" + text + "'");
    try {
      std::size_t used = 0;
      const long v = std::stol(part, &used);
      if (used != part.size() || v < 0) throw ConfigError("");
      spec.ratios[i++] = static_cast<unsigned>(v);
    } catch (const std::exception&) {
      throw ConfigError("bad split ratio '" + part + "' in '" + text + "'");
    }
  }
  if (i != 3 || spec.ratios[0] + spec.ratios[1] + spec.ratios[2] == 0) {
    throw ConfigError("split ratios need three non-negative parts with a positive sum, got '" + text + "'");
  }
  return spec;
}

Splits split(const std::vector<LabeledExample>& examples, const SplitSpec& spec) {
  if (examples.size() < 10) throw DataError("splitting needs at least 10 examples, got " + std::to_string(examples.size()));
  const unsigned total = spec.ratios[0] + spec.ratios[1] + spec.ratios[2];
  if (total == 0) throw ConfigError("split ratios sum to zero");

  std::mt19937_64 rng(spec.seed);
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < examples.size(); ++i) by_class[static_cast<int>(examples[i].label)].push_back(i);
  for (auto& cls : by_class) std::shuffle(cls.begin(), cls.end(), rng);

  // Proportional interleave: take next from the class that is furthest behind its share.
  std::vector<std::size_t> order;
  order.reserve(examples.size());
  std::array<std::size_t, 2> taken{0, 0};
  const std::array<std::size_t, 2> sizes{by_class[0].size(), by_class[1].size()};
  while (order.size() < examples.size()) {
    int pick;
    if (taken[0] == sizes[0]) {
      pick = 1;
    } else if (taken[1] == sizes[1]) {
      pick = 0;
    } else {
      // compare (taken0 + 0.5) / n0 with (taken1 + 0.5) / n1 in integers
      pick = (2 * taken[0] + 1) * sizes[1] <= (2 * taken[1] + 1) * sizes[0] ? 0 : 1;
    }
    order.push_back(by_class[pick][taken[pick]++]);
  }

  const std::size_t n = examples.size();
  const std::size_t n_train = n * spec.ratios[0] / total;
  const std::size_t n_val = n * spec.ratios[1] / total;
  Splits out;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    dst.push_back(examples[order[i]]);
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<LabeledExample>& examples,
                 const std::vector<std::string>& header) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& line : header) out << "# " << line << '\n';
  for (const auto& ex : examples) {
    json j;
    j["text"] = ex.text;
    j["label"] = to_string(ex.label);
    j["source"] = ex.source;
    j["bpw"] = ex.bpw;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<LabeledExample> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read corpus file " + path.string());
  std::vector<LabeledExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    try {
      const auto j = json::parse(line);
      LabeledExample ex;
      ex.text = j.at("text").get<std::string>();
      ex.label = label_from_string(j.at("label").get<std::string>());
      ex.source = j.value("source", std::string{});
      ex.bpw = j.value("bpw", 0.0);
      if (ex.bpw < 0.0) throw DataError("negative bpw");
      out.push_back(std::move(ex));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad record: " + e.what());
    }
  }
  return out;
}

void write_splits(const std::filesystem::path& dir, const Splits& splits, const SplitSpec& spec) {
  const std::pair<const char*, const std::vector<LabeledExample>*> parts[] = {
      {"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
  for (const auto& [name, examples] : parts) {
    write_jsonl(dir / (std::string(name) + ".jsonl"), *examples,
                {"split=" + std::string(name) + " seed=" + std::to_string(spec.seed) + " ratios=" + spec.ratio_string() +
                 " count=" + std::to_string(examples->size())});
  }
}

Splits read_splits(const std::filesystem::path& dir) {
  Splits s;
  for (auto [name, dst] : {std::pair{"train", &s.train}, std::pair{"val", &s.val}, std::pair{"test", &s.test}}) {
    const auto path = dir / (std::string(name) + ".jsonl");
    if (!std::filesystem::exists(path)) throw DataError("missing split file " + path.string());
    *dst = read_jsonl(path);
  }
  return s;
}

std::vector<LabeledExample> synthesize(const stego::MarkovLM& lm, const SynthSpec& spec, Label label) {
  const std::size_t count = label == Label::kCover ? spec.covers : spec.stegos;
  const std::uint64_t stream = label == Label::kCover ? 0 : 1;
  std::vector<LabeledExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s = mix(mix(spec.seed, stream), i);
    LabeledExample ex;
    ex.label = label;
    if (label == Label::kCover) {
      ex.text = stego::sample_cover(lm, spec.length, s);
      ex.source = "markov" + std::to_string(lm.order()) + "/cover";
    } else {
      // more bits than any text can carry, so every byte is steered
      const auto bits = stego::random_bits(spec.length * 32, mix(s, 7));
      const auto rec = stego::embed(lm, bits, spec.length, spec.pool, s);
      ex.text = rec.text;
      ex.bpw = rec.bpw;
      ex.source = "markov" + std::to_string(lm.order()) + "/huffman/pool=" + spec.pool.label();
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace lsgc::data

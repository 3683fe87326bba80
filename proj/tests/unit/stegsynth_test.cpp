#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "lsgc/errors.hpp"
#include "lsgc/stegsynth.hpp"

using namespace lsgc;
using namespace lsgc::stego;

namespace {

std::filesystem::path corpus_path() { return std::filesystem::path(LSGC_SOURCE_DIR) / "data/seed_corpus.txt"; }

class Stego : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { lm_ = new MarkovLM(MarkovLM::from_file(corpus_path())); }
  static void TearDownTestSuite() {
    delete lm_;
    lm_ = nullptr;
  }
  static const MarkovLM& lm() { return *lm_; }
  static inline MarkovLM* lm_ = nullptr;
};

std::vector<double> byte_histogram(const MarkovLM& lm, std::string_view text) {
  std::vector<double> h(lm.alphabet().size(), 0.0);
  for (unsigned char c : text) h[lm.symbol_index(c)] += 1.0;
  for (double& v : h) v /= static_cast<double>(text.size());
  return h;
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  double tv = 0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return tv / 2;
}

// KL(p || q) over byte-frequency estimates, with a small floor on q so empty
// cover bins do not blow up.
double kl(const std::vector<double>& p, const std::vector<double>& q) {
  double d = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0) d += p[i] * std::log(p[i] / std::max(q[i], 1e-6));
  }
  return d;
}

std::string long_sample(const MarkovLM& lm, std::size_t total, std::uint64_t seed, std::optional<CandidatePool> pool) {
  std::string out;
  std::uint64_t k = 0;
  while (out.size() < total) {
    if (pool) {
      const auto bits = random_bits(1000 * 20, seed * 1000 + k);
      out += embed(lm, bits, 1000, *pool, seed * 7919 + k).text;
    } else {
      out += sample_cover(lm, 1000, seed * 7919 + k);
    }
    ++k;
  }
  return out;
}

}  // namespace

TEST_F(Stego, ConditionalsSumToOneWithFullSupport) {
  std::mt19937_64 rng(1);
  const auto& alpha = lm().alphabet();
  EXPECT_GE(alpha.size(), 60u);
  for (int i = 0; i < 200; ++i) {
    std::string ctx;
    for (std::size_t j = 0; j < rng() % 6; ++j) ctx += static_cast<char>(alpha[rng() % alpha.size()]);
    const auto d = lm().distribution(ctx);
    double s = 0;
    for (double p : d) {
      EXPECT_GT(p, 0.0);
      s += p;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  double s = 0;
  for (double p : lm().unigram()) s += p;
  EXPECT_NEAR(s, 1.0, 1e-9);
}

TEST_F(Stego, OrderAndSmoothingValidated) {
  EXPECT_THROW(MarkovLM::train("abcdef", -1), ConfigError);
  EXPECT_THROW(MarkovLM::train("abcdef", 3, 0.0), ConfigError);
  EXPECT_THROW(MarkovLM::train("ab", 3), DataError);
  EXPECT_THROW(lm().symbol_index(0x01), ExtractionError);
}

TEST_F(Stego, CoverSamplingIsDeterministicAndInSupport) {
  const auto a = sample_cover(lm(), 200, 5), b = sample_cover(lm(), 200, 5), c = sample_cover(lm(), 200, 6);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a.size(), 200u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto d = lm().distribution(std::string_view(a).substr(0, i));
    EXPECT_GT(d[lm().symbol_index(static_cast<unsigned char>(a[i]))], 0.0);
  }
}

TEST_F(Stego, CoverByteFrequenciesMatchCorpusMarginals) {
  // Oracle: raw byte frequencies of the corpus (newlines folded to spaces as
  // the loader does), not the model's own tables.
  std::ifstream in(corpus_path(), std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string corpus = ss.str();
  for (char& c : corpus) {
    if (c == '\n') c = ' ';
  }
  const auto expect = byte_histogram(lm(), corpus);
  const auto got = byte_histogram(lm(), long_sample(lm(), 100000, 3, std::nullopt));
  EXPECT_LE(total_variation(expect, got), 0.02);
}

TEST(Huffman, HandBuiltTree) {
  const std::vector<double> p{0.5, 0.25, 0.25};
  const auto cb = build_huffman(p, CandidatePool::full());
  ASSERT_EQ(cb.symbols, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(cb.codes, (std::vector<BitString>{"0", "10", "11"}));
  std::size_t len = 0;
  EXPECT_EQ(cb.match("10110", len), 1u);
  EXPECT_EQ(len, 2u);
  EXPECT_EQ(cb.match("0", len), 0u);
  EXPECT_EQ(len, 1u);
  EXPECT_EQ(cb.match("1", len), 1u);  // zero-padded to "10"
}

TEST(Huffman, DegenerateAndInvalidPools) {
  const std::vector<double> p{0.1, 0.6, 0.3};
  const auto one = build_huffman(p, CandidatePool::top(0));
  ASSERT_EQ(one.symbols, (std::vector<int>{1}));
  EXPECT_EQ(one.codes, (std::vector<BitString>{""}));
  EXPECT_DOUBLE_EQ(one.kraft_sum(), 1.0);
  EXPECT_THROW(build_huffman(p, CandidatePool::top(2)), ContractError);
  EXPECT_THROW(build_huffman(std::vector<double>{}, CandidatePool::full()), ContractError);
  EXPECT_THROW(build_huffman(std::vector<double>{0.0, 0.0}, CandidatePool::full()), ContractError);
}

TEST(Huffman, TopPoolKeepsLikeliestAndBreaksTiesById) {
  const std::vector<double> p{0.2, 0.2, 0.1, 0.5};
  const auto cb = build_huffman(p, CandidatePool::top(1));
  EXPECT_EQ(cb.symbols, (std::vector<int>{3, 0}));
  EXPECT_NEAR(cb.probs[0], 0.5 / 0.7, 1e-12);
  EXPECT_EQ(cb.codes[0].size(), 1u);
}

TEST(Huffman, PrefixFreeAndCompleteOnRandomDistributions) {
  std::mt19937_64 rng(9);
  std::exponential_distribution<double> e(1.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> p(2 + rng() % 90);
    double s = 0;
    for (double& v : p) s += v = e(rng);
    for (double& v : p) v /= s;
    std::vector<CandidatePool> pools{CandidatePool::full()};
    for (int h = 0; (1u << h) <= p.size(); ++h) pools.push_back(CandidatePool::top(h));
    for (const auto& pool : pools) {
      const auto cb = build_huffman(p, pool);
      EXPECT_TRUE(cb.prefix_free());
      EXPECT_NEAR(cb.kraft_sum(), 1.0, 1e-12);
      // Optimal lengths: no code longer than the candidate count minus one.
      for (const auto& c : cb.codes) EXPECT_LT(c.size(), std::max<std::size_t>(cb.symbols.size(), 2));
    }
  }
}

TEST_F(Stego, EveryCodebookAlongARunIsPrefixFreeAndComplete) {
  const auto text = sample_cover(lm(), 300, 12);
  for (const auto& pool : {CandidatePool::full(), CandidatePool::top(1), CandidatePool::top(3), CandidatePool::top(5)}) {
    for (std::size_t i = 0; i < text.size(); ++i) {
      const auto cb = build_huffman(lm().distribution(std::string_view(text).substr(0, i)), pool);
      ASSERT_TRUE(cb.prefix_free());
      ASSERT_NEAR(cb.kraft_sum(), 1.0, 1e-12);
    }
  }
}

TEST_F(Stego, EmptyBitsReproduceCoverSampling) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto rec = embed(lm(), "", 80, CandidatePool::top(2), seed);
    EXPECT_EQ(rec.text, sample_cover(lm(), 80, seed));
    EXPECT_EQ(rec.bits_embedded, 0u);
    EXPECT_EQ(rec.bpw, 0.0);
  }
}

TEST_F(Stego, FirstByteFollowsPrefixMatch) {
  const auto pool = CandidatePool::top(3);
  const auto cb = build_huffman(lm().distribution(""), pool);
  for (std::size_t i = 0; i < cb.symbols.size(); ++i) {
    const auto rec = embed(lm(), cb.codes[i] + "0101", 8, pool, 1);
    EXPECT_EQ(static_cast<unsigned char>(rec.text[0]), lm().alphabet()[static_cast<std::size_t>(cb.symbols[i])]);
  }
}

TEST_F(Stego, RoundTripOverDials) {
  std::mt19937_64 rng(21);
  for (const auto& pool : {CandidatePool::top(1), CandidatePool::top(3), CandidatePool::full()}) {
    for (int i = 0; i < 1000; ++i) {
      const std::size_t n_bits = 1 + rng() % 120;
      const auto bits = random_bits(n_bits, rng());
      const auto rec = embed(lm(), bits, 64, pool, rng());
      ASSERT_EQ(rec.text.size(), 64u);
      const std::size_t carried = std::min(n_bits, rec.bits_embedded);
      EXPECT_EQ(extract(lm(), rec.text, carried, pool), bits.substr(0, carried));
      if (rec.bits_embedded == n_bits) EXPECT_TRUE(verify_extraction(lm(), rec, bits, pool));
    }
  }
}

TEST_F(Stego, StegoRecordAccounting) {
  const auto bits = random_bits(5000, 3);
  const auto rec = embed(lm(), bits, 64, CandidatePool::top(1), 4);
  EXPECT_EQ(rec.tokens, 64u);
  EXPECT_EQ(rec.bits_embedded, 64u);  // two candidates: exactly one bit per byte
  EXPECT_DOUBLE_EQ(rec.bpw, 1.0);
  EXPECT_EQ(extract(lm(), rec.text, 0, CandidatePool::top(1)), "");
}

TEST_F(Stego, WrongDialNeverVerifies) {
  const std::vector<CandidatePool> pools{CandidatePool::top(1), CandidatePool::top(2), CandidatePool::top(3),
                                         CandidatePool::top(4), CandidatePool::full()};
  for (std::size_t i = 0; i < pools.size(); ++i) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const auto bits = random_bits(48, seed);
      const auto rec = embed(lm(), bits, 64, pools[i], seed + 100);
      ASSERT_EQ(rec.bits_embedded, 48u);
      for (std::size_t j = 0; j < pools.size(); ++j) {
        if (j == i) continue;
        EXPECT_FALSE(verify_extraction(lm(), rec, bits, pools[j])) << pools[i].label() << " read as " << pools[j].label();
      }
    }
  }
}

TEST_F(Stego, ExtractOutsidePoolThrows) {
  // A byte the model never ranks in the top two after "the".
  std::string text = "the";
  const auto d = lm().distribution(text);
  std::size_t worst = 0;
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (d[i] < d[worst]) worst = i;
  }
  text += static_cast<char>(lm().alphabet()[worst]);
  EXPECT_THROW(extract(lm(), text, 4, CandidatePool::top(1)), ExtractionError);
}

TEST_F(Stego, DivergenceGrowsAsPoolShrinks) {
  const auto cover = byte_histogram(lm(), long_sample(lm(), 100000, 1, std::nullopt));
  std::vector<double> kls;
  for (int h : {6, 5, 4, 3, 2, 1}) {
    kls.push_back(kl(byte_histogram(lm(), long_sample(lm(), 100000, 2, CandidatePool::top(h))), cover));
  }
  int inversions = 0;
  for (std::size_t i = 1; i < kls.size(); ++i) inversions += kls[i] < kls[i - 1];
  EXPECT_LE(inversions, 1);
  EXPECT_GT(kls.back(), kls.front());
  std::ostringstream msg;
  for (double v : kls) msg << v << ' ';
  RecordProperty("kl_by_pool_6_to_1", msg.str());
}

TEST(CandidatePool, Parse) {
  EXPECT_EQ(CandidatePool::parse("full"), CandidatePool::full());
  EXPECT_EQ(CandidatePool::parse("3"), CandidatePool::top(3));
  EXPECT_THROW(CandidatePool::parse("17"), ConfigError);
  EXPECT_THROW(CandidatePool::parse("x"), ConfigError);
  EXPECT_EQ(CandidatePool::top(2).label(), "2");
}

TEST(RandomBits, DeterministicBinary) {
  const auto a = random_bits(1000, 1);
  EXPECT_EQ(a, random_bits(1000, 1));
  EXPECT_NE(a, random_bits(1000, 2));
  const auto ones = std::count(a.begin(), a.end(), '1');
  EXPECT_EQ(static_cast<std::size_t>(ones + std::count(a.begin(), a.end(), '0')), a.size());
  EXPECT_GT(ones, 400);
  EXPECT_LT(ones, 600);
}

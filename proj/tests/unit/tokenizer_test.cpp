#include <gtest/gtest.h>

#include <random>

#include "lsgc/errors.hpp"
#include "lsgc/tokenizer.hpp"

using namespace lsgc;

TEST(Tokenizer, EncodeAddsSpecials) {
  EXPECT_EQ(encode("ab", true, true), (std::vector<TokenId>{257, 97, 98, 258}));
  EXPECT_EQ(encode("", true, true), (std::vector<TokenId>{257, 258}));
  EXPECT_EQ(encode("ab", false, false), (std::vector<TokenId>{97, 98}));
}

TEST(Tokenizer, DecodeDropsSpecials) {
  EXPECT_EQ(decode(std::vector<TokenId>{97}), "a");
  EXPECT_EQ(decode(std::vector<TokenId>{257, 258}), "");
  EXPECT_EQ(decode(std::vector<TokenId>{115, 116, 101, 103, 111}), "stego");
  EXPECT_EQ(decode(std::vector<TokenId>{257, 104, 256, 105, 258}), "hi");
}

TEST(Tokenizer, OutOfVocabularyIsError) {
  EXPECT_THROW(decode(std::vector<TokenId>{259}), VocabularyError);
  EXPECT_THROW(decode(std::vector<TokenId>{-1}), VocabularyError);
}

TEST(Tokenizer, RoundTripOnRandomByteStrings) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> byte(0, 255), len(0, 64);
  for (int i = 0; i < 1000; ++i) {
    std::string s(static_cast<std::size_t>(len(rng)), '\0');
    for (char& c : s) c = static_cast<char>(byte(rng));
    const auto ids = encode(s, true, true);
    for (std::size_t j = 1; j + 1 < ids.size(); ++j) {
      EXPECT_GE(ids[j], 0);
      EXPECT_LT(ids[j], 256);  // no specials inside the payload
    }
    EXPECT_EQ(decode(ids), s);
  }
}

TEST(Tokenizer, InjectiveOnPayloadBytes) {
  for (int a = 0; a < 256; ++a) {
    const std::string s(1, static_cast<char>(a));
    EXPECT_EQ(encode(s, false, false), (std::vector<TokenId>{a}));
  }
}

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lsgc {

using TokenId = std::int32_t;

// Byte-level vocabulary: ids 0..255 are raw bytes, followed by three specials.
namespace vocab {
inline constexpr TokenId kPad = 256;
inline constexpr TokenId kBos = 257;
inline constexpr TokenId kEos = 258;
inline constexpr std::size_t kSize = 259;

inline constexpr bool is_special(TokenId id) { return id >= kPad; }
}  // namespace vocab

std::vector<TokenId> encode(std::string_view text, bool add_bos, bool add_eos);

// Drops specials; throws VocabularyError on ids outside the vocabulary.
std::string decode(std::span<const TokenId> ids);

}  // namespace lsgc

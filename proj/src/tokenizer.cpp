#include "lsgc/tokenizer.hpp"

#include "lsgc/errors.hpp"

namespace lsgc {

std::vector<TokenId> encode(std::string_view text, bool add_bos, bool add_eos) {
  std::vector<TokenId> ids;
  ids.reserve(text.size() + 2);
  if (add_bos) ids.push_back(vocab::kBos);
  for (char c : text) ids.push_back(static_cast<TokenId>(static_cast<unsigned char>(c)));
  if (add_eos) ids.push_back(vocab::kEos);
  return ids;
}

std::string decode(std::span<const TokenId> ids) {
  std::string out;
  out.reserve(ids.size());
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab::kSize) {
      throw VocabularyError("token id " + std::to_string(id) + " is outside the vocabulary of " +
                            std::to_string(vocab::kSize));
    }
    if (!vocab::is_special(id)) out.push_back(static_cast<char>(id));
  }
  return out;
}

}  // namespace lsgc

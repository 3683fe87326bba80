#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lsgc/labels.hpp"
#include "lsgc/model.hpp"
#include "lsgc/tokenizer.hpp"

namespace lsgc {

// Four-part generation prompt. Rendering concatenates description,
// instruction, input header, payload and response header, so the prompt ends
// with an empty Response slot.
struct PromptTemplate {
  std::string description;
  std::string instruction;
  std::string input_header;
  std::string response_header;

  // Matches templates/default_prompt.txt.
  static PromptTemplate default_template();

  // Parses the template text format: [description], [instruction] and
  // [layout] sections; the layout holds {description}, {instruction} and
  // {input} in that order.
  static PromptTemplate parse(std::string_view text);
  static PromptTemplate load(const std::filesystem::path& path);

  std::string render(std::string_view payload) const;
  std::size_t overhead() const {
    return description.size() + instruction.size() + input_header.size() + response_header.size();
  }
};

struct GenerationBudget {
  int max_new_tokens = 16;
  double temperature = 0.0;  // only greedy decoding is supported
};

// BOS + rendered prompt. Throws SequenceLengthError when the prompt plus the
// generation budget does not fit in max_seq_len.
std::vector<TokenId> build_prompt(const PromptTemplate& tmpl, std::string_view payload, std::size_t max_seq_len,
                                  const GenerationBudget& budget = {});

// Source of next-token logits for a prefix; one call is one forward pass.
class NextTokenModel {
 public:
  virtual ~NextTokenModel() = default;
  virtual std::vector<float> next_token_logits(std::span<const TokenId> prefix) const = 0;
};

class TransformerLm final : public NextTokenModel {
 public:
  explicit TransformerLm(const Model& model) : model_(model) {}
  std::vector<float> next_token_logits(std::span<const TokenId> prefix) const override;

 private:
  const Model& model_;
};

struct GenerationResult {
  std::vector<TokenId> tokens;  // excludes the prompt; EOS, if any, is last
  std::size_t forward_passes = 0;
};

// Greedy decoding: append argmax(model(prompt + generated)) until EOS or the
// budget runs out. Ties break toward the lower token id.
GenerationResult generate(const NextTokenModel& model, std::span<const TokenId> prompt,
                          const GenerationBudget& budget = {});

// First case-insensitive occurrence of "cover" or "stego" decides.
Verdict parse_label(std::string_view generated_text);

// Teacher-forced training targets for prompt + response + EOS.
struct ResponseTargets {
  std::vector<TokenId> inputs;      // prompt + response (EOS is only a target)
  std::vector<std::size_t> rows;    // positions whose next-token prediction is scored
  std::vector<std::int32_t> targets;
};

ResponseTargets response_targets(std::span<const TokenId> prompt, std::span<const TokenId> response);

// Literal response strings used as fine-tuning targets.
std::vector<TokenId> response_tokens(Label label);

// Mean next-token cross-entropy over the response positions and the final EOS.
// Prompt positions contribute nothing.
template <typename T>
num::Tensor<T> genmode_loss(const Transformer<T>& model, std::span<const TokenId> prompt,
                            std::span<const TokenId> response, const ForwardOptions& opts = {});

// Batched form: one padded forward, mean over every scored position.
template <typename T>
num::Tensor<T> genmode_batch_loss(const Transformer<T>& model, std::span<const std::vector<TokenId>> prompts,
                                  std::span<const std::vector<TokenId>> responses, const ForwardOptions& opts = {});

}  // namespace lsgc

#include "lsgc/genmode.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "lsgc/ops.hpp"

namespace lsgc {
namespace {

constexpr std::string_view kDefaultTemplate =
    "[description]\n"
    "### Description:\n"
    "Some texts were produced by a language model whose token choices were steered by secret bits. Steered text "
    "leans on the likeliest continuations and carries faint statistical traces. The rest were sampled freely. "
    "Judge the input below. Read it closely before answering.\n"
    "[instruction]\n"
    "### Instruction:\n"
    "Reply with one word: cover or stego.\n"
    "[layout]\n"
    "{description}\n"
    "{instruction}\n"
    "### Input:\n"
    "{input}\n"
    "### Response:\n";

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

PromptTemplate PromptTemplate::default_template() { return parse(kDefaultTemplate); }

PromptTemplate PromptTemplate::parse(std::string_view text) {
  std::map<std::string, std::vector<std::string>> sections;
  std::string current;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() > 2 && line.front() == '[' && line.back() == ']') {
      current = line.substr(1, line.size() - 2);
      sections[current];
      continue;
    }
    if (current.empty()) continue;  // preamble comments
    sections[current].push_back(line);
  }
  auto joined = [&](const std::string& name) {
    auto it = sections.find(name);
    if (it == sections.end()) throw ConfigError("prompt template is missing the [" + name + "] section");
    std::string out;
    for (std::size_t i = 0; i < it->second.size(); ++i) {
      if (i) out += '\n';
      out += it->second[i];
    }
    return out;
  };
  const std::string description = joined("description");
  const std::string instruction = joined("instruction");
  const std::string layout = joined("layout");

  const auto pd = layout.find("{description}");
  const auto pi = layout.find("{instruction}");
  const auto pin = layout.find("{input}");
  if (pd == std::string::npos || pi == std::string::npos || pin == std::string::npos || !(pd < pi && pi < pin)) {
    throw ConfigError("prompt layout must contain {description}, {instruction} and {input} in that order");
  }
  PromptTemplate t;
  t.description = layout.substr(0, pd) + description + layout.substr(pd + 13, pi - (pd + 13));
  t.instruction = instruction;
  t.input_header = layout.substr(pi + 13, pin - (pi + 13));
  t.response_header = layout.substr(pin + 7);
  return t;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read prompt template: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string PromptTemplate::render(std::string_view payload) const {
  std::string out;
  out.reserve(overhead() + payload.size());
  out += description;
  out += instruction;
  out += input_header;
  out += payload;
  out += response_header;
  return out;
}

std::vector<TokenId> build_prompt(const PromptTemplate& tmpl, std::string_view payload, std::size_t max_seq_len,
                                  const GenerationBudget& budget) {
  auto ids = encode(tmpl.render(payload), /*add_bos=*/true, /*add_eos=*/false);
  const std::size_t needed = ids.size() + static_cast<std::size_t>(std::max(budget.max_new_tokens, 0));
  if (needed > max_seq_len) {
    throw SequenceLengthError("prompt of " + std::to_string(ids.size()) + " tokens plus a budget of " +
                              std::to_string(budget.max_new_tokens) + " exceeds max_seq_len " +
                              std::to_string(max_seq_len) + "; shorten the payload by at least " +
                              std::to_string(needed - max_seq_len) + " bytes");
  }
  return ids;
}

std::vector<float> TransformerLm::next_token_logits(std::span<const TokenId> prefix) const {
  const auto batch = TokenBatch::single(prefix);
  const std::size_t last = prefix.size() - 1;
  auto logits = model_.lm_logits(batch, std::span<const std::size_t>(&last, 1));
  return {logits.data().begin(), logits.data().end()};
}

GenerationResult generate(const NextTokenModel& model, std::span<const TokenId> prompt,
                          const GenerationBudget& budget) {
  if (budget.temperature != 0.0) throw ConfigError("only greedy decoding (temperature 0) is supported");
  if (budget.max_new_tokens < 1) throw ConfigError("max_new_tokens must be at least 1");
  if (prompt.empty()) throw ContractError("generation needs a non-empty prompt");
  GenerationResult result;
  std::vector<TokenId> context(prompt.begin(), prompt.end());
  for (int step = 0; step < budget.max_new_tokens; ++step) {
    const auto logits = model.next_token_logits(context);
    ++result.forward_passes;
    const auto best = std::max_element(logits.begin(), logits.end());  // first max wins ties
    const auto next = static_cast<TokenId>(best - logits.begin());
    result.tokens.push_back(next);
    if (next == vocab::kEos) break;
    context.push_back(next);
  }
  return result;
}

Verdict parse_label(std::string_view generated_text) {
  const std::string lower = lowercase(generated_text);
  const auto c = lower.find("cover");
  const auto s = lower.find("stego");
  if (c == std::string::npos && s == std::string::npos) return Verdict::kUnparseable;
  return c < s ? Verdict::kCover : Verdict::kStego;
}

ResponseTargets response_targets(std::span<const TokenId> prompt, std::span<const TokenId> response) {
  if (prompt.empty()) throw ContractError("response targets need a non-empty prompt");
  ResponseTargets out;
  out.inputs.assign(prompt.begin(), prompt.end());
  out.inputs.insert(out.inputs.end(), response.begin(), response.end());
  for (std::size_t i = 0; i <= response.size(); ++i) {
    out.rows.push_back(prompt.size() - 1 + i);
    out.targets.push_back(i < response.size() ? response[i] : vocab::kEos);
  }
  return out;
}

std::vector<TokenId> response_tokens(Label label) { return encode(to_string(label), false, false); }

template <typename T>
num::Tensor<T> genmode_loss(const Transformer<T>& model, std::span<const TokenId> prompt,
                            std::span<const TokenId> response, const ForwardOptions& opts) {
  const std::vector<TokenId> p(prompt.begin(), prompt.end());
  const std::vector<TokenId> r(response.begin(), response.end());
  return genmode_batch_loss(model, std::span<const std::vector<TokenId>>(&p, 1),
                            std::span<const std::vector<TokenId>>(&r, 1), opts);
}

template <typename T>
num::Tensor<T> genmode_batch_loss(const Transformer<T>& model, std::span<const std::vector<TokenId>> prompts,
                                  std::span<const std::vector<TokenId>> responses, const ForwardOptions& opts) {
  if (prompts.size() != responses.size() || prompts.empty()) {
    throw ContractError("genmode loss needs matching, non-empty prompt and response lists");
  }
  std::vector<std::vector<TokenId>> inputs;
  std::vector<std::size_t> rows;
  std::vector<std::int32_t> targets;
  std::vector<ResponseTargets> parts;
  std::size_t seq = 0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    parts.push_back(response_targets(prompts[i], responses[i]));
    seq = std::max(seq, parts.back().inputs.size());
  }
  if (seq > static_cast<std::size_t>(model.config().max_seq_len)) {
    throw SequenceLengthError("prompt plus response of " + std::to_string(seq) + " tokens exceeds max_seq_len " +
                              std::to_string(model.config().max_seq_len));
  }
  for (std::size_t i = 0; i < parts.size(); ++i) {
    inputs.push_back(std::move(parts[i].inputs));
    for (std::size_t j = 0; j < parts[i].rows.size(); ++j) {
      rows.push_back(i * seq + parts[i].rows[j]);
      targets.push_back(parts[i].targets[j]);
    }
  }
  const auto batch = TokenBatch::pad(inputs);
  auto logits = model.lm_logits(batch, rows, opts);
  return num::cross_entropy(logits, std::span<const std::int32_t>(targets));
}

template num::Tensor<float> genmode_loss(const Transformer<float>&, std::span<const TokenId>,
                                         std::span<const TokenId>, const ForwardOptions&);
template num::Tensor<double> genmode_loss(const Transformer<double>&, std::span<const TokenId>,
                                          std::span<const TokenId>, const ForwardOptions&);
template num::Tensor<float> genmode_batch_loss(const Transformer<float>&, std::span<const std::vector<TokenId>>,
                                               std::span<const std::vector<TokenId>>, const ForwardOptions&);
template num::Tensor<double> genmode_batch_loss(const Transformer<double>&, std::span<const std::vector<TokenId>>,
                                                std::span<const std::vector<TokenId>>, const ForwardOptions&);

}  // namespace lsgc

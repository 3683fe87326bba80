#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lsgc/labels.hpp"
#include "lsgc/model.hpp"

namespace lsgc {

// Short instruction kept in classification mode; there is no description.
inline constexpr std::string_view kDefaultClsInstruction = "Stego or cover?\n";

struct ClsInput {
  std::string instruction;
  std::string payload;
  std::vector<TokenId> ids;            // BOS + instruction + payload, then PAD
  std::vector<std::uint8_t> pad_mask;  // 1 for real tokens

  std::size_t length() const { return ids.size(); }
  std::size_t real_length() const;
};

// Throws SequenceLengthError when BOS + instruction + payload exceeds max_len.
ClsInput build_cls_input(std::string_view instruction, std::string_view payload, std::size_t max_len);

// Pads every input with PAD up to the longest one.
void pad_to_batch_max(std::span<ClsInput> inputs);

TokenBatch to_batch(std::span<const ClsInput> inputs);

struct ClsPrediction {
  Label label = Label::kCover;
  std::array<double, 2> probabilities{0.5, 0.5};  // {cover, stego}
};

// softmax over the two logits; exact ties go to cover.
ClsPrediction prediction_from_logits(std::span<const float> logits);

// Exactly one model forward.
ClsPrediction predict(const Model& model, const ClsInput& input);

// Cross-entropy of the 2-way logits against `label`.
template <typename T>
num::Tensor<T> cls_loss(const Transformer<T>& model, const ClsInput& input, Label label,
                        const ForwardOptions& opts = {});

// One padded forward over the batch; mean cross-entropy.
template <typename T>
num::Tensor<T> cls_batch_loss(const Transformer<T>& model, std::span<const ClsInput> inputs,
                              std::span<const Label> labels, const ForwardOptions& opts = {});

}  // namespace lsgc

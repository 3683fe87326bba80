#include "lsgc/clsmode.hpp"

#include <algorithm>
#include <cmath>

#include "lsgc/ops.hpp"

namespace lsgc {

std::size_t ClsInput::real_length() const {
  return static_cast<std::size_t>(std::count(pad_mask.begin(), pad_mask.end(), std::uint8_t{1}));
}

ClsInput build_cls_input(std::string_view instruction, std::string_view payload, std::size_t max_len) {
  ClsInput in;
  in.instruction = std::string(instruction);
  in.payload = std::string(payload);
  in.ids = encode(in.instruction + in.payload, /*add_bos=*/true, /*add_eos=*/false);
  if (in.ids.size() > max_len) {
    throw SequenceLengthError("classification input of " + std::to_string(in.ids.size()) +
                              " tokens exceeds the limit of " + std::to_string(max_len));
  }
  in.pad_mask.assign(in.ids.size(), 1);
  return in;
}

void pad_to_batch_max(std::span<ClsInput> inputs) {
  std::size_t longest = 0;
  for (const auto& in : inputs) longest = std::max(longest, in.ids.size());
  for (auto& in : inputs) {
    in.ids.resize(longest, vocab::kPad);
    in.pad_mask.resize(longest, 0);
  }
}

TokenBatch to_batch(std::span<const ClsInput> inputs) {
  if (inputs.empty()) throw ContractError("empty classification batch");
  TokenBatch batch;
  batch.batch = inputs.size();
  for (const auto& in : inputs) batch.seq = std::max(batch.seq, in.ids.size());
  batch.ids.assign(batch.batch * batch.seq, vocab::kPad);
  batch.mask.assign(batch.batch * batch.seq, 0);
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    std::copy(inputs[b].ids.begin(), inputs[b].ids.end(), batch.ids.begin() + static_cast<std::ptrdiff_t>(b * batch.seq));
    std::copy(inputs[b].pad_mask.begin(), inputs[b].pad_mask.end(),
              batch.mask.begin() + static_cast<std::ptrdiff_t>(b * batch.seq));
  }
  return batch;
}

ClsPrediction prediction_from_logits(std::span<const float> logits) {
  if (logits.size() != 2) throw ShapeError("classification logits must have 2 entries");
  ClsPrediction p;
  const double a = logits[0], b = logits[1];
  const double mx = std::max(a, b);
  const double ea = std::exp(a - mx), eb = std::exp(b - mx);
  p.probabilities = {ea / (ea + eb), eb / (ea + eb)};
  p.label = b > a ? Label::kStego : Label::kCover;
  return p;
}

ClsPrediction predict(const Model& model, const ClsInput& input) {
  auto logits = model.forward_sequence_classification(input.ids, input.pad_mask);
  return prediction_from_logits(logits.data());
}

template <typename T>
num::Tensor<T> cls_loss(const Transformer<T>& model, const ClsInput& input, Label label, const ForwardOptions& opts) {
  const Label labels[1] = {label};
  return cls_batch_loss(model, std::span<const ClsInput>(&input, 1), std::span<const Label>(labels, 1), opts);
}

template <typename T>
num::Tensor<T> cls_batch_loss(const Transformer<T>& model, std::span<const ClsInput> inputs,
                              std::span<const Label> labels, const ForwardOptions& opts) {
  if (inputs.size() != labels.size()) throw ContractError("one label per classification input is required");
  std::vector<std::int32_t> targets;
  for (Label l : labels) targets.push_back(static_cast<std::int32_t>(l));
  auto logits = model.classify(to_batch(inputs), opts);
  return num::cross_entropy(logits, std::span<const std::int32_t>(targets));
}

template num::Tensor<float> cls_loss(const Transformer<float>&, const ClsInput&, Label, const ForwardOptions&);
template num::Tensor<double> cls_loss(const Transformer<double>&, const ClsInput&, Label, const ForwardOptions&);
template num::Tensor<float> cls_batch_loss(const Transformer<float>&, std::span<const ClsInput>, std::span<const Label>,
                                           const ForwardOptions&);
template num::Tensor<double> cls_batch_loss(const Transformer<double>&, std::span<const ClsInput>,
                                            std::span<const Label>, const ForwardOptions&);

}  // namespace lsgc

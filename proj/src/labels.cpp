#include "lsgc/labels.hpp"

#include "lsgc/errors.hpp"

namespace lsgc {

std::string to_string(Label label) { return label == Label::kStego ? "stego" : "cover"; }

std::string to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::kCover: return "cover";
    case Verdict::kStego: return "stego";
    case Verdict::kUnparseable: return "unparseable";
  }
  return "unparseable";
}

Label label_from_string(const std::string& name) {
  if (name == "cover") return Label::kCover;
  if (name == "stego") return Label::kStego;
  throw DataError("label must be 'cover' or 'stego', got '" + name + "'");
}

}  // namespace lsgc

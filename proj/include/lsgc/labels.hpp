#pragma once

#include <string>

namespace lsgc {

// Stego is the positive class everywhere.
enum class Label { kCover = 0, kStego = 1 };

// A detector's verdict; generation mode can fail to produce one.
enum class Verdict { kCover, kStego, kUnparseable };

std::string to_string(Label label);
std::string to_string(Verdict verdict);
Label label_from_string(const std::string& name);

inline Verdict to_verdict(Label label) { return label == Label::kStego ? Verdict::kStego : Verdict::kCover; }

}  // namespace lsgc

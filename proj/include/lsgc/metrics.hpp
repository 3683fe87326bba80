#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lsgc/labels.hpp"

namespace lsgc::metrics {

// Stego is the positive class.
struct Confusion {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
  void add(Verdict pred, Label truth);
  Confusion& operator+=(const Confusion& o);
  bool operator==(const Confusion&) const = default;
};

// Unparseable predictions count as the wrong class.
Confusion confusion(std::span<const Verdict> preds, std::span<const Label> labels);
Confusion confusion(std::span<const Label> preds, std::span<const Label> labels);

double accuracy(const Confusion& c);
double precision(const Confusion& c);  // 0 when nothing is predicted stego
double recall(const Confusion& c);     // 0 when there are no stego examples
double f1(const Confusion& c);         // 0 when P + R == 0

// 0.625 -> "62.50"
std::string percent(double fraction);
// (t_gen - t_cls) / t_gen
double reduction(double t_gen, double t_cls);

struct Spread {
  double mean = 0.0, min = 0.0, max = 0.0;
  std::size_t n = 0;

  double half_range() const { return (max - min) / 2.0; }
  // percentages: "62.50 ± 1.25"
  std::string render_percent() const;
};
Spread spread(std::span<const double> values);

struct ResultRow {
  std::string dataset;
  std::string mode;
  Confusion confusion;
  std::map<std::string, std::string> extra;  // e.g. r, trainable params, parse rate
};

struct TimingRow {
  std::string mode;
  double seconds = 0.0;
  std::size_t epochs = 0;
};

struct Report {
  std::string title;
  std::vector<ResultRow> results;
  std::vector<TimingRow> timings;
  std::map<std::string, std::string> provenance;  // seed, config hash, build id
  std::vector<std::string> notes;
};

enum class ReportFormat { kJson, kText };

// Deterministic: results keep insertion order and maps are sorted.
std::string render(const Report& report, ReportFormat format);
// Writes <stem>.json and <stem>.txt; throws IoError on failure.
void emit_report(const Report& report, const std::filesystem::path& stem);

}  // namespace lsgc::metrics

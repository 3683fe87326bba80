#include "lsgc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lsgc/errors.hpp"

namespace lsgc::metrics {
namespace {

using nlohmann::ordered_json;

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

void Confusion::add(Verdict pred, Label truth) {
  if (truth == Label::kStego) {
    (pred == Verdict::kStego ? tp : fn) += 1;
  } else {
    (pred == Verdict::kCover ? tn : fp) += 1;
  }
}

Confusion& Confusion::operator+=(const Confusion& o) {
  tp += o.tp;
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

Confusion confusion(std::span<const Verdict> preds, std::span<const Label> labels) {
  if (preds.size() != labels.size()) {
    throw ContractError("confusion needs equal lengths, got " + std::to_string(preds.size()) + " predictions and " +
                        std::to_string(labels.size()) + " labels");
  }
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) c.add(preds[i], labels[i]);
  return c;
}

Confusion confusion(std::span<const Label> preds, std::span<const Label> labels) {
  std::vector<Verdict> v;
  v.reserve(preds.size());
  for (auto p : preds) v.push_back(to_verdict(p));
  return confusion(std::span<const Verdict>(v), labels);
}

double accuracy(const Confusion& c) {
  if (c.total() == 0) throw ContractError("accuracy of an empty confusion");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double precision(const Confusion& c) {
  return c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

double recall(const Confusion& c) {
  return c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double f1(const Confusion& c) {
  if (c.total() == 0) throw ContractError("F1 of an empty confusion");
  const double p = precision(c), r = recall(c);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

std::string percent(double fraction) { return fixed(fraction * 100.0, 2); }

double reduction(double t_gen, double t_cls) {
  if (!(t_gen > 0.0)) throw ContractError("reduction needs a positive generation-mode time");
  return (t_gen - t_cls) / t_gen;
}

std::string Spread::render_percent() const { return percent(mean) + " ± " + percent(half_range()); }

Spread spread(std::span<const double> values) {
  if (values.empty()) throw ContractError("spread of no values");
  Spread s;
  s.n = values.size();
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  return s;
}

std::string render(const Report& report, ReportFormat format) {
  if (format == ReportFormat::kJson) {
    ordered_json j;
    j["title"] = report.title;
    j["provenance"] = ordered_json::object();
    for (const auto& [k, v] : report.provenance) j["provenance"][k] = v;
    j["results"] = ordered_json::array();
    for (const auto& row : report.results) {
      ordered_json r;
      r["dataset"] = row.dataset;
      r["mode"] = row.mode;
      r["tp"] = row.confusion.tp;
      r["tn"] = row.confusion.tn;
      r["fp"] = row.confusion.fp;
      r["fn"] = row.confusion.fn;
      if (row.confusion.total() > 0) {
        r["acc"] = percent(accuracy(row.confusion));
        r["f1"] = percent(f1(row.confusion));
      }
      for (const auto& [k, v] : row.extra) r[k] = v;
      j["results"].push_back(r);
    }
    j["timings"] = ordered_json::array();
    for (const auto& t : report.timings) {
      j["timings"].push_back({{"mode", t.mode}, {"seconds", fixed(t.seconds, 3)}, {"epochs", t.epochs}});
    }
    j["notes"] = report.notes;
    return j.dump(2) + "\n";
  }

  std::ostringstream out;
  out << report.title << "\n";
  for (const auto& [k, v] : report.provenance) out << "  " << k << ": " << v << "\n";
  if (!report.results.empty()) {
    std::vector<std::string> extra_keys;
    for (const auto& row : report.results) {
      for (const auto& [k, v] : row.extra) {
        if (std::find(extra_keys.begin(), extra_keys.end(), k) == extra_keys.end()) extra_keys.push_back(k);
      }
    }
    std::size_t w = 8;
    for (const auto& row : report.results) w = std::max(w, row.dataset.size() + 2);
    out << "\n" << pad("dataset", w) << pad("mode", 8) << pad("Acc(%)", 9) << pad("F1(%)", 9)
        << pad("TP", 6) << pad("TN", 6) << pad("FP", 6) << pad("FN", 6);
    for (const auto& k : extra_keys) out << pad(k, std::max<std::size_t>(k.size() + 2, 10));
    out << "\n";
    for (const auto& row : report.results) {
      const bool any = row.confusion.total() > 0;
      out << pad(row.dataset, w) << pad(row.mode, 8) << pad(any ? percent(accuracy(row.confusion)) : "-", 9)
          << pad(any ? percent(f1(row.confusion)) : "-", 9) << pad(std::to_string(row.confusion.tp), 6)
          << pad(std::to_string(row.confusion.tn), 6) << pad(std::to_string(row.confusion.fp), 6)
          << pad(std::to_string(row.confusion.fn), 6);
      for (const auto& k : extra_keys) {
        const auto it = row.extra.find(k);
        out << pad(it == row.extra.end() ? "-" : it->second, std::max<std::size_t>(k.size() + 2, 10));
      }
      out << "\n";
    }
  }
  if (!report.timings.empty()) {
    out << "\n" << pad("mode", 8) << pad("epochs", 8) << "Time(s)\n";
    for (const auto& t : report.timings) {
      out << pad(t.mode, 8) << pad(std::to_string(t.epochs), 8) << fixed(t.seconds, 3) << "\n";
    }
  }
  for (const auto& n : report.notes) out << "\n" << n;
  if (!report.notes.empty()) out << "\n";
  return out.str();
}

void emit_report(const Report& report, const std::filesystem::path& stem) {
  std::error_code ec;
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path(), ec);
  if (ec) throw IoError("cannot create report directory " + stem.parent_path().string() + ": " + ec.message());
  for (auto [fmt, ext] : {std::pair{ReportFormat::kJson, ".json"}, std::pair{ReportFormat::kText, ".txt"}}) {
    auto path = stem;
    path += ext;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write report " + path.string());
    out << render(report, fmt);
    if (!out) throw IoError("write failed for report " + path.string());
  }
}

}  // namespace lsgc::metrics

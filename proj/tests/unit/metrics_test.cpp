#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lsgc/errors.hpp"
#include "lsgc/metrics.hpp"
#include "lsgc/runner.hpp"

using namespace lsgc;
using namespace lsgc::metrics;

namespace {

Confusion make(std::uint64_t tp, std::uint64_t tn, std::uint64_t fp, std::uint64_t fn) {
  Confusion c;
  c.tp = tp;
  c.tn = tn;
  c.fp = fp;
  c.fn = fn;
  return c;
}

Report sample_report() {
  Report r;
  r.title = "sample";
  r.results.push_back({"easy", "cls", make(3, 2, 1, 2), {{"seed", "1"}}});
  r.results.push_back({"hard", "gen", make(1, 1, 1, 1), {}});
  r.timings.push_back({"gen", 33.72, 5});
  r.timings.push_back({"cls", 14.34, 5});
  r.provenance["config_hash"] = "abc";
  r.notes.push_back("note");
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Confusion, HandCases) {
  const std::vector<Label> truth{Label::kStego, Label::kStego, Label::kStego, Label::kStego,
                                 Label::kCover, Label::kCover, Label::kCover, Label::kCover};
  EXPECT_EQ(confusion(std::span<const Label>(truth), truth), make(4, 4, 0, 0));
  const std::vector<Label> all_stego(8, Label::kStego);
  EXPECT_EQ(confusion(std::span<const Label>(all_stego), truth), make(4, 0, 4, 0));
  const std::vector<Verdict> one_bad{Verdict::kUnparseable};
  const std::vector<Label> one_stego{Label::kStego};
  EXPECT_EQ(confusion(std::span<const Verdict>(one_bad), one_stego), make(0, 0, 0, 1));
  const std::vector<Label> one_cover{Label::kCover};
  EXPECT_EQ(confusion(std::span<const Verdict>(one_bad), one_cover), make(0, 0, 1, 0));
  EXPECT_THROW(confusion(std::span<const Label>(truth), one_stego), ContractError);
}

TEST(Scores, HandValues) {
  const auto c = make(3, 2, 1, 2);
  EXPECT_DOUBLE_EQ(accuracy(c), 0.625);
  EXPECT_DOUBLE_EQ(precision(c), 0.75);
  EXPECT_DOUBLE_EQ(recall(c), 0.6);
  EXPECT_NEAR(f1(c), 2 * 0.45 / 1.35, 1e-15);
  EXPECT_EQ(percent(f1(c)), "66.67");
  EXPECT_DOUBLE_EQ(accuracy(make(2, 2, 0, 0)), 1.0);
  EXPECT_DOUBLE_EQ(accuracy(make(0, 0, 2, 2)), 0.0);
  EXPECT_DOUBLE_EQ(f1(make(2, 2, 0, 0)), 1.0);
  EXPECT_DOUBLE_EQ(f1(make(0, 3, 0, 2)), 0.0);
  EXPECT_DOUBLE_EQ(f1(make(0, 0, 3, 0)), 0.0);
  EXPECT_THROW(accuracy(Confusion{}), ContractError);
  EXPECT_THROW(f1(Confusion{}), ContractError);
}

TEST(Scores, AgreeWithBruteForceRecount) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 50;
    std::vector<Verdict> preds(n);
    std::vector<Label> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      preds[i] = static_cast<Verdict>(rng() % 3);
      labels[i] = static_cast<Label>(rng() % 2);
    }
    const auto c = confusion(std::span<const Verdict>(preds), labels);
    EXPECT_EQ(c.total(), n);
    double correct = 0, tp = 0, pp = 0, ap = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool truth = labels[i] == Label::kStego;
      // Unparseable means the opposite of the truth.
      const bool said_stego = preds[i] == Verdict::kUnparseable ? !truth : preds[i] == Verdict::kStego;
      const bool right = said_stego == truth;
      correct += right;
      tp += truth && said_stego;
      pp += said_stego;
      ap += truth;
    }
    EXPECT_DOUBLE_EQ(accuracy(c), correct / static_cast<double>(n));
    const double p = pp ? tp / pp : 0.0, r = ap ? tp / ap : 0.0;
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    EXPECT_NEAR(f1(c), f, 1e-12);
    EXPECT_GE(f1(c), 0.0);
    EXPECT_LE(f1(c), 1.0);
  }
}

TEST(Format, PercentAndReduction) {
  EXPECT_EQ(percent(0.625), "62.50");
  EXPECT_EQ(percent(1.0), "100.00");
  EXPECT_EQ(percent(0.0), "0.00");
  const double red = reduction(33.72, 14.34);
  EXPECT_NEAR(red * 100, 57.5, 0.1);
  EXPECT_EQ(percent(red), "57.47");
  EXPECT_DOUBLE_EQ(reduction(10, 10), 0.0);
}

TEST(Format, SpreadIsMeanPlusMinusHalfRange) {
  const std::vector<double> v{0.60, 0.65, 0.625};
  const auto s = spread(v);
  EXPECT_NEAR(s.mean, 0.625, 1e-15);
  EXPECT_DOUBLE_EQ(s.min, 0.60);
  EXPECT_DOUBLE_EQ(s.max, 0.65);
  EXPECT_EQ(s.n, 3u);
  EXPECT_EQ(s.render_percent(), "62.50 ± 2.50");
  EXPECT_THROW(spread(std::vector<double>{}), ContractError);
}

TEST(Report, DeterministicRenderingAndTraceableNumbers) {
  const auto r = sample_report();
  EXPECT_EQ(render(r, ReportFormat::kJson), render(sample_report(), ReportFormat::kJson));
  EXPECT_EQ(render(r, ReportFormat::kText), render(sample_report(), ReportFormat::kText));
  const auto j = nlohmann::json::parse(render(r, ReportFormat::kJson));
  const auto& row = j["results"][0];
  EXPECT_EQ(row["acc"], "62.50");
  EXPECT_EQ(row["f1"], "66.67");
  EXPECT_EQ(row["tp"], 3);
  EXPECT_EQ(row["fn"], 2);
  EXPECT_EQ(j["results"][1]["dataset"], "hard");
  const auto text = render(r, ReportFormat::kText);
  EXPECT_NE(text.find("62.50"), std::string::npos);
  EXPECT_NE(text.find("33.720"), std::string::npos);
}

TEST(Report, EmitWritesBothFormatsByteIdentically) {
  const auto dir = std::filesystem::temp_directory_path() / "lsgc_metrics_emit";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  emit_report(sample_report(), dir / "a");
  emit_report(sample_report(), dir / "b");
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
  EXPECT_EQ(slurp(dir / "a.txt"), slurp(dir / "b.txt"));
  std::ofstream(dir / "plain") << "not a directory";
  EXPECT_THROW(emit_report(sample_report(), dir / "plain" / "x"), IoError);
}

TEST(Report, ReferenceTimingLineCarriesReduction) {
  const auto line = runner::reference_timing_line();
  EXPECT_NE(line.find("33.72"), std::string::npos);
  EXPECT_NE(line.find("14.34"), std::string::npos);
  EXPECT_NE(line.find("57.47%"), std::string::npos);
}

TEST(Report, AblationTableHasRankRowsAndModeColumns) {
  std::vector<runner::AblationRow> rows{{2, Mode::kGeneration, 1024, make(1, 1, 0, 0)},
                                        {2, Mode::kClassification, 1154, make(2, 0, 0, 0)},
                                        {4, Mode::kGeneration, 2048, make(0, 1, 1, 0)},
                                        {4, Mode::kClassification, 2178, make(1, 1, 0, 0)}};
  const auto table = runner::ablation_table(rows);
  std::istringstream in(table);
  std::string header, r2, r4;
  std::getline(in, header);
  std::getline(in, r2);
  std::getline(in, r4);
  EXPECT_NE(header.find("gen Acc"), std::string::npos);
  EXPECT_NE(header.find("cls F1"), std::string::npos);
  EXPECT_EQ(r2.rfind("2 ", 0), 0u);
  EXPECT_NE(r2.find("1154"), std::string::npos);
  EXPECT_EQ(r4.rfind("4 ", 0), 0u);
  EXPECT_NE(r4.find("2048"), std::string::npos);
}

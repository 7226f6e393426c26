#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rfsep/eval.hpp"

using namespace rfsep;
using namespace rfsep::eval;

namespace {

BerCurve curve(std::vector<std::pair<double, double>> pts, std::size_t n_bits = 100000) {
  BerCurve c;
  c.label = "c";
  for (auto [s, b] : pts) {
    c.points.push_back({s, b, n_bits, static_cast<std::size_t>(std::llround(b * static_cast<double>(n_bits)))});
  }
  return c;
}

std::vector<datagen::MixtureExample> level_set(int per_level, datagen::Split split = datagen::Split::test) {
  datagen::DatasetSpec s;
  s.n_segments = per_level;
  s.examples_per_segment = 11;
  s.split = split;
  s.master_seed = 21;
  return datagen::synthesize_dataset(s);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(SinrAtTarget, LogLinearMidpoint) {
  const auto c = curve({{5.0, 1e-2}, {10.0, 1e-4}});
  EXPECT_NEAR(*sinr_at_target_ber(c, 1e-3), 7.5, 1e-12);
}

TEST(SinrAtTarget, NotReachedAndExactHit) {
  EXPECT_FALSE(sinr_at_target_ber(curve({{0, 0.3}, {5, 0.1}, {10, 0.02}}), 1e-3).has_value());
  EXPECT_EQ(*sinr_at_target_ber(curve({{0, 0.3}, {5, 1e-3}, {10, 1e-5}}), 1e-3), 5.0);
  EXPECT_EQ(*sinr_at_target_ber(curve({{0, 1e-4}, {5, 1e-5}}), 1e-3), 0.0);
}

TEST(SinrAtTarget, ZeroBerClampedForInterpolationOnly) {
  // Second point has zero errors in 1000 bits: treated as 1/2000 for the log.
  const auto c = curve({{0.0, 1e-2}, {10.0, 0.0}}, 1000);
  const double expect = 10.0 * (std::log10(1e-3) - std::log10(1e-2)) / (std::log10(5e-4) - std::log10(1e-2));
  EXPECT_NEAR(*sinr_at_target_ber(c, 1e-3), expect, 1e-12);
  EXPECT_EQ(c.points[1].ber, 0.0);
}

TEST(SinrAtTarget, MonotoneInTarget) {
  const auto c = curve({{-15, 0.4}, {-12, 0.3}, {-9, 0.2}, {-6, 0.08}, {-3, 0.02}, {0, 4e-3},
                        {3, 6e-4}, {6, 5e-5}, {9, 1e-5}, {12, 0.0}, {15, 0.0}});
  double previous = INFINITY;
  for (double target = 1e-5; target < 0.5; target *= 1.3) {
    const auto s = sinr_at_target_ber(c, target);
    ASSERT_TRUE(s.has_value());
    EXPECT_LE(*s, previous + 1e-12) << "target " << target;
    previous = *s;
  }
}

TEST(SinrAtTarget, Errors) {
  EXPECT_THROW(sinr_at_target_ber(curve({{0, 0.1}}), 1e-3), Error);
  EXPECT_THROW(sinr_at_target_ber(curve({{0, 0.1}, {3, 0.01}}), 0.0), Error);
}

TEST(PercentImprovement, HeadlineFigures) {
  EXPECT_NEAR(percent_improvement(15.0, 10.0), 33.33, 0.01);
  EXPECT_NEAR(percent_improvement(17.0, 7.0), 58.82, 0.01);
  EXPECT_EQ(percent_improvement(12.0, 12.0), 0.0);
}

TEST(PercentImprovement, SignFollowsDifference) {
  for (double a : {0.5, 3.0, 17.0}) {
    for (double b : {-4.0, 0.0, 0.5, 3.0, 20.0}) {
      const double p = percent_improvement(a, b);
      EXPECT_EQ(p > 0, a > b);
      EXPECT_EQ(p < 0, a < b);
    }
  }
  EXPECT_THROW(percent_improvement(0.0, 1.0), Error);
  EXPECT_THROW(percent_improvement(-3.0, -5.0), Error);
}

TEST(Compare, SummaryCarriesImprovement) {
  const auto base = curve({{10, 1e-2}, {20, 1e-4}});   // crosses 1e-3 at 15 dB
  const auto cand = curve({{5, 1e-2}, {15, 1e-4}});    // crosses at 10 dB
  const auto j = to_json(compare(base, cand, 1e-3));
  EXPECT_NEAR(j.at("baseline_sinr_db").get<double>(), 15.0, 1e-12);
  EXPECT_NEAR(j.at("candidate_sinr_db").get<double>(), 10.0, 1e-12);
  EXPECT_NEAR(j.at("improvement_pct").get<double>(), 33.33, 0.01);
  EXPECT_TRUE(to_json(compare(base, curve({{5, 0.5}, {15, 0.2}}), 1e-3)).at("improvement_pct").is_null());
}

TEST(Evaluate, OracleIsPerfectAndBookkeepingCounts) {
  const auto set = level_set(2);
  const auto r = evaluate(oracle_separator(), set, "oracle");
  ASSERT_EQ(r.ber.points.size(), 11u);
  for (std::size_t i = 0; i < 11; ++i) {
    EXPECT_EQ(r.ber.points[i].ber, 0.0);
    EXPECT_EQ(r.mse.points[i].mse, 0.0);
    EXPECT_EQ(r.ber.points[i].n_bits, 2u * 480u);
    EXPECT_EQ(r.mse.points[i].n_examples, 2u);
    if (i > 0) {
      EXPECT_GT(r.ber.points[i].sinr_db, r.ber.points[i - 1].sinr_db);
    }
  }
}

TEST(Evaluate, NBitsForTenExamplesOf512Bits) {
  // OFDM-free synthetic check of the pooling: 10 examples x 512 bits.
  datagen::DatasetSpec s;
  s.n_segments = 1;
  s.examples_per_segment = 10;
  s.sinr_grid_db = {3.0};
  s.example_len = 256 * 16 + 256;  // 256 QPSK symbols
  const auto set = datagen::synthesize_dataset(s);
  ASSERT_EQ(set[0].bits.size(), 512u);
  const auto r = evaluate(null_separator(), set, "null");
  ASSERT_EQ(r.ber.points.size(), 1u);
  EXPECT_EQ(r.ber.points[0].n_bits, 5120u);
  EXPECT_EQ(r.ber.points[0].ber, static_cast<double>(r.ber.points[0].bit_errors) / 5120.0);
}

TEST(Evaluate, NullModelBerFallsWithSinr) {
  // >= 10^4 pooled bits per level: 21 examples x 480 bits.
  const auto r = evaluate(null_separator(), level_set(21), "null");
  const auto& p = r.ber.points;
  EXPECT_GE(p.front().n_bits, 10000u);
  EXPECT_GT(p.front().ber, p.back().ber);
  int inversions = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i].ber <= p[i - 1].ber) continue;
    // Tolerated: the high-SINR floor (< 10 pooled errors), or a difference
    // within binomial noise where the curve saturates at low SINR.
    const double var = p[i].ber * (1 - p[i].ber) / p[i].n_bits + p[i - 1].ber * (1 - p[i - 1].ber) / p[i - 1].n_bits;
    const bool noise = p[i].ber - p[i - 1].ber <= 3.0 * std::sqrt(var);
    EXPECT_TRUE(p[i].bit_errors < 10 || noise) << "inversion at " << p[i].sinr_db << " dB";
    if (p[i].bit_errors < 10) ++inversions;
  }
  EXPECT_LE(inversions, 1);
  for (std::size_t i = 1; i < r.mse.points.size(); ++i) EXPECT_LT(r.mse.points[i].mse, r.mse.points[i - 1].mse);
}

TEST(Evaluate, ThreadCountDoesNotChangeResults) {
  const auto set = level_set(2);
  const auto a = evaluate(null_separator(), set, "n", {}, 1), b = evaluate(null_separator(), set, "n", {}, 4);
  EXPECT_EQ(curve_csv(a.ber), curve_csv(b.ber));
  EXPECT_EQ(curve_csv(a.mse), curve_csv(b.mse));
}

TEST(Evaluate, EmptyLevelIsAnError) {
  const auto set = level_set(1);
  EXPECT_THROW(evaluate(null_separator(), set, "n", {-15, 0, 7.5}), Error);
  EXPECT_THROW(evaluate(null_separator(), {}, "n"), Error);
}

TEST(Report, CsvLinesAndRoundtrip) {
  const auto r = evaluate(null_separator(), level_set(1), "null");
  const auto text = curve_csv(r.ber);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 12);
  EXPECT_EQ(text.substr(0, text.find('\n')), "sinr_db,metric,n");
  const auto rows = parse_curve_csv(curve_csv(r.mse));
  ASSERT_EQ(rows.size(), 11u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].sinr_db, r.mse.points[i].sinr_db);
    EXPECT_NEAR(rows[i].metric, r.mse.points[i].mse, 1e-11 * r.mse.points[i].mse);
    EXPECT_EQ(rows[i].n, r.mse.points[i].n_examples);
  }
  EXPECT_THROW(parse_curve_csv("sinr,ber\n1,2\n"), Error);
}

TEST(Report, EmitWritesCsvAndSummary) {
  const auto dir = std::filesystem::temp_directory_path() / "rfsep_eval_report";
  std::filesystem::remove_all(dir);
  auto base = curve({{10, 1e-2}, {20, 1e-4}});
  base.label = "fixed dilation";
  auto cand = curve({{5, 1e-2}, {15, 1e-4}});
  cand.label = "learned";
  const auto files = emit_report({base, cand}, {}, {compare(base, cand, 1e-3)}, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "fixed_dilation_ber.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "learned_ber.csv"));
  const auto summary = parse_json(slurp(files.summary), "summary");
  EXPECT_NEAR(summary.at("comparisons")[0].at("improvement_pct").get<double>(), 33.333333, 1e-5);
  EXPECT_EQ(summary.at("curves").size(), 2u);
  EXPECT_THROW(emit_report({}, {}, {}, dir), Error);
}

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "orthoate/report.hpp"

using namespace orthoate;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "orthoate_test_report";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

EstimateRecord record(const std::string& dataset, const std::string& learner, EstimatorSpec spec,
                      std::vector<double> theta, std::optional<double> eps) {
  EstimateRecord rec;
  rec.dataset = dataset;
  rec.learner = learner;
  rec.report.estimator = spec;
  rec.report.theta = std::move(theta);
  rec.report.ate_pairwise = pairwise_ate(rec.report.theta);
  for (double t : rec.report.theta)
    if (std::isinf(t)) rec.report.diagnostics.infinite = true;
  rec.eps_ate = eps;
  return rec;
}

const EstimatorSpec kDr{EstimatorKind::dr, 0, 0}, kDml{EstimatorKind::dml, 0, 0}, kHo{EstimatorKind::higher_order, 2, 2};

}  // namespace

TEST(Numbers, FormatAndParse) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(kInf), "inf");
  EXPECT_EQ(format_number(-kInf), "-inf");
  EXPECT_EQ(format_number(std::nan("")), "nan");
  EXPECT_EQ(parse_number("inf"), kInf);
  EXPECT_TRUE(std::isnan(parse_number("nan")));
  EXPECT_THROW(parse_number("1.5x"), ParseError);
  for (double v : {1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.30000000000000004}) EXPECT_EQ(parse_number(format_number(v)), v);
}

TEST(EstimateReportFile, CsvRoundTrip) {
  std::vector<EstimateRecord> recs{record("a.csv", "lasso+lr", kHo, {1.0 / 3.0, 2.0, -7.125}, 0.0123456789),
                                   record("a.csv", "lasso+lr", kDml, {kInf, 1.0, 0.5}, kInf)};
  const std::string path = temp_file("est.csv");
  write_report(recs, path, ReportFormat::csv);
  const CsvTable t = read_csv_table(path);
  EXPECT_EQ(t.header.size(), 14u);
  ASSERT_EQ(t.rows.size(), 6u);
  for (std::size_t i = 0; i < 3; ++i) {
    const double v = t.number(i, "theta");
    EXPECT_LE(std::abs(v - recs[0].report.theta[i]), 1e-15 * std::max(1.0, std::abs(v)));
  }
  EXPECT_EQ(t.rows[3][t.column("theta")], "inf");
  EXPECT_EQ(t.rows[3][t.column("infinite")], "1");
  EXPECT_EQ(t.number(0, "eps_ate"), 0.0123456789);
  EXPECT_EQ(t.rows[0][t.column("schema_version")], "1");
  EXPECT_EQ(t.rows[0][t.column("estimator")], "ho(2,2)");
}

TEST(EstimateReportFile, JsonInfinitiesAreStrings) {
  std::vector<EstimateRecord> recs{record("d", "lasso+lr", kDml, {kInf, 1.0}, std::nullopt)};
  const auto j = nlohmann::json::parse(estimate_json(recs));
  EXPECT_EQ(j["schema_version"], 1);
  EXPECT_EQ(j["records"][0]["theta"][0], "inf");
  EXPECT_EQ(j["records"][0]["theta"][1], 1.0);
  EXPECT_EQ(j["records"][0]["ate_pairwise"][1][0], "-inf");
  EXPECT_TRUE(j["records"][0]["eps_ate"].is_null());
  EXPECT_EQ(j["records"][0]["diagnostics"]["infinite"], true);
}

TEST(EstimateReportFile, EmptyIsHeaderOnly) {
  EXPECT_EQ(estimate_csv({}), std::string(kEstimateCsvHeader) + "\n");
  const auto j = nlohmann::json::parse(estimate_json({}));
  EXPECT_TRUE(j["records"].empty());
}

TEST(EstimateReportFile, FreeTextCannotBreakColumns) {
  EstimateRecord rec = record("a,b.csv", "lasso+lr", kDr, {}, std::nullopt);
  rec.error = "bad, \"thing\"\nhappened";
  const std::string path = temp_file("err.csv");
  write_report({rec}, path, ReportFormat::csv);
  const CsvTable t = read_csv_table(path);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0][t.column("dataset")], "a,b.csv");
  EXPECT_EQ(t.rows[0][t.column("error")], "bad, \"thing\" happened");
}

TEST(Comparison, RelativeReductions) {
  std::vector<EstimateRecord> recs;
  for (const char* ds : {"d1", "d2"}) {
    recs.push_back(record(ds, "lasso+lr", kDr, {1, 0}, 0.4));
    recs.push_back(record(ds, "lasso+lr", kDml, {1, 0}, 0.5));
    recs.push_back(record(ds, "lasso+lr", kHo, {1, 0}, 0.2));
  }
  const ComparisonTable t = build_comparison(recs, false);
  EXPECT_EQ(t.estimators, (std::vector<std::string>{"dr", "dml", "ho(2,2)"}));
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_DOUBLE_EQ(*t.rows[0].r_dr, 0.5);
  EXPECT_DOUBLE_EQ(*t.rows[0].r_dml, 0.6);
  EXPECT_EQ(t.rows[0].n_datasets, 2u);
  const std::string text = render_comparison(t);
  EXPECT_NE(text.find("Model\\Estimator"), std::string::npos);
  EXPECT_NE(text.find("DML"), std::string::npos);
  EXPECT_NE(text.find("60.00%"), std::string::npos);
}

TEST(Comparison, InfiniteDmlGivesPlaceholderOrIsFiltered) {
  std::vector<EstimateRecord> recs{record("d1", "rf+rf", kDml, {kInf, 0}, kInf),
                                   record("d1", "rf+rf", kHo, {1, 0}, 0.3),
                                   record("d2", "rf+rf", kDml, {1, 0}, 0.6),
                                   record("d2", "rf+rf", kHo, {1, 0}, 0.1)};
  const ComparisonTable keep = build_comparison(recs, false);
  EXPECT_TRUE(std::isinf(keep.rows[0].eps[0]));
  EXPECT_FALSE(keep.rows[0].r_dml.has_value());
  EXPECT_FALSE(keep.rows[0].r_dr.has_value());  // no DR column at all
  EXPECT_EQ(keep.rows[0].n_dml_infinite, 1u);
  EXPECT_NE(comparison_csv(keep).find(",\\,\\,"), std::string::npos);
  EXPECT_NE(comparison_csv(keep).find("\"ho(2,2)\""), std::string::npos);
  EXPECT_EQ(nlohmann::json::parse(comparison_json(keep))["rows"][0]["R_DML"], "\\");

  const ComparisonTable filt = build_comparison(recs, true);
  EXPECT_EQ(filt.rows[0].n_datasets, 1u);
  EXPECT_DOUBLE_EQ(filt.rows[0].eps[0], 0.6);
  EXPECT_DOUBLE_EQ(*filt.rows[0].r_dml, (0.6 - 0.1) / 0.6);
  EXPECT_NE(render_comparison(filt).find("1 dropped"), std::string::npos);
}

TEST(SweepFiles, ShapeAndSummary) {
  SweepReport rep;
  rep.kind = SweepKind::samplesize;
  for (int m = 0; m < 3; ++m) rep.rows.push_back({1000, "lasso+lr", "dml", m, m == 2 ? kInf : 0.1 * (m + 1), m == 2, ""});
  rep.rows.push_back({1000, "lasso+lr", "ho(2,2)", 0, std::nan(""), false, "EmptyFold"});
  const std::string csv = temp_file("sweep.csv"), js = temp_file("sweep.json");
  write_sweep(rep, csv, js);
  const CsvTable t = read_csv_table(csv);
  EXPECT_EQ(t.header.size(), 8u);
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_EQ(t.rows[2][t.column("eps_ate")], "inf");
  EXPECT_EQ(t.rows[0][t.column("sweep")], "samplesize");
  std::ifstream in(js);
  const auto j = nlohmann::json::parse(in);
  ASSERT_EQ(j["cells"].size(), 2u);
  EXPECT_EQ(j["cells"][0]["infinite"], 1);
  EXPECT_EQ(j["cells"][0]["median_eps_ate"], 0.2);
  EXPECT_EQ(j["cells"][0]["mean_eps_ate"], "inf");
  EXPECT_EQ(j["cells"][1]["failed"], 1);
}

TEST(Formats, Parse) {
  EXPECT_EQ(parse_report_format("json"), ReportFormat::json);
  EXPECT_THROW(parse_report_format("xml"), ConfigError);
}

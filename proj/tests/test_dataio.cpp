#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

#include "augreg/csv.hpp"
#include "augreg/pipeline.hpp"
#include "augreg/report.hpp"
#include "augreg/simulate.hpp"
#include "augreg/spec_json.hpp"

namespace augreg {
namespace {

AnalysisSpec one_predictor_spec() {
  AnalysisSpec spec;
  spec.family = Family::Linear;
  spec.outcome = {"y", "y_s", "", "", false};
  spec.predictors = {{"x", {"x_s"}, false}};
  spec.validation_column = "v";
  return spec;
}

const char* kTenRows =
    "v,y,y_s,x,x_s\n"
    "1,1.0,1.1,0.5,0.4\n"
    "0,NA,2.0,NA,0.9\n"
    "1,3.0,2.9,1.5,1.4\n"
    "0,,0.7,,0.1\n"
    "1,2.0,2.2,1.0,1.2\n"
    "0,NA,1.3,NA,0.6\n"
    "0,NA,1.9,NA,0.8\n"
    "0,NA,2.4,NA,1.1\n"
    "0,NA,0.2,NA,-0.3\n"
    "0,NA,1.0,NA,0.3\n";

template <typename F>
void expect_error(ErrorKind kind, F&& f, const std::string& fragment = "") {
  try {
    f();
    FAIL() << "expected " << to_string(kind);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
    if (!fragment.empty()) EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

bool same_values(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (Index i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) != std::isnan(b[i])) return false;
    if (!std::isnan(a[i]) && a[i] != b[i]) return false;
  }
  return true;
}

bool same_values(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Index j = 0; j < a.cols(); ++j) {
    if (!same_values(Vector(a.col(j)), Vector(b.col(j)))) return false;
  }
  return true;
}

void expect_same_study(const StudyData& a, const StudyData& b) {
  EXPECT_EQ(a.validated, b.validated);
  EXPECT_TRUE(same_values(a.ref_outcome, b.ref_outcome));
  EXPECT_TRUE(same_values(a.sur_outcome, b.sur_outcome));
  EXPECT_TRUE(same_values(a.ref_event, b.ref_event));
  EXPECT_TRUE(same_values(a.sur_event, b.sur_event));
  EXPECT_TRUE(same_values(a.ref_predictors, b.ref_predictors));
  EXPECT_TRUE(same_values(a.sur_predictors, b.sur_predictors));
}

TEST(Csv, QuotingAndLineEnds) {
  const auto t = parse_csv("a,b,c\r\n\"x, y\",\"he said \"\"hi\"\"\",\"two\nlines\"\r\n1,,3\n\n");
  ASSERT_EQ(t.header, (std::vector<std::string>{"a", "b", "c"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][0], "x, y");
  EXPECT_EQ(t.rows[0][1], "he said \"hi\"");
  EXPECT_EQ(t.rows[0][2], "two\nlines");
  EXPECT_EQ(t.rows[1][1], "");
}

TEST(Csv, NoTrailingNewline) {
  const auto t = parse_csv("a,b\n1,2");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0][1], "2");
}

TEST(Csv, MalformedInput) {
  expect_error(ErrorKind::Io, [] { parse_csv("a,b\n1\n"); }, "data row 1");
  expect_error(ErrorKind::Io, [] { parse_csv("a\n\"open\n"); });
  expect_error(ErrorKind::Io, [] { parse_csv(""); });
  expect_error(ErrorKind::Io, [] { parse_csv("a\nx\"y\n"); });
}

TEST(Csv, EscapeRoundTrip) {
  const std::vector<std::string> fields{"plain", "com,ma", "quo\"te", "new\nline", ""};
  std::ostringstream out;
  write_csv_row(out, {"h1", "h2", "h3", "h4", "h5"});
  write_csv_row(out, fields);
  EXPECT_EQ(parse_csv(out.str()).rows.at(0), fields);
}

TEST(Csv, ShortestRoundTripFormatting) {
  CounterRng rng(42);
  for (int i = 0; i < 20000; ++i) {
    double v;
    const std::uint64_t bits = rng.next();
    std::memcpy(&v, &bits, sizeof v);
    if (!std::isfinite(v)) continue;
    const std::string s = format_double(v);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    EXPECT_EQ(std::memcmp(&v, &back, sizeof v), 0) << s;
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(std::nan("")), "NA");
}

TEST(LoadStudy, TenRowsThreeValidated) {
  const auto result = load_study(parse_csv(kTenRows), one_predictor_spec());
  EXPECT_EQ(result.data.n_full(), 10);
  EXPECT_EQ(result.data.n_val(), 3);
  EXPECT_TRUE(result.warnings.empty());
  EXPECT_EQ(result.data.ref_predictors(2, 0), 1.5);
  EXPECT_TRUE(std::isnan(result.data.ref_outcome[1]));
  EXPECT_EQ(result.data.sur_predictors(3, 0), 0.1);
}

TEST(LoadStudy, MissingReferenceInValidationNamesTheCell) {
  std::string text = kTenRows;
  text.replace(text.find("3.0,2.9,1.5"), 11, "3.0,2.9,NA ");
  expect_error(ErrorKind::ReferenceMissingInValidation,
               [&] { load_study(parse_csv(text), one_predictor_spec()); }, "row 3, column 'x'");
}

TEST(LoadStudy, NonNumericCellNamesTheCell) {
  std::string text = kTenRows;
  text.replace(text.find("0.7"), 3, "abc");
  expect_error(ErrorKind::NonNumericCell, [&] { load_study(parse_csv(text), one_predictor_spec()); },
               "row 4, column 'y_s'");
}

TEST(LoadStudy, ReferenceOutsideValidationWarnsOrFails) {
  std::string text = kTenRows;
  text.replace(text.find("0,NA,2.0"), 8, "0,5.0,2.0");
  const auto result = load_study(parse_csv(text), one_predictor_spec());
  ASSERT_EQ(result.warnings.size(), 1u);
  EXPECT_TRUE(std::isnan(result.data.ref_outcome[1]));
  LoadOptions strict;
  strict.strict_references = true;
  expect_error(ErrorKind::ReferencePresentOutsideValidation,
               [&] { load_study(parse_csv(text), one_predictor_spec(), strict); }, "row 2, column 'y'");
}

TEST(LoadStudy, MissingColumn) {
  auto spec = one_predictor_spec();
  spec.predictors[0].surrogates = {"x_other"};
  expect_error(ErrorKind::MissingColumn, [&] { load_study(parse_csv(kTenRows), spec); }, "x_other");
}

TEST(LoadStudy, MissingSurrogateValue) {
  std::string text = kTenRows;
  text.replace(text.find(",0.7,"), 5, ",NA,");
  expect_error(ErrorKind::InvalidStudy, [&] { load_study(parse_csv(text), one_predictor_spec()); }, "y_s");
}

TEST(LoadStudy, BooleanFlagsAndStringClusters) {
  const char* text =
      "v,y,y_s,x,x_s,id\n"
      "true,1,1,1,1,a\n"
      "FALSE,NA,2,NA,2,b\n"
      "1,3,3,2,2,a\n"
      "0,NA,4,NA,1,c\n";
  auto spec = one_predictor_spec();
  spec.cluster_column = "id";
  const auto d = load_study(parse_csv(text), spec).data;
  EXPECT_EQ(d.validated, (std::vector<std::uint8_t>{1, 0, 1, 0}));
  EXPECT_EQ(d.cluster, (std::vector<std::int64_t>{0, 1, 0, 2}));
  expect_error(ErrorKind::NonNumericCell, [&] { load_study(parse_csv("v,y,y_s,x,x_s\nyes,1,1,1,1\n"), spec); });
}

TEST(LoadStudy, PerfectPredictorSharesItsColumn) {
  const char* text =
      "v,y,y_s,x\n"
      "1,1,1.1,0.5\n"
      "0,NA,2,0.7\n";
  auto spec = one_predictor_spec();
  spec.predictors = {{"x", {"x"}, true}};
  const auto d = load_study(parse_csv(text), spec).data;
  EXPECT_EQ(d.ref_predictors(0, 0), 0.5);
  EXPECT_TRUE(std::isnan(d.ref_predictors(1, 0)));
  EXPECT_EQ(d.sur_predictors(1, 0), 0.7);
}

class RoundTrip : public ::testing::TestWithParam<const char*> {};

TEST_P(RoundTrip, CsvPreservesStudyExactly) {
  ScenarioSpec s = ScenarioSpec::named(GetParam());
  s.n_full = 600;
  s.n_val = 80;
  s.seed = 17;
  const auto study = generate_replicate(s, 0);
  std::ostringstream out;
  write_study_csv(out, study.data, study.spec);
  const auto loaded = load_study(parse_csv(out.str()), study.spec);
  EXPECT_TRUE(loaded.warnings.empty());
  expect_same_study(study.data, loaded.data);
}

INSTANTIATE_TEST_SUITE_P(Scenarios, RoundTrip, ::testing::Values("example1", "example2", "example3", "example4"));

TEST(RoundTrip, Example1EstimateSurvivesCsv) {
  ScenarioSpec s = ScenarioSpec::named("example1");
  s.n_full = 1000;
  s.n_val = 200;
  s.seed = 5;
  auto study = generate_replicate(s, 0);
  study.spec.plan.groups = 50;
  std::ostringstream out;
  write_study_csv(out, study.data, study.spec);
  const auto reloaded = load_study(parse_csv(out.str()), study.spec).data;
  const auto a = run_analysis(study.data, study.spec);
  const auto b = run_analysis(reloaded, study.spec);
  EXPECT_LT((a.estimate.beta_aug - b.estimate.beta_aug).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SpecJson, RoundTripsEveryScenarioSpec) {
  for (const char* name : {"example1", "example2", "example3", "example4"}) {
    AnalysisSpec spec = ScenarioSpec::named(name).analysis_spec();
    spec.plan.method = ResampleMethod::Bootstrap;
    spec.plan.replicates = 123;
    spec.plan.seed = 99;
    spec.alpha = 0.1;
    const Json j = spec_to_json(spec);
    const AnalysisSpec back = spec_from_json(j);
    EXPECT_EQ(spec_to_json(back), j) << name;
    EXPECT_EQ(back.p(), spec.p());
    EXPECT_EQ(back.q(), spec.q());
    EXPECT_EQ(back.plan.replicates, 123);
  }
}

TEST(SpecJson, CoxOutcomeNeedsTimeAndEvent) {
  Json j = spec_to_json(ScenarioSpec::named("example2").analysis_spec());
  j["outcome"]["reference"] = "time";
  expect_error(ErrorKind::InvalidArgument, [&] { spec_from_json(j); }, "outcome.reference");
  j = spec_to_json(ScenarioSpec::named("example2").analysis_spec());
  j["outcome"]["surrogate"].erase("event");
  expect_error(ErrorKind::InvalidArgument, [&] { spec_from_json(j); }, "event");
}

TEST(SpecJson, RejectsMalformedSpecs) {
  const Json good = spec_to_json(one_predictor_spec());
  auto with = [&](auto edit) {
    Json j = good;
    edit(j);
    return j;
  };
  expect_error(ErrorKind::InvalidArgument, [&] { spec_from_json(with([](Json& j) { j["schema_version"] = 2; })); },
               "schema_version");
  expect_error(ErrorKind::InvalidArgument, [&] { spec_from_json(with([](Json& j) { j["family"] = "probit"; })); },
               "family");
  expect_error(ErrorKind::InvalidArgument, [&] { spec_from_json(with([](Json& j) { j["colour"] = 1; })); },
               "unknown key 'colour'");
  expect_error(ErrorKind::InvalidArgument,
               [&] { spec_from_json(with([](Json& j) { j["predictors"][0]["surrogates"][0] = "y_s"; })); },
               "more than once");
  expect_error(ErrorKind::InvalidArgument, [&] { spec_from_json(with([](Json& j) { j["alpha"] = 1.5; })); }, "alpha");
  expect_error(ErrorKind::InvalidArgument,
               [&] { spec_from_json(with([](Json& j) { j["resample"]["method"] = "permutation"; })); });
}

TEST(Report, JsonCarriesAllTablesAndNullsForNaN) {
  ScenarioSpec s = ScenarioSpec::named("example4");
  s.n_full = 200;
  s.n_val = 40;
  auto study = generate_replicate(s, 0);
  study.spec.plan.groups = 20;
  const auto result = run_analysis(study.data, study.spec);
  const Json j = fit_report_json(result, study.data, study.spec, {});
  for (const char* t : {"beta_aug", "beta_val", "gamma_ful"}) EXPECT_EQ(j["tables"][t].size(), 5u);
  EXPECT_EQ(j["tables"]["beta_aug"][0]["term"], "(Intercept)");
  EXPECT_EQ(j["tables"]["beta_aug"][0]["estimate"].get<double>(), result.estimate.beta_aug[0]);

  WaldTable degenerate = wald_table(Vector::Ones(1), Matrix::Zero(1, 1), 0.05);
  const auto rows = wald_table_json(degenerate);
  EXPECT_TRUE(rows[0]["z"].is_null());
  EXPECT_NE(rows.dump().find("\"p\":null"), std::string::npos);

  std::ostringstream text;
  render_text(text, j);
  EXPECT_NE(text.str().find("beta_aug"), std::string::npos);
  EXPECT_NE(text.str().find("k_condition"), std::string::npos);
}

TEST(Report, CsvFormHasEveryRowAndDiagnostics) {
  ScenarioSpec s = ScenarioSpec::named("example4");
  s.n_full = 200;
  s.n_val = 40;
  auto study = generate_replicate(s, 0);
  study.spec.plan.groups = 20;
  std::ostringstream out;
  write_fit_report_csv(out, run_analysis(study.data, study.spec));
  const auto t = parse_csv(out.str());
  EXPECT_EQ(t.header.size(), 9u);
  EXPECT_EQ(t.rows.size(), 15u + 6u);
  EXPECT_EQ(t.rows.back()[0], "diagnostics");
}

}  // namespace
}  // namespace augreg

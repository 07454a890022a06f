#pragma once

// Fit reports and simulation summaries as JSON, CSV and plain-text tables.

#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>

#include "augreg/csv.hpp"
#include "augreg/pipeline.hpp"
#include "augreg/simulate.hpp"
#include "augreg/spec_json.hpp"
#include "augreg/version.hpp"

namespace augreg {

inline constexpr int kReportSchemaVersion = 1;

/// Non-finite values (z and p under a zero standard error, an infinite
/// condition number) are written as null.
inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json wald_table_json(const WaldTable& table) {
  Json rows = Json::array();
  for (const auto& r : table) {
    rows.push_back({{"term", r.term},
                    {"estimate", r.estimate},
                    {"se", r.se},
                    {"lcl", r.lcl},
                    {"ucl", r.ucl},
                    {"z", number_or_null(r.z)},
                    {"p", number_or_null(r.p)},
                    {"degenerate_se", r.degenerate_se}});
  }
  return rows;
}

inline Json plan_json(const ResamplePlan& plan) {
  Json j{{"method", std::string(to_string(plan.method))}};
  if (plan.method == ResampleMethod::Jackknife) {
    j["groups"] = plan.groups;
  } else {
    j["replicates"] = plan.replicates;
    j["seed"] = plan.seed;
  }
  return j;
}

struct ReportInputs {
  std::string data_sha256;
  std::string spec_sha256;
  std::vector<std::string> warnings;
};

inline Json fit_report_json(const AnalysisResult& result, const StudyData& data, const AnalysisSpec& spec,
                            const ReportInputs& inputs) {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["kind"] = "fit_report";
  j["family"] = std::string(to_string(spec.family));
  j["n_full"] = data.n_full();
  j["n_val"] = data.n_val();
  j["p"] = spec.p();
  j["q"] = spec.q();
  j["alpha"] = spec.alpha;
  j["tables"] = {{"beta_aug", wald_table_json(result.estimate.aug)},
                 {"beta_val", wald_table_json(result.estimate.val)},
                 {"gamma_ful", wald_table_json(result.estimate.ful)}};
  const auto& d = result.estimate.diagnostics;
  j["diagnostics"] = {{"k_condition", number_or_null(d.k_condition)},
                      {"pseudo_inverse", d.pseudo_inverse},
                      {"psd_repair", d.psd_repair},
                      {"no_augmentation", d.no_augmentation},
                      {"replicates_used", result.cov.replicates},
                      {"replicates_dropped", result.cov.dropped},
                      {"warnings", inputs.warnings}};
  j["provenance"] = {{"tool", "augreg"},
                     {"version", kVersion},
                     {"plan", plan_json(spec.plan)},
                     {"ties", std::string(to_string(spec.ties))},
                     {"data_sha256", inputs.data_sha256},
                     {"spec_sha256", inputs.spec_sha256}};
  return j;
}

namespace detail {

inline std::string flag(bool b) { return b ? "1" : "0"; }

}  // namespace detail

/// One row per coefficient and table, then the diagnostics as
/// table = "diagnostics", term = name, estimate = value.
inline void write_fit_report_csv(std::ostream& out, const AnalysisResult& result) {
  write_csv_row(out, {"table", "term", "estimate", "se", "lcl", "ucl", "z", "p", "degenerate_se"});
  const std::pair<const char*, const WaldTable*> tables[] = {
      {"beta_aug", &result.estimate.aug}, {"beta_val", &result.estimate.val}, {"gamma_ful", &result.estimate.ful}};
  for (const auto& [name, table] : tables) {
    for (const auto& r : *table) {
      write_csv_row(out, {name, r.term, format_double(r.estimate), format_double(r.se), format_double(r.lcl),
                          format_double(r.ucl), format_double(r.z), format_double(r.p), detail::flag(r.degenerate_se)});
    }
  }
  const auto& d = result.estimate.diagnostics;
  auto diag = [&](const char* name, std::string value) {
    write_csv_row(out, {"diagnostics", name, std::move(value), "NA", "NA", "NA", "NA", "NA", "0"});
  };
  diag("k_condition", std::isinf(d.k_condition) ? "Inf" : format_double(d.k_condition));
  diag("pseudo_inverse", detail::flag(d.pseudo_inverse));
  diag("psd_repair", detail::flag(d.psd_repair));
  diag("no_augmentation", detail::flag(d.no_augmentation));
  diag("replicates_used", std::to_string(result.cov.replicates));
  diag("replicates_dropped", std::to_string(result.cov.dropped));
}

inline Json summary_json(const ReplicationSummary& summary, const ScenarioSpec& scenario, const ResamplePlan& plan) {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["kind"] = "simulation_summary";
  j["scenario"] = summary.scenario;
  j["family"] = std::string(to_string(summary.family));
  j["n_full"] = scenario.n_full;
  j["n_val"] = scenario.n_val;
  j["seed"] = scenario.seed;
  j["replicates"] = summary.replicates;
  j["failures"] = summary.failures;
  j["alpha"] = summary.alpha;
  j["plan"] = plan_json(plan);
  j["version"] = kVersion;
  Json rows = Json::array();
  for (const auto& est : summary.estimators) {
    for (const auto& c : est.coefficients) {
      rows.push_back({{"estimator", std::string(to_string(est.estimator))},
                      {"term", c.term},
                      {"truth", c.truth},
                      {"mean", c.mean},
                      {"bias", c.bias},
                      {"sd", c.sd},
                      {"rmse", c.rmse},
                      {"coverage", c.coverage},
                      {"ci_halfwidth", c.ci_halfwidth}});
    }
  }
  j["rows"] = rows;
  return j;
}

/// Long format: one row per scenario x estimator x coefficient.
inline void write_summary_csv(std::ostream& out, const ReplicationSummary& summary) {
  write_csv_row(out, {"scenario", "estimator", "term", "truth", "mean", "bias", "sd", "rmse", "coverage",
                      "ci_halfwidth", "replicates", "failures"});
  for (const auto& est : summary.estimators) {
    for (const auto& c : est.coefficients) {
      write_csv_row(out, {summary.scenario, std::string(to_string(est.estimator)), c.term, format_double(c.truth),
                          format_double(c.mean), format_double(c.bias), format_double(c.sd), format_double(c.rmse),
                          format_double(c.coverage), format_double(c.ci_halfwidth),
                          std::to_string(summary.replicates), std::to_string(summary.failures)});
    }
  }
}

/// Every replicate's estimates; failed replicates get a single row with the error.
inline void write_replicate_dump(std::ostream& out, const ReplicationSummary& summary) {
  write_csv_row(out, {"replicate", "status", "estimator", "term", "estimate", "se", "lcl", "ucl", "error"});
  for (std::size_t r = 0; r < summary.records.size(); ++r) {
    const auto& rec = summary.records[r];
    if (!rec.ok) {
      write_csv_row(out, {std::to_string(r), "failed", "", "", "NA", "NA", "NA", "NA", rec.error});
      continue;
    }
    for (std::size_t k = 0; k < kEstimators.size(); ++k) {
      for (const auto& row : rec.tables[k]) {
        write_csv_row(out, {std::to_string(r), "ok", std::string(to_string(kEstimators[k])), row.term,
                            format_double(row.estimate), format_double(row.se), format_double(row.lcl),
                            format_double(row.ucl), ""});
      }
    }
  }
}

namespace detail {

inline std::string sig6(const Json& v) {
  if (v.is_null()) return "NA";
  if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
  if (v.is_number_integer()) return v.dump();
  if (!v.is_number()) return v.is_string() ? v.get<std::string>() : v.dump();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v.get<double>());
  return buf;
}

/// Left-aligned first column, right-aligned rest.
inline void print_table(std::ostream& out, const std::vector<std::string>& header,
                        const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      const std::string pad(width[c] - r[c].size(), ' ');
      out << (c ? "  " : "") << (c ? pad + r[c] : r[c] + pad);
    }
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

}  // namespace detail

/// Human-readable rendering of a fit report or a simulation summary (JSON
/// documents as written by the CLI). Numbers carry 6 significant digits.
inline void render_text(std::ostream& out, const Json& doc) {
  const auto kind = doc.value("kind", std::string());
  if (kind == "fit_report") {
    out << "family " << doc.at("family").get<std::string>() << ", n_full " << doc.at("n_full") << ", n_val "
        << doc.at("n_val") << ", alpha " << detail::sig6(doc.at("alpha")) << "\n";
    for (const char* name : {"beta_aug", "beta_val", "gamma_ful"}) {
      out << "\n" << name << "\n";
      std::vector<std::vector<std::string>> rows;
      for (const auto& r : doc.at("tables").at(name)) {
        rows.push_back({r.at("term").get<std::string>(), detail::sig6(r.at("estimate")), detail::sig6(r.at("se")),
                        detail::sig6(r.at("lcl")), detail::sig6(r.at("ucl")), detail::sig6(r.at("z")),
                        detail::sig6(r.at("p"))});
      }
      detail::print_table(out, {"term", "estimate", "se", "lcl", "ucl", "z", "p"}, rows);
    }
    out << "\ndiagnostics\n";
    for (const auto& [key, value] : doc.at("diagnostics").items()) {
      if (key == "warnings") {
        for (const auto& w : value) out << "  warning: " << w.get<std::string>() << "\n";
      } else {
        out << "  " << key << ": " << detail::sig6(value) << "\n";
      }
    }
  } else if (kind == "simulation_summary") {
    out << doc.at("scenario").get<std::string>() << " (" << doc.at("family").get<std::string>() << "), "
        << doc.at("replicates") << " replicates, " << doc.at("failures") << " failed, n_full " << doc.at("n_full")
        << ", n_val " << doc.at("n_val") << "\n";
    std::string current;
    std::vector<std::vector<std::string>> rows;
    auto flush = [&] {
      if (current.empty()) return;
      out << "\n" << current << "\n";
      detail::print_table(out, {"term", "truth", "mean", "bias", "sd", "rmse", "coverage", "ci_halfwidth"}, rows);
      rows.clear();
    };
    for (const auto& r : doc.at("rows")) {
      const auto est = r.at("estimator").get<std::string>();
      if (est != current) {
        flush();
        current = est;
      }
      rows.push_back({r.at("term").get<std::string>(), detail::sig6(r.at("truth")), detail::sig6(r.at("mean")),
                      detail::sig6(r.at("bias")), detail::sig6(r.at("sd")), detail::sig6(r.at("rmse")),
                      detail::sig6(r.at("coverage")), detail::sig6(r.at("ci_halfwidth"))});
    }
    flush();
  } else {
    throw Error(ErrorKind::InvalidArgument, "document is neither a fit report nor a simulation summary");
  }
}

}  // namespace augreg

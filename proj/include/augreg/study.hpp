#pragma once

// Study layout: which columns are reference / surrogate, and the numeric
// data they resolve to.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "augreg/error.hpp"
#include "augreg/model.hpp"

namespace augreg {

/// Outcome columns. For Cox, `reference`/`surrogate` name the time columns and
/// the *_event members name the event indicators.
struct OutcomeSpec {
  std::string reference;
  std::string surrogate;
  std::string reference_event;
  std::string surrogate_event;
  bool perfect = false;
};

/// One reference predictor and the surrogate column(s) standing in for it.
/// A perfect predictor is recorded without error, so its surrogate column
/// doubles as the reference.
struct PredictorSpec {
  std::string reference;
  std::vector<std::string> surrogates;
  bool perfect = false;
};

enum class ResampleMethod { Jackknife, Bootstrap };

struct ResamplePlan {
  ResampleMethod method = ResampleMethod::Jackknife;
  // Jackknife groups. 0 selects delete-1 for up to kDeleteOneLimit units,
  // otherwise kDefaultGroups groups.
  int groups = 0;
  int replicates = 400;  // bootstrap B
  std::uint64_t seed = 1;
  int threads = 1;

  static constexpr int kDeleteOneLimit = 2000;
  static constexpr int kDefaultGroups = 500;
};

constexpr std::string_view to_string(ResampleMethod m) {
  return m == ResampleMethod::Jackknife ? "jackknife" : "bootstrap";
}

struct AnalysisSpec {
  Family family = Family::Linear;
  Ties ties = Ties::Efron;
  OutcomeSpec outcome;
  std::vector<PredictorSpec> predictors;
  std::string validation_column;
  std::string cluster_column;
  std::string weight_column;
  ResamplePlan plan;
  double alpha = 0.05;
  FitOptions fit;

  bool has_intercept() const { return family != Family::Cox; }

  Index reference_predictor_count() const { return static_cast<Index>(predictors.size()); }

  Index surrogate_predictor_count() const {
    Index q = 0;
    for (const auto& pred : predictors) q += static_cast<Index>(pred.surrogates.size());
    return q;
  }

  /// Length of beta (reference model coefficients).
  Index p() const { return reference_predictor_count() + (has_intercept() ? 1 : 0); }
  /// Length of gamma (surrogate model coefficients).
  Index q() const { return surrogate_predictor_count() + (has_intercept() ? 1 : 0); }

  std::vector<std::string> reference_terms() const {
    std::vector<std::string> terms;
    if (has_intercept()) terms.emplace_back("(Intercept)");
    for (const auto& pred : predictors) terms.push_back(pred.reference);
    return terms;
  }

  std::vector<std::string> surrogate_terms() const {
    std::vector<std::string> terms;
    if (has_intercept()) terms.emplace_back("(Intercept)");
    for (const auto& pred : predictors) terms.insert(terms.end(), pred.surrogates.begin(), pred.surrogates.end());
    return terms;
  }

  /// Index into beta of the reference coefficient each gamma entry stands in for.
  std::vector<Index> surrogate_to_reference() const {
    std::vector<Index> map;
    const Index offset = has_intercept() ? 1 : 0;
    if (has_intercept()) map.push_back(0);
    for (std::size_t j = 0; j < predictors.size(); ++j) {
      for (std::size_t s = 0; s < predictors[j].surrogates.size(); ++s) map.push_back(static_cast<Index>(j) + offset);
    }
    return map;
  }
};

/// Numeric study data with columns in AnalysisSpec order. Reference entries
/// on rows outside the validation subsample are NaN.
struct StudyData {
  std::vector<std::uint8_t> validated;
  Vector ref_outcome;     // value, or time for Cox
  Vector sur_outcome;
  Vector ref_event;       // Cox only
  Vector sur_event;       // Cox only
  Matrix ref_predictors;  // n x (#reference predictors)
  Matrix sur_predictors;  // n x (#surrogate columns)
  std::vector<std::int64_t> cluster;  // empty: every row is its own cluster
  Vector weight;                      // empty: unit sampling weights

  Index n_full() const { return static_cast<Index>(validated.size()); }

  Index n_val() const {
    Index n = 0;
    for (auto v : validated) n += v ? 1 : 0;
    return n;
  }

  std::vector<Index> validated_rows() const {
    std::vector<Index> rows;
    for (Index i = 0; i < n_full(); ++i) {
      if (validated[static_cast<std::size_t>(i)]) rows.push_back(i);
    }
    return rows;
  }

  bool has_events() const { return ref_event.size() > 0; }

  /// Rows in the given order; repeats are allowed (bootstrap resamples).
  StudyData subset(const std::vector<Index>& rows) const {
    StudyData out;
    out.validated.reserve(rows.size());
    for (Index r : rows) out.validated.push_back(validated[static_cast<std::size_t>(r)]);
    out.ref_outcome = ref_outcome(rows);
    out.sur_outcome = sur_outcome(rows);
    if (has_events()) {
      out.ref_event = ref_event(rows);
      out.sur_event = sur_event(rows);
    }
    out.ref_predictors = ref_predictors(rows, Eigen::all);
    out.sur_predictors = sur_predictors(rows, Eigen::all);
    if (!cluster.empty()) {
      for (Index r : rows) out.cluster.push_back(cluster[static_cast<std::size_t>(r)]);
    }
    if (weight.size() > 0) out.weight = weight(rows);
    return out;
  }
};

/// Checks StudyData against its AnalysisSpec. Dimension and value checks are
/// always applied. With `strict`, the design requirements of the method are
/// also enforced: the validation subsample is a nonempty strict subset and at
/// least one surrogate is not flagged perfect.
inline void validate_study(const StudyData& data, const AnalysisSpec& spec, bool strict = true) {
  const Index n = data.n_full();
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidStudy, msg); };

  if (spec.predictors.empty() && !spec.has_intercept()) fail("Cox model needs at least one predictor");
  if (spec.surrogate_predictor_count() == 0 && !spec.has_intercept()) fail("Cox model needs at least one surrogate");
  if (data.ref_outcome.size() != n || data.sur_outcome.size() != n) fail("outcome length differs from row count");
  if (data.ref_predictors.rows() != n || data.sur_predictors.rows() != n) fail("predictor rows differ from row count");
  if (data.ref_predictors.cols() != spec.reference_predictor_count()) fail("reference predictor count mismatch");
  if (data.sur_predictors.cols() != spec.surrogate_predictor_count()) fail("surrogate predictor count mismatch");
  if (spec.family == Family::Cox && (data.ref_event.size() != n || data.sur_event.size() != n)) {
    fail("Cox data requires event indicators for reference and surrogate outcomes");
  }
  if (!data.cluster.empty() && static_cast<Index>(data.cluster.size()) != n) fail("cluster length mismatch");
  if (data.weight.size() > 0) {
    if (data.weight.size() != n) fail("weight length mismatch");
    if (!data.weight.allFinite() || (data.weight.array() < 0.0).any()) fail("sampling weights must be finite and >= 0");
  }

  const Index n_val = data.n_val();
  if (n_val == 0) fail("validation subsample is empty");
  if (strict && n_val == n) fail("validation subsample must be a strict subset of the full sample");

  if (strict) {
    bool any_imperfect = !spec.outcome.perfect;
    for (const auto& pred : spec.predictors) any_imperfect = any_imperfect || !pred.perfect;
    if (!any_imperfect) fail("at least one surrogate must not be flagged perfect");
  }

  for (Index i = 0; i < n; ++i) {
    const bool val = data.validated[static_cast<std::size_t>(i)] != 0;
    auto row = [i] { return " (row " + std::to_string(i) + ")"; };
    if (!std::isfinite(data.sur_outcome[i])) fail("surrogate outcome missing" + row());
    if (!data.sur_predictors.row(i).allFinite()) fail("surrogate predictor missing" + row());
    if (spec.family == Family::Cox && !std::isfinite(data.sur_event[i])) fail("surrogate event missing" + row());
    if (val) {
      if (!std::isfinite(data.ref_outcome[i]) || !data.ref_predictors.row(i).allFinite() ||
          (spec.family == Family::Cox && !std::isfinite(data.ref_event[i]))) {
        throw Error(ErrorKind::ReferenceMissingInValidation, "validated row lacks reference values" + row());
      }
    }
  }
}

}  // namespace augreg

#pragma once

// Simulation scenarios with measurement error in outcome and predictors, and
// a Monte Carlo harness scoring bias, SD, RMSE and interval coverage.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "augreg/pipeline.hpp"
#include "augreg/rng.hpp"

namespace augreg {

struct Misclassification {
  double sensitivity = 1.0;  // P(surrogate = 1 | truth = 1)
  double specificity = 1.0;  // P(surrogate = 0 | truth = 0)
};

/// Passes a 0/1 value through a misclassification channel. Always consumes
/// exactly one uniform draw.
inline int misclassify(int truth, double sensitivity, double specificity, CounterRng& rng) {
  const double u = rng.uniform();
  if (truth != 0) return u < sensitivity ? 1 : 0;
  return u < specificity ? 0 : 1;
}

inline int misclassify(int truth, const Misclassification& m, CounterRng& rng) {
  return misclassify(truth, m.sensitivity, m.specificity, rng);
}

/// Logistic outcome misclassified differentially by exposure X1.
struct Example1Params {
  std::array<double, 5> beta{-0.5, 0.5, 0.2, 1.0, 0.5};
  double p_x1 = 0.25;
  double p_x2 = 0.15;
  Misclassification y_given_x1{0.95, 0.80};
  Misclassification y_given_not_x1{0.85, 0.90};
};

/// Cox model with error in event time, event indicator, X1 and X3.
/// beta[0] is a log baseline hazard; the Cox coefficients are beta[1..4].
struct Example2Params {
  std::array<double, 5> beta{-0.5, 0.5, 0.2, 1.0, 0.5};
  double censoring_rate = 0.3;
  double administrative_censoring = 3.0;
  double time_log_noise_sd = 0.05;
  Misclassification event_given_x1{0.90, 0.95};
  Misclassification event_given_not_x1{0.95, 0.90};
  Misclassification x1_given_event{0.95, 0.95};
  Misclassification x1_given_no_event{0.90, 0.90};
  bool x3_quadratic = true;      // false: X3 surrogate equals X3
  double x3_target_sd = 0.9;
  double x3_noise_floor = 0.05;  // noise SD = max(floor, slope * (X3 + 2))
  double x3_noise_slope = 0.05;
};

/// Linear model with differential outcome error, X1 misclassified by the sign
/// of the model error, and two surrogates for X4.
struct Example3Params {
  std::array<double, 5> beta{-0.5, 0.5, 0.2, 0.5, 1.0};
  double y_shift_x1 = -0.5;
  double y_shift_not_x1 = 0.5;
  double y_noise_sd = 0.1;
  Misclassification x1_given_positive_error{0.95, 0.91};
  Misclassification x1_given_negative_error{0.90, 0.90};
  double x4a_slope = 1.1;
  double x4b_slope = 0.9;
  double x4_noise_sd = 0.05;
};

/// Linear model whose surrogates are exact affine/scale transforms.
struct Example4Params {
  std::array<double, 5> beta{2.0, 0.2, 0.3, 0.7, 0.4};
  double y_offset = 0.14;
  double y_scale = 0.9;
  std::array<double, 4> x_scale{0.82, 1.05, 0.80, 1.05};
};

using ScenarioParams = std::variant<Example1Params, Example2Params, Example3Params, Example4Params>;

struct ScenarioSpec {
  ScenarioParams params = Example1Params{};
  Index n_full = 4000;
  Index n_val = 400;
  std::uint64_t seed = 1;

  std::string name() const {
    return "example" + std::to_string(params.index() + 1);
  }

  Family family() const {
    switch (params.index()) {
      case 0: return Family::Logistic;
      case 1: return Family::Cox;
      default: return Family::Linear;
    }
  }

  /// Coefficients of the analysis model (Cox: without the log baseline).
  Vector true_beta() const {
    return std::visit(
        [this](const auto& p) {
          Vector b = Eigen::Map<const Vector>(p.beta.data(), 5);
          return family() == Family::Cox ? Vector(b.tail(4)) : b;
        },
        params);
  }

  /// Column roles of the datasets this scenario generates.
  AnalysisSpec analysis_spec() const;

  static ScenarioSpec named(const std::string& name) {
    ScenarioSpec spec;
    if (name == "example1") spec.params = Example1Params{};
    else if (name == "example2") spec.params = Example2Params{};
    else if (name == "example3") spec.params = Example3Params{};
    else if (name == "example4") spec.params = Example4Params{};
    else throw Error(ErrorKind::InvalidArgument, "unknown scenario '" + name + "'");
    return spec;
  }
};

struct GeneratedStudy {
  StudyData data;
  AnalysisSpec spec;
};

namespace detail {

/// Simple random sample of n_val of the n_full rows (partial Fisher-Yates).
inline std::vector<std::uint8_t> simple_random_subsample(Index n_full, Index n_val, CounterRng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n_full));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::vector<std::uint8_t> flags(static_cast<std::size_t>(n_full), 0);
  for (Index k = 0; k < n_val; ++k) {
    const auto j = k + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n_full - k)));
    std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(j)]);
    flags[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = 1;
  }
  return flags;
}

inline void check_sizes(Index n_full, Index n_val) {
  if (n_val < 1 || n_val > n_full) {
    throw Error(ErrorKind::InvalidArgument, "need 1 <= n_val <= n_full, got n_val=" + std::to_string(n_val) +
                                                " n_full=" + std::to_string(n_full));
  }
}

/// Predictor map x1..x4; perfect predictors reuse the reference name.
inline std::vector<PredictorSpec> predictor_specs(const std::array<bool, 4>& perfect) {
  std::vector<PredictorSpec> preds;
  for (int j = 0; j < 4; ++j) {
    const std::string name = "x" + std::to_string(j + 1);
    preds.push_back(PredictorSpec{name, {perfect[static_cast<std::size_t>(j)] ? name : name + "_s"},
                                  perfect[static_cast<std::size_t>(j)]});
  }
  return preds;
}

inline AnalysisSpec base_spec(Family family, std::vector<PredictorSpec> predictors) {
  AnalysisSpec spec;
  spec.family = family;
  if (family == Family::Cox) {
    spec.outcome = OutcomeSpec{"time", "time_s", "event", "event_s", false};
  } else {
    spec.outcome = OutcomeSpec{"y", "y_s", "", "", false};
  }
  spec.predictors = std::move(predictors);
  spec.validation_column = "validated";
  return spec;
}

/// Blanks reference entries outside the validation subsample.
inline void mask_references(StudyData& data) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Index i = 0; i < data.n_full(); ++i) {
    if (data.validated[static_cast<std::size_t>(i)]) continue;
    data.ref_outcome[i] = nan;
    if (data.ref_event.size() > 0) data.ref_event[i] = nan;
    data.ref_predictors.row(i).setConstant(nan);
  }
}

inline AnalysisSpec example_spec(int example) {
  switch (example) {
    case 1: return base_spec(Family::Logistic, predictor_specs({true, true, true, true}));
    case 2: return base_spec(Family::Cox, predictor_specs({false, true, false, true}));
    case 3: {
      auto preds = predictor_specs({false, true, true, false});
      preds[3].surrogates = {"x4a_s", "x4b_s"};
      return base_spec(Family::Linear, std::move(preds));
    }
    default: return base_spec(Family::Linear, predictor_specs({false, false, false, false}));
  }
}

inline double linear_predictor(const std::array<double, 5>& beta, const Eigen::Ref<const Vector>& x) {
  return beta[0] + beta[1] * x[0] + beta[2] * x[1] + beta[3] * x[2] + beta[4] * x[3];
}

}  // namespace detail

inline GeneratedStudy gen_example1(const Example1Params& prm, Index n_full, Index n_val, CounterRng& rng) {
  detail::check_sizes(n_full, n_val);
  GeneratedStudy out;
  auto& d = out.data;
  d.ref_outcome.resize(n_full);
  d.sur_outcome.resize(n_full);
  d.ref_predictors.resize(n_full, 4);
  for (Index i = 0; i < n_full; ++i) {
    Vector x(4);
    x[0] = rng.bernoulli(prm.p_x1) ? 1.0 : 0.0;
    x[1] = rng.bernoulli(prm.p_x2) ? 1.0 : 0.0;
    x[2] = rng.normal();
    x[3] = rng.normal();
    const int y = rng.bernoulli(detail::sigmoid(detail::linear_predictor(prm.beta, x))) ? 1 : 0;
    const auto& channel = x[0] == 1.0 ? prm.y_given_x1 : prm.y_given_not_x1;
    d.ref_predictors.row(i) = x.transpose();
    d.ref_outcome[i] = y;
    d.sur_outcome[i] = misclassify(y, channel, rng);
  }
  d.sur_predictors = d.ref_predictors;
  d.validated = detail::simple_random_subsample(n_full, n_val, rng);
  detail::mask_references(d);
  out.spec = detail::example_spec(1);
  return out;
}

inline GeneratedStudy gen_example2(const Example2Params& prm, Index n_full, Index n_val, CounterRng& rng) {
  detail::check_sizes(n_full, n_val);
  GeneratedStudy out;
  auto& d = out.data;
  d.ref_outcome.resize(n_full);
  d.sur_outcome.resize(n_full);
  d.ref_event.resize(n_full);
  d.sur_event.resize(n_full);
  d.ref_predictors.resize(n_full, 4);
  d.sur_predictors.resize(n_full, 4);
  Vector x3_noise(n_full);
  for (Index i = 0; i < n_full; ++i) {
    Vector x(4);
    x[0] = rng.bernoulli(0.25) ? 1.0 : 0.0;
    x[1] = rng.bernoulli(0.15) ? 1.0 : 0.0;
    x[2] = rng.normal();
    x[3] = rng.normal();
    const double hazard = std::exp(detail::linear_predictor(prm.beta, x));
    const double t = rng.exponential(hazard);
    const double c = rng.exponential(prm.censoring_rate);
    const double cutoff = std::min(c, prm.administrative_censoring);
    const int event = t <= cutoff ? 1 : 0;

    const double t_s = t * std::exp(rng.normal(0.0, prm.time_log_noise_sd));
    const int event_s_true = t_s <= cutoff ? 1 : 0;
    const int event_s = misclassify(event_s_true, x[0] == 1.0 ? prm.event_given_x1 : prm.event_given_not_x1, rng);
    const int x1_s = misclassify(static_cast<int>(x[0]), event == 1 ? prm.x1_given_event : prm.x1_given_no_event, rng);
    x3_noise[i] = rng.normal(0.0, std::max(prm.x3_noise_floor, prm.x3_noise_slope * (x[2] + 2.0)));

    d.ref_predictors.row(i) = x.transpose();
    d.ref_outcome[i] = std::min(t, cutoff);
    d.ref_event[i] = event;
    d.sur_outcome[i] = std::min(t_s, cutoff);
    d.sur_event[i] = event_s;
    d.sur_predictors(i, 0) = x1_s;
    d.sur_predictors(i, 1) = x[1];
    d.sur_predictors(i, 2) = x[2];
    d.sur_predictors(i, 3) = x[3];
  }
  if (prm.x3_quadratic) {
    const Vector v = (d.ref_predictors.col(2).array() + 2.0).cwiseMax(0.0).square().matrix();
    const double mean = v.mean();
    const double sd = std::sqrt((v.array() - mean).square().sum() / static_cast<double>(n_full - 1));
    d.sur_predictors.col(2) = v * (prm.x3_target_sd / sd) + x3_noise;
  }
  d.validated = detail::simple_random_subsample(n_full, n_val, rng);
  detail::mask_references(d);
  out.spec = detail::example_spec(2);
  return out;
}

inline GeneratedStudy gen_example3(const Example3Params& prm, Index n_full, Index n_val, CounterRng& rng) {
  detail::check_sizes(n_full, n_val);
  GeneratedStudy out;
  auto& d = out.data;
  d.ref_outcome.resize(n_full);
  d.sur_outcome.resize(n_full);
  d.ref_predictors.resize(n_full, 4);
  d.sur_predictors.resize(n_full, 5);
  for (Index i = 0; i < n_full; ++i) {
    Vector x(4);
    x[0] = rng.bernoulli(0.25) ? 1.0 : 0.0;
    x[1] = rng.bernoulli(0.15) ? 1.0 : 0.0;
    x[2] = rng.normal();
    x[3] = rng.normal();
    const double err = rng.normal();
    const double y = detail::linear_predictor(prm.beta, x) + err;
    const double y_s = y + (x[0] == 1.0 ? prm.y_shift_x1 : prm.y_shift_not_x1) + rng.normal(0.0, prm.y_noise_sd);
    const int x1_s = misclassify(static_cast<int>(x[0]),
                                 err > 0.0 ? prm.x1_given_positive_error : prm.x1_given_negative_error, rng);
    const double x4a = prm.x4a_slope * x[3] + rng.normal(0.0, prm.x4_noise_sd);
    const double x4b = prm.x4b_slope * x[3] + rng.normal(0.0, prm.x4_noise_sd);

    d.ref_predictors.row(i) = x.transpose();
    d.ref_outcome[i] = y;
    d.sur_outcome[i] = y_s;
    d.sur_predictors.row(i) << x1_s, x[1], x[2], x4a, x4b;
  }
  d.validated = detail::simple_random_subsample(n_full, n_val, rng);
  detail::mask_references(d);
  out.spec = detail::example_spec(3);
  return out;
}

inline GeneratedStudy gen_example4(const Example4Params& prm, Index n_full, Index n_val, CounterRng& rng) {
  detail::check_sizes(n_full, n_val);
  GeneratedStudy out;
  auto& d = out.data;
  d.ref_outcome.resize(n_full);
  d.sur_outcome.resize(n_full);
  d.ref_predictors.resize(n_full, 4);
  d.sur_predictors.resize(n_full, 4);
  for (Index i = 0; i < n_full; ++i) {
    Vector x(4);
    for (Index j = 0; j < 4; ++j) x[j] = rng.normal();
    const double y = detail::linear_predictor(prm.beta, x) + rng.normal();
    d.ref_predictors.row(i) = x.transpose();
    d.ref_outcome[i] = y;
    d.sur_outcome[i] = prm.y_offset + prm.y_scale * y;
    for (Index j = 0; j < 4; ++j) d.sur_predictors(i, j) = prm.x_scale[static_cast<std::size_t>(j)] * x[j];
  }
  d.validated = detail::simple_random_subsample(n_full, n_val, rng);
  detail::mask_references(d);
  out.spec = detail::example_spec(4);
  return out;
}

inline AnalysisSpec ScenarioSpec::analysis_spec() const {
  return detail::example_spec(static_cast<int>(params.index()) + 1);
}

/// One dataset of the scenario drawn from `rng`.
inline GeneratedStudy generate(const ScenarioSpec& scenario, CounterRng& rng) {
  return std::visit(
      [&](const auto& prm) -> GeneratedStudy {
        using T = std::decay_t<decltype(prm)>;
        if constexpr (std::is_same_v<T, Example1Params>) return gen_example1(prm, scenario.n_full, scenario.n_val, rng);
        if constexpr (std::is_same_v<T, Example2Params>) return gen_example2(prm, scenario.n_full, scenario.n_val, rng);
        if constexpr (std::is_same_v<T, Example3Params>) return gen_example3(prm, scenario.n_full, scenario.n_val, rng);
        if constexpr (std::is_same_v<T, Example4Params>) return gen_example4(prm, scenario.n_full, scenario.n_val, rng);
      },
      scenario.params);
}

/// Dataset for replicate r: stream r of the scenario seed.
inline GeneratedStudy generate_replicate(const ScenarioSpec& scenario, std::size_t replicate) {
  CounterRng rng(scenario.seed, replicate);
  return generate(scenario, rng);
}

enum class Estimator { Augmented, Validation, FullSurrogate };

constexpr std::array<Estimator, 3> kEstimators{Estimator::Augmented, Estimator::Validation, Estimator::FullSurrogate};

constexpr std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::Augmented: return "beta_aug";
    case Estimator::Validation: return "beta_val";
    case Estimator::FullSurrogate: return "gamma_ful";
  }
  return "unknown";
}

struct CoefficientSummary {
  std::string term;
  double truth = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double sd = 0.0;     // R - 1 denominator
  double rmse = 0.0;   // sqrt(mean squared error)
  double coverage = 0.0;
  double ci_halfwidth = 0.0;
};

struct EstimatorSummary {
  Estimator estimator = Estimator::Augmented;
  std::vector<CoefficientSummary> coefficients;
};

struct ReplicateRecord {
  bool ok = false;
  std::string error;
  std::array<WaldTable, 3> tables;  // indexed like kEstimators
  AugmentDiagnostics diagnostics;
};

struct ReplicationSummary {
  std::string scenario;
  Family family = Family::Linear;
  std::size_t replicates = 0;
  std::size_t failures = 0;
  double alpha = 0.05;
  std::array<EstimatorSummary, 3> estimators;
  std::vector<ReplicateRecord> records;
  std::vector<Vector> truths;  // per estimator

  const EstimatorSummary& of(Estimator e) const { return estimators[static_cast<std::size_t>(e)]; }
};

/// Maximum fraction of replicates allowed to fail.
inline constexpr double kMaxReplicateFailureRate = 0.02;

/// Scores one estimator from the successful replicate records.
inline EstimatorSummary summarize_estimator(Estimator e, const std::vector<ReplicateRecord>& records,
                                            const Vector& truth) {
  const auto slot = static_cast<std::size_t>(e);
  EstimatorSummary summary;
  summary.estimator = e;
  std::vector<const WaldTable*> tables;
  for (const auto& rec : records) {
    if (rec.ok) tables.push_back(&rec.tables[slot]);
  }
  const double r = static_cast<double>(tables.size());
  for (Index j = 0; j < truth.size(); ++j) {
    CoefficientSummary c;
    c.term = tables.empty() ? std::string() : (*tables.front())[static_cast<std::size_t>(j)].term;
    c.truth = truth[j];
    double sum = 0.0, sq_err = 0.0, covered = 0.0, half = 0.0;
    for (const auto* t : tables) {
      const auto& row = (*t)[static_cast<std::size_t>(j)];
      sum += row.estimate;
      sq_err += (row.estimate - c.truth) * (row.estimate - c.truth);
      covered += (row.lcl <= c.truth && c.truth <= row.ucl) ? 1.0 : 0.0;
      half += 0.5 * (row.ucl - row.lcl);
    }
    c.mean = sum / r;
    c.bias = c.mean - c.truth;
    double ss = 0.0;
    for (const auto* t : tables) {
      const double dev = (*t)[static_cast<std::size_t>(j)].estimate - c.mean;
      ss += dev * dev;
    }
    c.sd = r > 1.0 ? std::sqrt(ss / (r - 1.0)) : 0.0;
    c.rmse = std::sqrt(sq_err / r);
    c.coverage = covered / r;
    c.ci_halfwidth = half / r;
    summary.coefficients.push_back(std::move(c));
  }
  return summary;
}

/// Monte Carlo study: R datasets (replicate r uses stream r of the scenario
/// seed), each analysed with `plan`. Replicates run in parallel over
/// plan.threads workers with a single-threaded resampler each; the reduction
/// is in replicate order.
inline ReplicationSummary run_replications(const ScenarioSpec& scenario, std::size_t replicates,
                                           const ResamplePlan& plan, double alpha = 0.05) {
  if (replicates < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 replicates");
  ReplicationSummary summary;
  summary.scenario = scenario.name();
  summary.family = scenario.family();
  summary.replicates = replicates;
  summary.alpha = alpha;
  summary.records.resize(replicates);

  const Vector beta = scenario.true_beta();
  const auto map = scenario.analysis_spec().surrogate_to_reference();
  Vector gamma_truth(static_cast<Index>(map.size()));
  for (std::size_t k = 0; k < map.size(); ++k) gamma_truth[static_cast<Index>(k)] = beta[map[k]];
  summary.truths = {beta, beta, gamma_truth};

  parallel_for(replicates, resolve_threads(plan.threads), [&](std::size_t r) {
    auto& rec = summary.records[r];
    try {
      GeneratedStudy study = generate_replicate(scenario, r);
      study.spec.plan = plan;
      study.spec.plan.threads = 1;
      study.spec.plan.seed = CounterRng::mix64(plan.seed ^ CounterRng::mix64(r));
      study.spec.alpha = alpha;
      const auto result = run_analysis(study.data, study.spec, false);
      rec.tables = {result.estimate.aug, result.estimate.val, result.estimate.ful};
      rec.diagnostics = result.estimate.diagnostics;
      rec.ok = true;
    } catch (const Error& e) {
      rec.error = e.what();
    }
  });

  for (const auto& rec : summary.records) summary.failures += rec.ok ? 0 : 1;
  if (static_cast<double>(summary.failures) > kMaxReplicateFailureRate * static_cast<double>(replicates)) {
    throw Error(ErrorKind::TooManyFailures, std::to_string(summary.failures) + " of " + std::to_string(replicates) +
                                                " replicates failed; first: " +
                                                std::find_if(summary.records.begin(), summary.records.end(),
                                                             [](const auto& r) { return !r.ok; })
                                                    ->error);
  }
  for (std::size_t k = 0; k < kEstimators.size(); ++k) {
    summary.estimators[k] = summarize_estimator(kEstimators[k], summary.records, summary.truths[k]);
  }
  return summary;
}

}  // namespace augreg

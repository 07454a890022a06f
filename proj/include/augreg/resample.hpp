#pragma once

// Joint coefficient statistic (beta_val, gamma_val, gamma_ful) and its
// covariance by grouped jackknife or stratified bootstrap.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "augreg/error.hpp"
#include "augreg/model.hpp"
#include "augreg/parallel.hpp"
#include "augreg/rng.hpp"
#include "augreg/study.hpp"

namespace augreg {

struct JointStatistic {
  Vector beta_val;
  Vector gamma_val;
  Vector gamma_ful;
  Vector gamma_diff;  // gamma_val - gamma_ful

  static JointStatistic make(Vector beta_val, Vector gamma_val, Vector gamma_ful) {
    JointStatistic js;
    js.gamma_diff = gamma_val - gamma_ful;
    js.beta_val = std::move(beta_val);
    js.gamma_val = std::move(gamma_val);
    js.gamma_ful = std::move(gamma_ful);
    return js;
  }

  Index p() const { return beta_val.size(); }
  Index q() const { return gamma_val.size(); }
};

/// Covariance of (beta_val - beta, gamma_val - gamma_ful) in blocks, plus the
/// covariance of gamma_ful from the same resampling pass.
struct CovBlocks {
  Matrix sigma;  // p x p
  Matrix omega;  // p x q
  Matrix k;      // q x q
  Matrix gamma_ful_cov;
  std::size_t replicates = 0;  // leave-outs or bootstrap resamples used
  std::size_t dropped = 0;     // bootstrap resamples whose fits failed

  /// [[sigma, omega], [omega', k]]
  Matrix stacked() const {
    const Index p = sigma.rows(), q = k.rows();
    Matrix m(p + q, p + q);
    m.topLeftCorner(p, p) = sigma;
    m.topRightCorner(p, q) = omega;
    m.bottomLeftCorner(q, p) = omega.transpose();
    m.bottomRightCorner(q, q) = k;
    return m;
  }
};

namespace detail {

enum class Side { Reference, Surrogate };

inline RegressionFit fit_rows(const StudyData& data, const AnalysisSpec& spec, Side side,
                              const std::vector<Index>& rows, bool sampling_weights, const Vector& start) {
  const Matrix& predictors = side == Side::Reference ? data.ref_predictors : data.sur_predictors;
  const Vector& outcome = side == Side::Reference ? data.ref_outcome : data.sur_outcome;
  const DesignMatrix x = DesignMatrix::build(predictors(rows, Eigen::all), spec.has_intercept());
  const Vector w = sampling_weights && data.weight.size() > 0 ? Vector(data.weight(rows))
                                                                : unit_weights(static_cast<Index>(rows.size()));
  FitOptions options = spec.fit;
  options.ties = spec.ties;
  options.start = start;
  switch (spec.family) {
    case Family::Linear:
      return fit_linear(x, outcome(rows), w, options);
    case Family::Logistic:
      return fit_logistic(x, outcome(rows), w, options);
    case Family::Cox: {
      const Vector& event = side == Side::Reference ? data.ref_event : data.sur_event;
      return fit_cox(x, SurvivalResponse{outcome(rows), event(rows)}, w, options);
    }
  }
  throw Error(ErrorKind::InvalidArgument, "unknown model family");
}

inline Vector fit_annotated(const StudyData& data, const AnalysisSpec& spec, Side side,
                            const std::vector<Index>& rows, bool sampling_weights, const Vector& start,
                            const char* which) {
  try {
    return fit_rows(data, spec, side, rows, sampling_weights, start).coefficients;
  } catch (const Error& e) {
    throw e.annotated(std::string(which) + " fit");
  }
}

/// Joint statistic on a subset: `val_rows` feed beta_val and gamma_val (with
/// sampling weights), `all_rows` feed gamma_ful.
inline JointStatistic joint_on_rows(const StudyData& data, const AnalysisSpec& spec,
                                    const std::vector<Index>& val_rows, const std::vector<Index>& all_rows,
                                    const JointStatistic* warm) {
  static const Vector cold;
  Vector bv = fit_annotated(data, spec, Side::Reference, val_rows, true, warm ? warm->beta_val : cold, "beta_val");
  Vector gv = fit_annotated(data, spec, Side::Surrogate, val_rows, true, warm ? warm->gamma_val : cold, "gamma_val");
  Vector gf = fit_annotated(data, spec, Side::Surrogate, all_rows, false, warm ? warm->gamma_ful : cold, "gamma_ful");
  return JointStatistic::make(std::move(bv), std::move(gv), std::move(gf));
}

inline std::vector<Index> all_rows(Index n) {
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  return rows;
}

/// Resampling units: clusters in order of first appearance, or single rows.
struct Units {
  std::vector<std::vector<Index>> rows;
  std::vector<std::uint8_t> validated;  // unit holds at least one validated row
};

inline Units make_units(const StudyData& data) {
  Units units;
  const Index n = data.n_full();
  if (data.cluster.empty()) {
    units.rows.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      units.rows.push_back({i});
      units.validated.push_back(data.validated[static_cast<std::size_t>(i)]);
    }
    return units;
  }
  std::map<std::int64_t, std::size_t> slot;
  for (Index i = 0; i < n; ++i) {
    const auto id = data.cluster[static_cast<std::size_t>(i)];
    auto [it, inserted] = slot.try_emplace(id, units.rows.size());
    if (inserted) {
      units.rows.emplace_back();
      units.validated.push_back(0);
    }
    units.rows[it->second].push_back(i);
    if (data.validated[static_cast<std::size_t>(i)]) units.validated[it->second] = 1;
  }
  return units;
}

inline Vector stack(const JointStatistic& js) {
  Vector v(js.p() + 2 * js.q());
  v << js.beta_val, js.gamma_diff, js.gamma_ful;
  return v;
}

/// Centered cross-product sum of replicate statistics, scaled. Replicates are
/// reduced in lexicographic order so that the result depends only on the set
/// of statistics, not on how they were enumerated.
inline CovBlocks blocks_from_replicates(std::vector<Vector> stats, Index p, Index q, double scale) {
  std::sort(stats.begin(), stats.end(), [](const Vector& a, const Vector& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  });
  const Index m = p + 2 * q;
  Vector mean = Vector::Zero(m);
  for (const auto& s : stats) mean += s;
  mean /= static_cast<double>(stats.size());
  Matrix cross = Matrix::Zero(m, m);
  Vector centered(m);
  for (const auto& s : stats) {
    centered = s - mean;
    cross.noalias() += centered * centered.transpose();
  }
  cross *= scale;

  CovBlocks blocks;
  blocks.sigma = cross.topLeftCorner(p, p);
  blocks.omega = cross.block(0, p, p, q);
  blocks.k = cross.block(p, p, q, q);
  blocks.gamma_ful_cov = cross.bottomRightCorner(q, q);
  blocks.replicates = stats.size();
  return blocks;
}

inline void check_retained(const StudyData& data, const AnalysisSpec& spec, const std::vector<Index>& val_rows,
                           const std::vector<Index>& all_rows, const std::string& where) {
  const auto need = static_cast<std::size_t>(std::max(spec.p(), spec.q()) + 1);
  if (val_rows.size() < need) {
    throw Error(ErrorKind::GroupTooSmall, where + " retains " + std::to_string(val_rows.size()) +
                                              " validated rows; at least " + std::to_string(need) + " required");
  }
  auto classes_present = [](const Vector& y, const std::vector<Index>& rows) {
    bool zero = false, one = false;
    for (Index r : rows) (y[r] == 1.0 ? one : zero) = true;
    return zero && one;
  };
  auto any_event = [](const Vector& e, const std::vector<Index>& rows) {
    return std::any_of(rows.begin(), rows.end(), [&](Index r) { return e[r] != 0.0; });
  };
  if (spec.family == Family::Logistic) {
    if (!classes_present(data.ref_outcome, val_rows) || !classes_present(data.sur_outcome, val_rows) ||
        !classes_present(data.sur_outcome, all_rows)) {
      throw Error(ErrorKind::GroupTooSmall, where + " leaves a single outcome class");
    }
  } else if (spec.family == Family::Cox) {
    if (!any_event(data.ref_event, val_rows) || !any_event(data.sur_event, val_rows) ||
        !any_event(data.sur_event, all_rows)) {
      throw Error(ErrorKind::GroupTooSmall, where + " leaves no events");
    }
  }
}

}  // namespace detail

/// beta_val (reference variables, validated rows), gamma_val (surrogates,
/// validated rows) and gamma_ful (surrogates, all rows). Sampling weights
/// enter the two validation-subsample fits.
inline JointStatistic compute_joint_statistic(const StudyData& data, const AnalysisSpec& spec) {
  validate_study(data, spec, false);
  return detail::joint_on_rows(data, spec, data.validated_rows(), detail::all_rows(data.n_full()), nullptr);
}

/// Jackknife groups as row lists. Units (clusters, else rows) are dealt
/// round-robin: validated units first, then the rest continuing the same
/// counter, so each group's validation fraction stays close to the overall one.
inline std::vector<std::vector<Index>> jackknife_groups(const StudyData& data, const ResamplePlan& plan) {
  const auto units = detail::make_units(data);
  const auto n_units = static_cast<int>(units.rows.size());
  int g = plan.groups > 0 ? std::min(plan.groups, n_units)
                          : (n_units <= ResamplePlan::kDeleteOneLimit ? n_units
                                                                      : ResamplePlan::kDefaultGroups);
  if (g < 2) throw Error(ErrorKind::InsufficientGroups, "jackknife needs at least 2 groups, got " + std::to_string(g));

  std::vector<std::vector<Index>> groups(static_cast<std::size_t>(g));
  std::size_t counter = 0;
  for (int pass = 0; pass < 2; ++pass) {
    const std::uint8_t want = pass == 0 ? 1 : 0;
    for (std::size_t u = 0; u < units.rows.size(); ++u) {
      if (units.validated[u] != want) continue;
      auto& group = groups[counter++ % static_cast<std::size_t>(g)];
      group.insert(group.end(), units.rows[u].begin(), units.rows[u].end());
    }
  }
  for (auto& group : groups) std::sort(group.begin(), group.end());
  return groups;
}

/// Jackknife covariance over explicit leave-out groups (each row in exactly
/// one group). Leave-outs that drop no validated row reuse beta_val and
/// gamma_val and only refit gamma_ful. Scale factor (g-1)/g.
inline CovBlocks jackknife_cov(const StudyData& data, const AnalysisSpec& spec,
                               const std::vector<std::vector<Index>>& groups, const JointStatistic& full,
                               int threads = 1) {
  const Index n = data.n_full();
  const auto g = groups.size();
  if (g < 2) throw Error(ErrorKind::InsufficientGroups, "jackknife needs at least 2 groups");
  {
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    for (const auto& group : groups) {
      for (Index r : group) {
        if (r < 0 || r >= n) throw Error(ErrorKind::InvalidArgument, "jackknife group row out of range");
        ++seen[static_cast<std::size_t>(r)];
      }
    }
    if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; })) {
      throw Error(ErrorKind::InvalidArgument, "every row must appear in exactly one jackknife group");
    }
  }

  struct LeaveOut {
    std::vector<Index> val_rows, all_rows;
    bool drops_validated = false;
  };
  std::vector<LeaveOut> plans(g);
  {
    std::vector<std::uint8_t> dropped(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < g; ++i) {
      std::fill(dropped.begin(), dropped.end(), 0);
      for (Index r : groups[i]) dropped[static_cast<std::size_t>(r)] = 1;
      auto& lo = plans[i];
      lo.all_rows.reserve(static_cast<std::size_t>(n) - groups[i].size());
      for (Index r = 0; r < n; ++r) {
        if (dropped[static_cast<std::size_t>(r)]) {
          lo.drops_validated = lo.drops_validated || data.validated[static_cast<std::size_t>(r)];
          continue;
        }
        lo.all_rows.push_back(r);
        if (data.validated[static_cast<std::size_t>(r)]) lo.val_rows.push_back(r);
      }
      detail::check_retained(data, spec, lo.val_rows, lo.all_rows, "jackknife group " + std::to_string(i));
    }
  }

  std::vector<Vector> stats(g);
  parallel_for(g, resolve_threads(threads), [&](std::size_t i) {
    const auto& lo = plans[i];
    try {
      if (lo.drops_validated) {
        stats[i] = detail::stack(detail::joint_on_rows(data, spec, lo.val_rows, lo.all_rows, &full));
      } else {
        Vector gf = detail::fit_annotated(data, spec, detail::Side::Surrogate, lo.all_rows, false, full.gamma_ful,
                                          "gamma_ful");
        stats[i] = detail::stack(JointStatistic::make(full.beta_val, full.gamma_val, std::move(gf)));
      }
    } catch (const Error& e) {
      throw e.annotated("jackknife group " + std::to_string(i));
    }
  });
  const double gd = static_cast<double>(g);
  return detail::blocks_from_replicates(std::move(stats), full.p(), full.q(), (gd - 1.0) / gd);
}

/// Jackknife covariance with groups taken from the plan.
inline CovBlocks jackknife_cov(const StudyData& data, const AnalysisSpec& spec, const ResamplePlan& plan) {
  const JointStatistic full = compute_joint_statistic(data, spec);
  return jackknife_cov(data, spec, jackknife_groups(data, plan), full, plan.threads);
}

/// Row lists of one stratified bootstrap resample: validated and
/// non-validated units are each drawn with replacement to their own count.
inline std::vector<Index> bootstrap_rows(const detail::Units& units, CounterRng& rng) {
  std::vector<std::size_t> strata[2];
  for (std::size_t u = 0; u < units.rows.size(); ++u) strata[units.validated[u] ? 0 : 1].push_back(u);
  std::vector<Index> rows;
  for (const auto& stratum : strata) {
    for (std::size_t k = 0; k < stratum.size(); ++k) {
      const auto& unit = units.rows[stratum[rng.below(stratum.size())]];
      rows.insert(rows.end(), unit.begin(), unit.end());
    }
  }
  return rows;
}

/// Bootstrap covariance (B - 1 denominator). Replicate b draws from stream b
/// of the plan seed. Replicates whose fits fail are dropped; more than 5%
/// dropped is an error.
inline CovBlocks bootstrap_cov(const StudyData& data, const AnalysisSpec& spec, const ResamplePlan& plan,
                               const JointStatistic& full) {
  if (plan.replicates < 50) {
    throw Error(ErrorKind::InvalidArgument, "bootstrap needs B >= 50, got " + std::to_string(plan.replicates));
  }
  const auto units = detail::make_units(data);
  const auto b_count = static_cast<std::size_t>(plan.replicates);
  std::vector<Vector> stats(b_count);
  std::vector<std::uint8_t> ok(b_count, 0);

  parallel_for(b_count, resolve_threads(plan.threads), [&](std::size_t b) {
    CounterRng rng(plan.seed, b);
    const auto rows = bootstrap_rows(units, rng);
    const StudyData resample = data.subset(rows);
    try {
      stats[b] = detail::stack(detail::joint_on_rows(resample, spec, resample.validated_rows(),
                                                     detail::all_rows(resample.n_full()), &full));
      ok[b] = 1;
    } catch (const Error&) {
    }
  });

  std::vector<Vector> kept;
  for (std::size_t b = 0; b < b_count; ++b) {
    if (ok[b]) kept.push_back(std::move(stats[b]));
  }
  const std::size_t dropped = b_count - kept.size();
  if (static_cast<double>(dropped) > 0.05 * static_cast<double>(b_count)) {
    throw Error(ErrorKind::TooManyFailures,
                std::to_string(dropped) + " of " + std::to_string(b_count) + " bootstrap resamples failed");
  }
  const double kept_count = static_cast<double>(kept.size());
  auto blocks = detail::blocks_from_replicates(std::move(kept), full.p(), full.q(), 1.0 / (kept_count - 1.0));
  blocks.dropped = dropped;
  return blocks;
}

inline CovBlocks bootstrap_cov(const StudyData& data, const AnalysisSpec& spec, const ResamplePlan& plan) {
  return bootstrap_cov(data, spec, plan, compute_joint_statistic(data, spec));
}

/// Dispatch on plan.method.
inline CovBlocks resample_cov(const StudyData& data, const AnalysisSpec& spec, const ResamplePlan& plan,
                              const JointStatistic& full) {
  if (plan.method == ResampleMethod::Bootstrap) return bootstrap_cov(data, spec, plan, full);
  return jackknife_cov(data, spec, jackknife_groups(data, plan), full, plan.threads);
}

}  // namespace augreg

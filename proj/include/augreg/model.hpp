#pragma once

// Weighted linear, logistic and Cox proportional hazards fits.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "augreg/error.hpp"

namespace augreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Family { Linear, Logistic, Cox };
enum class Ties { Efron, Breslow };

constexpr std::string_view to_string(Family family) {
  switch (family) {
    case Family::Linear: return "linear";
    case Family::Logistic: return "logistic";
    case Family::Cox: return "cox";
  }
  return "unknown";
}

constexpr std::string_view to_string(Ties ties) {
  return ties == Ties::Efron ? "efron" : "breslow";
}

/// Model matrix. Linear and logistic designs carry a leading column of ones;
/// Cox designs never do (the baseline hazard absorbs it).
struct DesignMatrix {
  Matrix values;
  bool has_intercept = false;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }

  static DesignMatrix build(const Matrix& predictors, bool intercept) {
    DesignMatrix out;
    out.has_intercept = intercept;
    if (!intercept) {
      out.values = predictors;
      return out;
    }
    out.values.resize(predictors.rows(), predictors.cols() + 1);
    out.values.col(0).setOnes();
    out.values.rightCols(predictors.cols()) = predictors;
    return out;
  }
};

struct SurvivalResponse {
  Vector time;
  Vector event;  // 0 = censored, 1 = event
};

struct FitOptions {
  double tol = 1e-8;          // max-norm of the Newton step
  int max_iter = 50;
  Ties ties = Ties::Efron;
  double eta_guard = 30.0;    // |linear predictor| beyond which separation is suspected
  double rank_tol = 1e-12;    // smallest/largest eigenvalue ratio of the Gram matrix
  Vector start;               // warm start; empty means start from zero
};

struct RegressionFit {
  Vector coefficients;
  bool converged = false;
  int iterations = 0;
  // Log-likelihood for logistic, log partial likelihood for Cox, residual sum
  // of squares for linear.
  double log_likelihood = 0.0;
};

/// Value, gradient and negative Hessian of a log-likelihood at one point.
struct LikelihoodState {
  double log_likelihood = 0.0;
  Vector score;
  Matrix information;
};

inline Vector unit_weights(Index n) { return Vector::Ones(n); }

namespace detail {

inline void check_design(const DesignMatrix& x, Index n_response, const Vector& w) {
  if (x.rows() != n_response || w.size() != x.rows()) {
    throw Error(ErrorKind::DimensionMismatch,
                "design has " + std::to_string(x.rows()) + " rows, response " +
                    std::to_string(n_response) + ", weights " + std::to_string(w.size()));
  }
  if (x.cols() == 0) throw Error(ErrorKind::InvalidArgument, "design has no columns");
  if (x.rows() < x.cols()) {
    throw Error(ErrorKind::RankDeficient, "fewer rows (" + std::to_string(x.rows()) +
                                              ") than columns (" + std::to_string(x.cols()) + ")");
  }
  if (!x.values.allFinite()) throw Error(ErrorKind::NonfiniteInput, "design matrix has non-finite entries");
  if (!w.allFinite() || (w.array() < 0.0).any()) {
    throw Error(ErrorKind::NonfiniteInput, "case weights must be finite and nonnegative");
  }
  if (!(w.sum() > 0.0)) throw Error(ErrorKind::InvalidArgument, "case weights sum to zero");
}

inline void check_rank(const Matrix& gram, double rank_tol) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const double largest = eig.eigenvalues().maxCoeff();
  const double smallest = eig.eigenvalues().minCoeff();
  if (!(largest > 0.0) || smallest < rank_tol * largest) {
    throw Error(ErrorKind::RankDeficient, "weighted Gram matrix is singular (eigenvalue ratio " +
                                              std::to_string(largest > 0.0 ? smallest / largest : 0.0) +
                                              ")");
  }
}

/// Solves information * step = score; throws RankDeficient when the
/// information matrix is not numerically positive definite.
inline Vector newton_step(const Matrix& information, const Vector& score, double rank_tol) {
  Eigen::LLT<Matrix> llt(information);
  if (llt.info() == Eigen::Success) {
    const double dmax = information.diagonal().maxCoeff();
    const double dmin = llt.matrixL().toDenseMatrix().diagonal().array().square().minCoeff();
    if (dmax > 0.0 && dmin >= rank_tol * dmax) return llt.solve(score);
  }
  throw Error(ErrorKind::RankDeficient, "information matrix is not positive definite");
}

// log(1 + exp(eta)) without overflow.
inline double softplus(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

// Step-halving trigger. Changes at rounding level are not decreases.
inline bool decreased(const LikelihoodState& next, const LikelihoodState& current) {
  return !(next.log_likelihood >= current.log_likelihood - 1e-12 * (1.0 + std::abs(current.log_likelihood)));
}

inline double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

}  // namespace detail

/// Weighted least squares via Cholesky factorization of X'WX.
inline RegressionFit fit_linear(const DesignMatrix& x, const Vector& y, const Vector& w,
                                const FitOptions& options = {}) {
  detail::check_design(x, y.size(), w);
  if (!y.allFinite()) throw Error(ErrorKind::NonfiniteInput, "response has non-finite entries");

  const Matrix weighted = x.values.array().colwise() * w.array();
  const Matrix gram = weighted.transpose() * x.values;
  detail::check_rank(gram, options.rank_tol);

  RegressionFit fit;
  fit.coefficients = gram.llt().solve(weighted.transpose() * y);
  const Vector resid = y - x.values * fit.coefficients;
  fit.log_likelihood = (w.array() * resid.array().square()).sum();
  fit.converged = true;
  fit.iterations = 1;
  return fit;
}

inline LikelihoodState logistic_evaluate(const DesignMatrix& x, const Vector& y, const Vector& w,
                                         const Vector& beta) {
  const Vector eta = x.values * beta;
  const Index n = x.rows();
  Vector resid(n), curvature(n);
  double ll = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double p = detail::sigmoid(eta[i]);
    ll += w[i] * (y[i] * eta[i] - detail::softplus(eta[i]));
    resid[i] = w[i] * (y[i] - p);
    curvature[i] = w[i] * p * (1.0 - p);
  }
  LikelihoodState state;
  state.log_likelihood = ll;
  state.score = x.values.transpose() * resid;
  state.information = x.values.transpose() * (x.values.array().colwise() * curvature.array()).matrix();
  return state;
}

/// Weighted Bernoulli maximum likelihood by Newton-Raphson with step halving.
inline RegressionFit fit_logistic(const DesignMatrix& x, const Vector& y, const Vector& w,
                                  const FitOptions& options = {}) {
  detail::check_design(x, y.size(), w);
  double w_pos = 0.0, w_neg = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    if (y[i] == 1.0) {
      w_pos += w[i];
    } else if (y[i] == 0.0) {
      w_neg += w[i];
    } else {
      throw Error(ErrorKind::InvalidArgument, "binary response must be 0 or 1 (row " + std::to_string(i) + ")");
    }
  }
  if (!(w_pos > 0.0) || !(w_neg > 0.0)) {
    throw Error(ErrorKind::Degenerate, "binary response has a single class");
  }

  Vector beta = options.start.size() == x.cols() ? options.start : Vector::Zero(x.cols());
  LikelihoodState state = logistic_evaluate(x, y, w, beta);
  double prev_step = std::numeric_limits<double>::infinity();

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    Vector step;
    try {
      step = detail::newton_step(state.information, state.score, options.rank_tol);
    } catch (const Error&) {
      if ((x.values * beta).cwiseAbs().maxCoeff() > options.eta_guard) {
        throw Error(ErrorKind::Separation, "information collapsed with |eta| beyond guard");
      }
      throw;
    }

    const double step_norm = step.cwiseAbs().maxCoeff();
    Vector candidate = beta + step;
    LikelihoodState next = logistic_evaluate(x, y, w, candidate);
    if (step_norm < options.tol) {
      return RegressionFit{candidate, true, iter, next.log_likelihood};
    }
    for (int halving = 0; halving < 30 && detail::decreased(next, state); ++halving) {
      step *= 0.5;
      candidate = beta + step;
      next = logistic_evaluate(x, y, w, candidate);
    }
    beta = candidate;
    state = std::move(next);

    const double max_eta = (x.values * beta).cwiseAbs().maxCoeff();
    if (max_eta > options.eta_guard && step_norm > 0.5 * prev_step) {
      throw Error(ErrorKind::Separation,
                  "linear predictor reached " + std::to_string(max_eta) + " without the step shrinking");
    }
    prev_step = step_norm;
  }
  throw Error(ErrorKind::NotConverged, "logistic fit did not converge in " +
                                           std::to_string(options.max_iter) + " iterations");
}

namespace detail {

/// Rows ordered by decreasing time (ties by row index), so the risk set at
/// position k is every row at positions <= the end of k's tie block.
inline std::vector<Index> descending_time_order(const Vector& time) {
  std::vector<Index> order(static_cast<std::size_t>(time.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return time[a] > time[b]; });
  return order;
}

inline LikelihoodState cox_evaluate_sorted(const Matrix& x, const SurvivalResponse& surv, const Vector& w,
                                           const Vector& beta, Ties ties, const std::vector<Index>& order) {
  const Index n = x.rows();
  const Index p = x.cols();
  const Vector eta = x * beta;
  const double shift = n > 0 ? eta.maxCoeff() : 0.0;

  // Running risk-set sums and the current tie block's death sums. Only the
  // upper triangles of s2 and d2 are accumulated (row-major, p x p).
  double s0 = 0.0;
  std::vector<double> s1(static_cast<std::size_t>(p), 0.0), s2(static_cast<std::size_t>(p * p), 0.0);
  std::vector<double> d1(static_cast<std::size_t>(p)), d2(static_cast<std::size_t>(p * p));
  std::vector<double> xi(static_cast<std::size_t>(p)), mean(static_cast<std::size_t>(p));
  std::vector<double> score(static_cast<std::size_t>(p), 0.0), info(static_cast<std::size_t>(p * p), 0.0);
  double ll = 0.0;

  auto add_outer = [p](std::vector<double>& m, const std::vector<double>& v, double r) {
    for (Index a = 0; a < p; ++a) {
      const double ra = r * v[static_cast<std::size_t>(a)];
      double* row = m.data() + a * p;
      for (Index b = a; b < p; ++b) row[b] += ra * v[static_cast<std::size_t>(b)];
    }
  };

  std::size_t pos = 0;
  const std::size_t total = order.size();
  while (pos < total) {
    const double t = surv.time[order[pos]];
    std::size_t block_end = pos + 1;
    while (block_end < total && surv.time[order[block_end]] == t) ++block_end;
    // Death sums only matter for Efron with more than one row at this time.
    const bool track_deaths = ties == Ties::Efron && block_end - pos > 1;
    int deaths = 0;
    double death_weight = 0.0, d0 = 0.0;
    if (track_deaths) {
      std::fill(d1.begin(), d1.end(), 0.0);
      std::fill(d2.begin(), d2.end(), 0.0);
    }
    for (; pos < block_end; ++pos) {
      const Index i = order[pos];
      const double r = w[i] * std::exp(eta[i] - shift);
      for (Index a = 0; a < p; ++a) xi[static_cast<std::size_t>(a)] = x(i, a);
      s0 += r;
      for (Index a = 0; a < p; ++a) s1[static_cast<std::size_t>(a)] += r * xi[static_cast<std::size_t>(a)];
      add_outer(s2, xi, r);
      if (surv.event[i] != 0.0 && w[i] > 0.0) {
        ++deaths;
        death_weight += w[i];
        if (track_deaths) {
          d0 += r;
          for (Index a = 0; a < p; ++a) d1[static_cast<std::size_t>(a)] += r * xi[static_cast<std::size_t>(a)];
          add_outer(d2, xi, r);
        }
        ll += w[i] * (eta[i] - shift);
        for (Index a = 0; a < p; ++a) score[static_cast<std::size_t>(a)] += w[i] * xi[static_cast<std::size_t>(a)];
      }
    }
    if (deaths == 0) continue;
    const double mean_weight = death_weight / deaths;
    for (int k = 0; k < deaths; ++k) {
      const double frac = track_deaths ? static_cast<double>(k) / deaths : 0.0;
      const double denom = s0 - frac * d0;
      const double inv = 1.0 / denom;
      for (Index a = 0; a < p; ++a) {
        const auto ua = static_cast<std::size_t>(a);
        mean[ua] = frac == 0.0 ? s1[ua] * inv : (s1[ua] - frac * d1[ua]) * inv;
      }
      ll -= mean_weight * std::log(denom);
      for (Index a = 0; a < p; ++a) {
        const auto ua = static_cast<std::size_t>(a);
        score[ua] -= mean_weight * mean[ua];
        for (Index b = a; b < p; ++b) {
          const auto ab = static_cast<std::size_t>(a * p + b);
          const double second = frac == 0.0 ? s2[ab] : s2[ab] - frac * d2[ab];
          info[ab] += mean_weight * (second * inv - mean[ua] * mean[static_cast<std::size_t>(b)]);
        }
      }
    }
  }

  LikelihoodState state;
  state.log_likelihood = ll;
  state.score = Eigen::Map<const Vector>(score.data(), p);
  state.information.resize(p, p);
  for (Index a = 0; a < p; ++a) {
    for (Index b = a; b < p; ++b) {
      state.information(a, b) = state.information(b, a) = info[static_cast<std::size_t>(a * p + b)];
    }
  }
  return state;
}

}  // namespace detail

/// Weighted Cox partial likelihood, its score and information at beta.
inline LikelihoodState cox_evaluate(const DesignMatrix& x, const SurvivalResponse& surv, const Vector& w,
                                    const Vector& beta, Ties ties = Ties::Efron) {
  return detail::cox_evaluate_sorted(x.values, surv, w, beta, ties, detail::descending_time_order(surv.time));
}

/// Cox proportional hazards by Newton-Raphson with step halving. Columns that
/// are constant across all rows carry no information and are pinned at zero.
inline RegressionFit fit_cox(const DesignMatrix& x, const SurvivalResponse& surv, const Vector& w,
                             const FitOptions& options = {}) {
  if (x.has_intercept) throw Error(ErrorKind::InvalidArgument, "Cox design must not carry an intercept");
  detail::check_design(x, surv.time.size(), w);
  if (surv.event.size() != surv.time.size()) {
    throw Error(ErrorKind::DimensionMismatch, "event and time lengths differ");
  }
  double event_weight = 0.0;
  for (Index i = 0; i < surv.time.size(); ++i) {
    if (!(surv.time[i] > 0.0) || !std::isfinite(surv.time[i])) {
      throw Error(ErrorKind::InvalidArgument, "survival time must be positive and finite (row " +
                                                  std::to_string(i) + ")");
    }
    if (surv.event[i] != 0.0 && surv.event[i] != 1.0) {
      throw Error(ErrorKind::InvalidArgument, "event indicator must be 0 or 1 (row " + std::to_string(i) + ")");
    }
    event_weight += surv.event[i] * w[i];
  }
  if (!(event_weight > 0.0)) throw Error(ErrorKind::NoEvents, "no events with positive weight");

  std::vector<Index> active;
  for (Index j = 0; j < x.cols(); ++j) {
    const auto col = x.values.col(j);
    if ((col.array() != col[0]).any()) active.push_back(j);
  }
  RegressionFit fit;
  fit.coefficients = Vector::Zero(x.cols());
  const auto order = detail::descending_time_order(surv.time);
  if (active.empty()) {
    fit.converged = true;
    fit.log_likelihood =
        detail::cox_evaluate_sorted(x.values, surv, w, fit.coefficients, options.ties, order).log_likelihood;
    return fit;
  }

  const Matrix xa = x.values(Eigen::all, active);
  Vector beta = Vector::Zero(static_cast<Index>(active.size()));
  if (options.start.size() == x.cols()) beta = options.start(active);

  LikelihoodState state = detail::cox_evaluate_sorted(xa, surv, w, beta, options.ties, order);
  double prev_step = std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    Vector step = detail::newton_step(state.information, state.score, options.rank_tol);
    const double step_norm = step.cwiseAbs().maxCoeff();
    Vector candidate = beta + step;
    LikelihoodState next = detail::cox_evaluate_sorted(xa, surv, w, candidate, options.ties, order);
    if (step_norm < options.tol) {
      fit.coefficients(active) = candidate;
      fit.converged = true;
      fit.iterations = iter;
      fit.log_likelihood = next.log_likelihood;
      return fit;
    }
    for (int halving = 0; halving < 30 && detail::decreased(next, state); ++halving) {
      step *= 0.5;
      candidate = beta + step;
      next = detail::cox_evaluate_sorted(xa, surv, w, candidate, options.ties, order);
    }
    beta = candidate;
    state = std::move(next);

    const Vector eta = xa * beta;
    const double spread = eta.maxCoeff() - eta.minCoeff();
    if (spread > options.eta_guard && step_norm > 0.5 * prev_step) {
      throw Error(ErrorKind::NotConverged, "monotone likelihood: coefficients diverging (linear predictor spread " +
                                               std::to_string(spread) + ")");
    }
    prev_step = step_norm;
  }
  throw Error(ErrorKind::NotConverged,
              "Cox fit did not converge in " + std::to_string(options.max_iter) + " iterations");
}

}  // namespace augreg

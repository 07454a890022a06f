#pragma once

// Augmented estimate beta_aug = beta_val - Omega K^-1 (gamma_val - gamma_ful)
// with variance Sigma - Omega K^-1 Omega', plus Wald tables.

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "augreg/error.hpp"
#include "augreg/model.hpp"
#include "augreg/resample.hpp"

namespace augreg {

struct WaldRow {
  std::string term;
  double estimate = 0.0;
  double se = 0.0;
  double lcl = 0.0;
  double ucl = 0.0;
  double z = 0.0;
  double p = 0.0;
  // se == 0: z and p are undefined (NaN) and the interval collapses.
  bool degenerate_se = false;
};

using WaldTable = std::vector<WaldRow>;

/// Two-sided standard normal quantile z_{1 - alpha/2}.
inline double normal_critical(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
  return boost::math::quantile(boost::math::complement(boost::math::normal(), alpha / 2.0));
}

/// Two-sided p-value of a standard normal statistic.
inline double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

/// Per-coefficient normal-theory inference from an estimate and its covariance.
inline WaldTable wald_table(const Vector& estimate, const Matrix& cov, double alpha,
                            const std::vector<std::string>& terms = {}) {
  if (cov.rows() != estimate.size() || cov.cols() != estimate.size()) {
    throw Error(ErrorKind::DimensionMismatch, "covariance does not match estimate length");
  }
  if (!terms.empty() && static_cast<Index>(terms.size()) != estimate.size()) {
    throw Error(ErrorKind::DimensionMismatch, "term names do not match estimate length");
  }
  if (!estimate.allFinite() || !cov.diagonal().allFinite()) {
    throw Error(ErrorKind::NonfiniteInput, "estimate or variance is not finite");
  }
  const double crit = normal_critical(alpha);
  WaldTable table;
  table.reserve(static_cast<std::size_t>(estimate.size()));
  for (Index j = 0; j < estimate.size(); ++j) {
    const double var = cov(j, j);
    if (var < 0.0) throw Error(ErrorKind::InvalidArgument, "negative variance for coefficient " + std::to_string(j));
    WaldRow row;
    row.term = terms.empty() ? "b" + std::to_string(j) : terms[static_cast<std::size_t>(j)];
    row.estimate = estimate[j];
    row.se = std::sqrt(var);
    row.lcl = row.estimate - crit * row.se;
    row.ucl = row.estimate + crit * row.se;
    if (row.se == 0.0) {
      row.degenerate_se = true;
      row.z = std::numeric_limits<double>::quiet_NaN();
      row.p = std::numeric_limits<double>::quiet_NaN();
    } else {
      row.z = row.estimate / row.se;
      row.p = normal_two_sided_p(row.z);
    }
    table.push_back(std::move(row));
  }
  return table;
}

struct AugmentDiagnostics {
  double k_condition = 0.0;     // largest / smallest eigenvalue of K (inf if singular)
  bool pseudo_inverse = false;  // K singular to tolerance; truncated pseudo-inverse used
  bool psd_repair = false;      // negative eigenvalues of var_aug clipped
  bool no_augmentation = false; // K identically zero; beta_val returned
};

struct AugmentedEstimate {
  Vector beta_aug;
  Matrix var_aug;
  WaldTable aug;        // beta_aug with var_aug
  WaldTable val;        // beta_val with Sigma
  WaldTable ful;        // gamma_ful with its resampled covariance
  AugmentDiagnostics diagnostics;
};

struct AugmentOptions {
  double alpha = 0.05;
  double pinv_tol = 1e-10;  // relative eigenvalue cutoff for K
  double psd_tol = 1e-10;   // relative tolerance for negative eigenvalues of var_aug
  std::vector<std::string> reference_terms;
  std::vector<std::string> surrogate_terms;
};

inline AugmentedEstimate augment(const JointStatistic& js, const CovBlocks& cov, const AugmentOptions& options) {
  const Index p = js.p(), q = js.q();
  if (js.gamma_diff.size() != q || js.gamma_ful.size() != q || cov.sigma.rows() != p || cov.sigma.cols() != p ||
      cov.omega.rows() != p || cov.omega.cols() != q || cov.k.rows() != q || cov.k.cols() != q) {
    throw Error(ErrorKind::DimensionMismatch, "joint statistic and covariance blocks are not conformant");
  }

  AugmentedEstimate out;
  auto& diag = out.diagnostics;
  if ((cov.k.array() == 0.0).all()) {
    diag.no_augmentation = true;
    diag.k_condition = std::numeric_limits<double>::infinity();
    out.beta_aug = js.beta_val;
    out.var_aug = cov.sigma;
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov.k);
    const Vector& lambda = eig.eigenvalues();
    const double largest = lambda.maxCoeff();
    const double smallest = lambda.minCoeff();
    diag.k_condition = smallest > 0.0 ? largest / smallest : std::numeric_limits<double>::infinity();

    Vector x;
    Matrix y;  // K^-1 Omega'
    if (!(smallest > options.pinv_tol * largest)) {
      diag.pseudo_inverse = true;
      Vector inv = Vector::Zero(q);
      for (Index i = 0; i < q; ++i) {
        if (lambda[i] > options.pinv_tol * largest) inv[i] = 1.0 / lambda[i];
      }
      const Matrix pinv = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
      x = pinv * js.gamma_diff;
      y = pinv * cov.omega.transpose();
    } else {
      Eigen::LDLT<Matrix> ldlt(cov.k);
      x = ldlt.solve(js.gamma_diff);
      y = ldlt.solve(cov.omega.transpose());
    }
    out.beta_aug = js.beta_val - cov.omega * x;
    const Matrix raw = cov.sigma - cov.omega * y;
    out.var_aug = 0.5 * (raw + raw.transpose());
  }

  Eigen::SelfAdjointEigenSolver<Matrix> var_eig(out.var_aug);
  const Vector& mu = var_eig.eigenvalues();
  const double scale = mu.cwiseAbs().maxCoeff();
  if (mu.minCoeff() < -options.psd_tol * scale) {
    diag.psd_repair = true;
    const Vector clipped = mu.cwiseMax(0.0);
    out.var_aug = var_eig.eigenvectors() * clipped.asDiagonal() * var_eig.eigenvectors().transpose();
    out.var_aug = 0.5 * (out.var_aug + out.var_aug.transpose()).eval();
  }
  // Rounding can leave a diagonal entry at -1e-17 on an otherwise PSD matrix.
  Matrix var_for_table = out.var_aug;
  var_for_table.diagonal() = var_for_table.diagonal().cwiseMax(0.0);

  out.aug = wald_table(out.beta_aug, var_for_table, options.alpha, options.reference_terms);
  out.val = wald_table(js.beta_val, cov.sigma, options.alpha, options.reference_terms);
  if (cov.gamma_ful_cov.rows() == q) {
    out.ful = wald_table(js.gamma_ful, cov.gamma_ful_cov, options.alpha, options.surrogate_terms);
  }
  return out;
}

inline AugmentedEstimate augment(const JointStatistic& js, const CovBlocks& cov, double alpha = 0.05) {
  AugmentOptions options;
  options.alpha = alpha;
  return augment(js, cov, options);
}

}  // namespace augreg

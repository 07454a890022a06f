#pragma once

#include "augreg/augment.hpp"
#include "augreg/resample.hpp"
#include "augreg/study.hpp"

namespace augreg {

struct AnalysisResult {
  JointStatistic joint;
  CovBlocks cov;
  AugmentedEstimate estimate;
};

/// Joint statistic, resampled covariance and augmentation with the plan and
/// alpha carried by `spec`. `strict` enforces the design requirements of
/// validate_study.
inline AnalysisResult run_analysis(const StudyData& data, const AnalysisSpec& spec, bool strict = true) {
  validate_study(data, spec, strict);
  AnalysisResult result;
  result.joint = compute_joint_statistic(data, spec);
  result.cov = resample_cov(data, spec, spec.plan, result.joint);
  AugmentOptions options;
  options.alpha = spec.alpha;
  options.reference_terms = spec.reference_terms();
  options.surrogate_terms = spec.surrogate_terms();
  result.estimate = augment(result.joint, result.cov, options);
  return result;
}

}  // namespace augreg

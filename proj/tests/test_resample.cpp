#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "augreg/resample.hpp"
#include "augreg/simulate.hpp"
#include "test_support.hpp"

namespace augreg {
namespace {

using testing::brute_force_delete_one;
using testing::linear_spec;
using testing::noisy_linear_study;

bool bit_identical(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::equal(a.data(), a.data() + a.size(), b.data());
}

bool bit_identical(const CovBlocks& a, const CovBlocks& b) {
  return bit_identical(a.sigma, b.sigma) && bit_identical(a.omega, b.omega) && bit_identical(a.k, b.k) &&
         bit_identical(a.gamma_ful_cov, b.gamma_ful_cov);
}

TEST(JointStatistic, FullValidationWithIdenticalVariablesGivesZeroDifference) {
  StudyData d = noisy_linear_study(30, 30, 2, 1);
  d.sur_predictors = d.ref_predictors;
  d.sur_outcome = d.ref_outcome;
  const auto js = compute_joint_statistic(d, linear_spec(2));
  EXPECT_TRUE((js.gamma_diff.array() == 0.0).all());
}

TEST(JointStatistic, PerfectSurrogatesGiveIdenticalValidationFits) {
  StudyData d = noisy_linear_study(40, 15, 2, 2);
  for (Index i = 0; i < 40; ++i) {
    if (d.validated[static_cast<std::size_t>(i)]) {
      d.sur_predictors.row(i) = d.ref_predictors.row(i);
      d.sur_outcome[i] = d.ref_outcome[i];
    }
  }
  const auto js = compute_joint_statistic(d, linear_spec(2));
  EXPECT_TRUE(bit_identical(js.beta_val, js.gamma_val));
}

TEST(JointStatistic, MatchesRefitOnExtractedSubsets) {
  ScenarioSpec scenario = ScenarioSpec::named("example4");
  scenario.seed = 2024;
  const auto study = generate_replicate(scenario, 0);
  const auto js = compute_joint_statistic(study.data, study.spec);

  const auto val = study.data.validated_rows();
  Matrix ref_val(static_cast<Index>(val.size()), 4);
  Vector y_val(static_cast<Index>(val.size()));
  for (std::size_t k = 0; k < val.size(); ++k) {
    ref_val.row(static_cast<Index>(k)) = study.data.ref_predictors.row(val[k]);
    y_val[static_cast<Index>(k)] = study.data.ref_outcome[val[k]];
  }
  const Vector beta_val_oracle =
      fit_linear(DesignMatrix::build(ref_val, true), y_val, unit_weights(y_val.size())).coefficients;
  const Vector gamma_ful_oracle = fit_linear(DesignMatrix::build(study.data.sur_predictors, true),
                                             study.data.sur_outcome, unit_weights(study.data.n_full()))
                                      .coefficients;
  EXPECT_LT((js.beta_val - beta_val_oracle).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((js.gamma_ful - gamma_ful_oracle).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(JointStatistic, FitFailureNamesTheFit) {
  AnalysisSpec spec = linear_spec(1);
  spec.family = Family::Logistic;
  StudyData d;
  d.validated = {1, 1, 1, 0, 0, 0};
  d.ref_outcome = Vector::Zero(6);  // single class in the reference fit
  d.sur_outcome = (Vector(6) << 0, 1, 0, 1, 0, 1).finished();
  d.ref_predictors = (Matrix(6, 1) << 0.1, 0.4, -0.3, 0, 0, 0).finished();
  d.sur_predictors = (Matrix(6, 1) << 0.1, 0.4, -0.3, 0.2, 0.5, -0.1).finished();
  try {
    compute_joint_statistic(d, spec);
    FAIL() << "expected Degenerate";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Degenerate);
    EXPECT_NE(std::string(e.what()).find("beta_val"), std::string::npos);
  }
}

TEST(Jackknife, ConstantStatisticGivesZeroBlocks) {
  AnalysisSpec spec = linear_spec(0);
  StudyData d;
  // Zero outcomes give a zero fit on every leave-out, whatever its size.
  d.validated = {1, 0, 1, 0, 1, 0, 1, 0};
  d.ref_outcome = Vector::Zero(8);
  d.sur_outcome = Vector::Zero(8);
  d.ref_predictors.resize(8, 0);
  d.sur_predictors.resize(8, 0);
  ResamplePlan plan;
  const auto cov = jackknife_cov(d, spec, plan);
  EXPECT_TRUE((cov.sigma.array() == 0.0).all());
  EXPECT_TRUE((cov.omega.array() == 0.0).all());
  EXPECT_TRUE((cov.k.array() == 0.0).all());
}

TEST(Jackknife, DeleteOneOfTheMeanIsVarianceOverN) {
  CounterRng rng(9);
  const Index n = 25;
  StudyData d;
  d.validated.assign(n, 1);
  d.ref_outcome.resize(n);
  for (Index i = 0; i < n; ++i) d.ref_outcome[i] = 3.0 + 2.0 * rng.normal();
  d.sur_outcome = d.ref_outcome;
  d.ref_predictors.resize(n, 0);
  d.sur_predictors.resize(n, 0);
  const auto cov = jackknife_cov(d, linear_spec(0), ResamplePlan{});
  const double mean = d.ref_outcome.mean();
  const double s2 = (d.ref_outcome.array() - mean).square().sum() / (n - 1);
  EXPECT_NEAR(cov.sigma(0, 0), s2 / n, 1e-12);
}

TEST(Jackknife, DeleteOneMatchesBruteForceOracle) {
  const StudyData d = noisy_linear_study(20, 8, 1, 77);
  const auto cov = jackknife_cov(d, linear_spec(1), ResamplePlan{});
  const auto oracle = brute_force_delete_one(d, 1);
  EXPECT_LT((cov.sigma - oracle.sigma).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((cov.omega - oracle.omega).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((cov.k - oracle.k).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(cov.replicates, 20u);
}

TEST(Jackknife, LogisticWarmStartedLeaveOutsMatchColdRefits) {
  CounterRng rng(5);
  const Index n = 60;
  StudyData d;
  d.validated.assign(n, 0);
  d.ref_predictors = testing::random_gaussian(n, 1, rng);
  d.sur_predictors = d.ref_predictors;
  d.ref_outcome.resize(n);
  d.sur_outcome.resize(n);
  for (Index i = 0; i < n; ++i) {
    d.validated[static_cast<std::size_t>(i)] = i % 2 == 0;
    d.ref_outcome[i] = rng.bernoulli(detail::sigmoid(0.4 + d.ref_predictors(i, 0))) ? 1.0 : 0.0;
    d.sur_outcome[i] = rng.bernoulli(0.9) ? d.ref_outcome[i] : 1.0 - d.ref_outcome[i];
  }
  AnalysisSpec spec = linear_spec(1);
  spec.family = Family::Logistic;
  const auto full = compute_joint_statistic(d, spec);
  const auto groups = jackknife_groups(d, ResamplePlan{});
  const auto cov = jackknife_cov(d, spec, groups, full);

  std::vector<Vector> stats;
  for (const auto& group : groups) {
    std::vector<Index> keep;
    for (Index i = 0; i < n; ++i) {
      if (std::find(group.begin(), group.end(), i) == group.end()) keep.push_back(i);
    }
    const auto js = compute_joint_statistic(d.subset(keep), spec);  // cold starts
    Vector s(6);
    s << js.beta_val, js.gamma_diff, js.gamma_ful;
    stats.push_back(s);
  }
  Vector mean = Vector::Zero(6);
  for (const auto& s : stats) mean += s;
  mean /= static_cast<double>(stats.size());
  Matrix cross = Matrix::Zero(6, 6);
  for (const auto& s : stats) cross += (s - mean) * (s - mean).transpose();
  cross *= (n - 1.0) / n;
  EXPECT_LT((cov.sigma - cross.topLeftCorner(2, 2)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((cov.k - cross.block(2, 2, 2, 2)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Jackknife, GroupsPartitionRowsAndStratifyValidation) {
  const StudyData d = noisy_linear_study(3000, 300, 1, 4);
  ResamplePlan plan;
  const auto groups = jackknife_groups(d, plan);
  ASSERT_EQ(groups.size(), static_cast<std::size_t>(ResamplePlan::kDefaultGroups));
  std::vector<int> seen(3000, 0);
  for (const auto& g : groups) {
    int validated = 0;
    for (Index r : g) {
      ++seen[static_cast<std::size_t>(r)];
      validated += d.validated[static_cast<std::size_t>(r)];
    }
    EXPECT_LE(validated, 1);
    EXPECT_GE(g.size(), 6u);
    EXPECT_LE(g.size(), 6u);
  }
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));

  plan.groups = 0;
  EXPECT_EQ(jackknife_groups(noisy_linear_study(2000, 200, 1, 4), plan).size(), 2000u);
}

TEST(Jackknife, ClustersAreRemovedWhole) {
  StudyData d = noisy_linear_study(60, 20, 1, 8);
  for (Index i = 0; i < 60; ++i) d.cluster.push_back(i / 3);  // clusters of 3 consecutive rows
  ResamplePlan plan;
  plan.groups = 7;
  for (const auto& g : jackknife_groups(d, plan)) {
    for (Index r : g) {
      for (Index mate = (r / 3) * 3; mate < (r / 3) * 3 + 3; ++mate) {
        EXPECT_NE(std::find(g.begin(), g.end(), mate), g.end());
      }
    }
  }
}

class JackknifeProperties : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(JackknifeProperties, StackedCovarianceIsPsd) {
  const StudyData d = noisy_linear_study(80, 30, 2, GetParam());
  const auto cov = jackknife_cov(d, linear_spec(2), ResamplePlan{});
  const Matrix stacked = cov.stacked();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(stacked);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10 * eig.eigenvalues().maxCoeff());
  EXPECT_TRUE(bit_identical(cov.sigma, cov.sigma.transpose()));
  EXPECT_TRUE(bit_identical(cov.k, cov.k.transpose()));
}

TEST_P(JackknifeProperties, IndependentOfGroupOrder) {
  const StudyData d = noisy_linear_study(90, 30, 2, GetParam());
  const AnalysisSpec spec = linear_spec(2);
  ResamplePlan plan;
  plan.groups = 15;
  auto groups = jackknife_groups(d, plan);
  const auto full = compute_joint_statistic(d, spec);
  const auto a = jackknife_cov(d, spec, groups, full);
  CounterRng rng(GetParam());
  for (std::size_t i = groups.size(); i > 1; --i) std::swap(groups[i - 1], groups[rng.below(i)]);
  const auto b = jackknife_cov(d, spec, groups, full);
  EXPECT_TRUE(bit_identical(a, b));
}

TEST_P(JackknifeProperties, UnitWeightsMatchUnweightedPath) {
  StudyData d = noisy_linear_study(50, 20, 1, GetParam());
  const auto a = jackknife_cov(d, linear_spec(1), ResamplePlan{});
  d.weight = Vector::Ones(50);
  const auto b = jackknife_cov(d, linear_spec(1), ResamplePlan{});
  EXPECT_TRUE(bit_identical(a, b));
}

TEST_P(JackknifeProperties, SingletonClustersMatchElementJackknife) {
  StudyData d = noisy_linear_study(50, 20, 1, GetParam());
  ResamplePlan plan;
  plan.groups = 9;
  const auto a = jackknife_cov(d, linear_spec(1), plan);
  for (Index i = 0; i < 50; ++i) d.cluster.push_back(1000 + 7 * i);
  const auto b = jackknife_cov(d, linear_spec(1), plan);
  EXPECT_TRUE(bit_identical(a, b));
}

TEST_P(JackknifeProperties, ThreadCountDoesNotChangeResult) {
  const StudyData d = noisy_linear_study(70, 25, 2, GetParam());
  ResamplePlan plan;
  plan.threads = 1;
  const auto a = jackknife_cov(d, linear_spec(2), plan);
  plan.threads = 4;
  const auto b = jackknife_cov(d, linear_spec(2), plan);
  EXPECT_TRUE(bit_identical(a, b));
}

INSTANTIATE_TEST_SUITE_P(Seeds, JackknifeProperties, ::testing::Range<std::uint64_t>(1, 7));

TEST(Jackknife, GroupTooSmall) {
  const StudyData d = noisy_linear_study(10, 3, 1, 3);
  ResamplePlan plan;
  plan.groups = 2;
  try {
    jackknife_cov(d, linear_spec(1), plan);
    FAIL() << "expected GroupTooSmall";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GroupTooSmall);
  }
}

TEST(Jackknife, InsufficientGroups) {
  const StudyData d = noisy_linear_study(10, 5, 1, 3);
  ResamplePlan plan;
  plan.groups = 1;
  try {
    jackknife_groups(d, plan);
    FAIL() << "expected InsufficientGroups";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientGroups);
  }
}

TEST(Bootstrap, ConstantDataGivesZeroBlocks) {
  AnalysisSpec spec = linear_spec(0);
  StudyData d;
  d.validated = {1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
  d.ref_outcome = Vector::Constant(10, 2.0);
  d.sur_outcome = Vector::Constant(10, 3.0);
  d.ref_predictors.resize(10, 0);
  d.sur_predictors.resize(10, 0);
  ResamplePlan plan;
  plan.method = ResampleMethod::Bootstrap;
  plan.replicates = 60;
  const auto cov = bootstrap_cov(d, spec, plan);
  EXPECT_TRUE((cov.stacked().array() == 0.0).all());
  EXPECT_EQ(cov.replicates, 60u);
}

TEST(Bootstrap, ResamplesPreserveValidationCount) {
  const StudyData d = noisy_linear_study(200, 37, 1, 12);
  const auto units = detail::make_units(d);
  for (std::uint64_t b = 0; b < 100; ++b) {
    CounterRng rng(99, b);
    const auto rows = bootstrap_rows(units, rng);
    ASSERT_EQ(rows.size(), 200u);
    const auto n_val = std::count_if(rows.begin(), rows.end(),
                                     [&](Index r) { return d.validated[static_cast<std::size_t>(r)] != 0; });
    EXPECT_EQ(n_val, 37);
  }
}

TEST(Bootstrap, AgreesWithJackknifeOnExample4) {
  ScenarioSpec scenario = ScenarioSpec::named("example4");
  scenario.seed = 11;
  const auto study = generate_replicate(scenario, 0);
  const auto full = compute_joint_statistic(study.data, study.spec);
  ResamplePlan jack;
  const auto jk = jackknife_cov(study.data, study.spec, jackknife_groups(study.data, jack), full);
  ResamplePlan boot;
  boot.method = ResampleMethod::Bootstrap;
  boot.replicates = 400;
  boot.seed = 5;
  const auto bs = bootstrap_cov(study.data, study.spec, boot, full);
  for (Index j = 0; j < 5; ++j) {
    EXPECT_NEAR(bs.sigma(j, j) / jk.sigma(j, j), 1.0, 0.25) << "coefficient " << j;
  }
}

TEST(Bootstrap, ThreadCountDoesNotChangeResult) {
  const StudyData d = noisy_linear_study(120, 40, 1, 21);
  ResamplePlan plan;
  plan.method = ResampleMethod::Bootstrap;
  plan.replicates = 80;
  plan.threads = 1;
  const auto a = bootstrap_cov(d, linear_spec(1), plan);
  plan.threads = 3;
  const auto b = bootstrap_cov(d, linear_spec(1), plan);
  EXPECT_TRUE(bit_identical(a, b));
}

TEST(Bootstrap, TooManyFailedReplicates) {
  CounterRng rng(31);
  const Index n = 100;
  StudyData d;
  d.validated.assign(n, 0);
  d.ref_predictors = testing::random_gaussian(n, 1, rng);
  d.sur_predictors = d.ref_predictors;
  d.ref_outcome = Vector::Zero(n);
  d.sur_outcome = Vector::Zero(n);
  for (Index i = 0; i < 20; ++i) d.validated[static_cast<std::size_t>(i)] = 1;
  d.ref_outcome[0] = d.sur_outcome[0] = 1.0;  // one event among the validated rows
  d.ref_outcome[1] = d.sur_outcome[1] = 1.0;
  for (Index i = 20; i < n; i += 3) d.sur_outcome[i] = 1.0;
  AnalysisSpec spec = linear_spec(1);
  spec.family = Family::Logistic;
  ResamplePlan plan;
  plan.method = ResampleMethod::Bootstrap;
  plan.replicates = 100;
  try {
    bootstrap_cov(d, spec, plan);
    FAIL() << "expected TooManyFailures";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooManyFailures);
  }
}

TEST(Bootstrap, RejectsSmallB) {
  const StudyData d = noisy_linear_study(40, 10, 1, 2);
  ResamplePlan plan;
  plan.method = ResampleMethod::Bootstrap;
  plan.replicates = 49;
  EXPECT_THROW(bootstrap_cov(d, linear_spec(1), plan), Error);
}

}  // namespace
}  // namespace augreg

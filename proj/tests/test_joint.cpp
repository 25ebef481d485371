#include <gtest/gtest.h>

#include <cmath>

#include "missfit/adaptive.hpp"
#include "missfit/datagen.hpp"
#include "missfit/joint.hpp"
#include "missfit/learners.hpp"
#include "missfit/metrics.hpp"
#include "support.hpp"

using namespace missfit;
using namespace testing_support;

namespace {

RegressorContract ols_contract() { return linear_contract(ElasticNetSpec{}); }

RegressorContract small_tree_contract() {
  TreeParams p;
  p.max_depth = 3;
  p.min_leaf = 3;
  return tree_contract(p);
}

MaskedDataset censored_single_feature(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix x = random_matrix(n, 1, rng);
  const Mask m = apply_censoring(x, 0.5);
  std::normal_distribution<double> noise;
  Vector y(n);
  for (Index i = 0; i < n; ++i) y[i] = 2.0 * x(i, 0) + noise(rng);
  return make_dataset(x, m, y);
}

double censored_mean(const MaskedDataset& d, Index j) {
  double s = 0;
  Index c = 0;
  for (Index i = 0; i < d.rows(); ++i)
    if (d.missing(i, j)) s += d.x(i, j), ++c;
  return s / static_cast<double>(c);
}

// Straightforward restatement of the alternating search built only from
// coordinate_step and full re-evaluation.
struct NaiveRun {
  Vector mu;
  std::vector<double> trace;
};

NaiveRun naive_joint(const MaskedDataset& data, const RegressorContract& contract, const JointLimits& lim,
                     std::uint64_t seed) {
  const Index n = data.rows(), d = data.cols();
  Vector mu = Vector::Zero(d), sigma = Vector::Ones(d);
  std::vector<bool> has_missing(d, false);
  for (Index j = 0; j < d; ++j) {
    std::vector<double> obs;
    for (Index i = 0; i < n; ++i) {
      if (data.missing(i, j)) has_missing[j] = true;
      else obs.push_back(data.x(i, j));
    }
    if (obs.empty()) continue;
    double mean = 0;
    for (double v : obs) mean += v;
    mean /= static_cast<double>(obs.size());
    double ss = 0;
    for (double v : obs) ss += (v - mean) * (v - mean);
    mu[j] = mean;
    sigma[j] = obs.size() > 1 ? std::sqrt(ss / (obs.size() - 1)) / std::sqrt(static_cast<double>(n)) : 0.0;
  }
  auto err_of = [&](const Predictor& f) { return mean_squared_error(data.y, f.predict(impute_with(data, mu))); };
  std::unique_ptr<Predictor> f = contract.fit(impute_with(data, mu), data.y, seed);
  double err = err_of(*f);
  NaiveRun run;
  for (int outer = 0; outer < lim.max_outer; ++outer) {
    if (outer > 0) {
      auto g = contract.fit(impute_with(data, mu), data.y, seed);
      const double e = err_of(*g);
      if (e > err) break;
      f = std::move(g);
      err = e;
    }
    int moves = 0;
    for (int c = 0; c < lim.max_cycles; ++c) {
      const double start = err;
      int moved = 0;
      for (Index j = 0; j < d; ++j) {
        if (sigma[j] == 0.0 || !has_missing[j]) continue;
        const auto step = coordinate_step(mu, j, sigma[j], *f, data, ErrorMetric::MeanSquared);
        if (step.epsilon == 0) continue;
        mu[j] += step.epsilon * sigma[j];
        err = step.error;
        ++moved;
      }
      moves += moved;
      if (moved == 0 || (start - err) / start < lim.min_rel_improve) break;
    }
    run.trace.push_back(err);
    if (moves == 0) break;
    const auto k = run.trace.size();
    if (k >= 2 && (run.trace[k - 2] - run.trace[k - 1]) / run.trace[k - 2] < lim.min_rel_improve) break;
  }
  run.mu = mu;
  return run;
}

}  // namespace

TEST(ImputeWith, HandExample) {
  Matrix x(2, 2);
  x << 1, 0, 0, 4;
  Mask m(2, 2);
  m << 0, 1, 1, 0;
  const Matrix out = impute_with(make_dataset(x, m, Vector::Zero(2)), (Vector(2) << 9, 8).finished());
  EXPECT_EQ(out, (Matrix(2, 2) << 1, 8, 9, 4).finished());
}

TEST(ImputeWith, NoMissingIsIdentityAndAllMissingIsConstant) {
  auto data = random_dataset(10, 3, 0.0, 1);
  EXPECT_EQ(impute_with(data, Vector::Constant(3, 5.0)), data.x);
  data.m.col(1).setOnes();
  EXPECT_EQ(impute_with(data, Vector::Constant(3, 5.0)).col(1), Vector::Constant(10, 5.0));
}

TEST(ImputeWith, RejectsBadMu) {
  const auto data = random_dataset(5, 2, 0.3, 2);
  EXPECT_THROW(impute_with(data, Vector::Zero(3)), ContractError);
  EXPECT_THROW(impute_with(data, (Vector(2) << 0, NAN).finished()), ContractError);
}

TEST(JointFit, NoMissingGivesMeansAndPlainFit) {
  const auto data = random_dataset(100, 3, 0.0, 3);
  const auto model = joint_fit(data, ols_contract(), {}, ErrorMetric::MeanSquared, 0);
  EXPECT_TRUE(model.mu.isApprox(data.x.colwise().mean().transpose(), 1e-12));
  ASSERT_EQ(model.error_trace.size(), 1u);
  const auto plain = ols_contract().fit(data.x, data.y, 0);
  EXPECT_EQ(model.predictor->predict(data.x), plain->predict(data.x));
  EXPECT_DOUBLE_EQ(model.error_trace[0], mean_squared_error(data.y, plain->predict(data.x)));
}

TEST(JointFit, InitialMuMatchesMeanImpute) {
  const auto data = random_dataset(80, 4, 0.3, 4);
  JointLimits one;
  one.max_outer = 1;
  one.max_cycles = 1;
  const auto mi = mean_impute(data);
  const auto model = joint_fit(data, ols_contract(), one, ErrorMetric::MeanSquared, 0);
  for (Index j = 0; j < 4; ++j) EXPECT_LE(std::abs(model.mu[j] - mi.mu[j]), model.sigma[j] * (1 + 1e-12));
}

TEST(JointFit, AllMissingFeatureStartsAtZeroWithUnitStep) {
  auto data = random_dataset(60, 2, 0.2, 5);
  data.m.col(1).setOnes();
  const auto model = joint_fit(data, ols_contract(), {}, ErrorMetric::MeanSquared, 0);
  EXPECT_EQ(model.sigma[1], 1.0);
  // A constant imputed column carries no information, so no move can help.
  EXPECT_EQ(model.mu[1], 0.0);
}

TEST(JointFit, CensoredMuReachesConditionalMean) {
  const auto data = censored_single_feature(20000, 51);
  const auto model = joint_fit(data, ols_contract(), {}, ErrorMetric::MeanSquared, 0);
  const double target = censored_mean(data, 0);
  EXPECT_LE(std::abs(model.mu[0] - target), 5 * model.sigma[0])
      << "mu=" << model.mu[0] << " target=" << target << " sigma=" << model.sigma[0];
  const auto mi = mean_impute(data);
  const auto base = ols_contract().fit(mi.imputed, data.y, 0);
  EXPECT_LT(model.error_trace.back(), mean_squared_error(data.y, base->predict(mi.imputed)));
}

TEST(JointFit, CensoredMuApproachesConditionalMeanSmallSample) {
  const auto data = censored_single_feature(500, 52);
  const auto model = joint_fit(data, ols_contract(), {}, ErrorMetric::MeanSquared, 0);
  const double target = censored_mean(data, 0);
  EXPECT_LE(std::abs(model.mu[0] - target), 5 * model.sigma[0])
      << "mu=" << model.mu[0] << " target=" << target << " sigma=" << model.sigma[0];
  const auto mi = mean_impute(data);
  const auto base = ols_contract().fit(mi.imputed, data.y, 0);
  EXPECT_LT(model.error_trace.back(), mean_squared_error(data.y, base->predict(mi.imputed)));
}

TEST(CoordinateStep, ZeroSigmaKeepsMu) {
  const auto data = random_dataset(40, 2, 0.3, 6);
  const auto f = ols_contract().fit(impute_with(data, Vector::Zero(2)), data.y, 0);
  const auto step = coordinate_step(Vector::Zero(2), 0, 0.0, *f, data, ErrorMetric::MeanSquared);
  EXPECT_EQ(step.epsilon, 0);
  EXPECT_DOUBLE_EQ(step.error, mean_squared_error(data.y, f->predict(impute_with(data, Vector::Zero(2)))));
}

TEST(CoordinateStep, ObservedFeatureTiesToZero) {
  auto data = random_dataset(40, 2, 0.3, 7);
  data.m.col(0).setZero();
  const auto f = ols_contract().fit(impute_with(data, Vector::Zero(2)), data.y, 0);
  EXPECT_EQ(coordinate_step(Vector::Zero(2), 0, 0.5, *f, data, ErrorMetric::MeanSquared).epsilon, 0);
}

TEST(CoordinateStep, ConstructedUpwardShift) {
  // y = x on observed rows; missing rows have y = 5 and the fixed predictor
  // is the identity, so raising mu from 0 toward 5 lowers the error.
  Matrix x(10, 1);
  Mask m = Mask::Zero(10, 1);
  Vector y(10);
  for (Index i = 0; i < 10; ++i) {
    x(i, 0) = static_cast<double>(i) / 10.0;
    y[i] = x(i, 0);
  }
  for (Index i : {2, 5, 8}) m(i, 0) = 1, y[i] = 5.0;
  const auto data = make_dataset(x, m, y);
  Matrix xi = x;
  Vector yi = xi.col(0);
  const auto f = ols_contract().fit(xi, yi, 0);
  const auto step = coordinate_step(Vector::Zero(1), 0, 1.0, *f, data, ErrorMetric::MeanSquared);
  EXPECT_EQ(step.epsilon, 1);
  Vector up(1);
  up << 1.0;
  EXPECT_NEAR(step.error, mean_squared_error(y, f->predict(impute_with(data, up))), 1e-12);
}

TEST(CoordinateStep, MatchesThreeWayBruteForceWithTree) {
  std::mt19937_64 rng(8);
  const auto data = random_dataset(30, 3, 0.3, 9);
  const Vector mu = data.x.colwise().mean().transpose();
  const auto f = small_tree_contract().fit(impute_with(data, mu), data.y, 0);
  for (Index j = 0; j < 3; ++j) {
    for (double sigma : {0.05, 0.3, 1.0}) {
      double errs[3];
      for (int e = -1; e <= 1; ++e) {
        Vector t = mu;
        t[j] += e * sigma;
        errs[e + 1] = mean_squared_error(data.y, f->predict(impute_with(data, t)));
      }
      int expected = 0;
      double best = errs[1];
      if (errs[0] < best) expected = -1, best = errs[0];
      if (errs[2] < best) expected = 1, best = errs[2];
      const auto step = coordinate_step(mu, j, sigma, *f, data, ErrorMetric::MeanSquared);
      EXPECT_EQ(step.epsilon, expected) << j << " " << sigma;
      EXPECT_EQ(step.error, best);
    }
  }
}

TEST(JointFit, CachedSearchMatchesNaiveSearch) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto data = random_dataset(80, 3, 0.35, 100 + seed);
    const auto contract = small_tree_contract();
    const JointLimits lim;
    const auto model = joint_fit(data, contract, lim, ErrorMetric::MeanSquared, seed);
    const auto naive = naive_joint(data, contract, lim, seed);
    EXPECT_EQ(model.mu, naive.mu) << seed;
    ASSERT_EQ(model.error_trace.size(), naive.trace.size());
    for (std::size_t k = 0; k < naive.trace.size(); ++k) EXPECT_NEAR(model.error_trace[k], naive.trace[k], 1e-12);
  }
}

TEST(JointFit, DescentAndLimitsHold) {
  const JointLimits lim;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto data = random_dataset(120, 3, 0.3, 300 + seed);
    for (const auto& contract : {ols_contract(), small_tree_contract()}) {
      const auto model = joint_fit(data, contract, lim, ErrorMetric::MeanSquared, seed);
      for (std::size_t k = 1; k < model.error_trace.size(); ++k)
        EXPECT_LE(model.error_trace[k], model.error_trace[k - 1]);
      for (const auto& it : model.iterations) {
        EXPECT_LE(it.cycles, lim.max_cycles);
        EXPECT_LE(it.error_after_search, it.error_after_refit);
      }
      EXPECT_LE(model.refits, lim.max_outer);
      EXPECT_LE(model.predictor_evaluations,
                static_cast<Index>(lim.max_outer) * lim.max_cycles * data.cols() * 3 + lim.max_outer);
    }
  }
}

TEST(JointFit, DeterministicForEachContract) {
  const auto data = random_dataset(100, 3, 0.3, 10);
  TreeParams fp;
  fp.n_trees = 10;
  fp.max_depth = 4;
  for (const auto& contract : {ols_contract(), small_tree_contract(), forest_contract(fp)}) {
    const auto a = joint_fit(data, contract, {}, ErrorMetric::MeanSquared, 17);
    const auto b = joint_fit(data, contract, {}, ErrorMetric::MeanSquared, 17);
    EXPECT_EQ(a.mu, b.mu) << contract.label;
    EXPECT_EQ(a.error_trace, b.error_trace) << contract.label;
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump()) << contract.label;
  }
}

TEST(JointFit, LinearCloseToAffineIntercept) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(400 + seed);
    const Index n = 500, d = 3;
    Matrix x = random_matrix(n, d, rng);
    Mask m = random_mask(n, d, 0.3, rng);
    std::normal_distribution<double> noise(0.0, 0.5);
    Vector y(n);
    const double w[3] = {1.0, -0.5, 0.8}, b[3] = {0.6, 0.2, -0.4};
    for (Index i = 0; i < n; ++i) {
      y[i] = noise(rng);
      for (Index j = 0; j < d; ++j) y[i] += m(i, j) ? b[j] : w[j] * x(i, j);
    }
    const auto data = make_dataset(x, m, y);
    const auto joint = joint_fit(data, ols_contract(), {}, ErrorMetric::MeanSquared, seed);
    const auto ai = fit_adaptive(data, ExpansionMode::affine_intercept(), ElasticNetSpec{});
    const double ai_mse = mean_squared_error(y, ai.predict(data));
    EXPECT_LE(joint.error_trace.back(), 1.05 * ai_mse) << seed;
  }
}

TEST(JointFit, BinaryTargetUsesAucError) {
  auto data = random_dataset(120, 2, 0.3, 11);
  for (Index i = 0; i < data.rows(); ++i) data.y[i] = data.y[i] > 0 ? 1.0 : 0.0;
  EXPECT_EQ(default_error_metric(data.y), ErrorMetric::OneMinusAuc);
  const auto model = joint_fit(data, ols_contract(), {}, ErrorMetric::OneMinusAuc, 0);
  EXPECT_NEAR(model.error_trace.back(), 1.0 - auc(data.y, model.predict(data)), 1e-12);
}

TEST(JointFit, BadLimitsThrow) {
  JointLimits lim;
  lim.max_outer = 0;
  EXPECT_THROW(joint_fit(random_dataset(20, 2, 0.2, 1), ols_contract(), lim, ErrorMetric::MeanSquared, 0),
               ContractError);
}

TEST(JointFit, JsonRoundTripPredictsIdentically) {
  const auto data = random_dataset(90, 3, 0.3, 12);
  TreeParams fp;
  fp.n_trees = 5;
  for (const auto& contract : {ols_contract(), small_tree_contract(), forest_contract(fp)}) {
    const auto model = joint_fit(data, contract, {}, ErrorMetric::MeanSquared, 3);
    const auto back = joint_model_from_json(nlohmann::json::parse(to_json(model).dump()));
    EXPECT_EQ(back.mu, model.mu);
    EXPECT_EQ(back.predict(data), model.predict(data)) << contract.label;
  }
}

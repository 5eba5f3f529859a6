#include <gtest/gtest.h>

#include "pstc/sysmodel.hpp"
#include "support/oracles.hpp"

using namespace pstc;

TEST(Discretize, MatchesQuadratureOracle) {
  const auto cfg = oracle::batch_reactor();
  const auto d = discretize(cfg.plant, 0.01);
  EXPECT_LT((d.Phi - oracle::expm_taylor(cfg.plant.Ap * 0.01)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((d.Gamma - oracle::simpson_gamma(cfg.plant.Ap, cfg.plant.Bp, 0.01)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((d.GammaW - oracle::simpson_gamma(cfg.plant.Ap, cfg.plant.E, 0.01)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Discretize, IntegratorClosedForm) {
  PlantModel p{Mat::Zero(2, 2), Mat::Identity(2, 2), Mat::Identity(2, 2), Mat::Zero(2, 1)};
  const auto d = discretize(p, 0.3);
  EXPECT_TRUE(d.Phi.isApprox(Mat::Identity(2, 2)));
  EXPECT_TRUE(d.Gamma.isApprox(0.3 * Mat::Identity(2, 2)));
}

TEST(Discretize, RejectsNonPositiveStep) {
  const auto cfg = oracle::batch_reactor();
  EXPECT_THROW(discretize(cfg.plant, 0.0), std::invalid_argument);
}

TEST(TransitionTables, MatchOracleForAllKappa) {
  const auto cfg = oracle::batch_reactor();
  const auto t = build_transition_tables(cfg.plant, cfg.controller, cfg.trigger);
  ASSERT_EQ(t.kappa_max(), 25);
  EXPECT_TRUE(t.phi_p(0).isIdentity());
  EXPECT_TRUE(t.gamma_p(0).isZero());
  EXPECT_TRUE(t.phi_c(0).isIdentity());
  EXPECT_TRUE(t.gamma_c(0).isZero());
  for (int k : {1, 2, 7, 25}) {
    const double tk = 0.01 * k;
    const Mat phi = oracle::expm_taylor(cfg.plant.Ap * tk);
    const Mat gamma = oracle::simpson_gamma(cfg.plant.Ap, cfg.plant.Bp, tk, 400);
    EXPECT_LT((t.phi_p(k) - phi).cwiseAbs().maxCoeff(), 1e-10 * phi.cwiseAbs().maxCoeff()) << k;
    EXPECT_LT((t.gamma_p(k) - gamma).cwiseAbs().maxCoeff(), 1e-9 * gamma.cwiseAbs().maxCoeff()) << k;
    // Ac = I: PhiC = I, GammaC = k Bc.
    EXPECT_TRUE(t.phi_c(k).isIdentity(1e-15));
    EXPECT_LT((t.gamma_c(k) - k * cfg.controller.Bc).cwiseAbs().maxCoeff(), 1e-15);
  }
  EXPECT_THROW((void)t.phi_p(26), std::out_of_range);
  EXPECT_THROW((void)t.gamma_c(-1), std::out_of_range);
}

TEST(TransitionTables, ControllerSumConvention) {
  // GammaC(k) = sum_{j<k} Ac^j Bc for a non-identity Ac.
  auto cfg = oracle::batch_reactor();
  cfg.controller.Ac << 0.5, 0.1, 0.0, 0.9;
  const auto t = build_transition_tables(cfg.plant, cfg.controller, cfg.trigger);
  Mat sum = Mat::Zero(2, 2), pow = Mat::Identity(2, 2);
  for (int j = 0; j < 5; ++j) {
    sum += pow * cfg.controller.Bc;
    pow = cfg.controller.Ac * pow;
  }
  EXPECT_LT((t.gamma_c(5) - sum).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((t.phi_c(5) - pow).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PlantModel, Validation) {
  auto cfg = oracle::batch_reactor();
  EXPECT_NO_THROW(cfg.plant.validate());
  EXPECT_NO_THROW(cfg.controller.validate(cfg.plant));
  PlantModel bad = cfg.plant;
  bad.Bp = Mat::Zero(3, 2);
  EXPECT_THROW(bad.validate(), DimensionError);
  // Two decoupled integrators with only the first measured.
  PlantModel unobs{Mat::Zero(2, 2), Mat::Identity(2, 2), Mat(Mat::Identity(1, 2)), Mat::Zero(2, 1)};
  EXPECT_THROW(unobs.validate(), NumericalError);
  ControllerModel c = cfg.controller;
  c.h = 0.0;
  EXPECT_THROW(c.validate(cfg.plant), std::invalid_argument);
  TriggerConfig tc{1.0, 0.0, 5};
  EXPECT_THROW(tc.validate(), std::invalid_argument);
}

#include <gtest/gtest.h>

#include "pstc/problem.hpp"
#include "pstc/sampling.hpp"
#include "support/oracles.hpp"

using namespace pstc;

namespace {

// Zero-order-hold plant steps with a constant disturbance per substep.
Vec step_plant(const oracle::Step& sub, const Mat& gw, const Vec& x, const Vec& u, int kappa, int ns,
               sampling::Rng& rng, double wmax) {
  std::uniform_real_distribution<double> wd(-wmax, wmax);
  Vec out = x;
  for (int i = 0; i < kappa * ns; ++i) out = sub.phi * out + sub.gamma * u + gw * Vec::Constant(1, wd(rng));
  return out;
}

}  // namespace

TEST(Init, BatchObservabilityIndexIsOne) {
  const auto cfg = oracle::batch_reactor();
  const auto tables = build_offline_tables(cfg);
  ASSERT_TRUE(tables.init.has_value());
  EXPECT_EQ(tables.init->kbar, 1);
  EXPECT_EQ(observability_index(Mat::Identity(2, 2), Mat::Identity(2, 2)), 0);
}

TEST(Init, ExactWithoutUncertainty) {
  auto cfg = oracle::batch_reactor();
  cfg.v = Mat::Zero(2, 2);
  cfg.wbar = Mat::Zero(1, 1);
  const auto tables = build_offline_tables(cfg);
  const auto step = oracle::plant_step(cfg.plant, 0.01);
  const Vec x0 = oracle::batch_x0();
  Vec u0(2);
  u0 << 0.3, -0.7;
  const Vec x1 = step.phi * x0 + step.gamma * u0;
  auto st = init_ingest(EstimatorState::initializing(), cfg.plant.Cp * x0, Vec(), *tables.init);
  EXPECT_FALSE(st.is_running());
  st = init_ingest(std::move(st), cfg.plant.Cp * x1, u0, *tables.init);
  ASSERT_TRUE(st.is_running());
  EXPECT_LT((st.current().center() - x1).norm(), 1e-9 * x1.norm());
  EXPECT_LT(st.current().shape().norm(), 1e-12);
}

TEST(Init, ContainsTrueStateUnderNoise) {
  const auto cfg = oracle::batch_reactor();
  const auto tables = build_offline_tables(cfg);
  const int ns = 16;
  const oracle::Step sub = oracle::plant_step(cfg.plant, 0.01 / ns);
  const Mat gw = oracle::simpson_gamma(cfg.plant.Ap, cfg.plant.E, 0.01 / ns, 20);
  sampling::Rng rng(31);
  for (int r = 0; r < 200; ++r) {
    const Vec x0 = 5.0 * sampling::gaussian(rng, 4);
    const Vec u0 = sampling::gaussian(rng, 2);
    const Vec x1 = step_plant(sub, gw, x0, u0, 1, ns, rng, 0.1);
    auto st = init_ingest(EstimatorState::initializing(),
                          cfg.plant.Cp * x0 + sampling::in_or_on(rng, Ellipsoid::centered(cfg.v)), Vec(), *tables.init);
    st = init_ingest(std::move(st), cfg.plant.Cp * x1 + sampling::in_or_on(rng, Ellipsoid::centered(cfg.v)), u0,
                     *tables.init);
    ASSERT_TRUE(contains(st.current(), x1, 1e-6)) << r;
  }
}

TEST(Estimator, PredictCorrectContainsTrueState) {
  const auto cfg = oracle::batch_reactor();
  auto tables = build_offline_tables(cfg);
  const int ns = 16;
  const oracle::Step sub = oracle::plant_step(cfg.plant, 0.01 / ns);
  const Mat gw = oracle::simpson_gamma(cfg.plant.Ap, cfg.plant.E, 0.01 / ns, 20);
  sampling::Rng rng(37);
  std::uniform_int_distribution<int> kd(1, 25);
  for (int r = 0; r < 40; ++r) {
    const Ellipsoid x0set(Vec::Zero(4), 4.0 * Mat::Identity(4, 4));
    Vec x = sampling::in_or_on(rng, x0set);
    auto st = EstimatorState::running(x0set);
    for (int k = 0; k < 30; ++k) {
      const Vec y = cfg.plant.Cp * x + sampling::in_or_on(rng, Ellipsoid::centered(cfg.v));
      st = correct(std::move(st), y, cfg.v, cfg.plant.Cp);
      ASSERT_TRUE(contains(st.current(), x, 1e-6)) << r << " " << k;
      const Vec u = -0.1 * sampling::gaussian(rng, 2);
      const int kappa = kd(rng);
      st = predict(std::move(st), u, kappa, tables.transitions, tables.disturbance);
      x = step_plant(sub, gw, x, u, kappa, ns, rng, 0.1);
      ASSERT_TRUE(contains(st.current(), x, 1e-6)) << r << " " << k;
    }
    EXPECT_EQ(st.model_violations, 0);
  }
}

TEST(Estimator, NoiselessCorrectionLandsOnMeasurementPlane) {
  const auto cfg = oracle::batch_reactor();
  auto st = EstimatorState::running(Ellipsoid(Vec::Zero(4), Mat::Identity(4, 4)));
  Vec x(4);
  x << 0.2, -0.1, 0.3, 0.1;
  const Vec y = cfg.plant.Cp * x;
  st = correct(std::move(st), y, Mat::Zero(2, 2), cfg.plant.Cp);
  EXPECT_LT((cfg.plant.Cp * st.current().center() - y).norm(), 1e-12);
  EXPECT_TRUE(contains(st.current(), x, 1e-9));
}

TEST(Estimator, EmptyIntersectionKeepsPriorAndCounts) {
  const auto cfg = oracle::batch_reactor();
  const Ellipsoid prior(Vec::Zero(4), 0.01 * Mat::Identity(4, 4));
  auto st = EstimatorState::running(prior);
  st = correct(std::move(st), Vec::Constant(2, 100.0), cfg.v, cfg.plant.Cp);
  EXPECT_EQ(st.model_violations, 1);
  EXPECT_TRUE(st.current().shape().isApprox(prior.shape()));
}

TEST(Estimator, PhaseGuards) {
  const auto cfg = oracle::batch_reactor();
  const auto tables = build_offline_tables(cfg);
  EXPECT_THROW(correct(EstimatorState::initializing(), Vec::Zero(2), cfg.v, cfg.plant.Cp), std::logic_error);
  EXPECT_THROW(predict(EstimatorState::running(Ellipsoid::point(Vec::Zero(4))), Vec::Zero(2), 0, tables.transitions,
                       tables.disturbance),
               std::out_of_range);
}

TEST(CylinderIntersection, WeightValidationAndContainment) {
  Mat c1(1, 2), c2(1, 2);
  c1 << 1, 0;
  c2 << 0, 1;
  const EllipticalCylinder a(Vec::Constant(1, 0.5), Mat::Constant(1, 1, 0.04), c1);
  const EllipticalCylinder b(Vec::Constant(1, -0.5), Mat::Constant(1, 1, 0.09), c2);
  EXPECT_THROW(cylinder_intersection_outer({a, b}, {0.5}), std::invalid_argument);
  EXPECT_THROW(cylinder_intersection_outer({a, b}, {0.7, 0.7}), std::invalid_argument);
  EXPECT_THROW(cylinder_intersection_outer({a, b}, {1.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(cylinder_intersection_outer({a, a}, {0.5, 0.5}), NumericalError);
  const Ellipsoid box = cylinder_intersection_outer({a, b}, {0.5, 0.5});
  for (double sx : {-1.0, 1.0}) {
    for (double sy : {-1.0, 1.0}) {
      Vec corner(2);
      corner << 0.5 + 0.2 * sx, -0.5 + 0.3 * sy;
      EXPECT_TRUE(contains(box, corner, 1e-12));
    }
  }
}

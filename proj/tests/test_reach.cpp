#include <gtest/gtest.h>

#include <cmath>

#include "pstc/reach.hpp"
#include "pstc/sampling.hpp"
#include "support/oracles.hpp"

using namespace pstc;

namespace {

PlantModel scalar_plant(double a) {
  return {Mat::Constant(1, 1, a), Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 1.0)};
}

}  // namespace

TEST(Reach, ScalarMatchesAnalytic) {
  // dx = -x + w, |w| <= 1: reach set [-(1 - e^-t), 1 - e^-t].
  const auto plant = scalar_plant(-1.0);
  const auto t = build_disturbance_tables(plant, Mat::Identity(1, 1), 0.1, 20, ReachConfig{});
  EXPECT_TRUE(t.at(0).isZero());
  for (int k = 1; k <= 20; ++k) {
    const double exact = std::pow(1.0 - std::exp(-0.1 * k), 2);
    const double w = t.at(k)(0, 0);
    EXPECT_GE(w, exact * (1 - 1e-9)) << k;
    EXPECT_LE(std::abs(w - exact), 0.02 * exact) << k;
  }
}

TEST(Reach, ZeroDisturbanceGivesZeroTables) {
  const auto cfg = oracle::batch_reactor();
  const auto t = build_disturbance_tables(cfg.plant, Mat::Zero(1, 1), 0.01, 5, ReachConfig{});
  for (int k = 0; k <= 5; ++k) EXPECT_TRUE(t.at(k).isZero());
}

TEST(Reach, TightAlongDirection) {
  // Exact support of X_w(t) along l: sqrt(Wbar) * int_0^t |l' e^{A s} E| ds.
  const auto cfg = oracle::batch_reactor();
  sampling::Rng rng(21);
  const double t_end = 0.1;
  for (int i = 0; i < 5; ++i) {
    const Vec l = sampling::on_sphere(rng, 4);
    const Mat q = tight_reach_along(cfg.plant, cfg.wbar, t_end, l, ReachConfig{}, 10);
    const int n = 2000;
    double exact = 0.0;
    for (int j = 0; j <= n; ++j) {
      const double s = t_end * j / n;
      const double w = (j == 0 || j == n) ? 1.0 : (j % 2 ? 4.0 : 2.0);
      exact += w * std::abs(l.dot(oracle::expm_taylor(cfg.plant.Ap * s) * cfg.plant.E.col(0)));
    }
    exact *= t_end / n / 3.0 * std::sqrt(cfg.wbar(0, 0));
    const double got = std::sqrt(l.dot(q * l));
    EXPECT_GE(got, exact * (1 - 1e-6));
    EXPECT_LE(got, exact * 1.02);
  }
}

TEST(Reach, BatchContainsSampledResponses) {
  const auto cfg = oracle::batch_reactor();
  const int kmax = 25, ns = 16;
  const auto t = build_disturbance_tables(cfg.plant, cfg.wbar, 0.01, kmax, ReachConfig{});
  const Mat phi = oracle::expm_taylor(cfg.plant.Ap * (0.01 / ns));
  const Mat gw = oracle::simpson_gamma(cfg.plant.Ap, cfg.plant.E, 0.01 / ns, 20);
  sampling::Rng rng(23);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  double worst = 0.0;
  for (int r = 0; r < 300; ++r) {
    Vec x = Vec::Zero(4);
    const double c = (r % 2 ? 0.1 : -0.1);
    for (int k = 1; k <= kmax; ++k) {
      for (int s = 0; s < ns; ++s) {
        const double w = r % 3 == 0 ? u(rng) : c;
        x = phi * x + gw * w;
      }
      worst = std::max(worst, normalized_distance(Ellipsoid::centered(t.at(k)), x, 1e-7));
    }
  }
  EXPECT_LE(worst, 1.0 + 1e-9);
}

TEST(Reach, CustomDirectionsAndValidation) {
  const auto cfg = oracle::batch_reactor();
  ReachConfig rc;
  rc.directions = {Vec::Unit(4, 0), Vec::Ones(4)};
  const auto t = build_disturbance_tables(cfg.plant, cfg.wbar, 0.01, 3, rc);
  EXPECT_GT(t.at(3).trace(), 0.0);
  rc.directions = {Vec::Zero(4)};
  EXPECT_THROW(build_disturbance_tables(cfg.plant, cfg.wbar, 0.01, 3, rc), std::invalid_argument);
  rc.directions = {Vec::Ones(3)};
  EXPECT_THROW(build_disturbance_tables(cfg.plant, cfg.wbar, 0.01, 3, rc), DimensionError);
}

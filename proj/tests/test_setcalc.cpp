#include <gtest/gtest.h>

#include <random>

#include "pstc/sampling.hpp"
#include "pstc/setcalc.hpp"

using namespace pstc;
using sampling::Rng;

namespace {

Mat diag(std::initializer_list<double> d) {
  Vec v(static_cast<Index>(d.size()));
  Index i = 0;
  for (double x : d) v(i++) = x;
  return v.asDiagonal();
}

Vec vec(std::initializer_list<double> d) {
  Vec v(static_cast<Index>(d.size()));
  Index i = 0;
  for (double x : d) v(i++) = x;
  return v;
}

}  // namespace

TEST(Ellipsoid, RejectsIndefiniteShape) {
  EXPECT_THROW(Ellipsoid(Vec::Zero(2), diag({1.0, -0.1})), NumericalError);
  EXPECT_THROW(Ellipsoid(Vec::Zero(3), diag({1.0, 1.0})), DimensionError);
}

TEST(Ellipsoid, ClampsRoundoffNegativeEigenvalues) {
  const Ellipsoid e(Vec::Zero(2), diag({1.0, -1e-14}));
  EXPECT_GE(linalg::sym_lambda_min(e.shape()), 0.0);
}

TEST(Ellipsoid, SupportOfAxisAlignedEllipsoid) {
  const Ellipsoid e(vec({1.0, 2.0}), diag({4.0, 9.0}));
  EXPECT_NEAR(support(e, vec({1.0, 0.0})), 1.0 + 2.0, 1e-12);
  EXPECT_NEAR(support(e, vec({0.0, -1.0})), -2.0 + 3.0, 1e-12);
}

TEST(Ellipsoid, ContainsDegenerate) {
  const Ellipsoid seg(Vec::Zero(2), diag({1.0, 0.0}));
  EXPECT_TRUE(contains(seg, vec({0.9, 0.0})));
  EXPECT_FALSE(contains(seg, vec({0.5, 1e-3})));
  EXPECT_FALSE(contains(seg, vec({1.1, 0.0})));
  EXPECT_TRUE(contains(Ellipsoid::point(vec({1.0, 2.0})), vec({1.0, 2.0})));
}

TEST(AffineMap, SupportIdentity) {
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    const Ellipsoid e(sampling::gaussian(rng, 3), sampling::random_spd(rng, 3));
    const Mat a = sampling::random_matrix(rng, 2, 3);
    const Vec b = sampling::gaussian(rng, 2);
    const Ellipsoid m = affine_map(a, e, b);
    for (int j = 0; j < 20; ++j) {
      const Vec l = sampling::gaussian(rng, 2);
      EXPECT_NEAR(support(m, l), l.dot(b) + support(e, a.transpose() * l), 1e-10 * (1 + std::abs(support(m, l))));
    }
  }
}

TEST(Minksum, TraceOptimalAmongFamily) {
  // Over the family (1 + 1/p) M1 + (1 + p) M2 the closed-form p minimizes the trace.
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Mat m1 = sampling::random_spd(rng, 3), m2 = sampling::random_spd(rng, 3);
    const double best = minksum_outer(Ellipsoid::centered(m1), Ellipsoid::centered(m2)).trace();
    for (double p = 0.01; p < 100.0; p *= 1.1) {
      EXPECT_LE(best, ((1 + 1 / p) * m1 + (1 + p) * m2).trace() * (1 + 1e-12));
    }
  }
}

TEST(Minksum, ScalarIsExact) {
  // In one dimension the sum of intervals is exact: radius 2 + 3.
  const auto s = minksum_outer(Ellipsoid(vec({1.0}), diag({4.0})), Ellipsoid(vec({-1.0}), diag({9.0})));
  EXPECT_NEAR(s.center()(0), 0.0, 1e-15);
  EXPECT_NEAR(s.shape()(0, 0), 25.0, 1e-12);
}

TEST(Minksum, ZeroOperandTranslates) {
  const Ellipsoid e(vec({1.0, 1.0}), diag({2.0, 3.0}));
  const auto s = minksum_outer(e, Ellipsoid::point(vec({1.0, -1.0})));
  EXPECT_TRUE(s.shape().isApprox(e.shape()));
  EXPECT_TRUE(s.center().isApprox(vec({2.0, 0.0})));
}

TEST(Minksum, ContainsSampledSums) {
  Rng rng(5);
  for (int i = 0; i < 30; ++i) {
    const Index n = 2 + i % 3;
    const Ellipsoid a(sampling::gaussian(rng, n), sampling::random_spd(rng, n));
    const Ellipsoid b(sampling::gaussian(rng, n), sampling::random_spd(rng, n));
    const Ellipsoid s = minksum_outer(a, b);
    for (int j = 0; j < 300; ++j) {
      ASSERT_TRUE(contains(s, sampling::on_ellipsoid(rng, a) + sampling::on_ellipsoid(rng, b), 1e-9));
    }
  }
}

TEST(Fusion, LambdaOneReturnsPrior) {
  const Ellipsoid e(vec({0.0, 0.0}), diag({1.0, 2.0}));
  const EllipticalCylinder c(vec({0.3}), diag({0.5}), Mat::Identity(1, 2));
  const auto f = fusion(e, c, 1.0);
  EXPECT_TRUE(f.shape().isApprox(e.shape()));
  EXPECT_TRUE(f.center().isApprox(e.center()));
}

TEST(Fusion, ContainsIntersectionSamples) {
  Rng rng(7);
  for (int i = 0; i < 30; ++i) {
    const Index n = 2 + i % 3;
    const Ellipsoid e(sampling::gaussian(rng, n), sampling::random_spd(rng, n));
    const Mat c = sampling::random_matrix(rng, 1 + i % (n - 1), n);
    const Mat v = sampling::random_spd(rng, c.rows(), 0.1, 1.0);
    const Vec y = c * sampling::in_ellipsoid(rng, e);
    const EllipticalCylinder cyl(y, v, c);
    const Mat vinv = v.inverse();
    for (double lambda : {0.1, 0.5, 0.9}) {
      const Ellipsoid f = fusion(e, cyl, lambda);
      for (int j = 0; j < 400; ++j) {
        const Vec x = sampling::in_or_on(rng, e);
        const Vec r = c * x - y;
        if (r.dot(vinv * r) > 1.0) continue;
        ASSERT_TRUE(contains(f, x, 1e-9));
      }
    }
    const Ellipsoid best = fusion_optimal(e, cyl);
    for (int j = 0; j < 400; ++j) {
      const Vec x = sampling::in_or_on(rng, e);
      const Vec r = c * x - y;
      if (r.dot(vinv * r) > 1.0) continue;
      ASSERT_TRUE(contains(best, x, 1e-9));
    }
  }
}

TEST(Fusion, OptimalLambdaBeatsGrid) {
  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    const Ellipsoid e(Vec::Zero(3), sampling::random_spd(rng, 3));
    const Mat c = sampling::random_matrix(rng, 2, 3);
    const EllipticalCylinder cyl(c * sampling::in_ellipsoid(rng, e), sampling::random_spd(rng, 2, 0.01, 0.5), c);
    const double best = fusion_optimal(e, cyl, 1e-6).trace();
    for (double lambda = 0.02; lambda <= 1.0; lambda += 0.02) {
      EXPECT_LE(best, fusion(e, cyl, lambda).trace() * (1 + 1e-4)) << "lambda " << lambda;
    }
    EXPECT_LE(best, e.trace() * (1 + 1e-12));
  }
}

TEST(Fusion, DisjointThrows) {
  const Ellipsoid e(Vec::Zero(2), Mat::Identity(2, 2));
  const EllipticalCylinder far(vec({10.0}), diag({0.01}), Mat::Identity(1, 2));
  EXPECT_THROW(fusion(e, far, 0.5), EmptyIntersection);
  EXPECT_THROW(fusion_optimal(e, far), EmptyIntersection);
}

TEST(Fusion, CylinderValidation) {
  EXPECT_THROW(EllipticalCylinder(vec({0.0, 0.0}), Mat::Identity(2, 2), Mat::Ones(2, 3)), NumericalError);
  EXPECT_THROW(EllipticalCylinder(vec({0.0}), diag({0.0}), Mat::Ones(1, 3)), NumericalError);
}

TEST(Hyperplane, AnalyticDiskSection) {
  // Unit disk cut by x1 = 0.6: segment centred at (0.6, 0) with half length 0.8.
  Mat c(1, 2);
  c << 1, 0;
  const auto s = hyperplane_fusion(Ellipsoid(Vec::Zero(2), Mat::Identity(2, 2)), c, vec({0.6}));
  EXPECT_NEAR(s.center()(0), 0.6, 1e-12);
  EXPECT_NEAR(s.center()(1), 0.0, 1e-12);
  EXPECT_NEAR(s.shape()(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(s.shape()(1, 1), 0.64, 1e-12);
}

TEST(Hyperplane, ExactMembersAreContainedAndOnPlane) {
  Rng rng(13);
  for (int i = 0; i < 30; ++i) {
    const Index n = 3 + i % 2;
    const Ellipsoid e(sampling::gaussian(rng, n), sampling::random_spd(rng, n));
    const Mat c = sampling::random_matrix(rng, 1, n);
    const Vec x0 = sampling::in_ellipsoid(rng, e);
    const Vec y = c * x0;
    const Ellipsoid s = hyperplane_fusion(e, c, y);
    EXPECT_NEAR((c * s.center() - y).norm(), 0.0, 1e-9);
    EXPECT_LT(linalg::max_abs(c * s.shape() * c.transpose()), 1e-9);
    EXPECT_TRUE(contains(s, x0, 1e-7));
    // Points of the section reached by moving x0 along the plane inside e.
    const Mat null = Eigen::FullPivLU<Mat>(c).kernel();
    for (int j = 0; j < 100; ++j) {
      const Vec dir = null * sampling::gaussian(rng, null.cols());
      double lo = 0, hi = 1e3;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (contains(e, x0 + mid * dir, 0.0) ? lo : hi) = mid;
      }
      ASSERT_TRUE(contains(s, x0 + lo * dir, 1e-7));
    }
  }
}

TEST(Hyperplane, MissThrows) {
  Mat c(1, 2);
  c << 1, 0;
  EXPECT_THROW(hyperplane_fusion(Ellipsoid(Vec::Zero(2), Mat::Identity(2, 2)), c, vec({1.5})), EmptyIntersection);
}

TEST(Intersection, ContainsCommonPoints) {
  Rng rng(17);
  for (int i = 0; i < 20; ++i) {
    const Index n = 2 + i % 3;
    std::vector<Mat> shapes = {sampling::random_spd(rng, n), sampling::random_spd(rng, n),
                               sampling::random_spd(rng, n)};
    const Ellipsoid out = intersect_outer_centered(shapes);
    double min_trace = 1e300;
    for (const auto& s : shapes) min_trace = std::min(min_trace, s.trace());
    EXPECT_LE(out.trace(), min_trace * (1 + 1e-12));
    for (int j = 0; j < 2000; ++j) {
      const Vec x = sampling::in_or_on(rng, Ellipsoid::centered(shapes[static_cast<std::size_t>(j % 3)]));
      bool all = true;
      for (const auto& s : shapes) all = all && contains(Ellipsoid::centered(s), x, 0.0);
      if (!all) continue;
      ASSERT_TRUE(contains(out, x, 1e-9));
    }
  }
}

TEST(Intersection, NestedKeepsInner) {
  const Mat inner = diag({1.0, 0.5});
  const auto out = intersect_outer_centered({diag({4.0, 4.0}), inner});
  EXPECT_NEAR(out.trace(), inner.trace(), 1e-9);
}

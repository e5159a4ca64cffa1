#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "fawn/errors.hpp"
#include "fawn/moments.hpp"
#include "test_util.hpp"

using namespace fawn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// E[max(a,0)] and V[max(a,0)] for a ~ N(mu, var) by adaptive Gauss-Kronrod over z.
std::pair<double, double> rectifier_by_quadrature(double mu, double var) {
  using boost::math::quadrature::gauss_kronrod;
  const double s = std::sqrt(var);
  const double z0 = -mu / s;
  auto phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); };
  const double inf = std::numeric_limits<double>::infinity();
  const double m1 = gauss_kronrod<double, 61>::integrate(
      [&](double z) { return (mu + s * z) * phi(z); }, z0, inf, 20, 1e-13);
  const double m2 = gauss_kronrod<double, 61>::integrate(
      [&](double z) { return (mu + s * z) * (mu + s * z) * phi(z); }, z0, inf, 20, 1e-13);
  return {m1, m2 - m1 * m1};
}

}  // namespace

TEST(LiftPoint, DegenerateDistribution) {
  const auto m = lift_point(vec({1.0, -2.0}));
  EXPECT_EQ(m.mean, vec({1.0, -2.0}));
  EXPECT_EQ(m.variance, vec({0.0, 0.0}));
}

TEST(LiftPoint, EmptyAndZero) {
  EXPECT_EQ(lift_point(VectorXd(0)).size(), 0);
  const auto z = lift_point(vec({0.0}));
  EXPECT_EQ(z.mean(0), 0.0);
  EXPECT_EQ(z.variance(0), 0.0);
}

TEST(LiftPoint, RejectsNonFinite) {
  EXPECT_THROW(lift_point(vec({1.0, std::nan("")})), InvalidInput);
  EXPECT_THROW(lift_point(vec({std::numeric_limits<double>::infinity()})), InvalidInput);
}

TEST(LinearMoments, DeterministicIsAffine) {
  MatrixXd wm(2, 1);
  wm << 0.5, -1;
  const auto out = linear_moments<double>(lift_point(vec({1, 2})), wm, MatrixXd::Zero(2, 1), vec({1}),
                                  vec({0}));
  EXPECT_DOUBLE_EQ(out.mean(0), -0.5);
  EXPECT_EQ(out.variance(0), 0.0);
}

TEST(LinearMoments, ProductOfIndependentGaussians) {
  MomentVector<double> x{vec({1}), vec({0.5})};
  const auto out = linear_moments<double>(x, MatrixXd::Constant(1, 1, 2.0), MatrixXd::Constant(1, 1, 0.25),
                                  vec({0}), vec({0}));
  EXPECT_DOUBLE_EQ(out.mean(0), 2.0);
  EXPECT_DOUBLE_EQ(out.variance(0), 2.375);
}

TEST(LinearMoments, ZeroInputKeepsOnlyBiasNoise) {
  std::mt19937_64 rng(3);
  const MatrixXd wm = test::normal_matrix(rng, 4, 3);
  const MatrixXd wv = test::uniform_matrix(rng, 4, 3, 0.0, 1.0);
  const VectorXd bv = vec({0.3, 1.7, 0.0});
  const auto out = linear_moments<double>(lift_point(VectorXd::Zero(4)), wm, wv, VectorXd::Zero(3), bv);
  EXPECT_EQ(out.variance, bv);
}

TEST(LinearMoments, ShapeMismatch) {
  EXPECT_THROW(linear_moments<double>(lift_point(vec({1, 2})), MatrixXd::Zero(3, 1), MatrixXd::Zero(3, 1),
                              vec({0}), vec({0})),
               DimensionError);
  EXPECT_THROW(linear_moments<double>(lift_point(vec({1, 2})), MatrixXd::Zero(2, 1), MatrixXd::Zero(2, 2),
                              vec({0}), vec({0})),
               DimensionError);
}

TEST(RectifierMoments, DeterministicPositivePassesThrough) {
  const auto out = rectifier_moments(lift_point(vec({3.0})));
  EXPECT_EQ(out.mean(0), 3.0);
  EXPECT_EQ(out.variance(0), 0.0);
  const auto tiny = rectifier_moments(MomentVector<double>{vec({3.0}), vec({1e-30})});
  EXPECT_NEAR(tiny.mean(0), 3.0, 1e-12);
  EXPECT_NEAR(tiny.variance(0), 0.0, 1e-12);
}

TEST(RectifierMoments, DeepNegativeSaturation) {
  const auto out = rectifier_moments(MomentVector<double>{vec({-30.0}), vec({1.0})});
  EXPECT_NEAR(out.mean(0), 0.0, 1e-9);
  EXPECT_NEAR(out.variance(0), 0.0, 1e-9);
}

TEST(RectifierMoments, StandardNormal) {
  const auto out = rectifier_moments(MomentVector<double>{vec({0.0}), vec({1.0})});
  const auto [qm, qv] = rectifier_by_quadrature(0.0, 1.0);
  EXPECT_NEAR(out.mean(0), qm, 1e-10);
  EXPECT_NEAR(out.variance(0), qv, 1e-10);
  EXPECT_NEAR(out.mean(0), 0.39894, 1e-5);
  EXPECT_NEAR(out.variance(0), 0.34085, 1e-5);
}

TEST(RectifierMoments, MatchesQuadratureOnCoarseGrid) {
  for (double mu = -6.0; mu <= 6.0; mu += 1.5) {
    for (double var : {0.01, 0.3, 1.0, 4.0, 9.0}) {
      const auto out = rectifier_moments(MomentVector<double>{vec({mu}), vec({var})});
      const auto [qm, qv] = rectifier_by_quadrature(mu, var);
      EXPECT_NEAR(out.mean(0), qm, 1e-8) << "mu=" << mu << " var=" << var;
      EXPECT_NEAR(out.variance(0), qv, 1e-8) << "mu=" << mu << " var=" << var;
    }
  }
}

TEST(RectifierMoments, RejectsNegativeVariance) {
  EXPECT_THROW(rectifier_moments(MomentVector<double>{vec({0.0}), vec({-1e-3})}), InvalidInput);
}

TEST(RectifierMoments, MeanIsMonotoneInInputMean) {
  for (double var : {1e-4, 0.1, 1.0, 10.0}) {
    double prev = -1.0;
    for (int i = 0; i <= 400; ++i) {
      const double mu = -20.0 + 0.1 * i;
      const double m = rectifier_point(mu, var).mean;
      EXPECT_GE(m, prev) << "mu=" << mu << " var=" << var;
      prev = m;
    }
  }
}

TEST(RectifierMoments, PartialsMatchFiniteDifferences) {
  const double h = 1e-6;
  for (double mu : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
    for (double var : {0.2, 1.0, 5.0}) {
      const auto p = rectifier_point(mu, var);
      const auto dmu = [&](auto f) { return (f(mu + h, var) - f(mu - h, var)) / (2 * h); };
      const auto dvar = [&](auto f) { return (f(mu, var + h) - f(mu, var - h)) / (2 * h); };
      auto mean = [](double m, double v) { return rectifier_point(m, v).mean; };
      auto variance = [](double m, double v) { return rectifier_point(m, v).variance; };
      EXPECT_NEAR(p.dmean_dmu, dmu(mean), 1e-7);
      EXPECT_NEAR(p.dmean_dvar, dvar(mean), 1e-7);
      EXPECT_NEAR(p.dvar_dmu, dmu(variance), 1e-7);
      EXPECT_NEAR(p.dvar_dvar, dvar(variance), 1e-7);
    }
  }
}

TEST(ApplyNoise, ZeroAdditiveIsIdentity) {
  std::mt19937_64 rng(1);
  const auto x = test::random_moments(rng, 5);
  const auto out = apply_noise(x, NoiseSpec<double>{});
  EXPECT_EQ(out.mean, x.mean);
  EXPECT_EQ(out.variance, x.variance);
}

TEST(ApplyNoise, DropoutEnumeratesTwoOutcomes) {
  const auto out = apply_noise(lift_point(vec({2.0})), NoiseSpec<double>::dropout(0.5));
  EXPECT_DOUBLE_EQ(out.mean(0), 1.0);
  EXPECT_DOUBLE_EQ(out.variance(0), 1.0);
}

TEST(ApplyNoise, MultiplicativeProductOfGaussians) {
  NoiseSpec<double> noise;
  noise.kind = NoiseKind::multiplicative;
  noise.eps_mean = vec({1.0});
  noise.eps_variance = vec({1.0});
  const auto out = apply_noise(MomentVector<double>{vec({1.0}), vec({1.0})}, noise);
  EXPECT_DOUBLE_EQ(out.mean(0), 1.0);
  EXPECT_DOUBLE_EQ(out.variance(0), 3.0);
}

TEST(ApplyNoise, BroadcastAndShapeErrors) {
  NoiseSpec<double> noise;
  noise.eps_mean = vec({1.0, 2.0});
  noise.eps_variance = vec({0.5});
  const auto out = apply_noise(lift_point(vec({0.0, 0.0})), noise);
  EXPECT_EQ(out.mean, vec({1.0, 2.0}));
  EXPECT_EQ(out.variance, vec({0.5, 0.5}));
  EXPECT_THROW(apply_noise(lift_point(vec({0.0, 0.0, 0.0})), noise), DimensionError);
  noise.eps_variance = vec({-0.1});
  EXPECT_THROW(apply_noise(lift_point(vec({0.0, 0.0})), noise), InvalidInput);
}

TEST(MomentProperties, VariancesStayNonnegative) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const auto x = test::random_moments(rng, 6);
    const MatrixXd wm = test::normal_matrix(rng, 6, 4, 0.0, 3.0);
    const MatrixXd wv = test::uniform_matrix(rng, 6, 4, 0.0, 2.0);
    const auto a = linear_moments<double>(x, wm, wv, test::normal_vector(rng, 4),
                                  test::uniform_vector(rng, 4, 0.0, 1.0));
    ASSERT_TRUE((a.variance.array() >= 0).all());
    const auto h = rectifier_moments(a);
    ASSERT_TRUE((h.variance.array() >= 0).all());
    NoiseSpec<double> noise;
    noise.kind = trial % 2 ? NoiseKind::additive : NoiseKind::multiplicative;
    noise.eps_mean = test::normal_vector(rng, 4);
    noise.eps_variance = test::uniform_vector(rng, 4, 0.0, 1.0);
    ASSERT_TRUE((apply_noise(h, noise).variance.array() >= 0).all());
  }
}

TEST(MomentProperties, DegenerateInputsReproduceDeterministicNetwork) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const VectorXd x = test::normal_vector(rng, 5);
    const MatrixXd w = test::normal_matrix(rng, 5, 7);
    const VectorXd b = test::normal_vector(rng, 7);
    const auto a = linear_moments<double>(lift_point(x), w, MatrixXd::Zero(5, 7), b, VectorXd::Zero(7));
    const auto h = rectifier_moments(a);
    const VectorXd expect = (w.transpose() * x + b).cwiseMax(0.0);
    ASSERT_LT((h.mean - expect).cwiseAbs().maxCoeff(), 1e-12);
    ASSERT_EQ(h.variance.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(MomentProperties, BatchRowsMatchSingleVectors) {
  std::mt19937_64 rng(13);
  MomentBatch<double> xb{test::normal_matrix(rng, 9, 4), test::uniform_matrix(rng, 9, 4, 0, 1)};
  const MatrixXd wm = test::normal_matrix(rng, 4, 3);
  const MatrixXd wv = test::uniform_matrix(rng, 4, 3, 0, 1);
  const VectorXd bm = test::normal_vector(rng, 3);
  const VectorXd bv = test::uniform_vector(rng, 3, 0, 1);
  const auto hb = rectifier_moments(linear_moments<double>(xb, wm, wv, bm, bv));
  for (Eigen::Index i = 0; i < 9; ++i) {
    const auto hv = rectifier_moments(linear_moments<double>(xb.row(i), wm, wv, bm, bv));
    EXPECT_LT((hb.row(i).mean - hv.mean).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((hb.row(i).variance - hv.variance).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(MomentProperties, ExtendedPrecisionAgreesWithDouble) {
  using LD = long double;
  for (double mu : {-3.0, -0.5, 0.0, 1.2, 4.0}) {
    for (double var : {0.05, 1.0, 7.0}) {
      const auto d = rectifier_point(mu, var);
      const auto l = rectifier_point<LD>(mu, var);
      EXPECT_NEAR(d.mean, static_cast<double>(l.mean), 1e-13);
      EXPECT_NEAR(d.variance, static_cast<double>(l.variance), 1e-12);
    }
  }
}

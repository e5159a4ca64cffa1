#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "fawn/autodiff.hpp"
#include "fawn/errors.hpp"
#include "fawn/gradcheck.hpp"
#include "fawn/model.hpp"
#include "test_util.hpp"

using namespace fawn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

NoiseSpec<double> noise(NoiseKind kind, double mean, double var) {
  NoiseSpec<double> n;
  n.kind = kind;
  n.eps_mean = VectorXd::Constant(1, mean);
  n.eps_variance = VectorXd::Constant(1, var);
  return n;
}

// Loss built from a single chain of primitives on the moments (mean, variance) of a batch.
LossFn primitive_chain(const std::string& which, MatrixXd X) {
  return [which, X](std::span<const MatrixXd> p) {
    ad::Tape tape;
    const ad::Var wm = tape.leaf(p[0]);
    const ad::Var wr = tape.leaf(p[1]);
    const ad::Var bm = tape.leaf(p[2]);
    const ad::Var br = tape.leaf(p[3]);
    ad::MomentVars h = ad::lift(tape, X);
    if (which == "additive") h = ad::apply_noise(tape, h, noise(NoiseKind::additive, 0.0, 0.3));
    if (which == "multiplicative") {
      h = ad::apply_noise(tape, h, noise(NoiseKind::multiplicative, 1.0, 0.2));
    }
    h = ad::linear_moments(tape, h, wm, ad::gaussian_variance(tape, wr), bm,
                           ad::gaussian_variance(tape, br));
    if (which == "rectifier") h = ad::rectifier_moments(tape, h);
    const ad::Var loss = ad::add(tape, ad::sum(tape, h.mean),
                                 ad::scale(tape, ad::sum(tape, h.variance), 0.7));
    const ad::Var squared = ad::add(tape, loss, ad::sum(tape, ad::gaussian_variance(tape, h.mean)));
    tape.backward(squared);
    ad::GradientBundle g;
    for (ad::Var v : {wm, wr, bm, br}) g.tensors.push_back(tape.adjoint(v));
    return std::pair{tape.scalar(squared), g};
  };
}

std::vector<MatrixXd> chain_params(std::mt19937_64& rng, int in, int out) {
  return {test::normal_matrix(rng, in, out, 0.0, 0.5), test::uniform_matrix(rng, in, out, -2.0, -0.5),
          test::normal_matrix(rng, out, 1, 0.0, 0.5), test::uniform_matrix(rng, out, 1, -2.0, -0.5)};
}

}  // namespace

TEST(Tape, IdentityGradient) {
  ad::Tape tape;
  const ad::Var a = tape.leaf(scalar(0.3));
  const ad::Var b = tape.leaf(scalar(-1.0));
  tape.backward(a);
  EXPECT_EQ(tape.adjoint(a)(0, 0), 1.0);
  EXPECT_EQ(tape.adjoint(b)(0, 0), 0.0);
}

TEST(Tape, KlGradientOfSingleWeight) {
  ad::Tape tape;
  const ad::Var mu = tape.leaf(scalar(1.0));
  const ad::Var rho = tape.leaf(scalar(0.0));
  const ad::Var pm = tape.leaf(scalar(0.0));
  const ad::Var pr = tape.leaf(scalar(0.0));
  const std::vector<std::pair<ad::Var, ad::Var>> pairs{{mu, rho}};
  const ad::Var kl = ad::kl_term(tape, pairs, pm, pr);
  EXPECT_NEAR(tape.scalar(kl), 0.5, 1e-15);
  tape.backward(kl);
  EXPECT_NEAR(tape.adjoint(mu)(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(tape.adjoint(pm)(0, 0), -1.0, 1e-15);
  // KL = rho_p - rho + (exp(2 rho) + (mu - mu_p)^2) / (2 exp(2 rho_p)) - 1/2
  EXPECT_NEAR(tape.adjoint(rho)(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(tape.adjoint(pr)(0, 0), -1.0, 1e-15);
}

TEST(Tape, ReusedParameterAccumulates) {
  ad::Tape tape;
  const ad::Var a = tape.leaf(scalar(2.0));
  const ad::Var s = ad::add(tape, a, ad::scale(tape, a, 3.0));
  tape.backward(s);
  EXPECT_EQ(tape.adjoint(a)(0, 0), 4.0);
}

TEST(Tape, NonScalarRootThrows) {
  ad::Tape tape;
  const ad::Var a = tape.leaf(MatrixXd::Ones(2, 1));
  EXPECT_THROW(tape.backward(a), InvalidInput);
}

TEST(Tape, NanAdjointNamesPrimitive) {
  ad::Tape tape;
  const ad::Var rho = tape.leaf(scalar(std::numeric_limits<double>::quiet_NaN()));
  const ad::Var root = ad::sum(tape, ad::gaussian_variance(tape, rho));
  try {
    tape.backward(root);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("gaussian_variance"), std::string::npos);
  }
}

TEST(Tape, ReplayIsBitExact) {
  const NetworkSpec spec = NetworkSpec::mlp(3, {5}, 2);
  const ModelState m = ModelState::create(spec, 1);
  std::mt19937_64 rng(1);
  const MatrixXd X = test::normal_matrix(rng, 4, 3);
  ad::Tape tape;
  std::vector<ad::Var> p;
  for (auto& t : m.parameters()) p.push_back(tape.leaf(t));
  ad::MomentVars h = ad::lift(tape, X);
  h = ad::linear_moments(tape, h, p[0], ad::gaussian_variance(tape, p[1]), p[2],
                         ad::gaussian_variance(tape, p[3]));
  h = ad::rectifier_moments(tape, h);
  h = ad::linear_moments(tape, h, p[4], ad::gaussian_variance(tape, p[5]), p[6],
                         ad::gaussian_variance(tape, p[7]));
  ad::ropd_data_term(tape, h, test::normal_matrix(rng, 4, 2), p[10]);
  EXPECT_GT(tape.primitives(), 5u);
  EXPECT_TRUE(tape.replay());
}

TEST(Tape, RepeatedBackwardIsDeterministic) {
  const NetworkSpec spec = NetworkSpec::mlp(4, {6}, 2);
  const ModelState m = ModelState::create(spec, 2);
  std::mt19937_64 rng(2);
  const MatrixXd X = test::normal_matrix(rng, 9, 4);
  const MatrixXd Z = test::normal_matrix(rng, 9, 2);
  const LossValue a = loss_fawn_ropd(m, X, Z, 0.2);
  const LossValue b = loss_fawn_ropd(m, X, Z, 0.2);
  EXPECT_TRUE(a.gradient == b.gradient);
  EXPECT_EQ(a.total, b.total);
}

TEST(Tape, GradientIsLinearInKlWeight) {
  const NetworkSpec spec = NetworkSpec::mlp(3, {4}, 1);
  const ModelState m = ModelState::create(spec, 3);
  std::mt19937_64 rng(3);
  const MatrixXd X = test::normal_matrix(rng, 5, 3);
  const MatrixXd Z = test::normal_matrix(rng, 5, 1);
  const LossValue g0 = loss_fawn_vi(m, X, Z, 0.0);
  const LossValue g1 = loss_fawn_vi(m, X, Z, 1.0);
  const LossValue g3 = loss_fawn_vi(m, X, Z, 3.0);
  for (std::size_t k = 0; k < g0.gradient.tensors.size(); ++k) {
    const MatrixXd kl = g1.gradient.tensors[k] - g0.gradient.tensors[k];
    const MatrixXd expected = g0.gradient.tensors[k] + 3.0 * kl;
    EXPECT_LT((g3.gradient.tensors[k] - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Tape, ScaledLossScalesGradient) {
  ad::Tape tape;
  const ad::Var rho = tape.leaf(MatrixXd::Constant(2, 2, 0.3));
  const ad::Var v = ad::sum(tape, ad::gaussian_variance(tape, rho));
  const ad::Var s = ad::scale(tape, v, -1.75);
  tape.backward(s);
  const MatrixXd g = tape.adjoint(rho);
  ad::Tape tape2;
  const ad::Var rho2 = tape2.leaf(MatrixXd::Constant(2, 2, 0.3));
  const ad::Var v2 = ad::sum(tape2, ad::gaussian_variance(tape2, rho2));
  tape2.backward(v2);
  EXPECT_TRUE(g.isApprox(-1.75 * tape2.adjoint(rho2), 1e-15));
}

TEST(Gradcheck, Quadratic) {
  const MatrixXd A = (MatrixXd(3, 3) << 2, 0.5, 0, 0.5, 1, 0.2, 0, 0.2, 3).finished();
  const LossFn f = [A](std::span<const MatrixXd> p) {
    const VectorXd x = p[0];
    ad::GradientBundle g;
    g.tensors.push_back(A * x);
    return std::pair{0.5 * x.dot(A * x), g};
  };
  EXPECT_LT(gradcheck(f, {(MatrixXd(3, 1) << 1.0, -2.0, 0.5).finished()}, 1e-5), 1e-10);
}

TEST(Gradcheck, EpsOutsideRangeThrows) {
  const LossFn f = [](std::span<const MatrixXd> p) {
    ad::GradientBundle g;
    g.tensors.push_back(p[0]);
    return std::pair{0.5 * p[0].squaredNorm(), g};
  };
  EXPECT_THROW(gradcheck(f, {scalar(1.0)}, 1e-2), InvalidInput);
  EXPECT_THROW(gradcheck(f, {scalar(1.0)}, 1e-9), InvalidInput);
}

TEST(Gradcheck, DetectsWrongGradient) {
  const LossFn f = [](std::span<const MatrixXd> p) {
    ad::GradientBundle g;
    g.tensors.push_back(1.01 * p[0]);
    return std::pair{0.5 * p[0].squaredNorm(), g};
  };
  EXPECT_GT(gradcheck(f, {scalar(1.0)}, 1e-5), 1e-3);
}

class PrimitiveGradcheck : public ::testing::TestWithParam<std::string> {};

TEST_P(PrimitiveGradcheck, MatchesCentralDifferences) {
  std::mt19937_64 rng(4);
  const MatrixXd X = test::normal_matrix(rng, 6, 3);
  EXPECT_LT(gradcheck(primitive_chain(GetParam(), X), chain_params(rng, 3, 4), 1e-5), 1e-5);
}

INSTANTIATE_TEST_SUITE_P(Primitives, PrimitiveGradcheck,
                         ::testing::Values("linear", "rectifier", "additive", "multiplicative"));

TEST(Gradcheck, BernoulliMoments) {
  const LossFn f = [](std::span<const MatrixXd> p) {
    ad::Tape tape;
    const ad::Var logit = tape.leaf(p[0]);
    const ad::Var s = tape.leaf(p[1]);
    const auto [m, v] = ad::bernoulli_moments(tape, logit, s);
    const ad::Var root = ad::add(tape, ad::sum(tape, m), ad::scale(tape, ad::sum(tape, v), 2.0));
    tape.backward(root);
    ad::GradientBundle g;
    g.tensors = {tape.adjoint(logit), tape.adjoint(s)};
    return std::pair{tape.scalar(root), g};
  };
  std::mt19937_64 rng(5);
  EXPECT_LT(gradcheck(f, {test::normal_matrix(rng, 3, 2), test::normal_matrix(rng, 3, 2)}, 1e-5),
            1e-6);
}

TEST(Gradcheck, ViLoss4x10x1) {
  const NetworkSpec spec = NetworkSpec::mlp(4, {10}, 1);
  std::mt19937_64 rng(6);
  const ModelState m = ModelState::create(spec, 6);
  const MatrixXd X = test::normal_matrix(rng, 8, 4);
  const MatrixXd Z = test::normal_matrix(rng, 8, 1);
  EXPECT_LT(gradcheck(model_loss(m, X, Z, Objective::vi, 0.3), m.parameters(), 1e-5), 1e-5);
}

TEST(Gradcheck, RopdLoss3x5x2) {
  const NetworkSpec spec = NetworkSpec::mlp(3, {5}, 2);
  std::mt19937_64 rng(7);
  const ModelState m = ModelState::create(spec, 7);
  const MatrixXd X = test::normal_matrix(rng, 8, 3);
  const MatrixXd Z = test::normal_matrix(rng, 8, 2);
  EXPECT_LT(gradcheck(model_loss(m, X, Z, Objective::ropd, 0.3), m.parameters(), 1e-5), 1e-5);
}

TEST(Gradcheck, RopdLossWithInputNoiseAndTwoHiddenLayers) {
  NetworkSpec spec = NetworkSpec::mlp(3, {4, 4}, 1);
  spec.input_noise = noise(NoiseKind::multiplicative, 1.0, 0.1);
  std::mt19937_64 rng(8);
  const ModelState m = ModelState::create(spec, 8);
  const MatrixXd X = test::normal_matrix(rng, 6, 3);
  const MatrixXd Z = test::normal_matrix(rng, 6, 1);
  EXPECT_LT(gradcheck(model_loss(m, X, Z, Objective::ropd, 0.1), m.parameters(), 1e-5), 1e-5);
}

TEST(Gradcheck, FullCovarianceThreeOutputs) {
  const NetworkSpec spec =
      NetworkSpec::mlp(4, {6}, 3, WeightFamily::gaussian, OutputMode::full_covariance);
  std::mt19937_64 rng(9);
  const ModelState m = ModelState::create(spec, 9);
  const MatrixXd X = test::normal_matrix(rng, 5, 4);
  const MatrixXd Z = test::normal_matrix(rng, 5, 3);
  EXPECT_LT(gradcheck(model_loss(m, X, Z, Objective::ropd, 0.2), m.parameters(), 1e-5), 1e-4);
}

TEST(Gradcheck, BernoulliRopd) {
  const NetworkSpec spec = NetworkSpec::mlp(3, {5}, 1, WeightFamily::bernoulli);
  std::mt19937_64 rng(10);
  const ModelState m = ModelState::create(spec, 10);
  const MatrixXd X = test::normal_matrix(rng, 6, 3);
  const MatrixXd Z = test::normal_matrix(rng, 6, 1);
  const auto r = gradcheck_report(model_loss(m, X, Z, Objective::ropd, 0.0), m.parameters(), 1e-5,
                                  200, 0, 1e-4);
  EXPECT_LT(r.max_relative_error, 1e-5);
}

TEST(Gradcheck, InjectedRectifierFaultIsCaught) {
  const NetworkSpec spec = NetworkSpec::mlp(3, {5}, 1);
  std::mt19937_64 rng(11);
  const ModelState m = ModelState::create(spec, 11);
  const MatrixXd X = test::normal_matrix(rng, 6, 3);
  const MatrixXd Z = test::normal_matrix(rng, 6, 1);
  ad::testing::set_rectifier_backward_fault(true);
  const double err = gradcheck(model_loss(m, X, Z, Objective::ropd, 0.0), m.parameters(), 1e-5);
  ad::testing::set_rectifier_backward_fault(false);
  EXPECT_GT(err, 1e-2);
}

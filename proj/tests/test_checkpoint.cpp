#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "fawn/checkpoint.hpp"
#include "fawn/errors.hpp"
#include "fawn/optimizer.hpp"
#include "test_util.hpp"

using namespace fawn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void expect_same_parameters(const ModelState& a, const ModelState& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_EQ(pa[k], pb[k]) << "tensor " << k;
}

ModelState trained_like(const NetworkSpec& spec, std::uint64_t seed) {
  ModelState m = ModelState::create(spec, seed);
  std::mt19937_64 rng(seed);
  auto params = m.parameters();
  TrainConfig c;
  for (int step = 0; step < 3; ++step) {
    ad::GradientBundle g;
    for (const auto& p : params) g.tensors.push_back(test::normal_matrix(rng, p.rows(), p.cols()));
    adam_step(params, g, m.optimizer, c);
  }
  m.set_parameters(params);
  m.likelihood.hat_rho.setConstant(-0.123456789012345678);
  return m;
}

}  // namespace

TEST(Checkpoint, GaussianRoundTripIsExact) {
  const ModelState m = trained_like(NetworkSpec::mlp(3, {7, 4}, 2), 1);
  const ModelState r = checkpoint_from_string(checkpoint_to_string(m));
  expect_same_parameters(m, r);
  EXPECT_EQ(r.spec.layer_widths, m.spec.layer_widths);
  EXPECT_EQ(r.spec.transfer, m.spec.transfer);
  EXPECT_EQ(r.optimizer.t, 3);
  for (std::size_t k = 0; k < m.optimizer.m.size(); ++k) {
    EXPECT_EQ(r.optimizer.m[k], m.optimizer.m[k]);
    EXPECT_EQ(r.optimizer.v[k], m.optimizer.v[k]);
  }
  EXPECT_EQ(checkpoint_to_string(r), checkpoint_to_string(m));
}

TEST(Checkpoint, BernoulliWithNoiseAndStandardization) {
  NetworkSpec spec = NetworkSpec::mlp(2, {5}, 1, WeightFamily::bernoulli);
  spec.input_noise = NoiseSpec<double>::dropout(0.8);
  ModelState m = trained_like(spec, 2);
  m.standardization = StandardizationStats{(VectorXd(2) << 1.5, -2.0).finished(),
                                           (VectorXd(2) << 0.3, 1.0).finished(),
                                           VectorXd::Constant(1, 22.5), VectorXd::Constant(1, 9.2),
                                           {false, true}, {false}};
  const ModelState r = checkpoint_from_string(checkpoint_to_string(m));
  expect_same_parameters(m, r);
  EXPECT_EQ(r.spec.weight_family, WeightFamily::bernoulli);
  ASSERT_TRUE(r.spec.input_noise.has_value());
  EXPECT_EQ(r.spec.input_noise->kind, NoiseKind::multiplicative);
  EXPECT_EQ(r.spec.input_noise->eps_mean, spec.input_noise->eps_mean);
  EXPECT_EQ(r.spec.input_noise->eps_variance, spec.input_noise->eps_variance);
  ASSERT_TRUE(r.standardization.has_value());
  EXPECT_EQ(r.standardization->feature_mean, m.standardization->feature_mean);
  EXPECT_EQ(r.standardization->target_std, m.standardization->target_std);
  EXPECT_EQ(r.standardization->constant_feature, m.standardization->constant_feature);
}

TEST(Checkpoint, FullCovarianceSpec) {
  const ModelState m =
      trained_like(NetworkSpec::mlp(2, {3}, 3, WeightFamily::gaussian, OutputMode::full_covariance), 3);
  const ModelState r = checkpoint_from_string(checkpoint_to_string(m));
  EXPECT_EQ(r.spec.output_mode, OutputMode::full_covariance);
  expect_same_parameters(m, r);
}

TEST(Checkpoint, ForwardAgreesAfterReload) {
  const ModelState m = trained_like(NetworkSpec::mlp(3, {6}, 2), 4);
  const ModelState r = checkpoint_from_string(checkpoint_to_string(m));
  std::mt19937_64 rng(4);
  const MatrixXd X = test::normal_matrix(rng, 5, 3);
  const auto a = forward_batch(m.spec, m.layers, X);
  const auto b = forward_batch(r.spec, r.layers, X);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.variance, b.variance);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "fawn_checkpoint_test.json";
  const ModelState m = trained_like(NetworkSpec::mlp(2, {3}, 1), 5);
  save_checkpoint(path, m);
  const ModelState r = load_checkpoint(path);
  std::filesystem::remove(path);
  expect_same_parameters(m, r);
}

TEST(Checkpoint, RejectsBadInput) {
  EXPECT_THROW(checkpoint_from_string("not json"), ParseError);
  EXPECT_THROW(checkpoint_from_string(R"({"magic": "OTHER"})"), ParseError);
  std::string text = checkpoint_to_string(ModelState::create(NetworkSpec::mlp(2, {3}, 1), 0));
  text.replace(text.find("FAWN1"), 5, "FAWN0");
  EXPECT_THROW(checkpoint_from_string(text), ParseError);
  EXPECT_THROW(load_checkpoint("/nonexistent/fawn.json"), ParseError);
}

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fawn/layers.hpp"
#include "fawn/moments.hpp"

namespace fawn::mc {

/// Sample moments of a vector quantity. `covariance` uses the S - 1 denominator,
/// `fourth_central` the S denominator.
struct EmpiricalMoments {
  std::int64_t samples = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd fourth_central;

  Eigen::VectorXd variance() const { return covariance.diagonal(); }
};

/// Standard error of a sample variance: var * sqrt(2 / (S - 1)) assumes Gaussian samples;
/// sqrt((mu_4 - var^2) / S) uses the empirical fourth central moment.
enum class VarianceSe { gaussian, fourth_moment };

struct SampleReport {
  std::string op_name;
  std::int64_t samples = 0;
  Eigen::VectorXd analytic_mean;
  Eigen::VectorXd analytic_variance;
  Eigen::VectorXd empirical_mean;
  Eigen::VectorXd empirical_variance;
  Eigen::VectorXd empirical_fourth;
  VarianceSe variance_se = VarianceSe::gaussian;
  Eigen::VectorXd z_mean;
  Eigen::VectorXd z_variance;
  // Off-diagonal output covariance; empty unless requested.
  Eigen::MatrixXd analytic_covariance;
  Eigen::MatrixXd empirical_covariance;
  Eigen::MatrixXd z_covariance;
  double threshold = 5.0;
  bool pass = false;

  double max_abs_z() const;
};

struct ValidateOptions {
  double threshold = 5.0;
  bool check_covariance = false;
  VarianceSe variance_se = VarianceSe::gaussian;
};

inline constexpr std::int64_t kMinSamples = 1000;

/// Draw S full weight instantiations (and Gaussian inputs/noise where the moments say so),
/// run the plain network on each and return the empirical output moments. Samples are
/// generated in fixed-size chunks with independent streams derived from `seed`, and the
/// chunk moments are pooled in chunk order.
EmpiricalMoments sample_forward(const NetworkSpec& spec, std::span<const Layer> layers,
                                const MomentVector<double>& x, std::int64_t samples,
                                std::uint64_t seed);

EmpiricalMoments sample_forward(const NetworkSpec& spec, std::span<const Layer> layers,
                                const Eigen::VectorXd& x, std::int64_t samples, std::uint64_t seed);

/// Compare analytic against empirical moments. Standard errors: sqrt(var / S) for the
/// mean, `variance_se` for the variance and sqrt((V_o V_p + C_op^2) / (S - 1)) for
/// covariances, all from the empirical moments.
SampleReport compare(std::string op_name, const Eigen::VectorXd& analytic_mean,
                     const Eigen::VectorXd& analytic_variance, const EmpiricalMoments& empirical,
                     double threshold, const Eigen::MatrixXd* analytic_covariance = nullptr,
                     VarianceSe variance_se = VarianceSe::gaussian);

/// One report per row of `inputs` (deterministic inputs).
std::vector<SampleReport> validate(const NetworkSpec& spec, std::span<const Layer> layers,
                                   const Eigen::MatrixXd& inputs, std::int64_t samples,
                                   std::uint64_t seed, const ValidateOptions& options = {});

SampleReport validate_point(const NetworkSpec& spec, std::span<const Layer> layers,
                            const MomentVector<double>& x, std::int64_t samples, std::uint64_t seed,
                            const ValidateOptions& options = {});

/// Direct checks of linear_moments, rectifier_moments and both noise kinds on random
/// inputs with independent Gaussian entries, using the fourth-moment variance standard error.
std::vector<SampleReport> validate_primitives(std::int64_t samples, std::uint64_t seed,
                                              double threshold = 5.0);

/// Random network configuration for the oracle battery: one rectifier hidden layer of
/// width >= 20, random weight means and sigma^2 <= 1.
struct RandomConfig {
  NetworkSpec spec;
  std::vector<Layer> layers;
  Eigen::VectorXd input;
};

struct RandomConfigRanges {
  int min_inputs = 3;
  int max_inputs = 10;
  int min_hidden = 20;
  int max_hidden = 40;
  double logit_sd = 1.5;
};

RandomConfig random_config(std::uint64_t seed, WeightFamily family, int outputs = 1,
                           const RandomConfigRanges& ranges = {});

std::string to_json(std::span<const SampleReport> reports);

}  // namespace fawn::mc

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fawn/moments.hpp"

namespace fawn {

/// Diagonal Gaussian posterior over a dense layer: w ~ N(mu, exp(rho)^2).
struct GaussianWeightLayer {
  Eigen::MatrixXd mu;       // n_in x n_out
  Eigen::MatrixXd rho;      // n_in x n_out, sigma = exp(rho)
  Eigen::VectorXd bias_mu;  // n_out
  Eigen::VectorXd bias_rho;

  Eigen::Index inputs() const { return mu.rows(); }
  Eigen::Index outputs() const { return mu.cols(); }
};

/// Bernoulli weights w = (w' - 1/2) s with w' ~ B(1, p), p = logistic(logit_p).
/// Biases stay Gaussian.
struct BernoulliWeightLayer {
  Eigen::MatrixXd logit_p;
  Eigen::MatrixXd scale;
  Eigen::VectorXd bias_mu;
  Eigen::VectorXd bias_rho;

  Eigen::Index inputs() const { return logit_p.rows(); }
  Eigen::Index outputs() const { return logit_p.cols(); }
};

using Layer = std::variant<GaussianWeightLayer, BernoulliWeightLayer>;

/// First two moments of every weight and bias in a layer.
struct WeightMoments {
  Eigen::MatrixXd w_mean;
  Eigen::MatrixXd w_variance;
  Eigen::VectorXd b_mean;
  Eigen::VectorXd b_variance;
};

WeightMoments weight_moments(const GaussianWeightLayer& layer);
WeightMoments weight_moments(const BernoulliWeightLayer& layer);
WeightMoments weight_moments(const Layer& layer);

enum class Transfer { rectifier, identity };
enum class WeightFamily { gaussian, bernoulli };
enum class OutputMode { diagonal, full_covariance };

std::string to_string(Transfer t);
std::string to_string(WeightFamily f);
std::string to_string(OutputMode m);
Transfer parse_transfer(const std::string& s);
WeightFamily parse_family(const std::string& s);
OutputMode parse_output_mode(const std::string& s);

struct NetworkSpec {
  std::vector<int> layer_widths;   // input, hidden..., output
  std::vector<Transfer> transfer;  // one per weight layer; the last one is identity
  WeightFamily weight_family = WeightFamily::gaussian;
  std::optional<NoiseSpec<double>> input_noise;
  OutputMode output_mode = OutputMode::diagonal;

  /// Rectifier hidden layers of the given widths followed by an identity output layer.
  static NetworkSpec mlp(int inputs, std::vector<int> hidden, int outputs,
                         WeightFamily family = WeightFamily::gaussian,
                         OutputMode mode = OutputMode::diagonal);

  std::size_t depth() const { return layer_widths.empty() ? 0 : layer_widths.size() - 1; }
  int inputs() const { return layer_widths.front(); }
  int outputs() const { return layer_widths.back(); }

  /// Throws InvalidInput when the invariants do not hold.
  void validate() const;
};

struct InitConfig {
  double mean_std = 0.2;
  double initial_sigma = 0.05;
  double scale_std = 0.4;
};

/// Draw a fresh parameter set for `spec`.
std::vector<Layer> init_layers(const NetworkSpec& spec, std::mt19937_64& rng,
                               const InitConfig& config = {});

/// Propagate a deterministic input through the network with weights marginalised.
MomentVector<double> forward(const NetworkSpec& spec, std::span<const Layer> layers,
                             const Eigen::VectorXd& x);

/// Row i of the result equals forward(spec, layers, X.row(i)).
MomentBatch<double> forward_batch(const NetworkSpec& spec, std::span<const Layer> layers,
                                  const Eigen::MatrixXd& X);

/// Moments entering the last layer (after the last hidden transfer).
MomentBatch<double> forward_to_last_hidden(const NetworkSpec& spec, std::span<const Layer> layers,
                                           const Eigen::MatrixXd& X);

/// Plain network evaluation with the weights fixed at `w`/`b` per layer.
Eigen::MatrixXd deterministic_forward(const NetworkSpec& spec,
                                      std::span<const Eigen::MatrixXd> weights,
                                      std::span<const Eigen::VectorXd> biases,
                                      const Eigen::MatrixXd& X);

void check_layers(const NetworkSpec& spec, std::span<const Layer> layers);

}  // namespace fawn

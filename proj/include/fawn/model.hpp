#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fawn/autodiff.hpp"
#include "fawn/data.hpp"
#include "fawn/layers.hpp"
#include "fawn/losses.hpp"
#include "fawn/optimizer.hpp"

namespace fawn {

enum class Objective { vi, ropd };

std::string to_string(Objective o);
Objective parse_objective(const std::string& s);

/// Throws UnsupportedFamily when `objective` has no defined loss for `spec`.
void check_objective(const NetworkSpec& spec, Objective objective);

struct ModelState {
  NetworkSpec spec;
  std::vector<Layer> layers;
  PriorParams prior;
  LikelihoodParams likelihood;
  AdamState optimizer;
  std::optional<StandardizationStats> standardization;

  static ModelState create(const NetworkSpec& spec, std::uint64_t seed,
                           const InitConfig& init = {});

  /// Per layer: (mu, rho, bias_mu, bias_rho) or (logit_p, scale, bias_mu, bias_rho);
  /// then prior mean, prior log-sigma (1x1 each) and hat_rho (m x 1).
  std::vector<Eigen::MatrixXd> parameters() const;
  void set_parameters(std::span<const Eigen::MatrixXd> params);
  std::vector<std::string> parameter_names() const;
};

struct LossValue {
  double total = 0.0;
  double data = 0.0;
  double kl = 0.0;  // unweighted KL to the shared prior
  ad::GradientBundle gradient;
};

/// -sum_batch E_q[log N(z | y, sigma_hat^2)] + kl_weight * KL.
LossValue loss_fawn_vi(const ModelState& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                       double kl_weight, bool with_gradient = true);

/// -sum_batch log N(z | E[y], V[y] + sigma_hat^2) + kl_weight * KL; uses the full output
/// covariance when the spec asks for it. Bernoulli networks carry no KL term.
LossValue loss_fawn_ropd(const ModelState& model, const Eigen::MatrixXd& X,
                         const Eigen::MatrixXd& Z, double kl_weight, bool with_gradient = true);

LossValue evaluate_loss(const ModelState& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                        Objective objective, double kl_weight, bool with_gradient = true);

/// Mean over rows of -log p(z | x) in original target units. `test` is unstandardized;
/// features and targets are mapped through `stats` and the log-Jacobian is added back.
double predictive_nll(const ModelState& model, const Dataset& test, const StandardizationStats& stats);

/// Same, but for data that is already standardized (no unit conversion).
double predictive_nll_standardized(const ModelState& model, const Eigen::MatrixXd& X,
                                   const Eigen::MatrixXd& Z);

}  // namespace fawn

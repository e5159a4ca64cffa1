#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>

#include "fawn/errors.hpp"
#include "fawn/layers.hpp"

namespace fawn {

/// Shared prior N(tilde_mu, exp(tilde_rho)^2) over every Gaussian parameter.
struct PriorParams {
  double tilde_mu = 0.0;
  double tilde_rho = 0.0;

  double sigma() const { return std::exp(tilde_rho); }
};

/// Per-output measurement noise sigma_hat = exp(hat_rho).
struct LikelihoodParams {
  Eigen::VectorXd hat_rho;

  Eigen::VectorXd sigma() const { return hat_rho.array().exp().matrix(); }
  Eigen::VectorXd variance() const { return (2.0 * hat_rho.array()).exp().matrix(); }
};

template <typename Scalar>
inline constexpr Scalar half_log_2pi = Scalar(0.918938533204672741780329736406);

/// E_y[log N(z | y, sigma^2)] for y with mean `mean` and variance `var`.
template <typename Scalar>
Scalar expected_gaussian_loglik(Scalar z, Scalar mean, Scalar var, Scalar sigma_hat) {
  if (!(sigma_hat > 0)) throw InvalidInput("expected_gaussian_loglik: sigma_hat must be positive");
  if (var < 0) throw InvalidInput("expected_gaussian_loglik: negative variance");
  const Scalar s2 = sigma_hat * sigma_hat;
  const Scalar r = z - mean;
  return -var / (2 * s2) - r * r / (2 * s2) - half_log_2pi<Scalar> - std::log(sigma_hat);
}

/// Summed over output dimensions.
template <typename Scalar>
Scalar expected_gaussian_loglik(const Vector<Scalar>& z, const MomentVector<Scalar>& y,
                                const Vector<Scalar>& sigma_hat) {
  detail::require_dims(z.size() == y.size() && sigma_hat.size() == y.size(),
                       "expected_gaussian_loglik: shape mismatch");
  Scalar total = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    total += expected_gaussian_loglik(z(i), y.mean(i), y.variance(i), sigma_hat(i));
  }
  return total;
}

/// -log N(z | mean, var).
template <typename Scalar>
Scalar gaussian_nll(Scalar z, Scalar mean, Scalar var) {
  if (!(var > 0)) throw InvalidInput("gaussian_nll: variance must be positive");
  const Scalar r = z - mean;
  return half_log_2pi<Scalar> + Scalar(0.5) * std::log(var) + r * r / (2 * var);
}

/// KL(N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2)).
template <typename Scalar>
Scalar kl_gaussian(Scalar mu_q, Scalar sigma_q, Scalar mu_p, Scalar sigma_p) {
  const Scalar d = mu_q - mu_p;
  return std::log(sigma_p / sigma_q) + (sigma_q * sigma_q + d * d) / (2 * sigma_p * sigma_p) -
         Scalar(0.5);
}

/// KL of every Gaussian parameter (weights of Gaussian layers, all biases) to the shared prior.
double kl_to_shared_prior(std::span<const Layer> layers, const PriorParams& prior);

}  // namespace fawn

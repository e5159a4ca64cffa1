#include "fawn/losses.hpp"

namespace fawn {

namespace {

double kl_block(const Eigen::ArrayXXd& mu, const Eigen::ArrayXXd& rho, const PriorParams& prior) {
  const double inv_ps2 = std::exp(-2.0 * prior.tilde_rho);
  return (prior.tilde_rho - rho + 0.5 * inv_ps2 * ((2.0 * rho).exp() + (mu - prior.tilde_mu).square()) -
          0.5)
      .sum();
}

}  // namespace

double kl_to_shared_prior(std::span<const Layer> layers, const PriorParams& prior) {
  double total = 0.0;
  for (const Layer& layer : layers) {
    std::visit(
        [&](const auto& l) {
          if constexpr (std::is_same_v<std::decay_t<decltype(l)>, GaussianWeightLayer>) {
            total += kl_block(l.mu.array(), l.rho.array(), prior);
          }
          total += kl_block(l.bias_mu.array(), l.bias_rho.array(), prior);
        },
        layer);
  }
  return total;
}

}  // namespace fawn

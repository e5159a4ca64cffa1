#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "fawn/autodiff.hpp"

namespace fawn {

struct AdamState {
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
  std::int64_t t = 0;

  bool empty() const { return m.empty(); }
};

struct TrainConfig {
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 128;
  int max_epochs = 3000;
  int convergence_patience = 25;
  double convergence_tol = 1e-4;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// One bias-corrected Adam update of `params` in place. Throws NumericalError on a
/// non-finite gradient, leaving params and state untouched.
void adam_step(std::vector<Eigen::MatrixXd>& params, const ad::GradientBundle& grads,
               AdamState& state, const TrainConfig& config);

}  // namespace fawn

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fawn/autodiff.hpp"
#include "fawn/model.hpp"

namespace fawn {

/// Loss value and its gradient at the given parameter tensors.
using LossFn =
    std::function<std::pair<double, ad::GradientBundle>(std::span<const Eigen::MatrixXd>)>;

struct GradcheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_tensor = 0;
  Eigen::Index worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compare analytic gradients with central differences on a random subset of at least
/// `min_coordinates` coordinates (all of them when there are fewer). Relative error uses
/// max(|analytic|, |numeric|, denominator_floor) as the denominator.
GradcheckReport gradcheck_report(const LossFn& loss, std::vector<Eigen::MatrixXd> params,
                                 double eps, std::size_t min_coordinates = 200,
                                 std::uint64_t seed = 0, double denominator_floor = 1e-8);

double gradcheck(const LossFn& loss, std::vector<Eigen::MatrixXd> params, double eps,
                 std::size_t min_coordinates = 200, std::uint64_t seed = 0);

/// Model loss as a function of ModelState::parameters().
LossFn model_loss(ModelState model, Eigen::MatrixXd X, Eigen::MatrixXd Z, Objective objective,
                  double kl_weight);

}  // namespace fawn

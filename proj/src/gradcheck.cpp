#include "fawn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fawn/errors.hpp"

namespace fawn {

GradcheckReport gradcheck_report(const LossFn& loss, std::vector<Eigen::MatrixXd> params,
                                 double eps, std::size_t min_coordinates, std::uint64_t seed,
                                 double denominator_floor) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw InvalidInput("gradcheck: eps must lie in [1e-7, 1e-3]");
  const ad::GradientBundle analytic = loss(params).second;
  if (analytic.tensors.size() != params.size()) {
    throw DimensionError("gradcheck: gradient count does not match parameters");
  }

  std::vector<std::pair<std::size_t, Eigen::Index>> coords;
  for (std::size_t k = 0; k < params.size(); ++k)
    for (Eigen::Index i = 0; i < params[k].size(); ++i) coords.emplace_back(k, i);
  std::mt19937_64 rng(seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  if (coords.size() > min_coordinates) coords.resize(min_coordinates);

  GradcheckReport report;
  report.coordinates = coords.size();
  for (const auto& [k, i] : coords) {
    double& x = params[k].reshaped()(i);
    const double saved = x;
    x = saved + eps;
    const double up = loss(params).first;
    x = saved - eps;
    const double down = loss(params).first;
    x = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic.tensors[k].reshaped()(i);
    const double denom = std::max({std::abs(a), std::abs(numeric), denominator_floor});
    const double err = std::abs(a - numeric) / denom;
    if (err > report.max_relative_error || !std::isfinite(err)) {
      report.max_relative_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
      report.worst_tensor = k;
      report.worst_index = i;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

double gradcheck(const LossFn& loss, std::vector<Eigen::MatrixXd> params, double eps,
                 std::size_t min_coordinates, std::uint64_t seed) {
  return gradcheck_report(loss, std::move(params), eps, min_coordinates, seed).max_relative_error;
}

LossFn model_loss(ModelState model, Eigen::MatrixXd X, Eigen::MatrixXd Z, Objective objective,
                  double kl_weight) {
  return [model = std::move(model), X = std::move(X), Z = std::move(Z), objective,
          kl_weight](std::span<const Eigen::MatrixXd> params) mutable {
    model.set_parameters(params);
    LossValue v = evaluate_loss(model, X, Z, objective, kl_weight);
    return std::pair{v.total, std::move(v.gradient)};
  };
}

}  // namespace fawn

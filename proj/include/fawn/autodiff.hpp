#pragma once

// Matrix-level reverse-mode differentiation. Each recorded primitive keeps its forward
// function (for replay) and a hand-derived adjoint rule.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fawn/moments.hpp"

namespace fawn::ad {

struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t index = npos;

  bool valid() const { return index != npos; }
};

struct MomentVars {
  Var mean;
  Var variance;
};

/// One gradient tensor per parameter tensor, same order and shapes.
struct GradientBundle {
  std::vector<Eigen::MatrixXd> tensors;

  bool all_finite() const;
  GradientBundle& operator*=(double alpha);
  bool operator==(const GradientBundle& other) const;
};

class Tape {
 public:
  using Values = std::vector<const Eigen::MatrixXd*>;
  using ForwardFn = std::function<void(const Values& in, std::vector<Eigen::MatrixXd>& out,
                                       std::vector<Eigen::MatrixXd>& saved)>;
  /// in_adj arrives sized to the inputs; leave an entry empty for "no contribution".
  using BackwardFn = std::function<void(const Values& in, const std::vector<Eigen::MatrixXd>& saved,
                                        const Values& out_adj,
                                        std::vector<Eigen::MatrixXd>& in_adj)>;

  Var leaf(Eigen::MatrixXd value);

  /// Record a primitive and evaluate it once.
  std::vector<Var> apply(std::string op, std::vector<Var> inputs, ForwardFn forward,
                         BackwardFn backward);

  const Eigen::MatrixXd& value(Var v) const;
  double scalar(Var v) const;

  /// Zero when backward has not reached v.
  Eigen::MatrixXd adjoint(Var v) const;

  /// Reverse sweep from a 1x1 root. Throws InvalidInput for a non-scalar root and
  /// NumericalError naming the primitive that produced a non-finite adjoint.
  void backward(Var root);

  /// Re-run every primitive from the current leaf values; true iff all outputs are
  /// bit-identical to the recorded ones.
  bool replay() const;

  std::size_t primitives() const { return nodes_.size(); }

 private:
  struct Node {
    std::string op;
    std::vector<std::size_t> inputs;
    std::vector<std::size_t> outputs;
    ForwardFn forward;
    BackwardFn backward;
    std::vector<Eigen::MatrixXd> saved;
  };

  std::vector<Eigen::MatrixXd> values_;
  std::vector<Eigen::MatrixXd> adjoints_;
  std::vector<Node> nodes_;
};

// Elementary primitives.
Var add(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double alpha);
Var sum(Tape& tape, Var a);

// Parameter transforms.
/// exp(2 rho), the variance of a log-sigma parameter.
Var gaussian_variance(Tape& tape, Var rho);
/// ((p - 1/2) s, p (1 - p) s^2) with p = logistic(logit).
std::pair<Var, Var> bernoulli_moments(Tape& tape, Var logit, Var scale);

// Moment propagation; batches are row-major in samples, biases are column vectors.
MomentVars lift(Tape& tape, const Eigen::MatrixXd& X);
MomentVars linear_moments(Tape& tape, MomentVars x, Var w_mean, Var w_variance, Var b_mean,
                          Var b_variance);
MomentVars rectifier_moments(Tape& tape, MomentVars a);
MomentVars apply_noise(Tape& tape, MomentVars x, const NoiseSpec<double>& noise);

// Loss terms, all returning 1x1 sums over batch and outputs.
/// -sum E[log N(z | y, sigma_hat^2)].
Var vi_data_term(Tape& tape, MomentVars y, const Eigen::MatrixXd& Z, Var hat_rho);
/// -sum log N(z | E[y], V[y] + sigma_hat^2).
Var ropd_data_term(Tape& tape, MomentVars y, const Eigen::MatrixXd& Z, Var hat_rho);
/// sum of KL(N(mu, exp(rho)^2) || N(prior_mu, exp(prior_rho)^2)) over every entry.
Var kl_term(Tape& tape, std::span<const std::pair<Var, Var>> mu_rho, Var prior_mu, Var prior_rho);
/// -sum log N(z | mean, C + diag(sigma_hat^2)) with C the full output covariance of a
/// Gaussian last layer fed by `hidden`.
Var covariant_nll_term(Tape& tape, MomentVars hidden, Var w_mean, Var w_variance, Var b_mean,
                       Var b_variance, const Eigen::MatrixXd& Z, Var hat_rho);

namespace testing {
/// Flip the sign of the rectifier adjoint. Only for exercising the validation battery.
void set_rectifier_backward_fault(bool enabled);
}  // namespace testing

}  // namespace fawn::ad

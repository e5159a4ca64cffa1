#include "fawn/model.hpp"

#include <cmath>
#include <random>

#include "fawn/covariance.hpp"
#include "fawn/errors.hpp"

namespace fawn {

std::string to_string(Objective o) { return o == Objective::vi ? "vi" : "ropd"; }

Objective parse_objective(const std::string& s) {
  if (s == "vi") return Objective::vi;
  if (s == "ropd") return Objective::ropd;
  throw InvalidInput("unknown objective '" + s + "'");
}

void check_objective(const NetworkSpec& spec, Objective objective) {
  if (objective != Objective::vi) return;
  if (spec.weight_family != WeightFamily::gaussian) {
    throw UnsupportedFamily("objective vi requires gaussian weights (no KL for bernoulli)");
  }
  if (spec.output_mode != OutputMode::diagonal) {
    throw UnsupportedFamily("objective vi requires a diagonal output");
  }
}

ModelState ModelState::create(const NetworkSpec& spec, std::uint64_t seed, const InitConfig& init) {
  std::mt19937_64 rng(seed);
  ModelState model;
  model.spec = spec;
  model.layers = init_layers(spec, rng, init);
  model.prior = {0.0, std::log(init.mean_std)};
  model.likelihood.hat_rho = Eigen::VectorXd::Zero(spec.outputs());
  return model;
}

std::vector<Eigen::MatrixXd> ModelState::parameters() const {
  std::vector<Eigen::MatrixXd> out;
  for (const Layer& layer : layers) {
    std::visit(
        [&](const auto& l) {
          if constexpr (std::is_same_v<std::decay_t<decltype(l)>, GaussianWeightLayer>) {
            out.push_back(l.mu);
            out.push_back(l.rho);
          } else {
            out.push_back(l.logit_p);
            out.push_back(l.scale);
          }
          out.push_back(l.bias_mu);
          out.push_back(l.bias_rho);
        },
        layer);
  }
  out.push_back(Eigen::MatrixXd::Constant(1, 1, prior.tilde_mu));
  out.push_back(Eigen::MatrixXd::Constant(1, 1, prior.tilde_rho));
  out.push_back(likelihood.hat_rho);
  return out;
}

void ModelState::set_parameters(std::span<const Eigen::MatrixXd> params) {
  const auto expected = parameters();
  if (params.size() != expected.size()) throw DimensionError("set_parameters: wrong tensor count");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].rows() != expected[k].rows() || params[k].cols() != expected[k].cols()) {
      throw DimensionError("set_parameters: tensor " + std::to_string(k) + " has wrong shape");
    }
  }
  std::size_t k = 0;
  for (Layer& layer : layers) {
    std::visit(
        [&](auto& l) {
          if constexpr (std::is_same_v<std::decay_t<decltype(l)>, GaussianWeightLayer>) {
            l.mu = params[k++];
            l.rho = params[k++];
          } else {
            l.logit_p = params[k++];
            l.scale = params[k++];
          }
          l.bias_mu = params[k++];
          l.bias_rho = params[k++];
        },
        layer);
  }
  prior.tilde_mu = params[k++](0, 0);
  prior.tilde_rho = params[k++](0, 0);
  likelihood.hat_rho = params[k++];
}

std::vector<std::string> ModelState::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    if (std::holds_alternative<GaussianWeightLayer>(layers[l])) {
      names.push_back(p + "mu");
      names.push_back(p + "rho");
    } else {
      names.push_back(p + "logit_p");
      names.push_back(p + "scale");
    }
    names.push_back(p + "bias_mu");
    names.push_back(p + "bias_rho");
  }
  names.insert(names.end(), {"prior.tilde_mu", "prior.tilde_rho", "likelihood.hat_rho"});
  return names;
}

namespace {

struct TapeModel {
  ad::Tape tape;
  std::vector<ad::Var> params;
  std::vector<ad::Var> w_mean, w_var, b_mean, b_var;
  ad::Var prior_mu, prior_rho, hat_rho;
};

void record_parameters(const ModelState& model, TapeModel& tm) {
  for (auto& p : model.parameters()) tm.params.push_back(tm.tape.leaf(std::move(p)));
  std::size_t k = 0;
  for (const Layer& layer : model.layers) {
    const ad::Var a = tm.params[k++];
    const ad::Var b = tm.params[k++];
    if (std::holds_alternative<GaussianWeightLayer>(layer)) {
      tm.w_mean.push_back(a);
      tm.w_var.push_back(ad::gaussian_variance(tm.tape, b));
    } else {
      const auto [mean, var] = ad::bernoulli_moments(tm.tape, a, b);
      tm.w_mean.push_back(mean);
      tm.w_var.push_back(var);
    }
    tm.b_mean.push_back(tm.params[k++]);
    tm.b_var.push_back(ad::gaussian_variance(tm.tape, tm.params[k++]));
  }
  tm.prior_mu = tm.params[k++];
  tm.prior_rho = tm.params[k++];
  tm.hat_rho = tm.params[k++];
}

ad::MomentVars propagate(TapeModel& tm, const NetworkSpec& spec, const Eigen::MatrixXd& X,
                         std::size_t stop) {
  ad::MomentVars h = ad::lift(tm.tape, X);
  if (spec.input_noise) h = ad::apply_noise(tm.tape, h, *spec.input_noise);
  for (std::size_t l = 0; l < stop; ++l) {
    h = ad::linear_moments(tm.tape, h, tm.w_mean[l], tm.w_var[l], tm.b_mean[l], tm.b_var[l]);
    if (spec.transfer[l] == Transfer::rectifier) h = ad::rectifier_moments(tm.tape, h);
  }
  return h;
}

ad::Var record_kl(TapeModel& tm, const ModelState& model) {
  std::vector<std::pair<ad::Var, ad::Var>> pairs;
  std::size_t k = 0;
  for (const Layer& layer : model.layers) {
    if (std::holds_alternative<GaussianWeightLayer>(layer)) {
      pairs.emplace_back(tm.params[k], tm.params[k + 1]);
    }
    pairs.emplace_back(tm.params[k + 2], tm.params[k + 3]);
    k += 4;
  }
  return ad::kl_term(tm.tape, pairs, tm.prior_mu, tm.prior_rho);
}

void check_batch(const ModelState& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z) {
  check_layers(model.spec, model.layers);
  if (X.cols() != model.spec.inputs() || Z.cols() != model.spec.outputs() || X.rows() != Z.rows()) {
    throw DimensionError("batch shape does not match the network");
  }
  if (X.rows() < 1) throw InvalidInput("empty batch");
}

LossValue finish(TapeModel& tm, ad::Var data, std::optional<ad::Var> kl, double kl_weight,
                 bool with_gradient) {
  LossValue out;
  out.data = tm.tape.scalar(data);
  ad::Var total = data;
  if (kl) {
    out.kl = tm.tape.scalar(*kl);
    total = ad::add(tm.tape, data, ad::scale(tm.tape, *kl, kl_weight));
  }
  out.total = tm.tape.scalar(total);
  if (!std::isfinite(out.total)) throw NumericalError("loss is not finite");
  if (with_gradient) {
    tm.tape.backward(total);
    for (ad::Var p : tm.params) out.gradient.tensors.push_back(tm.tape.adjoint(p));
  }
  return out;
}

}  // namespace

LossValue loss_fawn_vi(const ModelState& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                       double kl_weight, bool with_gradient) {
  check_objective(model.spec, Objective::vi);
  check_batch(model, X, Z);
  TapeModel tm;
  record_parameters(model, tm);
  const ad::MomentVars y = propagate(tm, model.spec, X, model.spec.depth());
  const ad::Var data = ad::vi_data_term(tm.tape, y, Z, tm.hat_rho);
  return finish(tm, data, record_kl(tm, model), kl_weight, with_gradient);
}

LossValue loss_fawn_ropd(const ModelState& model, const Eigen::MatrixXd& X,
                         const Eigen::MatrixXd& Z, double kl_weight, bool with_gradient) {
  check_batch(model, X, Z);
  TapeModel tm;
  record_parameters(model, tm);
  ad::Var data;
  if (model.spec.output_mode == OutputMode::full_covariance) {
    const std::size_t last = model.spec.depth() - 1;
    const ad::MomentVars h = propagate(tm, model.spec, X, last);
    data = ad::covariant_nll_term(tm.tape, h, tm.w_mean[last], tm.w_var[last], tm.b_mean[last],
                                  tm.b_var[last], Z, tm.hat_rho);
  } else {
    const ad::MomentVars y = propagate(tm, model.spec, X, model.spec.depth());
    data = ad::ropd_data_term(tm.tape, y, Z, tm.hat_rho);
  }
  std::optional<ad::Var> kl;
  if (model.spec.weight_family == WeightFamily::gaussian) kl = record_kl(tm, model);
  return finish(tm, data, kl, kl_weight, with_gradient);
}

LossValue evaluate_loss(const ModelState& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                        Objective objective, double kl_weight, bool with_gradient) {
  return objective == Objective::vi ? loss_fawn_vi(model, X, Z, kl_weight, with_gradient)
                                    : loss_fawn_ropd(model, X, Z, kl_weight, with_gradient);
}

namespace {

/// Sum of per-row NLLs with targets scaled by `target_std` (log-Jacobian included).
Eigen::VectorXd pointwise_nll(const ModelState& model, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& Z, const Eigen::VectorXd& target_std) {
  check_batch(model, X, Z);
  const Eigen::VectorXd obs = model.likelihood.variance();
  const Eigen::VectorXd log_std = target_std.array().log();
  Eigen::VectorXd nll(X.rows());
  if (model.spec.output_mode == OutputMode::full_covariance) {
    const MomentBatch<double> h = forward_to_last_hidden(model.spec, model.layers, X);
    const WeightMoments wm = weight_moments(model.layers.back());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const CovariantOutput<double> c =
          output_covariance(h.row(i), wm.w_mean, wm.w_variance, wm.b_mean, wm.b_variance);
      nll(i) = mvn_nll<double>(Z.row(i).transpose(), c, obs) + log_std.sum();
    }
    return nll;
  }
  const MomentBatch<double> y = forward_batch(model.spec, model.layers, X);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < Z.cols(); ++j) {
      total += gaussian_nll(Z(i, j), y.mean(i, j), y.variance(i, j) + obs(j)) + log_std(j);
    }
    nll(i) = total;
  }
  return nll;
}

}  // namespace

double predictive_nll(const ModelState& model, const Dataset& test,
                      const StandardizationStats& stats) {
  const Dataset std_test = apply_standardization(test, stats);
  return pointwise_nll(model, std_test.features, std_test.targets, stats.target_std).mean();
}

double predictive_nll_standardized(const ModelState& model, const Eigen::MatrixXd& X,
                                   const Eigen::MatrixXd& Z) {
  return pointwise_nll(model, X, Z, Eigen::VectorXd::Ones(Z.cols())).mean();
}

}  // namespace fawn

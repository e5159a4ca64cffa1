#include "fawn/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

#include "fawn/errors.hpp"
#include "fawn/training.hpp"

namespace fawn {

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidInput("batch_size must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw InvalidInput("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(alpha > 0) || !(adam_eps > 0)) throw InvalidInput("alpha and adam_eps must be positive");
  if (max_epochs < 0 || convergence_patience < 1) throw InvalidInput("bad epoch limits");
}

void adam_step(std::vector<Eigen::MatrixXd>& params, const ad::GradientBundle& grads,
               AdamState& state, const TrainConfig& config) {
  if (grads.tensors.size() != params.size()) throw DimensionError("adam_step: gradient count");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads.tensors[k].rows() != params[k].rows() || grads.tensors[k].cols() != params[k].cols()) {
      throw DimensionError("adam_step: gradient " + std::to_string(k) + " has wrong shape");
    }
    if (!grads.tensors[k].allFinite()) {
      throw NumericalError("adam_step: non-finite gradient in tensor " + std::to_string(k));
    }
  }
  if (state.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
      state.v.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    }
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto g = grads.tensors[k].array();
    state.m[k] = (config.beta1 * state.m[k].array() + (1.0 - config.beta1) * g).matrix();
    state.v[k] = (config.beta2 * state.v[k].array() + (1.0 - config.beta2) * g.square()).matrix();
    params[k].array() -= config.alpha * (state.m[k].array() / c1) /
                         ((state.v[k].array() / c2).sqrt() + config.adam_eps);
  }
}

std::uint64_t epoch_seed(std::uint64_t run_seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(run_seed), static_cast<std::uint32_t>(run_seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

int default_max_epochs(Eigen::Index n_train) { return n_train > 5000 ? 500 : 3000; }

TrainResult train(const Dataset& train_set, ModelState model, Objective objective,
                  const TrainConfig& config) {
  config.validate();
  check_objective(model.spec, objective);
  const Eigen::Index n = train_set.size();
  if (n < 1) throw InvalidInput("train: empty training set");
  if (train_set.features.cols() != model.spec.inputs() ||
      train_set.targets.cols() != model.spec.outputs()) {
    throw DimensionError("train: dataset does not match the network");
  }

  TrainResult result;
  ModelState last_good = model;
  double best = std::numeric_limits<double>::infinity();
  int stall = 0;
  const auto start = std::chrono::steady_clock::now();
  std::vector<Eigen::MatrixXd> params = model.parameters();

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    double epoch_loss = 0.0;
    try {
      for (const auto& block : minibatches(n, config.batch_size, epoch_seed(config.rng_seed, epoch))) {
        const Eigen::MatrixXd X = train_set.features(block, Eigen::all);
        const Eigen::MatrixXd Z = train_set.targets(block, Eigen::all);
        const double kl_weight = static_cast<double>(block.size()) / static_cast<double>(n);
        const LossValue loss = evaluate_loss(model, X, Z, objective, kl_weight);
        epoch_loss += loss.total;
        adam_step(params, loss.gradient, model.optimizer, config);
        model.set_parameters(params);
      }
    } catch (const NumericalError& e) {
      result.diverged = true;
      result.message = "diverged at epoch " + std::to_string(epoch) + ": " + e.what();
      result.model = std::move(last_good);
      return result;
    }
    epoch_loss /= static_cast<double>(n);
    if (!std::isfinite(epoch_loss)) {
      result.diverged = true;
      result.message = "non-finite epoch loss at epoch " + std::to_string(epoch);
      result.model = std::move(last_good);
      return result;
    }
    last_good = model;
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back({epoch, epoch_loss, ms});

    if (epoch_loss < best - config.convergence_tol * std::abs(best) || !std::isfinite(best)) {
      best = epoch_loss;
      stall = 0;
    } else if (++stall >= config.convergence_patience) {
      result.converged = true;
      break;
    }
  }
  result.model = std::move(model);
  return result;
}

TrainResult train(const Dataset& train_set, const NetworkSpec& spec, const TrainConfig& config,
                  Objective objective) {
  return train(train_set, ModelState::create(spec, config.rng_seed), objective, config);
}

std::string to_ndjson(const std::vector<EpochRecord>& log) {
  std::ostringstream out;
  for (const auto& r : log) {
    out << nlohmann::json{{"epoch", r.epoch}, {"loss", r.loss}, {"wall_ms", r.wall_ms}}.dump() << '\n';
  }
  return out.str();
}

}  // namespace fawn

#pragma once

#include <string>
#include <vector>

#include "fawn/data.hpp"
#include "fawn/model.hpp"
#include "fawn/optimizer.hpp"

namespace fawn {

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;  // epoch loss divided by the training-set size
  double wall_ms = 0.0;
};

struct TrainResult {
  ModelState model;
  std::vector<EpochRecord> log;
  bool converged = false;
  bool diverged = false;
  std::string message;
};

/// Adam over minibatches of a standardized training set. The KL term of each batch is
/// weighted by batch_size / N so one epoch applies it once. Stops after
/// `convergence_patience` epochs without a relative improvement of `convergence_tol`, at
/// `max_epochs`, or on divergence (then `model` is the last state with a finite loss).
TrainResult train(const Dataset& train_set, ModelState model, Objective objective,
                  const TrainConfig& config);

/// Fresh model seeded from config.rng_seed.
TrainResult train(const Dataset& train_set, const NetworkSpec& spec, const TrainConfig& config,
                  Objective objective);

/// Epoch seed derived from the run seed; distinct epochs get distinct shuffles.
std::uint64_t epoch_seed(std::uint64_t run_seed, int epoch);

/// One {"epoch","loss","wall_ms"} object per line.
std::string to_ndjson(const std::vector<EpochRecord>& log);

/// Default epoch cap: 3000 for small training sets, 500 above 5000 rows.
int default_max_epochs(Eigen::Index n_train);

}  // namespace fawn

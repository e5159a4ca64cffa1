#include "fawn/benchmark.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "fawn/errors.hpp"
#include "fawn/training.hpp"

namespace fawn {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

NetworkSpec network_for(const Dataset& data, const BenchmarkConfig& config) {
  return NetworkSpec::mlp(static_cast<int>(data.features.cols()), {config.hidden_units},
                          static_cast<int>(data.targets.cols()), config.family,
                          config.output_mode);
}

}  // namespace

void BenchmarkConfig::validate() const {
  if (hidden_units < 1) throw InvalidInput("hidden units must be >= 1");
  if (splits < 1) throw InvalidInput("splits must be >= 1");
  if (output_mode == OutputMode::full_covariance && family != WeightFamily::gaussian) {
    throw UnsupportedFamily("full_covariance requires gaussian weights");
  }
  NetworkSpec probe = NetworkSpec::mlp(1, {hidden_units}, 1, family, OutputMode::diagonal);
  check_objective(probe, objective);
  if (objective == Objective::vi && output_mode == OutputMode::full_covariance) {
    throw UnsupportedFamily("objective vi supports only diagonal output");
  }
  train.validate();
}

std::size_t BenchmarkResult::succeeded() const {
  std::size_t n = 0;
  for (const auto& s : splits) n += s.ok ? 1 : 0;
  return n;
}

SplitResult run_split(const Dataset& data, const BenchmarkConfig& config, std::uint64_t seed) {
  SplitResult r;
  r.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    auto [train_raw, test_raw] = split_90_10(data, seed);
    auto [train_std, stats] = standardize(train_raw);
    TrainConfig tc = config.train;
    tc.rng_seed = seed;
    if (config.auto_max_epochs) tc.max_epochs = default_max_epochs(train_std.size());
    ModelState model = ModelState::create(network_for(data, config), seed);
    TrainResult trained = train(train_std, std::move(model), config.objective, tc);
    trained.model.standardization = stats;
    r.epochs = static_cast<int>(trained.log.size());
    r.nll = predictive_nll(trained.model, test_raw, stats);
    r.ok = std::isfinite(r.nll);
    r.message = trained.diverged ? trained.message : (r.ok ? "" : "non-finite test NLL");
  } catch (const std::exception& e) {
    r.ok = false;
    r.message = e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

BenchmarkResult run_benchmark(const Dataset& data, const BenchmarkConfig& config) {
  config.validate();
  BenchmarkResult result;
  result.config = config;
  for (int s = 0; s < config.splits; ++s) {
    result.splits.push_back(run_split(data, config, config.seed + static_cast<std::uint64_t>(s)));
  }
  std::vector<double> nll;
  double seconds = 0.0;
  for (const auto& s : result.splits) {
    seconds += s.seconds;
    if (s.ok) nll.push_back(s.nll);
  }
  result.seconds_mean = seconds / static_cast<double>(result.splits.size());
  result.complete = nll.size() == result.splits.size();
  if (!nll.empty()) {
    double sum = 0.0;
    for (double v : nll) sum += v;
    result.nll_mean = sum / static_cast<double>(nll.size());
    if (nll.size() > 1) {
      double ss = 0.0;
      for (double v : nll) ss += (v - result.nll_mean) * (v - result.nll_mean);
      result.nll_std = std::sqrt(ss / static_cast<double>(nll.size() - 1));
    }
  } else {
    result.nll_mean = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

BenchmarkResult run_benchmark(const BenchmarkConfig& config) {
  return run_benchmark(load_dataset(config.dataset), config);
}

std::string csv_header() {
  return "dataset,objective,family,output_mode,splits,nll_mean,nll_std,seconds_mean";
}

std::string to_csv_row(const BenchmarkResult& r) {
  const auto& c = r.config;
  return c.dataset + "," + to_string(c.objective) + "," + to_string(c.family) + "," +
         to_string(c.output_mode) + "," + std::to_string(c.splits) + "," +
         (std::isfinite(r.nll_mean) ? fixed(r.nll_mean, 6) : std::string("NaN")) + "," +
         (r.nll_std ? fixed(*r.nll_std, 6) : std::string("N/A")) + "," + fixed(r.seconds_mean, 1);
}

std::string to_json(const std::vector<BenchmarkResult>& results) {
  using nlohmann::json;
  json arr = json::array();
  for (const auto& r : results) {
    json splits = json::array();
    for (const auto& s : r.splits) {
      splits.push_back({{"seed", s.seed},
                        {"ok", s.ok},
                        {"nll", s.ok ? json(s.nll) : json(nullptr)},
                        {"epochs", s.epochs},
                        {"seconds", s.seconds},
                        {"message", s.message}});
    }
    const auto& c = r.config;
    arr.push_back({{"dataset", c.dataset},
                   {"objective", to_string(c.objective)},
                   {"family", to_string(c.family)},
                   {"output_mode", to_string(c.output_mode)},
                   {"hidden_units", c.hidden_units},
                   {"splits", c.splits},
                   {"nll_mean", std::isfinite(r.nll_mean) ? json(r.nll_mean) : json(nullptr)},
                   {"nll_std", r.nll_std ? json(*r.nll_std) : json("N/A")},
                   {"seconds_mean", r.seconds_mean},
                   {"complete", r.complete},
                   {"per_split", splits}});
  }
  return arr.dump(2);
}

}  // namespace fawn

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fawn/data.hpp"
#include "fawn/layers.hpp"
#include "fawn/model.hpp"
#include "fawn/optimizer.hpp"

namespace fawn {

struct BenchmarkConfig {
  std::string dataset;
  Objective objective = Objective::ropd;
  WeightFamily family = WeightFamily::gaussian;
  OutputMode output_mode = OutputMode::diagonal;
  int hidden_units = 50;
  int splits = 10;
  std::uint64_t seed = 0;  // split s uses seed + s for both the split and the model
  TrainConfig train;
  bool auto_max_epochs = true;  // 3000, or 500 above 5000 training rows

  /// Throws UnsupportedFamily / InvalidInput on an impossible combination.
  void validate() const;
};

struct SplitResult {
  std::uint64_t seed = 0;
  double nll = 0.0;
  double seconds = 0.0;
  int epochs = 0;
  bool ok = false;
  std::string message;
};

struct BenchmarkResult {
  BenchmarkConfig config;
  std::vector<SplitResult> splits;
  double nll_mean = 0.0;
  std::optional<double> nll_std;  // sample std over successful splits; none for a single split
  double seconds_mean = 0.0;
  bool complete = false;

  std::size_t succeeded() const;
};

/// One split: 90/10 partition, standardization fitted on the training part, training,
/// predictive NLL on the test part in original units.
SplitResult run_split(const Dataset& data, const BenchmarkConfig& config, std::uint64_t seed);

BenchmarkResult run_benchmark(const Dataset& data, const BenchmarkConfig& config);
BenchmarkResult run_benchmark(const BenchmarkConfig& config);

std::string csv_header();
std::string to_csv_row(const BenchmarkResult& result);
std::string to_json(const std::vector<BenchmarkResult>& results);

}  // namespace fawn

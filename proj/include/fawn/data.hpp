#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace fawn {

struct Dataset {
  Eigen::MatrixXd features;  // N x D
  Eigen::MatrixXd targets;   // N x m
  std::vector<std::string> feature_names;
  std::string source_id;

  Eigen::Index size() const { return features.rows(); }

  /// Rows `idx` of both features and targets.
  Dataset subset(const std::vector<Eigen::Index>& idx) const;
};

struct StandardizationStats {
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_std;
  Eigen::VectorXd target_mean;
  Eigen::VectorXd target_std;
  std::vector<bool> constant_feature;
  std::vector<bool> constant_target;
};

/// Comma-separated numeric file with an optional header row (a first row with no numeric
/// cell). Columns listed in `target_columns` become targets, the rest features.
Dataset load_csv(const std::filesystem::path& path, const std::vector<int>& target_columns);

/// Column statistics with population standard deviation; constant columns get std 1.
StandardizationStats fit_standardization(const Dataset& ds);
Dataset apply_standardization(const Dataset& ds, const StandardizationStats& stats);
Dataset unstandardize(const Dataset& ds, const StandardizationStats& stats);
std::pair<Dataset, StandardizationStats> standardize(const Dataset& ds);

/// Seeded uniform permutation; the first ceil(0.9 N) rows train, the rest test.
std::pair<Dataset, Dataset> split_90_10(const Dataset& ds, std::uint64_t seed);
std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> split_indices_90_10(
    Eigen::Index n, std::uint64_t seed);

/// Shuffled index blocks of `batch_size`; the last block may be smaller.
std::vector<std::vector<Eigen::Index>> minibatches(Eigen::Index n, Eigen::Index batch_size,
                                                   std::uint64_t epoch_seed);

struct ManifestEntry {
  std::filesystem::path path;
  std::vector<int> target_columns;
};

/// `manifest.json` mapping dataset names to {path, target_columns}; relative paths are
/// resolved against the manifest's directory.
std::map<std::string, ManifestEntry> load_manifest(const std::filesystem::path& manifest);

/// FAWN_DATA_DIR if set, else the build-time default.
std::filesystem::path data_dir();

/// A manifest name, or a path to a CSV whose last column is the target.
Dataset load_dataset(const std::string& name_or_path);

}  // namespace fawn

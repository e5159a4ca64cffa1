#include "fawn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fawn/errors.hpp"

namespace fawn {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

bool parse_double(const std::string& cell, double& out) {
  const std::string t = trim(cell);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size() && std::isfinite(out);
}

}  // namespace

Dataset Dataset::subset(const std::vector<Eigen::Index>& idx) const {
  Dataset out;
  out.features = features(idx, Eigen::all);
  out.targets = targets(idx, Eigen::all);
  out.feature_names = feature_names;
  out.source_id = source_id;
  return out;
}

Dataset load_csv(const std::filesystem::path& path, const std::vector<int>& target_columns) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());

  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (rows.empty() && header.empty()) {
      double dummy;
      const bool any_numeric =
          std::any_of(cells.begin(), cells.end(), [&](const auto& c) { return parse_double(c, dummy); });
      if (!any_numeric) {
        for (const auto& c : cells) header.push_back(trim(c));
        width = cells.size();
        continue;
      }
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) + " has " +
                       std::to_string(cells.size()) + " columns, expected " + std::to_string(width));
    }
    std::vector<double> row(width);
    for (std::size_t c = 0; c < width; ++c) {
      if (!parse_double(cells[c], row[c])) {
        throw ParseError(path.string() + ": non-numeric cell '" + trim(cells[c]) + "' at line " +
                         std::to_string(line_no) + ", column " + std::to_string(c + 1));
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path.string() + ": no data rows");

  std::set<std::size_t> targets;
  for (int t : target_columns) {
    const long idx = t < 0 ? static_cast<long>(width) + t : t;
    if (idx < 0 || idx >= static_cast<long>(width)) {
      throw ParseError(path.string() + ": missing target column " + std::to_string(t));
    }
    targets.insert(static_cast<std::size_t>(idx));
  }
  if (targets.empty()) throw ParseError(path.string() + ": no target column given");
  if (targets.size() == width) throw ParseError(path.string() + ": no feature columns left");

  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < width; ++c)
    if (!targets.contains(c)) feature_cols.push_back(c);

  Dataset ds;
  const auto n = static_cast<Eigen::Index>(rows.size());
  ds.features.resize(n, static_cast<Eigen::Index>(feature_cols.size()));
  ds.targets.resize(n, static_cast<Eigen::Index>(targets.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index k = 0;
    for (std::size_t c : feature_cols) ds.features(i, k++) = rows[i][c];
    k = 0;
    for (std::size_t c : targets) ds.targets(i, k++) = rows[i][c];
  }
  for (std::size_t c : feature_cols) {
    ds.feature_names.push_back(header.empty() ? "x" + std::to_string(c) : header[c]);
  }
  ds.source_id = path.filename().string();
  if (ds.size() < 2) throw ParseError(path.string() + ": need at least two rows");
  return ds;
}

namespace {

void column_stats(const Eigen::MatrixXd& m, Eigen::VectorXd& mean, Eigen::VectorXd& std,
                  std::vector<bool>& constant) {
  mean = m.colwise().mean().transpose();
  std.resize(m.cols());
  constant.assign(m.cols(), false);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double var = (m.col(c).array() - mean(c)).square().mean();
    if (var > 0.0) {
      std(c) = std::sqrt(var);
    } else {
      std(c) = 1.0;
      constant[c] = true;
    }
  }
}

}  // namespace

StandardizationStats fit_standardization(const Dataset& ds) {
  if (ds.size() < 2) throw InvalidInput("standardize: need at least two rows");
  StandardizationStats s;
  column_stats(ds.features, s.feature_mean, s.feature_std, s.constant_feature);
  column_stats(ds.targets, s.target_mean, s.target_std, s.constant_target);
  return s;
}

Dataset apply_standardization(const Dataset& ds, const StandardizationStats& s) {
  Dataset out = ds;
  out.features = ((ds.features.rowwise() - s.feature_mean.transpose()).array().rowwise() /
                  s.feature_std.transpose().array())
                     .matrix();
  out.targets = ((ds.targets.rowwise() - s.target_mean.transpose()).array().rowwise() /
                 s.target_std.transpose().array())
                    .matrix();
  return out;
}

Dataset unstandardize(const Dataset& ds, const StandardizationStats& s) {
  Dataset out = ds;
  out.features = (ds.features.array().rowwise() * s.feature_std.transpose().array()).matrix();
  out.features.rowwise() += s.feature_mean.transpose();
  out.targets = (ds.targets.array().rowwise() * s.target_std.transpose().array()).matrix();
  out.targets.rowwise() += s.target_mean.transpose();
  return out;
}

std::pair<Dataset, StandardizationStats> standardize(const Dataset& ds) {
  StandardizationStats s = fit_standardization(ds);
  return {apply_standardization(ds, s), std::move(s)};
}

std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> split_indices_90_10(
    Eigen::Index n, std::uint64_t seed) {
  if (n < 10) throw InvalidInput("split_90_10: need at least 10 rows");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>((9 * n + 9) / 10);
  return {std::vector<Eigen::Index>(perm.begin(), perm.begin() + n_train),
          std::vector<Eigen::Index>(perm.begin() + n_train, perm.end())};
}

std::pair<Dataset, Dataset> split_90_10(const Dataset& ds, std::uint64_t seed) {
  const auto [train, test] = split_indices_90_10(ds.size(), seed);
  return {ds.subset(train), ds.subset(test)};
}

std::vector<std::vector<Eigen::Index>> minibatches(Eigen::Index n, Eigen::Index batch_size,
                                                   std::uint64_t epoch_seed) {
  if (batch_size < 1) throw InvalidInput("minibatches: batch_size must be >= 1");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::mt19937_64 rng(epoch_seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<Eigen::Index>> blocks;
  for (Eigen::Index start = 0; start < n; start += batch_size) {
    const Eigen::Index end = std::min(n, start + batch_size);
    blocks.emplace_back(perm.begin() + start, perm.begin() + end);
  }
  return blocks;
}

std::map<std::string, ManifestEntry> load_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw ParseError("cannot open manifest " + manifest.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest.string() + ": " + e.what());
  }
  std::map<std::string, ManifestEntry> out;
  for (const auto& [name, entry] : doc.items()) {
    if (!entry.contains("path") || !entry.contains("target_columns")) {
      throw ParseError(manifest.string() + ": entry '" + name + "' needs path and target_columns");
    }
    std::filesystem::path p = entry["path"].get<std::string>();
    if (p.is_relative()) p = manifest.parent_path() / p;
    out[name] = {p, entry["target_columns"].get<std::vector<int>>()};
  }
  return out;
}

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("FAWN_DATA_DIR"); env && *env) return env;
  return FAWN_DEFAULT_DATA_DIR;
}

Dataset load_dataset(const std::string& name_or_path) {
  const std::filesystem::path as_path(name_or_path);
  if (as_path.extension() == ".csv" || std::filesystem::exists(as_path)) {
    return load_csv(as_path, {-1});
  }
  const auto manifest = load_manifest(data_dir() / "manifest.json");
  const auto it = manifest.find(name_or_path);
  if (it == manifest.end()) throw ParseError("unknown dataset '" + name_or_path + "'");
  if (!std::filesystem::exists(it->second.path)) {
    throw ParseError("dataset '" + name_or_path + "' not available at " + it->second.path.string());
  }
  Dataset ds = load_csv(it->second.path, it->second.target_columns);
  ds.source_id = name_or_path;
  return ds;
}

}  // namespace fawn

#include "fawn/layers.hpp"

#include <cmath>

namespace fawn {

WeightMoments weight_moments(const GaussianWeightLayer& layer) {
  return {layer.mu, (2.0 * layer.rho.array()).exp().matrix(), layer.bias_mu,
          (2.0 * layer.bias_rho.array()).exp().matrix()};
}

WeightMoments weight_moments(const BernoulliWeightLayer& layer) {
  const Eigen::ArrayXXd p = 1.0 / (1.0 + (-layer.logit_p.array()).exp());
  const Eigen::ArrayXXd s = layer.scale.array();
  return {((p - 0.5) * s).matrix(), (p * (1.0 - p) * s.square()).matrix(), layer.bias_mu,
          (2.0 * layer.bias_rho.array()).exp().matrix()};
}

WeightMoments weight_moments(const Layer& layer) {
  return std::visit([](const auto& l) { return weight_moments(l); }, layer);
}

std::string to_string(Transfer t) { return t == Transfer::rectifier ? "rectifier" : "identity"; }
std::string to_string(WeightFamily f) {
  return f == WeightFamily::gaussian ? "gaussian" : "bernoulli";
}
std::string to_string(OutputMode m) {
  return m == OutputMode::diagonal ? "diagonal" : "full_covariance";
}

Transfer parse_transfer(const std::string& s) {
  if (s == "rectifier") return Transfer::rectifier;
  if (s == "identity") return Transfer::identity;
  throw InvalidInput("unknown transfer '" + s + "'");
}

WeightFamily parse_family(const std::string& s) {
  if (s == "gaussian") return WeightFamily::gaussian;
  if (s == "bernoulli") return WeightFamily::bernoulli;
  throw InvalidInput("unknown weight family '" + s + "'");
}

OutputMode parse_output_mode(const std::string& s) {
  if (s == "diagonal") return OutputMode::diagonal;
  if (s == "full_covariance" || s == "full") return OutputMode::full_covariance;
  throw InvalidInput("unknown output mode '" + s + "'");
}

NetworkSpec NetworkSpec::mlp(int inputs, std::vector<int> hidden, int outputs, WeightFamily family,
                             OutputMode mode) {
  NetworkSpec spec;
  spec.layer_widths.push_back(inputs);
  for (int h : hidden) {
    spec.layer_widths.push_back(h);
    spec.transfer.push_back(Transfer::rectifier);
  }
  spec.layer_widths.push_back(outputs);
  spec.transfer.push_back(Transfer::identity);
  spec.weight_family = family;
  spec.output_mode = mode;
  return spec;
}

void NetworkSpec::validate() const {
  if (layer_widths.size() < 2) throw InvalidInput("network needs at least one weight layer");
  for (int w : layer_widths) {
    if (w <= 0) throw InvalidInput("layer widths must be positive");
  }
  if (transfer.size() != depth()) throw InvalidInput("need one transfer per weight layer");
  if (transfer.back() != Transfer::identity) throw InvalidInput("output transfer must be identity");
  if (output_mode == OutputMode::full_covariance && weight_family != WeightFamily::gaussian) {
    throw InvalidInput("full covariance output requires gaussian weights");
  }
}

std::vector<Layer> init_layers(const NetworkSpec& spec, std::mt19937_64& rng,
                               const InitConfig& config) {
  spec.validate();
  std::normal_distribution<double> mean_dist(0.0, config.mean_std);
  std::normal_distribution<double> scale_dist(0.0, config.scale_std);
  const double rho0 = std::log(config.initial_sigma);
  auto draw = [&](Eigen::Index r, Eigen::Index c, auto& dist) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = dist(rng);
    return m;
  };

  std::vector<Layer> layers;
  for (std::size_t l = 0; l < spec.depth(); ++l) {
    const Eigen::Index n = spec.layer_widths[l];
    const Eigen::Index m = spec.layer_widths[l + 1];
    if (spec.weight_family == WeightFamily::gaussian) {
      GaussianWeightLayer g;
      g.mu = draw(n, m, mean_dist);
      g.rho = Eigen::MatrixXd::Constant(n, m, rho0);
      g.bias_mu = draw(m, 1, mean_dist);
      g.bias_rho = Eigen::VectorXd::Constant(m, rho0);
      layers.emplace_back(std::move(g));
    } else {
      BernoulliWeightLayer b;
      b.logit_p = Eigen::MatrixXd::Zero(n, m);
      b.scale = draw(n, m, scale_dist);
      b.bias_mu = draw(m, 1, mean_dist);
      b.bias_rho = Eigen::VectorXd::Constant(m, rho0);
      layers.emplace_back(std::move(b));
    }
  }
  return layers;
}

void check_layers(const NetworkSpec& spec, std::span<const Layer> layers) {
  spec.validate();
  if (layers.size() != spec.depth()) throw DimensionError("layer count does not match spec");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto [n, m] = std::visit(
        [](const auto& x) { return std::pair{x.inputs(), x.outputs()}; }, layers[l]);
    if (n != spec.layer_widths[l] || m != spec.layer_widths[l + 1]) {
      throw DimensionError("layer " + std::to_string(l) + " shape does not match spec");
    }
    const bool consistent = std::visit(
        [&](const auto& x) {
          const auto& [a, b] = [&] {
            if constexpr (std::is_same_v<std::decay_t<decltype(x)>, GaussianWeightLayer>) {
              return std::pair<const Eigen::MatrixXd&, const Eigen::MatrixXd&>{x.mu, x.rho};
            } else {
              return std::pair<const Eigen::MatrixXd&, const Eigen::MatrixXd&>{x.logit_p, x.scale};
            }
          }();
          return b.rows() == a.rows() && b.cols() == a.cols() && x.bias_mu.size() == m &&
                 x.bias_rho.size() == m;
        },
        layers[l]);
    if (!consistent) {
      throw DimensionError("layer " + std::to_string(l) + " parameter tensors disagree in shape");
    }
    const bool gaussian = std::holds_alternative<GaussianWeightLayer>(layers[l]);
    if (gaussian != (spec.weight_family == WeightFamily::gaussian)) {
      throw InvalidInput("layer " + std::to_string(l) + " family does not match spec");
    }
  }
}

namespace {

MomentBatch<double> propagate(const NetworkSpec& spec, std::span<const Layer> layers,
                              const Eigen::MatrixXd& X, std::size_t stop) {
  check_layers(spec, layers);
  if (X.cols() != spec.inputs()) {
    throw DimensionError("input has " + std::to_string(X.cols()) + " columns, network expects " +
                         std::to_string(spec.inputs()));
  }
  MomentBatch<double> h = lift_points(X);
  if (spec.input_noise) h = apply_noise(h, *spec.input_noise);
  for (std::size_t l = 0; l < stop; ++l) {
    const WeightMoments wm = weight_moments(layers[l]);
    h = linear_moments(h, wm.w_mean, wm.w_variance, wm.b_mean, wm.b_variance);
    if (spec.transfer[l] == Transfer::rectifier) h = rectifier_moments(h);
  }
  return h;
}

}  // namespace

MomentVector<double> forward(const NetworkSpec& spec, std::span<const Layer> layers,
                             const Eigen::VectorXd& x) {
  return propagate(spec, layers, x.transpose(), spec.depth()).row(0);
}

MomentBatch<double> forward_batch(const NetworkSpec& spec, std::span<const Layer> layers,
                                  const Eigen::MatrixXd& X) {
  return propagate(spec, layers, X, spec.depth());
}

MomentBatch<double> forward_to_last_hidden(const NetworkSpec& spec, std::span<const Layer> layers,
                                           const Eigen::MatrixXd& X) {
  return propagate(spec, layers, X, spec.depth() - 1);
}

Eigen::MatrixXd deterministic_forward(const NetworkSpec& spec,
                                      std::span<const Eigen::MatrixXd> weights,
                                      std::span<const Eigen::VectorXd> biases,
                                      const Eigen::MatrixXd& X) {
  if (weights.size() != spec.depth() || biases.size() != spec.depth()) {
    throw DimensionError("deterministic_forward: layer count mismatch");
  }
  Eigen::MatrixXd h = X;
  for (std::size_t l = 0; l < spec.depth(); ++l) {
    h = h * weights[l];
    h.rowwise() += biases[l].transpose();
    if (spec.transfer[l] == Transfer::rectifier) h = h.cwiseMax(0.0);
  }
  return h;
}

}  // namespace fawn

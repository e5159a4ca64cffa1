#include "fawn/mc_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <json.hpp>

#include "fawn/covariance.hpp"
#include "fawn/errors.hpp"

namespace fawn::mc {

namespace {

constexpr std::int64_t kChunk = 1 << 16;

using Engine = boost::random::mt19937_64;
using SetupEngine = std::mt19937_64;

Engine chunk_engine(std::uint64_t seed, std::int64_t chunk) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chunk), static_cast<std::uint32_t>(chunk >> 32)};
  return Engine(seq);
}

inline double uniform01(Engine& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct Accumulator {
  std::int64_t n = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd m2;
  // Per-component third and fourth central sums.
  Eigen::VectorXd m3;
  Eigen::VectorXd m4;

  explicit Accumulator(Eigen::Index dim)
      : mean(Eigen::VectorXd::Zero(dim)),
        m2(Eigen::MatrixXd::Zero(dim, dim)),
        m3(Eigen::VectorXd::Zero(dim)),
        m4(Eigen::VectorXd::Zero(dim)) {}

  void push(const Eigen::VectorXd& y, Eigen::VectorXd& delta) {
    ++n;
    const double k = static_cast<double>(n);
    delta = y - mean;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double d = delta(i);
      const double dn = d / k;
      const double term = d * dn * (k - 1);
      const double s2 = m2(i, i);
      m4(i) += term * dn * dn * (k * k - 3 * k + 3) + 6 * dn * dn * s2 - 4 * dn * m3(i);
      m3(i) += term * dn * (k - 2) - 3 * dn * s2;
    }
    mean += delta / k;
    m2.noalias() += delta * (y - mean).transpose();
  }

  void merge(const Accumulator& other) {
    if (other.n == 0) return;
    if (n == 0) {
      *this = other;
      return;
    }
    const double na = static_cast<double>(n);
    const double nb = static_cast<double>(other.n);
    const double total = na + nb;
    const Eigen::VectorXd delta = other.mean - mean;
    for (Eigen::Index i = 0; i < delta.size(); ++i) {
      const double d = delta(i);
      const double a2 = m2(i, i);
      const double b2 = other.m2(i, i);
      m4(i) += other.m4(i) +
               d * d * d * d * na * nb * (na * na - na * nb + nb * nb) / (total * total * total) +
               6 * d * d * (na * na * b2 + nb * nb * a2) / (total * total) +
               4 * d * (na * other.m3(i) - nb * m3(i)) / total;
      m3(i) += other.m3(i) + d * d * d * na * nb * (na - nb) / (total * total) +
               3 * d * (na * b2 - nb * a2) / total;
    }
    mean += delta * (nb / total);
    m2 += other.m2 + delta * delta.transpose() * (na * nb / total);
    n += other.n;
  }
};

/// `draw(rng, out)` writes one sample of a `dim`-vector.
template <typename Draw>
EmpiricalMoments accumulate(std::int64_t samples, std::uint64_t seed, Eigen::Index dim, Draw&& draw) {
  if (samples < kMinSamples) {
    throw InvalidInput("sample_forward: need at least " + std::to_string(kMinSamples) + " samples");
  }
  Accumulator total(dim);
  Eigen::VectorXd y(dim);
  Eigen::VectorXd delta(dim);
  const std::int64_t chunks = (samples + kChunk - 1) / kChunk;
  for (std::int64_t c = 0; c < chunks; ++c) {
    Engine rng = chunk_engine(seed, c);
    Accumulator acc(dim);
    const std::int64_t count = std::min(kChunk, samples - c * kChunk);
    for (std::int64_t s = 0; s < count; ++s) {
      draw(rng, y);
      acc.push(y, delta);
    }
    total.merge(acc);
  }
  EmpiricalMoments out;
  out.samples = total.n;
  out.mean = total.mean;
  out.covariance = total.m2 / static_cast<double>(total.n - 1);
  out.fourth_central = total.m4 / static_cast<double>(total.n);
  return out;
}

/// Per-layer sampling parameters in the layout of the layer itself.
struct SampledLayer {
  bool bernoulli = false;
  Eigen::MatrixXd a;  // gaussian: mean;  bernoulli: p
  Eigen::MatrixXd b;  // gaussian: sigma; bernoulli: scale
  Eigen::VectorXd bias_mean;
  Eigen::VectorXd bias_sd;
  Transfer transfer = Transfer::identity;
};

std::vector<SampledLayer> prepare(const NetworkSpec& spec, std::span<const Layer> layers) {
  check_layers(spec, layers);
  std::vector<SampledLayer> out;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    SampledLayer s;
    s.transfer = spec.transfer[k];
    std::visit(
        [&](const auto& l) {
          if constexpr (std::is_same_v<std::decay_t<decltype(l)>, GaussianWeightLayer>) {
            s.a = l.mu;
            s.b = l.rho.array().exp().matrix();
          } else {
            s.bernoulli = true;
            s.a = (1.0 / (1.0 + (-l.logit_p.array()).exp())).matrix();
            s.b = l.scale;
          }
          s.bias_mean = l.bias_mu;
          s.bias_sd = l.bias_rho.array().exp().matrix();
        },
        layers[k]);
    out.push_back(std::move(s));
  }
  return out;
}

void sample_layer(const SampledLayer& l, const Eigen::VectorXd& x, Eigen::VectorXd& y, Engine& rng,
                  boost::random::normal_distribution<double>& normal) {
  const Eigen::Index n_in = l.a.rows();
  const Eigen::Index n_out = l.a.cols();
  y.resize(n_out);
  for (Eigen::Index j = 0; j < n_out; ++j) {
    double acc = l.bias_mean(j) + l.bias_sd(j) * normal(rng);
    const double* a = l.a.col(j).data();
    const double* b = l.b.col(j).data();
    if (l.bernoulli) {
      for (Eigen::Index i = 0; i < n_in; ++i) {
        const double w = (uniform01(rng) < a[i] ? 0.5 : -0.5) * b[i];
        acc += x(i) * w;
      }
    } else {
      for (Eigen::Index i = 0; i < n_in; ++i) acc += x(i) * (a[i] + b[i] * normal(rng));
    }
    y(j) = l.transfer == Transfer::rectifier ? std::max(acc, 0.0) : acc;
  }
}

double z_score(double empirical, double analytic, double se) {
  const double diff = empirical - analytic;
  if (se > 0) return diff / se;
  const double scale = std::max({1.0, std::abs(empirical), std::abs(analytic)});
  return std::abs(diff) <= 1e-12 * scale ? 0.0 : std::numeric_limits<double>::infinity();
}

Eigen::VectorXd gaussian_vector(SetupEngine& rng, Eigen::Index n, double mean, double sd) {
  std::normal_distribution<double> d(mean, sd);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

Eigen::VectorXd uniform_vector(SetupEngine& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

}  // namespace

double SampleReport::max_abs_z() const {
  double z = 0.0;
  if (z_mean.size() > 0) z = std::max(z, z_mean.cwiseAbs().maxCoeff());
  if (z_variance.size() > 0) z = std::max(z, z_variance.cwiseAbs().maxCoeff());
  if (z_covariance.size() > 0) z = std::max(z, z_covariance.cwiseAbs().maxCoeff());
  return z;
}

EmpiricalMoments sample_forward(const NetworkSpec& spec, std::span<const Layer> layers,
                                const MomentVector<double>& x, std::int64_t samples,
                                std::uint64_t seed) {
  spec.validate();
  detail::require_dims(x.size() == spec.inputs() && x.variance.size() == x.size(),
                       "sample_forward: input does not match the network");
  detail::require_nonnegative(x.variance, "sample_forward");
  const std::vector<SampledLayer> net = prepare(spec, layers);
  const Eigen::VectorXd x_sd = x.variance.cwiseSqrt();
  const bool random_input = (x.variance.array() > 0).any();

  Eigen::VectorXd noise_mean;
  Eigen::VectorXd noise_sd;
  if (spec.input_noise) {
    noise_mean = detail::broadcast(spec.input_noise->eps_mean, x.size(), "sample_forward").transpose();
    noise_sd = detail::broadcast(spec.input_noise->eps_variance, x.size(), "sample_forward")
                   .transpose()
                   .cwiseSqrt();
  }

  boost::random::normal_distribution<double> normal;
  Eigen::VectorXd in(x.size());
  Eigen::VectorXd buf_a;
  Eigen::VectorXd buf_b;
  return accumulate(samples, seed, spec.outputs(), [&](Engine& rng, Eigen::VectorXd& y) {
    in = x.mean;
    if (random_input) {
      for (Eigen::Index i = 0; i < in.size(); ++i) in(i) += x_sd(i) * normal(rng);
    }
    if (spec.input_noise) {
      for (Eigen::Index i = 0; i < in.size(); ++i) {
        const double eps = noise_mean(i) + noise_sd(i) * normal(rng);
        in(i) = spec.input_noise->kind == NoiseKind::additive ? in(i) + eps : in(i) * eps;
      }
    }
    const Eigen::VectorXd* cur = &in;
    for (std::size_t k = 0; k < net.size(); ++k) {
      Eigen::VectorXd& out = (k % 2 == 0) ? buf_a : buf_b;
      sample_layer(net[k], *cur, out, rng, normal);
      cur = &out;
    }
    y = *cur;
  });
}

EmpiricalMoments sample_forward(const NetworkSpec& spec, std::span<const Layer> layers,
                                const Eigen::VectorXd& x, std::int64_t samples,
                                std::uint64_t seed) {
  return sample_forward(spec, layers, lift_point(x), samples, seed);
}

SampleReport compare(std::string op_name, const Eigen::VectorXd& analytic_mean,
                     const Eigen::VectorXd& analytic_variance, const EmpiricalMoments& empirical,
                     double threshold, const Eigen::MatrixXd* analytic_covariance,
                     VarianceSe variance_se) {
  const Eigen::Index m = empirical.mean.size();
  detail::require_dims(analytic_mean.size() == m && analytic_variance.size() == m,
                       "compare: dimension mismatch");
  SampleReport r;
  r.op_name = std::move(op_name);
  r.samples = empirical.samples;
  r.threshold = threshold;
  r.analytic_mean = analytic_mean;
  r.analytic_variance = analytic_variance;
  r.empirical_mean = empirical.mean;
  r.empirical_variance = empirical.variance();
  r.empirical_fourth = empirical.fourth_central;
  r.variance_se = variance_se;
  const double s = static_cast<double>(empirical.samples);
  const bool have_fourth = empirical.fourth_central.size() == m;
  if (variance_se == VarianceSe::fourth_moment && !have_fourth) {
    throw InvalidInput("compare: fourth-moment standard error needs the fourth central moment");
  }
  r.z_mean.resize(m);
  r.z_variance.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double var = r.empirical_variance(i);
    r.z_mean(i) = z_score(r.empirical_mean(i), analytic_mean(i), std::sqrt(var / s));
    const double se_var =
        variance_se == VarianceSe::gaussian
            ? var * std::sqrt(2.0 / (s - 1.0))
            : std::sqrt(std::max(0.0, empirical.fourth_central(i) - var * var) / s);
    r.z_variance(i) = z_score(var, analytic_variance(i), se_var);
  }
  if (analytic_covariance != nullptr) {
    detail::require_dims(analytic_covariance->rows() == m && analytic_covariance->cols() == m,
                         "compare: covariance shape");
    r.analytic_covariance = *analytic_covariance;
    r.empirical_covariance = empirical.covariance;
    r.z_covariance = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index o = 0; o < m; ++o) {
      for (Eigen::Index p = 0; p < m; ++p) {
        if (o == p) continue;
        const double c = empirical.covariance(o, p);
        const double se = std::sqrt((empirical.covariance(o, o) * empirical.covariance(p, p) + c * c) /
                                    (s - 1.0));
        r.z_covariance(o, p) = z_score(c, (*analytic_covariance)(o, p), se);
      }
    }
  }
  r.pass = r.max_abs_z() < threshold;
  return r;
}

SampleReport validate_point(const NetworkSpec& spec, std::span<const Layer> layers,
                            const MomentVector<double>& x, std::int64_t samples, std::uint64_t seed,
                            const ValidateOptions& options) {
  const EmpiricalMoments emp = sample_forward(spec, layers, x, samples, seed);
  const MomentBatch<double> xb = MomentBatch<double>::from_vector(x);
  Eigen::MatrixXd Xm = x.mean.transpose();
  MomentVector<double> analytic;
  if ((x.variance.array() > 0).any()) {
    // forward() takes deterministic inputs; push the input moments through by hand.
    MomentBatch<double> h = xb;
    if (spec.input_noise) h = apply_noise(h, *spec.input_noise);
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const WeightMoments w = weight_moments(layers[k]);
      h = linear_moments(h, w.w_mean, w.w_variance, w.b_mean, w.b_variance);
      if (spec.transfer[k] == Transfer::rectifier) h = rectifier_moments(h);
    }
    analytic = h.row(0);
  } else {
    analytic = forward(spec, layers, x.mean);
  }
  if (!options.check_covariance || spec.outputs() < 2) {
    return compare("forward", analytic.mean, analytic.variance, emp, options.threshold, nullptr,
                   options.variance_se);
  }
  const MomentVector<double> last = forward_to_last_hidden(spec, layers, Xm).row(0);
  const WeightMoments w = weight_moments(layers.back());
  const Eigen::MatrixXd cov =
      output_covariance(last, w.w_mean, w.w_variance, w.b_mean, w.b_variance).covariance();
  return compare("forward+covariance", analytic.mean, analytic.variance, emp, options.threshold,
                 &cov, options.variance_se);
}

std::vector<SampleReport> validate(const NetworkSpec& spec, std::span<const Layer> layers,
                                   const Eigen::MatrixXd& inputs, std::int64_t samples,
                                   std::uint64_t seed, const ValidateOptions& options) {
  std::vector<SampleReport> out;
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    const Eigen::VectorXd x = inputs.row(i).transpose();
    out.push_back(validate_point(spec, layers, lift_point(x), samples,
                                 seed + static_cast<std::uint64_t>(i), options));
  }
  return out;
}

std::vector<SampleReport> validate_primitives(std::int64_t samples, std::uint64_t seed,
                                              double threshold) {
  SetupEngine setup(seed);
  std::vector<SampleReport> out;
  boost::random::normal_distribution<double> normal;

  {
    const Eigen::Index n = 10, m = 4;
    MomentVector<double> x{gaussian_vector(setup, n, 0.0, 1.0), uniform_vector(setup, n, 0.0, 1.0)};
    const Eigen::MatrixXd wm = Eigen::MatrixXd::NullaryExpr(n, m, [&] { return std::normal_distribution<double>(0, 0.5)(setup); });
    const Eigen::MatrixXd wv = Eigen::MatrixXd::NullaryExpr(n, m, [&] { return std::uniform_real_distribution<double>(0, 0.5)(setup); });
    const Eigen::VectorXd bm = gaussian_vector(setup, m, 0.0, 0.5);
    const Eigen::VectorXd bv = uniform_vector(setup, m, 0.0, 0.5);
    const MomentVector<double> a = linear_moments(x, wm, wv, bm, bv);
    const Eigen::VectorXd xs = x.variance.cwiseSqrt();
    const Eigen::MatrixXd ws = wv.cwiseSqrt();
    const Eigen::VectorXd bs = bv.cwiseSqrt();
    Eigen::VectorXd xi(n);
    const auto emp = accumulate(samples, seed ^ 0x11, m, [&](Engine& rng, Eigen::VectorXd& y) {
      for (Eigen::Index i = 0; i < n; ++i) xi(i) = x.mean(i) + xs(i) * normal(rng);
      for (Eigen::Index j = 0; j < m; ++j) {
        double acc = bm(j) + bs(j) * normal(rng);
        for (Eigen::Index i = 0; i < n; ++i) acc += xi(i) * (wm(i, j) + ws(i, j) * normal(rng));
        y(j) = acc;
      }
    });
    out.push_back(compare("linear_moments", a.mean, a.variance, emp, threshold, nullptr,
                              VarianceSe::fourth_moment));
  }
  {
    const Eigen::Index n = 8;
    MomentVector<double> a{uniform_vector(setup, n, -3.0, 3.0), uniform_vector(setup, n, 0.1, 4.0)};
    const MomentVector<double> h = rectifier_moments(a);
    const Eigen::VectorXd sd = a.variance.cwiseSqrt();
    const auto emp = accumulate(samples, seed ^ 0x22, n, [&](Engine& rng, Eigen::VectorXd& y) {
      for (Eigen::Index i = 0; i < n; ++i) y(i) = std::max(0.0, a.mean(i) + sd(i) * normal(rng));
    });
    out.push_back(compare("rectifier_moments", h.mean, h.variance, emp, threshold, nullptr,
                              VarianceSe::fourth_moment));
  }
  for (NoiseKind kind : {NoiseKind::additive, NoiseKind::multiplicative}) {
    const Eigen::Index n = 6;
    MomentVector<double> x{gaussian_vector(setup, n, 0.0, 1.0), uniform_vector(setup, n, 0.0, 1.0)};
    NoiseSpec<double> noise;
    noise.kind = kind;
    noise.eps_mean = uniform_vector(setup, n, 0.5, 1.5);
    noise.eps_variance = uniform_vector(setup, n, 0.0, 0.5);
    const MomentVector<double> y = apply_noise(x, noise);
    const Eigen::VectorXd xs = x.variance.cwiseSqrt();
    const Eigen::VectorXd es = noise.eps_variance.cwiseSqrt();
    const auto emp = accumulate(samples, seed ^ (kind == NoiseKind::additive ? 0x33 : 0x44), n,
                                [&](Engine& rng, Eigen::VectorXd& out_y) {
                                  for (Eigen::Index i = 0; i < n; ++i) {
                                    const double xi = x.mean(i) + xs(i) * normal(rng);
                                    const double e = noise.eps_mean(i) + es(i) * normal(rng);
                                    out_y(i) = kind == NoiseKind::additive ? xi + e : xi * e;
                                  }
                                });
    out.push_back(compare(kind == NoiseKind::additive ? "apply_noise/additive"
                                                      : "apply_noise/multiplicative",
                          y.mean, y.variance, emp, threshold, nullptr,
                              VarianceSe::fourth_moment));
  }
  {
    const Eigen::Index n = 6;
    const double keep = 0.7;
    MomentVector<double> x{gaussian_vector(setup, n, 0.0, 1.0), uniform_vector(setup, n, 0.0, 1.0)};
    const MomentVector<double> y = apply_noise(x, NoiseSpec<double>::dropout(keep));
    const Eigen::VectorXd xs = x.variance.cwiseSqrt();
    const auto emp = accumulate(samples, seed ^ 0x55, n, [&](Engine& rng, Eigen::VectorXd& out_y) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double xi = x.mean(i) + xs(i) * normal(rng);
        out_y(i) = uniform01(rng) < keep ? xi : 0.0;
      }
    });
    out.push_back(compare("apply_noise/dropout", y.mean, y.variance, emp, threshold, nullptr,
                              VarianceSe::fourth_moment));
  }
  return out;
}

RandomConfig random_config(std::uint64_t seed, WeightFamily family, int outputs,
                           const RandomConfigRanges& ranges) {
  SetupEngine rng(seed);
  const int n_in = std::uniform_int_distribution<int>(ranges.min_inputs, ranges.max_inputs)(rng);
  const int hidden = std::uniform_int_distribution<int>(ranges.min_hidden, ranges.max_hidden)(rng);
  RandomConfig cfg;
  cfg.spec = NetworkSpec::mlp(n_in, {hidden}, outputs, family);
  std::normal_distribution<double> mean_d(0.0, 0.5);
  std::uniform_real_distribution<double> log_sigma(std::log(0.05), 0.0);
  std::normal_distribution<double> logit_d(0.0, ranges.logit_sd);
  std::normal_distribution<double> scale_d(0.0, 0.5);
  for (std::size_t k = 0; k < cfg.spec.depth(); ++k) {
    const int a = cfg.spec.layer_widths[k];
    const int b = cfg.spec.layer_widths[k + 1];
    Eigen::VectorXd bias_mu(b), bias_rho(b);
    for (int j = 0; j < b; ++j) {
      bias_mu(j) = mean_d(rng);
      bias_rho(j) = log_sigma(rng);
    }
    if (family == WeightFamily::gaussian) {
      GaussianWeightLayer l{Eigen::MatrixXd(a, b), Eigen::MatrixXd(a, b), bias_mu, bias_rho};
      for (Eigen::Index i = 0; i < l.mu.size(); ++i) {
        l.mu.reshaped()(i) = mean_d(rng);
        l.rho.reshaped()(i) = log_sigma(rng);
      }
      cfg.layers.emplace_back(std::move(l));
    } else {
      BernoulliWeightLayer l{Eigen::MatrixXd(a, b), Eigen::MatrixXd(a, b), bias_mu, bias_rho};
      for (Eigen::Index i = 0; i < l.logit_p.size(); ++i) {
        l.logit_p.reshaped()(i) = logit_d(rng);
        l.scale.reshaped()(i) = scale_d(rng);
      }
      cfg.layers.emplace_back(std::move(l));
    }
  }
  cfg.input = gaussian_vector(rng, n_in, 0.0, 1.0);
  return cfg;
}

std::string to_json(std::span<const SampleReport> reports) {
  using nlohmann::json;
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  auto finite_or_null = [](double z) { return std::isfinite(z) ? json(z) : json(nullptr); };
  json arr = json::array();
  for (const auto& r : reports) {
    json z_mean = json::array();
    json z_var = json::array();
    for (Eigen::Index i = 0; i < r.z_mean.size(); ++i) z_mean.push_back(finite_or_null(r.z_mean(i)));
    for (Eigen::Index i = 0; i < r.z_variance.size(); ++i) z_var.push_back(finite_or_null(r.z_variance(i)));
    json j{{"op", r.op_name},
           {"samples", r.samples},
           {"threshold", r.threshold},
           {"analytic", {{"mean", vec(r.analytic_mean)}, {"var", vec(r.analytic_variance)}}},
           {"empirical", {{"mean", vec(r.empirical_mean)}, {"var", vec(r.empirical_variance)}}},
           {"z_mean", z_mean},
           {"z_var", z_var},
           {"variance_se", r.variance_se == VarianceSe::gaussian ? "gaussian" : "fourth_moment"},
           {"max_abs_z", finite_or_null(r.max_abs_z())},
           {"pass", r.pass}};
    if (r.z_covariance.size() > 0) {
      const Eigen::Index m = r.z_covariance.rows();
      json cov = json::array();
      for (Eigen::Index o = 0; o < m; ++o)
        for (Eigen::Index p = o + 1; p < m; ++p)
          cov.push_back({{"o", o}, {"p", p}, {"analytic", r.analytic_covariance(o, p)},
                         {"empirical", r.empirical_covariance(o, p)},
                         {"z", finite_or_null(r.z_covariance(o, p))}});
      j["covariance"] = cov;
    }
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace fawn::mc

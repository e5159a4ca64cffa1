#pragma once

// Moment propagation primitives. Every activation vector is carried as a pair of
// per-unit mean and variance; batches hold one sample per row.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fawn/errors.hpp"

namespace fawn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
struct MomentVector {
  Vector<Scalar> mean;
  Vector<Scalar> variance;

  Eigen::Index size() const { return mean.size(); }
};

/// Row i holds the moments of sample i.
template <typename Scalar>
struct MomentBatch {
  Matrix<Scalar> mean;
  Matrix<Scalar> variance;

  Eigen::Index batch() const { return mean.rows(); }
  Eigen::Index units() const { return mean.cols(); }

  MomentVector<Scalar> row(Eigen::Index i) const {
    return {mean.row(i).transpose(), variance.row(i).transpose()};
  }

  static MomentBatch from_vector(const MomentVector<Scalar>& x) {
    return {x.mean.transpose(), x.variance.transpose()};
  }
};

enum class NoiseKind { additive, multiplicative };

/// Independent per-unit noise. Vectors of length 1 broadcast over all units.
template <typename Scalar>
struct NoiseSpec {
  NoiseKind kind = NoiseKind::additive;
  Vector<Scalar> eps_mean = Vector<Scalar>::Zero(1);
  Vector<Scalar> eps_variance = Vector<Scalar>::Zero(1);

  /// Dropout keeping each unit with probability `keep_rate`.
  static NoiseSpec dropout(Scalar keep_rate) {
    NoiseSpec spec;
    spec.kind = NoiseKind::multiplicative;
    spec.eps_mean = Vector<Scalar>::Constant(1, keep_rate);
    spec.eps_variance = Vector<Scalar>::Constant(1, keep_rate * (1 - keep_rate));
    return spec;
  }
};

namespace detail {

template <typename Scalar>
Scalar normal_pdf(Scalar r) {
  return std::exp(Scalar(-0.5) * r * r) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
}

template <typename Scalar>
Scalar normal_cdf(Scalar r) {
  return Scalar(0.5) * std::erfc(-r / std::numbers::sqrt2_v<Scalar>);
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw InvalidInput(std::string(what) + ": non-finite entry");
}

template <typename Derived>
void require_nonnegative(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (m.size() > 0 && !(m.array() >= 0).all()) {
    throw InvalidInput(std::string(what) + ": negative variance");
  }
}

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

/// Broadcast a length-1 vector to `n` units, or pass through a length-n one.
template <typename Scalar>
RowVector<Scalar> broadcast(const Vector<Scalar>& v, Eigen::Index n, const char* what) {
  if (v.size() == 1) return RowVector<Scalar>::Constant(n, v(0));
  require_dims(v.size() == n, std::string(what) + ": expected length 1 or " + std::to_string(n) +
                                  ", got " + std::to_string(v.size()));
  return v.transpose();
}

}  // namespace detail

/// Rectifier output moments at one unit together with their partial derivatives.
template <typename Scalar>
struct RectifierPoint {
  Scalar mean;
  Scalar variance;
  Scalar dmean_dmu;
  Scalar dmean_dvar;
  Scalar dvar_dmu;
  Scalar dvar_dvar;
};

/// |r| beyond which the rectifier is treated as saturated (identity or zero).
inline constexpr double kRectifierSaturation = 37.0;

/// Moments of max(a, 0) for a ~ N(mu, var). Uses E[y^2] - E[y]^2 for the variance.
template <typename Scalar>
RectifierPoint<Scalar> rectifier_point(Scalar mu, Scalar var) {
  const Scalar sat = static_cast<Scalar>(kRectifierSaturation);
  if (var == 0) {
    const bool on = mu > 0;
    return {on ? mu : Scalar(0), 0, on ? Scalar(1) : Scalar(0), 0, 0, on ? Scalar(1) : Scalar(0)};
  }
  const Scalar s = std::sqrt(var);
  const Scalar r = mu / s;
  if (r >= sat) return {mu, var, 1, 0, 0, 1};
  if (r <= -sat) return {0, 0, 0, 0, 0, 0};

  const Scalar cdf = detail::normal_cdf(r);
  const Scalar pdf = detail::normal_pdf(r);
  const Scalar mean = cdf * mu + pdf * s;
  const Scalar second = (mu * mu + var) * cdf + mu * s * pdf;
  const Scalar variance = std::max(second - mean * mean, Scalar(0));
  return {mean,
          variance,
          cdf,
          pdf / (2 * s),
          2 * mean * (1 - cdf),
          cdf - mean * pdf / s};
}

template <typename Derived>
MomentVector<typename Derived::Scalar> lift_point(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  detail::require_finite(x, "lift_point");
  return {x, Vector<Scalar>::Zero(x.size())};
}

/// Batched lift: one deterministic sample per row.
template <typename Derived>
MomentBatch<typename Derived::Scalar> lift_points(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  detail::require_finite(x, "lift_points");
  return {x, Matrix<Scalar>::Zero(x.rows(), x.cols())};
}

/// Moments of a = x W + b with x, W, b mutually independent and all entries independent.
/// W is n_in x n_out; b is a length n_out vector.
template <typename Scalar>
MomentBatch<Scalar> linear_moments(const MomentBatch<Scalar>& x, const Matrix<Scalar>& w_mean,
                                   const Matrix<Scalar>& w_variance, const Vector<Scalar>& b_mean,
                                   const Vector<Scalar>& b_variance) {
  detail::require_dims(w_mean.rows() == x.units() && w_mean.rows() == w_variance.rows() &&
                           w_mean.cols() == w_variance.cols() && b_mean.size() == w_mean.cols() &&
                           b_variance.size() == w_mean.cols() &&
                           x.mean.rows() == x.variance.rows() && x.mean.cols() == x.variance.cols(),
                       "linear_moments: shape mismatch");
  MomentBatch<Scalar> out;
  out.mean = x.mean * w_mean;
  out.mean.rowwise() += b_mean.transpose();
  out.variance = x.mean.array().square().matrix() * w_variance +
                 x.variance * (w_mean.array().square().matrix() + w_variance);
  out.variance.rowwise() += b_variance.transpose();
  return out;
}

template <typename Scalar>
MomentVector<Scalar> linear_moments(const MomentVector<Scalar>& x, const Matrix<Scalar>& w_mean,
                                    const Matrix<Scalar>& w_variance, const Vector<Scalar>& b_mean,
                                    const Vector<Scalar>& b_variance) {
  return linear_moments(MomentBatch<Scalar>::from_vector(x), w_mean, w_variance, b_mean, b_variance)
      .row(0);
}

template <typename Scalar>
MomentBatch<Scalar> rectifier_moments(const MomentBatch<Scalar>& a) {
  detail::require_nonnegative(a.variance, "rectifier_moments");
  MomentBatch<Scalar> out{Matrix<Scalar>(a.mean.rows(), a.mean.cols()),
                          Matrix<Scalar>(a.mean.rows(), a.mean.cols())};
  for (Eigen::Index j = 0; j < a.mean.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.mean.rows(); ++i) {
      const auto p = rectifier_point(a.mean(i, j), a.variance(i, j));
      out.mean(i, j) = p.mean;
      out.variance(i, j) = p.variance;
    }
  }
  return out;
}

template <typename Scalar>
MomentVector<Scalar> rectifier_moments(const MomentVector<Scalar>& a) {
  return rectifier_moments(MomentBatch<Scalar>::from_vector(a)).row(0);
}

template <typename Scalar>
MomentBatch<Scalar> apply_noise(const MomentBatch<Scalar>& x, const NoiseSpec<Scalar>& noise) {
  const Eigen::Index n = x.units();
  const RowVector<Scalar> em = detail::broadcast(noise.eps_mean, n, "apply_noise eps_mean");
  const RowVector<Scalar> ev = detail::broadcast(noise.eps_variance, n, "apply_noise eps_variance");
  detail::require_nonnegative(ev, "apply_noise");
  MomentBatch<Scalar> out = x;
  if (noise.kind == NoiseKind::additive) {
    out.mean.rowwise() += em;
    out.variance.rowwise() += ev;
    return out;
  }
  const auto emA = em.array();
  const auto evA = ev.array();
  out.mean = (x.mean.array().rowwise() * emA).matrix();
  out.variance = (x.mean.array().square().rowwise() * evA +
                  x.variance.array().rowwise() * (emA.square() + evA))
                     .matrix();
  return out;
}

template <typename Scalar>
MomentVector<Scalar> apply_noise(const MomentVector<Scalar>& x, const NoiseSpec<Scalar>& noise) {
  return apply_noise(MomentBatch<Scalar>::from_vector(x), noise).row(0);
}

}  // namespace fawn

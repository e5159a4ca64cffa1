#pragma once

// Full-covariance output layer. The output covariance is a positive diagonal plus one
// rank-one term per last-layer input; its inverse and log-determinant are built by
// successive Sherman-Morrison updates and the matrix determinant lemma.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>

#include "fawn/errors.hpp"
#include "fawn/moments.hpp"

namespace fawn {

/// C = diag(diag_v) + sum_i u.row(i)^T v.row(i).
template <typename Scalar>
struct CovariantOutput {
  Vector<Scalar> mean;
  Vector<Scalar> diag_v;
  Matrix<Scalar> u;  // n x m, u_i = V[x_i] * mu_{w_i,*}
  Matrix<Scalar> v;  // n x m, v_i = mu_{w_i,*}

  Eigen::Index dim() const { return mean.size(); }
  Eigen::Index terms() const { return u.rows(); }

  Matrix<Scalar> covariance() const {
    Matrix<Scalar> c = u.transpose() * v;
    c.diagonal() += diag_v;
    return c;
  }
};

template <typename Scalar>
struct PrecisionLogdet {
  Matrix<Scalar> precision;
  Scalar logdet = 0;
  bool dense_fallback = false;
};

/// Pivots 1 + v^T A^{-1} u below this abort the recursion.
inline constexpr double kMinPivot = 1e-10;

template <typename Scalar>
CovariantOutput<Scalar> output_covariance(const MomentVector<Scalar>& x,
                                          const Matrix<Scalar>& w_mean,
                                          const Matrix<Scalar>& w_variance,
                                          const Vector<Scalar>& b_mean,
                                          const Vector<Scalar>& b_variance) {
  detail::require_dims(w_mean.rows() == x.size() && w_variance.rows() == x.size() &&
                           w_mean.cols() == w_variance.cols() && b_mean.size() == w_mean.cols() &&
                           b_variance.size() == w_mean.cols() && x.variance.size() == x.size(),
                       "output_covariance: shape mismatch");
  detail::require_nonnegative(x.variance, "output_covariance");
  CovariantOutput<Scalar> out;
  out.mean = w_mean.transpose() * x.mean + b_mean;
  out.diag_v = b_variance + w_variance.transpose() * x.mean.array().square().matrix() +
               w_variance.transpose() * x.variance;
  out.v = w_mean;
  out.u = x.variance.asDiagonal() * w_mean;
  return out;
}

/// Dense Cholesky route; throws NumericalDegeneracy if C is not positive definite.
template <typename Scalar>
PrecisionLogdet<Scalar> dense_precision_logdet(const Matrix<Scalar>& c) {
  Eigen::LLT<Matrix<Scalar>> llt(c);
  if (llt.info() != Eigen::Success) {
    throw NumericalDegeneracy("covariance is not positive definite");
  }
  PrecisionLogdet<Scalar> out;
  out.precision = llt.solve(Matrix<Scalar>::Identity(c.rows(), c.cols()));
  out.logdet = 2 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  out.dense_fallback = true;
  return out;
}

/// Starting from A_0 = diag(diag_v), apply A_{i+1} = A_i + u_i v_i^T for every row i and
/// track A^{-1} and log det A. Throws NumericalDegeneracy on a pivot below kMinPivot.
template <typename Scalar>
PrecisionLogdet<Scalar> recursive_precision_logdet(const Vector<Scalar>& diag_v,
                                                   const Matrix<Scalar>& u,
                                                   const Matrix<Scalar>& v) {
  const Eigen::Index m = diag_v.size();
  detail::require_dims(u.cols() == m && v.cols() == m && u.rows() == v.rows(),
                       "recursive_precision_logdet: shape mismatch");
  if (!(diag_v.array() > 0).all()) {
    throw InvalidInput("recursive_precision_logdet: diagonal must be strictly positive");
  }
  PrecisionLogdet<Scalar> out;
  out.precision = diag_v.cwiseInverse().asDiagonal();
  out.logdet = diag_v.array().log().sum();

  Vector<Scalar> a_inv_u(m);
  RowVector<Scalar> vt_a_inv(m);
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    a_inv_u.noalias() = out.precision * u.row(i).transpose();
    vt_a_inv.noalias() = v.row(i) * out.precision;
    const Scalar pivot = 1 + v.row(i).dot(a_inv_u);
    if (!(pivot >= static_cast<Scalar>(kMinPivot))) {
      throw NumericalDegeneracy("rank-one pivot " + std::to_string(static_cast<double>(pivot)) +
                                " at term " + std::to_string(i));
    }
    out.precision.noalias() -= (a_inv_u / pivot) * vt_a_inv;
    out.logdet += std::log(pivot);
  }
  return out;
}

/// Recursion first; dense Cholesky if the recursion degenerates.
template <typename Scalar>
PrecisionLogdet<Scalar> precision_logdet(const CovariantOutput<Scalar>& c) {
  try {
    return recursive_precision_logdet(c.diag_v, c.u, c.v);
  } catch (const NumericalDegeneracy&) {
    return dense_precision_logdet(c.covariance());
  }
}

/// -log N(z | mean, C + diag(obs_var)); obs_var is folded into the diagonal first.
template <typename Scalar>
Scalar mvn_nll(const Vector<Scalar>& z, const CovariantOutput<Scalar>& out,
               const Vector<Scalar>& obs_var) {
  detail::require_dims(z.size() == out.dim() && obs_var.size() == out.dim(),
                       "mvn_nll: shape mismatch");
  detail::require_nonnegative(obs_var, "mvn_nll obs_var");
  CovariantOutput<Scalar> noisy = out;
  noisy.diag_v += obs_var;
  const auto pl = precision_logdet(noisy);
  const Vector<Scalar> r = z - out.mean;
  const Scalar log2pi = std::log(2 * std::numbers::pi_v<Scalar>);
  return Scalar(0.5) * (pl.logdet + r.dot(pl.precision * r) + static_cast<Scalar>(out.dim()) * log2pi);
}

}  // namespace fawn

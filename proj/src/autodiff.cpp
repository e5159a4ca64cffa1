#include "fawn/autodiff.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

#include "fawn/covariance.hpp"
#include "fawn/errors.hpp"
#include "fawn/losses.hpp"

namespace fawn::ad {

using Eigen::MatrixXd;

namespace {

std::atomic<bool> rectifier_fault{false};

void accumulate(MatrixXd& into, const MatrixXd& add) {
  if (into.size() == 0) {
    into = add;
  } else {
    into += add;
  }
}

MatrixXd scalar_matrix(double v) { return MatrixXd::Constant(1, 1, v); }

}  // namespace

namespace testing {
void set_rectifier_backward_fault(bool enabled) { rectifier_fault = enabled; }
}  // namespace testing

bool GradientBundle::all_finite() const {
  for (const auto& t : tensors)
    if (!t.allFinite()) return false;
  return true;
}

GradientBundle& GradientBundle::operator*=(double alpha) {
  for (auto& t : tensors) t *= alpha;
  return *this;
}

bool GradientBundle::operator==(const GradientBundle& other) const {
  if (tensors.size() != other.tensors.size()) return false;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].rows() != other.tensors[i].rows() ||
        tensors[i].cols() != other.tensors[i].cols() ||
        !(tensors[i].array() == other.tensors[i].array()).all()) {
      return false;
    }
  }
  return true;
}

Var Tape::leaf(MatrixXd value) {
  values_.push_back(std::move(value));
  adjoints_.emplace_back();
  return Var{values_.size() - 1};
}

std::vector<Var> Tape::apply(std::string op, std::vector<Var> inputs, ForwardFn forward,
                             BackwardFn backward) {
  Node node{std::move(op), {}, {}, std::move(forward), std::move(backward), {}};
  Values in;
  for (Var v : inputs) {
    if (v.index >= values_.size()) throw std::logic_error(node.op + ": unknown input variable");
    node.inputs.push_back(v.index);
    in.push_back(&values_[v.index]);
  }
  std::vector<MatrixXd> out;
  node.forward(in, out, node.saved);
  std::vector<Var> result;
  for (auto& o : out) {
    values_.push_back(std::move(o));
    adjoints_.emplace_back();
    node.outputs.push_back(values_.size() - 1);
    result.push_back(Var{values_.size() - 1});
  }
  nodes_.push_back(std::move(node));
  return result;
}

const MatrixXd& Tape::value(Var v) const { return values_.at(v.index); }

double Tape::scalar(Var v) const {
  const MatrixXd& m = value(v);
  if (m.size() != 1) throw InvalidInput("tape value is not a scalar");
  return m(0, 0);
}

MatrixXd Tape::adjoint(Var v) const {
  const MatrixXd& a = adjoints_.at(v.index);
  if (a.size() == 0) return MatrixXd::Zero(values_[v.index].rows(), values_[v.index].cols());
  return a;
}

void Tape::backward(Var root) {
  if (!root.valid() || root.index >= values_.size()) throw InvalidInput("backward: invalid root");
  if (values_[root.index].size() != 1) throw InvalidInput("backward: root must be a scalar");
  for (auto& a : adjoints_) a.resize(0, 0);
  adjoints_[root.index] = scalar_matrix(1.0);

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    const Node& node = *it;
    bool reached = false;
    for (std::size_t o : node.outputs) reached = reached || adjoints_[o].size() != 0;
    if (!reached) continue;

    std::vector<MatrixXd> zero_fill(node.outputs.size());
    Values out_adj;
    for (std::size_t k = 0; k < node.outputs.size(); ++k) {
      const std::size_t o = node.outputs[k];
      if (adjoints_[o].size() == 0) {
        zero_fill[k] = MatrixXd::Zero(values_[o].rows(), values_[o].cols());
        out_adj.push_back(&zero_fill[k]);
      } else {
        out_adj.push_back(&adjoints_[o]);
      }
    }
    Values in;
    for (std::size_t i : node.inputs) in.push_back(&values_[i]);
    std::vector<MatrixXd> in_adj(node.inputs.size());
    node.backward(in, node.saved, out_adj, in_adj);

    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      if (in_adj[k].size() == 0) continue;
      const MatrixXd& target = values_[node.inputs[k]];
      if (in_adj[k].rows() != target.rows() || in_adj[k].cols() != target.cols()) {
        throw std::logic_error(node.op + ": adjoint shape mismatch");
      }
      if (!in_adj[k].allFinite()) {
        throw NumericalError("non-finite gradient produced by primitive '" + node.op + "'");
      }
      accumulate(adjoints_[node.inputs[k]], in_adj[k]);
    }
  }
}

bool Tape::replay() const {
  std::vector<MatrixXd> values = values_;
  for (const Node& node : nodes_) {
    Values in;
    for (std::size_t i : node.inputs) in.push_back(&values[i]);
    std::vector<MatrixXd> out;
    std::vector<MatrixXd> saved;
    node.forward(in, out, saved);
    if (out.size() != node.outputs.size()) return false;
    for (std::size_t k = 0; k < out.size(); ++k) {
      const MatrixXd& recorded = values_[node.outputs[k]];
      if (out[k].rows() != recorded.rows() || out[k].cols() != recorded.cols()) return false;
      // Bitwise comparison; NaN payloads compare by representation too.
      if (std::memcmp(out[k].data(), recorded.data(), sizeof(double) * out[k].size()) != 0) {
        return false;
      }
      values[node.outputs[k]] = std::move(out[k]);
    }
  }
  return true;
}

Var add(Tape& tape, Var a, Var b) {
  return tape.apply(
      "add", {a, b},
      [](const Tape::Values& in, std::vector<MatrixXd>& out, std::vector<MatrixXd>&) {
        if (in[0]->rows() != in[1]->rows() || in[0]->cols() != in[1]->cols()) {
          throw DimensionError("add: shape mismatch");
        }
        out.push_back(*in[0] + *in[1]);
      },
      [](const Tape::Values&, const std::vector<MatrixXd>&, const Tape::Values& g,
         std::vector<MatrixXd>& d) {
        d[0] = *g[0];
        d[1] = *g[0];
      })[0];
}

Var scale(Tape& tape, Var a, double alpha) {
  return tape.apply(
      "scale", {a},
      [alpha](const Tape::Values& in, std::vector<MatrixXd>& out, std::vector<MatrixXd>&) {
        out.push_back(alpha * *in[0]);
      },
      [alpha](const Tape::Values&, const std::vector<MatrixXd>&, const Tape::Values& g,
              std::vector<MatrixXd>& d) { d[0] = alpha * *g[0]; })[0];
}

Var sum(Tape& tape, Var a) {
  return tape.apply(
      "sum", {a},
      [](const Tape::Values& in, std::vector<MatrixXd>& out, std::vector<MatrixXd>&) {
        out.push_back(scalar_matrix(in[0]->sum()));
      },
      [](const Tape::Values& in, const std::vector<MatrixXd>&, const Tape::Values& g,
         std::vector<MatrixXd>& d) {
        d[0] = MatrixXd::Constant(in[0]->rows(), in[0]->cols(), (*g[0])(0, 0));
      })[0];
}

Var gaussian_variance(Tape& tape, Var rho) {
  return tape.apply(
      "gaussian_variance", {rho},
      [](const Tape::Values& in, std::vector<MatrixXd>& out, std::vector<MatrixXd>&) {
        out.push_back((2.0 * in[0]->array()).exp().matrix());
      },
      [](const Tape::Values& in, const std::vector<MatrixXd>&, const Tape::Values& g,
         std::vector<MatrixXd>& d) {
        d[0] = (2.0 * g[0]->array() * (2.0 * in[0]->array()).exp()).matrix();
      })[0];
}

std::pair<Var, Var> bernoulli_moments(Tape& tape, Var logit, Var scale_var) {
  auto out = tape.apply(
      "bernoulli_moments", {logit, scale_var},
      [](const Tape::Values& in, std::vector<MatrixXd>& out, std::vector<MatrixXd>&) {
        if (in[0]->rows() != in[1]->rows() || in[0]->cols() != in[1]->cols()) {
          throw DimensionError("bernoulli_moments: shape mismatch");
        }
        const Eigen::ArrayXXd p = 1.0 / (1.0 + (-in[0]->array()).exp());
        const Eigen::ArrayXXd s = in[1]->array();
        out.push_back(((p - 0.5) * s).matrix());
        out.push_back((p * (1.0 - p) * s.square()).matrix());
      },
      [](const Tape::Values& in, const std::vector<MatrixXd>&, const Tape::Values& g,
         std::vector<MatrixXd>& d) {
        const Eigen::ArrayXXd p = 1.0 / (1.0 + (-in[0]->array()).exp());
        const Eigen::ArrayXXd s = in[1]->array();
        const Eigen::ArrayXXd dp = p * (1.0 - p);
        const Eigen::ArrayXXd gm = g[0]->array();
        const Eigen::ArrayXXd gv = g[1]->array();
        // d mean/dp = s, d var/dp = (1 - 2p) s^2
        d[0] = (dp * (gm * s + gv * (1.0 - 2.0 * p) * s.square())).matrix();
        d[1] = (gm * (p - 0.5) + gv * 2.0 * dp * s).matrix();
      });
  return {out[0], out[1]};
}

MomentVars lift(Tape& tape, const MatrixXd& X) {
  detail::require_finite(X, "lift");
  return {tape.leaf(X), tape.leaf(MatrixXd::Zero(X.rows(), X.cols()))};
}

MomentVars linear_moments(Tape& tape, MomentVars x, Var w_mean, Var w_variance, Var b_mean,
                          Var b_variance) {
  auto out = tape.apply(
      "linear_moments", {x.mean, x.variance, w_mean, w_variance, b_mean, b_variance},
      [](const Tape::Values& in, std::vector<MatrixXd>& out, std::vector<MatrixXd>&) {
        const MomentBatch<double> r =
            fawn::linear_moments(MomentBatch<double>{*in[0], *in[1]}, *in[2], *in[3],
                                 Eigen::VectorXd(*in[4]), Eigen::VectorXd(*in[5]));
        out.push_back(r.mean);
        out.push_back(r.variance);
      },
      [](const Tape::Values& in, const std::vector<MatrixXd>&, const Tape::Values& g,
         std::vector<MatrixXd>& d) {
        const MatrixXd& M = *in[0];
        const MatrixXd& V = *in[1];
        const MatrixXd& W = *in[2];
        const MatrixXd& Wv = *in[3];
        const MatrixXd& gM = *g[0];
        const MatrixXd& gV = *g[1];
        const MatrixXd gV_Wvt = gV * Wv.transpose();
        d[0] = gM * W.transpose() + 2.0 * M.cwiseProduct(gV_Wvt);
        d[1] = gV * (W.cwiseAbs2() + Wv).transpose();
        const MatrixXd Vt_gV = V.transpose() * gV;
        d[2] = M.transpose() * gM + 2.0 * W.cwiseProduct(Vt_gV);
        d[3] = M.cwiseAbs2().transpose() * gV + Vt_gV;
        d[4] = gM.colwise().sum().transpose();
        d[5] = gV.colwise().sum().transpose();
      });
  return {out[0], out[1]};
}

MomentVars rectifier_moments(Tape& tape, MomentVars a) {
  auto out = tape.apply(
      "rectifier_moments", {a.mean, a.variance},
      [](const Tape::Values& in, std::vector<MatrixXd>& out, std::vector<MatrixXd>& saved) {
        const MatrixXd& mu = *in[0];
        const MatrixXd& var = *in[1];
        detail::require_nonnegative(var, "rectifier_moments");
        const Eigen::Index r = mu.rows(), c = mu.cols();
        MatrixXd m(r, c), v(r, c);
        saved.assign(4, MatrixXd(r, c));
        for (Eigen::Index j = 0; j < c; ++j) {
          for (Eigen::Index i = 0; i < r; ++i) {
            const auto p = rectifier_point(mu(i, j), var(i, j));
            m(i, j) = p.mean;
            v(i, j) = p.variance;
            saved[0](i, j) = p.dmean_dmu;
            saved[1](i, j) = p.dmean_dvar;
            saved[2](i, j) = p.dvar_dmu;
            saved[3](i, j) = p.dvar_dvar;
          }
        }
        out.push_back(std::move(m));
        out.push_back(std::move(v));
      },
      [](const Tape::Values&, const std::vector<MatrixXd>& s, const Tape::Values& g,
         std::vector<MatrixXd>& d) {
        const auto gm = g[0]->array();
        const auto gv = g[1]->array();
        d[0] = (gm * s[0].array() + gv * s[2].array()).matrix();
        d[1] = (gm * s[1].array() + gv * s[3].array()).matrix();
        if (rectifier_fault) {
          d[0] = -d[0];
          d[1] = -d[1];
        }
      });
  return {out[0], out[1]};
}

MomentVars apply_noise(Tape& tape, MomentVars x, const NoiseSpec<double>& noise) {
  auto out = tape.apply(
      "apply_noise", {x.mean, x.variance},
      [noise](const Tape::Values& in, std::vector<MatrixXd>& out, std::vector<MatrixXd>&) {
        const MomentBatch<double> r = fawn::apply_noise(MomentBatch<double>{*in[0], *in[1]}, noise);
        out.push_back(r.mean);
        out.push_back(r.variance);
      },
      [noise](const Tape::Values& in, const std::vector<MatrixXd>&, const Tape::Values& g,
              std::vector<MatrixXd>& d) {
        if (noise.kind == NoiseKind::additive) {
          d[0] = *g[0];
          d[1] = *g[1];
          return;
        }
        const Eigen::Index n = in[0]->cols();
        const Eigen::RowVectorXd em = detail::broadcast(noise.eps_mean, n, "eps_mean");
        const Eigen::RowVectorXd ev = detail::broadcast(noise.eps_variance, n, "eps_variance");
        d[0] = (g[0]->array().rowwise() * em.array() +
                2.0 * in[0]->array() * (g[1]->array().rowwise() * ev.array()))
                   .matrix();
        d[1] = (g[1]->array().rowwise() * (em.array().square() + ev.array())).matrix();
      });
  return {out[0], out[1]};
}

namespace {

void check_data_term(const Tape::Values& in, const MatrixXd& Z, const char* what) {
  detail::require_dims(in[0]->rows() == Z.rows() && in[0]->cols() == Z.cols() &&
                           in[1]->rows() == Z.rows() && in[1]->cols() == Z.cols() &&
                           in[2]->size() == Z.cols(),
                       std::string(what) + ": shape mismatch");
}

}  // namespace

Var vi_data_term(Tape& tape, MomentVars y, const MatrixXd& Z, Var hat_rho) {
  return tape.apply(
      "vi_data_term", {y.mean, y.variance, hat_rho},
      [Z](const Tape::Values& in, std::vector<MatrixXd>& out, std::vector<MatrixXd>&) {
        check_data_term(in, Z, "vi_data_term");
        const Eigen::RowVectorXd rho = in[2]->reshaped().transpose();
        const Eigen::RowVectorXd inv_s2 = (-2.0 * rho.array()).exp();
        const Eigen::ArrayXXd r2 = (Z - *in[0]).array().square();
        const Eigen::ArrayXXd terms =
            ((in[1]->array() + r2).rowwise() * (0.5 * inv_s2.array())).rowwise() +
            (rho.array() + half_log_2pi<double>);
        out.push_back(scalar_matrix(terms.sum()));
      },
      [Z](const Tape::Values& in, const std::vector<MatrixXd>&, const Tape::Values& g,
          std::vector<MatrixXd>& d) {
        const double g0 = (*g[0])(0, 0);
        const Eigen::RowVectorXd rho = in[2]->reshaped().transpose();
        const Eigen::RowVectorXd inv_s2 = (-2.0 * rho.array()).exp();
        const Eigen::ArrayXXd r = (Z - *in[0]).array();
        d[0] = (-g0 * (r.rowwise() * inv_s2.array())).matrix();
        d[1] = (0.5 * g0 * (Eigen::ArrayXXd::Ones(r.rows(), r.cols()).rowwise() * inv_s2.array()))
                   .matrix();
        const Eigen::ArrayXXd per = 1.0 - ((in[1]->array() + r.square()).rowwise() * inv_s2.array());
        d[2] = (g0 * per.colwise().sum()).matrix().transpose().reshaped(in[2]->rows(), in[2]->cols());
      })[0];
}

Var ropd_data_term(Tape& tape, MomentVars y, const MatrixXd& Z, Var hat_rho) {
  return tape.apply(
      "ropd_data_term", {y.mean, y.variance, hat_rho},
      [Z](const Tape::Values& in, std::vector<MatrixXd>& out, std::vector<MatrixXd>&) {
        check_data_term(in, Z, "ropd_data_term");
        const Eigen::RowVectorXd s2 = (2.0 * in[2]->reshaped().transpose().array()).exp();
        const Eigen::ArrayXXd T = in[1]->array().rowwise() + s2.array();
        const Eigen::ArrayXXd r2 = (Z - *in[0]).array().square();
        out.push_back(scalar_matrix((half_log_2pi<double> + 0.5 * T.log() + r2 / (2.0 * T)).sum()));
      },
      [Z](const Tape::Values& in, const std::vector<MatrixXd>&, const Tape::Values& g,
          std::vector<MatrixXd>& d) {
        const double g0 = (*g[0])(0, 0);
        const Eigen::RowVectorXd s2 = (2.0 * in[2]->reshaped().transpose().array()).exp();
        const Eigen::ArrayXXd T = in[1]->array().rowwise() + s2.array();
        const Eigen::ArrayXXd r = (Z - *in[0]).array();
        const Eigen::ArrayXXd dT = 0.5 / T - r.square() / (2.0 * T.square());
        d[0] = (-g0 * r / T).matrix();
        d[1] = (g0 * dT).matrix();
        const Eigen::RowVectorXd drho = 2.0 * g0 * (dT.colwise().sum() * s2.array()).matrix();
        d[2] = drho.transpose().reshaped(in[2]->rows(), in[2]->cols());
      })[0];
}

Var kl_term(Tape& tape, std::span<const std::pair<Var, Var>> mu_rho, Var prior_mu, Var prior_rho) {
  std::vector<Var> inputs;
  for (const auto& [mu, rho] : mu_rho) {
    inputs.push_back(mu);
    inputs.push_back(rho);
  }
  inputs.push_back(prior_mu);
  inputs.push_back(prior_rho);
  const std::size_t pairs = mu_rho.size();
  return tape.apply(
      "kl_term", std::move(inputs),
      [pairs](const Tape::Values& in, std::vector<MatrixXd>& out, std::vector<MatrixXd>&) {
        const double pm = (*in[2 * pairs])(0, 0);
        const double pr = (*in[2 * pairs + 1])(0, 0);
        const double inv_ps2 = std::exp(-2.0 * pr);
        double total = 0.0;
        for (std::size_t k = 0; k < pairs; ++k) {
          const auto mu = in[2 * k]->array();
          const auto rho = in[2 * k + 1]->array();
          detail::require_dims(in[2 * k]->rows() == in[2 * k + 1]->rows() &&
                                   in[2 * k]->cols() == in[2 * k + 1]->cols(),
                               "kl_term: mu/rho shape mismatch");
          total += (pr - rho + 0.5 * inv_ps2 * ((2.0 * rho).exp() + (mu - pm).square()) - 0.5).sum();
        }
        out.push_back(scalar_matrix(total));
      },
      [pairs](const Tape::Values& in, const std::vector<MatrixXd>&, const Tape::Values& g,
              std::vector<MatrixXd>& d) {
        const double g0 = (*g[0])(0, 0);
        const double pm = (*in[2 * pairs])(0, 0);
        const double pr = (*in[2 * pairs + 1])(0, 0);
        const double inv_ps2 = std::exp(-2.0 * pr);
        double d_pm = 0.0;
        double d_pr = 0.0;
        for (std::size_t k = 0; k < pairs; ++k) {
          const Eigen::ArrayXXd diff = in[2 * k]->array() - pm;
          const Eigen::ArrayXXd s2 = (2.0 * in[2 * k + 1]->array()).exp();
          d[2 * k] = (g0 * inv_ps2 * diff).matrix();
          d[2 * k + 1] = (g0 * (s2 * inv_ps2 - 1.0)).matrix();
          d_pm -= inv_ps2 * diff.sum();
          d_pr += (1.0 - inv_ps2 * (s2 + diff.square())).sum();
        }
        d[2 * pairs] = scalar_matrix(g0 * d_pm);
        d[2 * pairs + 1] = scalar_matrix(g0 * d_pr);
      })[0];
}

Var covariant_nll_term(Tape& tape, MomentVars hidden, Var w_mean, Var w_variance, Var b_mean,
                       Var b_variance, const MatrixXd& Z, Var hat_rho) {
  return tape.apply(
      "covariant_nll", {hidden.mean, hidden.variance, w_mean, w_variance, b_mean, b_variance, hat_rho},
      [Z](const Tape::Values& in, std::vector<MatrixXd>& out, std::vector<MatrixXd>& saved) {
        const MatrixXd& H = *in[0];
        const MatrixXd& Hv = *in[1];
        const MatrixXd& W = *in[2];
        const MatrixXd& Wv = *in[3];
        const Eigen::Index m = W.cols();
        detail::require_dims(H.cols() == W.rows() && Z.cols() == m && Z.rows() == H.rows() &&
                                 in[6]->size() == m,
                             "covariant_nll: shape mismatch");
        const Eigen::VectorXd obs = (2.0 * in[6]->reshaped().array()).exp();
        const Eigen::VectorXd b(*in[4]);
        const Eigen::VectorXd bv(*in[5]);
        // Per sample: precision (flattened) and alpha = P r.
        saved.assign(2, MatrixXd());
        saved[0].resize(H.rows(), m * m);
        saved[1].resize(H.rows(), m);
        double total = 0.0;
        for (Eigen::Index i = 0; i < H.rows(); ++i) {
          const MomentVector<double> x{H.row(i).transpose(), Hv.row(i).transpose()};
          CovariantOutput<double> c = output_covariance(x, W, Wv, b, bv);
          c.diag_v += obs;
          const auto pl = precision_logdet(c);
          const Eigen::VectorXd r = Z.row(i).transpose() - c.mean;
          const Eigen::VectorXd alpha = pl.precision * r;
          total += 0.5 * (pl.logdet + r.dot(alpha)) + static_cast<double>(m) * half_log_2pi<double>;
          saved[0].row(i) = pl.precision.reshaped().transpose();
          saved[1].row(i) = alpha.transpose();
        }
        out.push_back(scalar_matrix(total));
      },
      [](const Tape::Values& in, const std::vector<MatrixXd>& saved, const Tape::Values& g,
         std::vector<MatrixXd>& d) {
        const double g0 = (*g[0])(0, 0);
        const MatrixXd& H = *in[0];
        const MatrixXd& Hv = *in[1];
        const MatrixXd& W = *in[2];
        const MatrixXd& Wv = *in[3];
        const Eigen::Index n = W.rows();
        const Eigen::Index m = W.cols();
        const Eigen::VectorXd obs = (2.0 * in[6]->reshaped().array()).exp();
        MatrixXd dH = MatrixXd::Zero(H.rows(), n);
        MatrixXd dHv = MatrixXd::Zero(H.rows(), n);
        MatrixXd dW = MatrixXd::Zero(n, m);
        MatrixXd dWv = MatrixXd::Zero(n, m);
        Eigen::VectorXd db = Eigen::VectorXd::Zero(m);
        Eigen::VectorXd dbv = Eigen::VectorXd::Zero(m);
        for (Eigen::Index i = 0; i < H.rows(); ++i) {
          const Eigen::VectorXd h = H.row(i).transpose();
          const Eigen::VectorXd hv = Hv.row(i).transpose();
          const MatrixXd P = saved[0].row(i).reshaped(m, m);
          const Eigen::VectorXd alpha = saved[1].row(i).transpose();
          // dNLL/dC = (P - alpha alpha^T) / 2, dNLL/dmean = -alpha.
          const MatrixXd G = 0.5 * g0 * (P - alpha * alpha.transpose());
          const Eigen::VectorXd dmean = -g0 * alpha;
          const Eigen::VectorXd dd = G.diagonal();

          const MatrixXd WG = W * G;
          dH.row(i) += (W * dmean).transpose();
          dH.row(i) += (2.0 * h.array() * (Wv * dd).array()).matrix().transpose();
          dHv.row(i) += (Wv * dd).transpose();
          dHv.row(i) += WG.cwiseProduct(W).rowwise().sum().transpose();
          dW += h * dmean.transpose();
          dW += 2.0 * hv.asDiagonal() * WG;
          dWv += (h.array().square() + hv.array()).matrix() * dd.transpose();
          db += dmean;
          dbv += dd;
        }
        d[0] = std::move(dH);
        d[1] = std::move(dHv);
        d[2] = std::move(dW);
        d[3] = std::move(dWv);
        d[4] = db;
        d[5] = dbv;
        d[6] = (2.0 * dbv.array() * obs.array()).matrix().reshaped(in[6]->rows(), in[6]->cols());
      })[0];
}

}  // namespace fawn::ad

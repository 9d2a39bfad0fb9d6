#pragma once

// Gaussian process over constraint space conditioned jointly on zero-value
// observations and unit surface normals (derivative observations), ARD RBF
// kernel. Training minimizes -MLL plus a feasibility hinge on demonstrated
// states. Joint target layout: [values (N), gradients (N * n_c, point-major)].

#include "gpcl/dataset.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpcl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Hyperparams {
  double signal_var = 1.0;
  Vec lengthscales;         // n_c, positive
  double noise_val = 1e-4;  // value-observation variance
  double noise_grad = 1e-2; // gradient-observation variance
  double prior_mean = 0.0;

  int dim() const { return static_cast<int>(lengthscales.size()); }

  // log-parameter vector [log sv, log ls_1.., log nv, log ng]; the prior
  // mean stays linear and is appended by the trainer when it is trained.
  Vec log_params() const {
    Vec p(3 + dim());
    p(0) = std::log(signal_var);
    for (int d = 0; d < dim(); ++d) p(1 + d) = std::log(lengthscales(d));
    p(1 + dim()) = std::log(noise_val);
    p(2 + dim()) = std::log(noise_grad);
    return p;
  }

  static Hyperparams from_log_params(const Vec& p, double prior_mean) {
    Hyperparams h;
    const int n_c = static_cast<int>(p.size()) - 3;
    h.signal_var = std::exp(p(0));
    h.lengthscales = p.segment(1, n_c).array().exp();
    h.noise_val = std::exp(p(1 + n_c));
    h.noise_grad = std::exp(p(2 + n_c));
    h.prior_mean = prior_mean;
    return h;
  }
};

struct GramBlocks {
  Mat K;  // joint signal Gram, no noise
  // derivative of K w.r.t. each log-hyperparameter that shapes the kernel:
  // [log signal_var, log ls_1 .. log ls_nc]
  std::vector<Mat> dK;
};

namespace gpdetail {

struct KernelEval {
  double k = 0.0;  // covariance value
  // filled on demand by the callers below
};

}  // namespace gpdetail

/// Joint Gram matrix over inputs X (N x n_c): [K_ff, K_fg; K_gf, K_gg] with
/// closed-form RBF derivative cross-covariances. With want_derivs, also
/// returns dK/dtheta for theta = log signal_var and each log lengthscale.
inline GramBlocks joint_gram(const Hyperparams& hyper, const Mat& X,
                             bool with_gradients, bool want_derivs = false) {
  const int N = static_cast<int>(X.rows());
  const int n_c = static_cast<int>(X.cols());
  const int n = with_gradients ? N * (1 + n_c) : N;
  Vec a(n_c);
  for (int d = 0; d < n_c; ++d)
    a(d) = 1.0 / (hyper.lengthscales(d) * hyper.lengthscales(d));
  const double s = hyper.signal_var;

  GramBlocks out;
  out.K = Mat::Zero(n, n);
  if (want_derivs) out.dK.assign(1 + n_c, Mat::Zero(n, n));

  auto grad_row = [&](int i, int d) { return N + i * n_c + d; };

  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      const Vec r = (X.row(i) - X.row(j)).transpose();
      double q = 0.0;
      for (int d = 0; d < n_c; ++d) q += a(d) * r(d) * r(d);
      const double k = s * std::exp(-0.5 * q);

      out.K(i, j) = k;
      if (want_derivs) {
        out.dK[0](i, j) = k;  // every block scales with signal_var
        for (int c = 0; c < n_c; ++c)
          out.dK[1 + c](i, j) = k * a(c) * r(c) * r(c);
      }
      if (!with_gradients) continue;

      for (int e = 0; e < n_c; ++e) {
        const double kfg = k * a(e) * r(e);  // cov(f(x_i), df/de (x_j))
        out.K(i, grad_row(j, e)) = kfg;
        out.K(grad_row(j, e), i) = kfg;  // symmetric counterpart below fills (g,f)
      }
      for (int d = 0; d < n_c; ++d) {
        for (int e = 0; e < n_c; ++e) {
          const double kgg =
              k * (a(d) * (d == e ? 1.0 : 0.0) - a(d) * a(e) * r(d) * r(e));
          out.K(grad_row(i, d), grad_row(j, e)) = kgg;
        }
      }
      if (want_derivs) {
        for (int c = 0; c < n_c; ++c) {
          const double dk_c = k * a(c) * r(c) * r(c);
          for (int e = 0; e < n_c; ++e) {
            double dkfg = dk_c * a(e) * r(e);
            if (e == c) dkfg += k * (-2.0 * a(c)) * r(c);
            out.dK[1 + c](i, grad_row(j, e)) = dkfg;
            out.dK[1 + c](grad_row(j, e), i) = dkfg;
          }
          for (int d = 0; d < n_c; ++d) {
            for (int e = 0; e < n_c; ++e) {
              const double dde = d == e ? 1.0 : 0.0;
              double dkgg =
                  dk_c * (a(d) * dde - a(d) * a(e) * r(d) * r(e));
              // d a_d / d log ls_c = -2 a_d delta_cd
              dkgg += k * (-2.0 * a(c) * (c == d ? 1.0 : 0.0) * dde);
              double extra = 0.0;
              if (c == d) extra += -2.0 * a(d) * a(e);
              if (c == e) extra += -2.0 * a(d) * a(e);
              dkgg += k * (-(extra)*r(d) * r(e));
              out.dK[1 + c](grad_row(i, d), grad_row(j, e)) = dkgg;
            }
          }
        }
        // signal-var derivative of the derivative blocks equals the blocks
        for (int e = 0; e < n_c; ++e) {
          out.dK[0](i, grad_row(j, e)) = out.K(i, grad_row(j, e));
          out.dK[0](grad_row(j, e), i) = out.K(grad_row(j, e), i);
        }
        for (int d = 0; d < n_c; ++d)
          for (int e = 0; e < n_c; ++e)
            out.dK[0](grad_row(i, d), grad_row(j, e)) =
                out.K(grad_row(i, d), grad_row(j, e));
      }
    }
  }
  return out;
}

struct PosteriorQuery {
  Vec mean;
  Mat cov;
};

class DerivGPModel {
 public:
  /// Fits the joint GP: Cholesky of K + noise with jitter escalation
  /// (1e-8 -> 1e-4); throws if the Gram cannot be stabilized.
  DerivGPModel(Hyperparams hyper, ConstraintDataset dataset)
      : hyper_(std::move(hyper)), data_(std::move(dataset)) {
    if (data_.size() == 0)
      throw std::invalid_argument("DerivGPModel: empty dataset");
    with_gradients_ = data_.gradients.rows() > 0;
    refit();
  }

  const Hyperparams& hyper() const { return hyper_; }
  const ConstraintDataset& dataset() const { return data_; }
  double jitter_used() const { return jitter_; }
  int joint_dim() const { return n_; }

  /// Posterior mean and full covariance of the constraint value at Z.
  /// The covariance includes the value-observation noise, so far-field
  /// variance tends to signal_var + noise_val.
  PosteriorQuery posterior(const Mat& Z) const {
    const int m = static_cast<int>(Z.rows());
    const Mat Ks = cross_cov(Z);
    PosteriorQuery q;
    q.mean = Vec::Constant(m, hyper_.prior_mean) + Ks * alpha_;
    const Mat V = chol_.matrixL().solve(Ks.transpose());
    Mat Kzz(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        Kzz(i, j) = kernel(Z.row(i).transpose(), Z.row(j).transpose());
    q.cov = Kzz - V.transpose() * V;
    q.cov += hyper_.noise_val * Mat::Identity(m, m);
    q.cov = 0.5 * (q.cov + q.cov.transpose()).eval();
    return q;
  }

  /// Per-point posterior mean and variance (no cross terms).
  void marginals(const Mat& Z, Vec& mean, Vec& var) const {
    const int m = static_cast<int>(Z.rows());
    const Mat Ks = cross_cov(Z);
    mean = Vec::Constant(m, hyper_.prior_mean) + Ks * alpha_;
    const Mat V = chol_.matrixL().solve(Ks.transpose());
    var.resize(m);
    for (int i = 0; i < m; ++i)
      var(i) = hyper_.signal_var - V.col(i).squaredNorm() + hyper_.noise_val;
  }

  /// Log marginal likelihood of the joint targets.
  double mll() const {
    double logdet = 0.0;
    const auto& L = chol_.matrixLLT();
    for (int i = 0; i < n_; ++i) logdet += std::log(L(i, i));
    return -0.5 * y_.dot(alpha_) - logdet - 0.5 * n_ * std::log(2.0 * M_PI);
  }

  /// Analytic gradient of mll w.r.t. [log signal_var, log ls.., log
  /// noise_val, log noise_grad, prior_mean].
  Vec mll_grad() const {
    const int n_c = data_.input_dim();
    const auto blocks = joint_gram(hyper_, data_.kappa, with_gradients_, true);
    const Mat Kinv = chol_.solve(Mat::Identity(n_, n_));
    const Mat W = alpha_ * alpha_.transpose() - Kinv;

    Vec g(4 + n_c);
    for (int p = 0; p < 1 + n_c; ++p)
      g(p) = 0.5 * (W.array() * blocks.dK[p].array()).sum();
    // noise derivatives: diagonal blocks scaled by the noise itself
    double tr_val = 0.0, tr_grad = 0.0;
    const int N = data_.size();
    for (int i = 0; i < N; ++i) tr_val += W(i, i);
    for (int i = N; i < n_; ++i) tr_grad += W(i, i);
    g(1 + n_c) = 0.5 * tr_val * hyper_.noise_val;
    g(2 + n_c) = 0.5 * tr_grad * hyper_.noise_grad;
    // prior mean enters the value targets linearly
    g(3 + n_c) = alpha_.head(N).sum();
    return g;
  }

  double kernel(const Vec& x, const Vec& z) const {
    double q = 0.0;
    for (int d = 0; d < data_.input_dim(); ++d) {
      const double r = (x(d) - z(d)) / hyper_.lengthscales(d);
      q += r * r;
    }
    return hyper_.signal_var * std::exp(-0.5 * q);
  }

  /// Cross-covariance of f(Z) against the joint training targets
  /// [values, derivative observations].
  Mat cross_cov(const Mat& Z) const {
    const int m = static_cast<int>(Z.rows());
    const int N = data_.size();
    const int n_c = data_.input_dim();
    Mat Ks(m, n_);
    for (int i = 0; i < m; ++i) {
      const Vec z = Z.row(i).transpose();
      for (int j = 0; j < N; ++j) {
        const Vec xj = data_.kappa.row(j).transpose();
        const double k = kernel(z, xj);
        Ks(i, j) = k;
        if (!with_gradients_) continue;
        for (int e = 0; e < n_c; ++e) {
          const double le = hyper_.lengthscales(e);
          Ks(i, N + j * n_c + e) = k * (z(e) - xj(e)) / (le * le);
        }
      }
    }
    return Ks;
  }

 private:
  void refit() {
    const auto blocks = joint_gram(hyper_, data_.kappa, with_gradients_);
    n_ = static_cast<int>(blocks.K.rows());
    const int N = data_.size();
    Mat K = blocks.K;
    for (int i = 0; i < N; ++i) K(i, i) += hyper_.noise_val;
    for (int i = N; i < n_; ++i) K(i, i) += hyper_.noise_grad;

    y_.resize(n_);
    for (int i = 0; i < N; ++i) y_(i) = data_.values(i) - hyper_.prior_mean;
    if (with_gradients_) {
      const int n_c = data_.input_dim();
      for (int i = 0; i < N; ++i)
        for (int d = 0; d < n_c; ++d)
          y_(N + i * n_c + d) = data_.gradients(i, d);
    }

    jitter_ = 0.0;
    for (double j : {0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4}) {
      Mat Kj = K + j * Mat::Identity(n_, n_);
      chol_.compute(Kj);
      if (chol_.info() == Eigen::Success) {
        jitter_ = j;
        alpha_ = chol_.solve(y_);
        return;
      }
    }
    throw std::runtime_error(
        "DerivGPModel: Cholesky failed after jitter escalation to 1e-4");
  }

  Hyperparams hyper_;
  ConstraintDataset data_;
  bool with_gradients_ = true;
  int n_ = 0;
  Vec y_;
  Vec alpha_;
  Eigen::LLT<Mat> chol_;
  double jitter_ = 0.0;
};

/// (1/R) sum_n max(mu_n + rho sigma_n, 0) over the demonstrated states.
inline double feas_loss(const DerivGPModel& model, const Mat& feas_states,
                        double rho) {
  if (feas_states.rows() == 0) return 0.0;
  Vec mean, var;
  model.marginals(feas_states, mean, var);
  double loss = 0.0;
  for (int i = 0; i < mean.size(); ++i)
    loss += std::max(mean(i) + rho * std::sqrt(std::max(var(i), 0.0)), 0.0);
  return loss / static_cast<double>(mean.size());
}

inline bool classify_safe(const DerivGPModel& model, const Vec& kappa,
                          double tau) {
  Vec mean, var;
  model.marginals(kappa.transpose(), mean, var);
  return mean(0) + tau * std::sqrt(std::max(var(0), 0.0)) <= 0.0;
}

struct TrainOptions {
  int epochs = 500;
  double lr = 0.05;
  double rho = 2.0;           // hinge buffer in sigmas
  double fd_step = 1e-5;      // hinge-gradient finite differences
  bool train_prior_mean = false;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct TrainResult {
  Hyperparams hyper;
  std::vector<double> loss_trace;
};

/// Median pairwise distance of the inputs; the usual lengthscale heuristic.
inline double median_pairwise_distance(const Mat& X) {
  std::vector<double> d;
  for (int i = 0; i < X.rows(); ++i)
    for (int j = i + 1; j < X.rows(); ++j)
      d.push_back((X.row(i) - X.row(j)).norm());
  if (d.empty()) return 1.0;
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  return std::max(d[d.size() / 2], 1e-3);
}

inline Hyperparams default_hyperparams(const ConstraintDataset& data) {
  Hyperparams h;
  h.signal_var = 1.0;
  h.lengthscales = Vec::Constant(data.input_dim(),
                                 median_pairwise_distance(data.kappa));
  h.noise_val = 1e-4;
  h.noise_grad = 1e-2;
  h.prior_mean = 0.0;
  return h;
}

/// Adam on the log-hyperparameters of L = -mll + feas_loss. The mll part is
/// analytic; the hinge part uses central finite differences (few parameters,
/// so the extra refits are cheap). Deterministic.
inline TrainResult train(const ConstraintDataset& data,
                         const Hyperparams& init, const TrainOptions& opts) {
  TrainResult out;
  const int n_c = data.input_dim();
  const int n_kernel = 3 + n_c;  // log params
  const int n_params = n_kernel + (opts.train_prior_mean ? 1 : 0);

  Vec theta(n_params);
  theta.head(n_kernel) = init.log_params();
  if (opts.train_prior_mean) theta(n_kernel) = init.prior_mean;
  double prior_mean = init.prior_mean;

  auto unpack = [&](const Vec& th) {
    Hyperparams h = Hyperparams::from_log_params(
        th.head(n_kernel), opts.train_prior_mean ? th(n_kernel) : prior_mean);
    return h;
  };
  auto loss_at = [&](const Vec& th) {
    const DerivGPModel m(unpack(th), data);
    return -m.mll() + feas_loss(m, data.feas_states, opts.rho);
  };

  Vec m_adam = Vec::Zero(n_params);
  Vec v_adam = Vec::Zero(n_params);
  out.hyper = unpack(theta);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    const DerivGPModel model(unpack(theta), data);
    const double nll = -model.mll();
    const double hinge = feas_loss(model, data.feas_states, opts.rho);
    const double loss = nll + hinge;
    out.loss_trace.push_back(loss);
    if (!std::isfinite(loss))
      throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                               std::to_string(epoch) + " of " +
                               std::to_string(opts.epochs));

    const Vec mg = model.mll_grad();  // [kernel.., noise.., prior_mean]
    Vec grad(n_params);
    grad.head(n_kernel) = -mg.head(n_kernel);
    if (opts.train_prior_mean) grad(n_kernel) = -mg(n_kernel);
    // hinge gradient by central differences
    for (int p = 0; p < n_params; ++p) {
      Vec tp = theta, tm = theta;
      tp(p) += opts.fd_step;
      tm(p) -= opts.fd_step;
      const DerivGPModel mp(unpack(tp), data);
      const DerivGPModel mm(unpack(tm), data);
      const double fp = feas_loss(mp, data.feas_states, opts.rho);
      const double fm = feas_loss(mm, data.feas_states, opts.rho);
      grad(p) += (fp - fm) / (2.0 * opts.fd_step);
    }

    for (int p = 0; p < n_params; ++p) {
      m_adam(p) = opts.adam_beta1 * m_adam(p) + (1 - opts.adam_beta1) * grad(p);
      v_adam(p) =
          opts.adam_beta2 * v_adam(p) + (1 - opts.adam_beta2) * grad(p) * grad(p);
      const double mhat = m_adam(p) / (1 - std::pow(opts.adam_beta1, epoch + 1));
      const double vhat = v_adam(p) / (1 - std::pow(opts.adam_beta2, epoch + 1));
      theta(p) -= opts.lr * mhat / (std::sqrt(vhat) + opts.adam_eps);
    }
    // keep the kernel parameters in a numerically sane range
    for (int p = 0; p < n_kernel; ++p) theta(p) = std::clamp(theta(p), -12.0, 8.0);
  }
  out.hyper = unpack(theta);
  return out;
}

}  // namespace gpcl

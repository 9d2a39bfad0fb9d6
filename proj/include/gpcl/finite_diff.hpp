#pragma once

#include <Eigen/Dense>

#include <functional>

namespace gpcl::fd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline Vec gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                    double h = 1e-6) {
  Vec g(x.size());
  Vec xp = x;
  for (int i = 0; i < x.size(); ++i) {
    const double xi = x(i);
    xp(i) = xi + h;
    const double fp = f(xp);
    xp(i) = xi - h;
    const double fm = f(xp);
    xp(i) = xi;
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline Mat jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x,
                    double h = 1e-6) {
  const Vec f0 = f(x);
  Mat J(f0.size(), x.size());
  Vec xp = x;
  for (int i = 0; i < x.size(); ++i) {
    const double xi = x(i);
    xp(i) = xi + h;
    const Vec fp = f(xp);
    xp(i) = xi - h;
    const Vec fm = f(xp);
    xp(i) = xi;
    J.col(i) = (fp - fm) / (2.0 * h);
  }
  return J;
}

/// max_ij |a - b| / max(1, |a|, |b|)
inline double max_rel_error(const Mat& a, const Mat& b) {
  double worst = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) {
      const double scale =
          std::max({1.0, std::abs(a(i, j)), std::abs(b(i, j))});
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / scale);
    }
  return worst;
}

}  // namespace gpcl::fd

#pragma once

// Independent reference implementations used only by the tests. They favour
// the most literal formula over speed: explicit inverses, determinants and
// linear-space sums.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Mode {
  double fn_hz;
  double zeta;
  double residue;
};

// H = -w^2 sum A / (wn^2 - w^2 + 2 i zeta w wn), with the complex quotient
// expanded by hand.
inline std::vector<std::complex<double>> frf(const std::vector<Mode>& modes,
                                             const std::vector<double>& freq_hz) {
  std::vector<std::complex<double>> out;
  for (double f : freq_hz) {
    const double w = 2.0 * std::numbers::pi * f;
    double re = 0.0, im = 0.0;
    for (const auto& m : modes) {
      const double wn = 2.0 * std::numbers::pi * m.fn_hz;
      const double a = wn * wn - w * w;
      const double b = 2.0 * m.zeta * w * wn;
      const double d = a * a + b * b;
      re += m.residue * a / d;
      im += -m.residue * b / d;
    }
    out.emplace_back(-w * w * re, -w * w * im);
  }
  return out;
}

inline Matrix se_kernel(double sv, double l, const std::vector<double>& a, const std::vector<double>& b) {
  Matrix k(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double d = a[i] - b[j];
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = sv * std::exp(-d * d / (2.0 * l * l));
    }
  return k;
}

struct DenseGp {
  Vector mean;
  Matrix cov;
};

// Textbook conditioning with an explicit inverse of (K + diag(noise)).
inline DenseGp condition(const Vector& m_train, const Vector& m_test, const Matrix& kxx, const Matrix& ksx,
                         const Matrix& kss, const Vector& noise, const Vector& y) {
  Matrix a = kxx;
  a.diagonal() += noise;
  const Matrix inv = a.inverse();
  return {m_test + ksx * inv * (y - m_train), kss - ksx * inv * ksx.transpose()};
}

inline double log_gaussian(const Vector& y, const Vector& mean, const Matrix& cov) {
  const Vector r = y - mean;
  const double n = static_cast<double>(y.size());
  return -0.5 * (r.dot(cov.inverse() * r) + std::log(cov.determinant()) + n * std::log(2.0 * std::numbers::pi));
}

// log (1/K) sum_k exp(l_k), summed in linear space.
inline double naive_mixture(const std::vector<double>& log_densities) {
  double s = 0.0;
  for (double l : log_densities) s += std::exp(l);
  return std::log(s / static_cast<double>(log_densities.size()));
}

// Best value of f on a regular grid over [lo, hi]^2.
inline double grid_max_2d(const std::function<double(double, double)>& f, double lo0, double hi0, double lo1,
                          double hi1, int n) {
  double best = -INFINITY;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const double x = lo0 + (hi0 - lo0) * i / n;
      const double y = lo1 + (hi1 - lo1) * j / n;
      best = std::max(best, f(x, y));
    }
  return best;
}

// Central difference of f along coordinate i.
inline double fd_partial(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                         std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

// Two-sided Mann-Whitney U test, normal approximation with tie correction.
inline double mann_whitney_p(const std::vector<double>& a, const std::vector<double>& b) {
  struct Item {
    double v;
    int group;
  };
  std::vector<Item> all;
  for (double v : a) all.push_back({v, 0});
  for (double v : b) all.push_back({v, 1});
  std::sort(all.begin(), all.end(), [](const Item& p, const Item& q) { return p.v < q.v; });
  const double n = static_cast<double>(all.size());
  double rank_a = 0.0, tie_term = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].v == all[i].v) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    for (std::size_t k = i; k < j; ++k)
      if (all[k].group == 0) rank_a += avg;
    i = j;
  }
  const double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
  const double u = rank_a - n1 * (n1 + 1.0) / 2.0;
  const double mu = n1 * n2 / 2.0;
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  const double z = (u - mu) / std::sqrt(var);
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1e-300, std::max(std::abs(a), std::abs(b)));
}

inline double max_rel_err(const Matrix& a, const Matrix& b) {
  const double scale = std::max(1e-300, std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()));
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace oracle

#include "popform/gp_core.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>
#include <string>

#include "popform/errors.hpp"

namespace popform::gp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw InvalidInput(std::string(what) + ": non-finite input");
}

}  // namespace

void KernelParams::validate() const {
  if (!(std::isfinite(signal_variance) && signal_variance > 0.0))
    throw InvalidInput("kernel: signal variance must be positive and finite");
  if (!(std::isfinite(lengthscale) && lengthscale > 0.0))
    throw InvalidInput("kernel: lengthscale must be positive and finite");
}

const char* to_string(Part part) { return part == Part::Real ? "real" : "imag"; }

Part part_from_string(const std::string& s) {
  if (s == "real") return Part::Real;
  if (s == "imag" || s == "imaginary") return Part::Imaginary;
  throw InvalidInput("unknown FRF part '" + s + "'");
}

void MeanParams::validate() const {
  if (!(std::isfinite(natural_frequency_hz) && natural_frequency_hz > 0.0))
    throw InvalidInput("mean: natural frequency must be positive");
  if (!(damping_ratio > 0.0 && damping_ratio < 1.0))
    throw InvalidInput("mean: damping ratio must lie in (0, 1)");
  if (!(std::isfinite(residue) && residue > 0.0))
    throw InvalidInput("mean: residue magnitude must be positive");
  if (sign != 1 && sign != -1) throw InvalidInput("mean: sign must be +1 or -1");
}

Matrix kernel_matrix(const KernelParams& params, std::span<const double> a,
                     std::span<const double> b) {
  params.validate();
  require_finite(a, "kernel_matrix");
  require_finite(b, "kernel_matrix");
  const double inv_two_l2 = 1.0 / (2.0 * params.lengthscale * params.lengthscale);
  Matrix k(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (Eigen::Index j = 0; j < k.cols(); ++j)
    for (Eigen::Index i = 0; i < k.rows(); ++i) {
      const double d = a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(j)];
      k(i, j) = params.signal_variance * std::exp(-d * d * inv_two_l2);
    }
  return k;
}

Vector mean_vector(const MeanParams& params, std::span<const double> grid_hz) {
  params.validate();
  require_finite(grid_hz, "mean_vector");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double wn = two_pi * params.natural_frequency_hz;
  const double zeta = params.damping_ratio;
  Vector m(static_cast<Eigen::Index>(grid_hz.size()));
  for (std::size_t i = 0; i < grid_hz.size(); ++i) {
    const double w = two_pi * grid_hz[i];
    const std::complex<double> den{wn * wn - w * w, 2.0 * zeta * w * wn};
    const std::complex<double> h = -w * w * params.residue / den;
    const double v = params.part == Part::Real ? h.real() : h.imag();
    m[static_cast<Eigen::Index>(i)] = params.sign * v;
  }
  return m;
}

Matrix mean_jacobian(const MeanParams& params, std::span<const double> grid_hz) {
  params.validate();
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double wn = two_pi * params.natural_frequency_hz;
  const double zeta = params.damping_ratio;
  const double a = params.residue;
  Matrix jac(static_cast<Eigen::Index>(grid_hz.size()), 3);
  for (std::size_t i = 0; i < grid_hz.size(); ++i) {
    const double w = two_pi * grid_hz[i];
    const std::complex<double> den{wn * wn - w * w, 2.0 * zeta * w * wn};
    const std::complex<double> h = -w * w * a / den;
    // dH/dD = w^2 A / D^2
    const std::complex<double> dh_dden = w * w * a / (den * den);
    const std::complex<double> d_fn = dh_dden * std::complex<double>{2.0 * wn, 2.0 * zeta * w} * two_pi;
    const std::complex<double> d_logzeta = dh_dden * std::complex<double>{0.0, 2.0 * w * wn} * zeta;
    const std::complex<double> d_loga = h;
    const auto pick = [&](std::complex<double> z) {
      return params.sign * (params.part == Part::Real ? z.real() : z.imag());
    };
    const auto r = static_cast<Eigen::Index>(i);
    jac(r, 0) = pick(d_fn);
    jac(r, 1) = pick(d_logzeta);
    jac(r, 2) = pick(d_loga);
  }
  return jac;
}

double CholeskyFactor::log_det() const {
  const auto& l = llt_.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

CholeskyFactor chol_jitter(const Matrix& m) {
  if (m.rows() != m.cols()) throw InvalidInput("chol_jitter: matrix is not square");
  const Eigen::Index n = m.rows();
  if (n == 0) return CholeskyFactor(Eigen::LLT<Matrix>(Matrix(0, 0)), 0.0);
  if (!m.allFinite()) throw NumericalFailure("chol_jitter: matrix has non-finite entries");

  const auto try_factor = [&](double jitter, Eigen::LLT<Matrix>& out) {
    Matrix a = m;
    if (jitter > 0.0) a.diagonal().array() += jitter;
    out.compute(a);
    if (out.info() != Eigen::Success) return false;
    // LLT only reports failure on a non-positive pivot; also reject NaNs.
    return out.matrixLLT().diagonal().allFinite();
  };

  Eigen::LLT<Matrix> llt;
  if (try_factor(0.0, llt)) return CholeskyFactor(std::move(llt), 0.0);

  double scale = m.diagonal().mean();
  if (!(scale > 0.0)) scale = 1.0;
  double last = 0.0;
  for (double rel = 1e-10; rel <= 1e-4 * (1.0 + 1e-9); rel *= 10.0) {
    last = rel * scale;
    if (try_factor(last, llt)) return CholeskyFactor(std::move(llt), last);
  }

  std::ostringstream msg;
  msg.precision(6);
  msg << "chol_jitter: matrix not positive definite at maximum jitter " << last
      << " (n=" << n << ", diag min=" << m.diagonal().minCoeff()
      << ", diag max=" << m.diagonal().maxCoeff()
      << ", asymmetry=" << (m - m.transpose()).cwiseAbs().maxCoeff() << ")";
  throw NumericalFailure(msg.str());
}

GaussianPosterior condition(const Vector& prior_mean_train, const Vector& prior_mean_test,
                            const Matrix& k_xx, const Matrix& k_sx, const Matrix& k_ss,
                            const Vector& noise_diag_inv, const Vector& y) {
  const Eigen::Index n = y.size();
  const Eigen::Index m = prior_mean_test.size();
  if (prior_mean_train.size() != n || k_xx.rows() != n || k_xx.cols() != n ||
      noise_diag_inv.size() != n || k_sx.rows() != m || k_sx.cols() != n || k_ss.rows() != m ||
      k_ss.cols() != m)
    throw InvalidInput("condition: inconsistent dimensions");
  if ((noise_diag_inv.array() < 0.0).any())
    throw InvalidInput("condition: negative noise variance");

  GaussianPosterior post;
  if (m == 0) {
    post.mean = Vector(0);
    post.covariance = Matrix(0, 0);
    return post;
  }
  if (n == 0) {
    post.mean = prior_mean_test;
    post.covariance = k_ss;
    return post;
  }

  Matrix a = k_xx;
  a.diagonal() += noise_diag_inv;
  const CholeskyFactor chol = chol_jitter(a);
  const Vector alpha = chol.solve(Vector(y - prior_mean_train));
  post.mean = prior_mean_test + k_sx * alpha;
  const Matrix v = chol.solve_lower(Matrix(k_sx.transpose()));
  post.covariance = k_ss - v.transpose() * v;
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose()).eval();
  return post;
}

double log_gaussian(const Vector& y, const Vector& mean, const CholeskyFactor& cov_factor) {
  if (y.size() != mean.size() || y.size() != cov_factor.size())
    throw InvalidInput("log_gaussian: dimension mismatch");
  const Vector z = cov_factor.solve_lower(Vector(y - mean));
  return -0.5 * (z.squaredNorm() + cov_factor.log_det() + static_cast<double>(y.size()) * kLog2Pi);
}

double log_gaussian(const Vector& y, const GaussianPosterior& g) {
  if (y.size() != g.mean.size() || g.covariance.rows() != y.size() ||
      g.covariance.cols() != y.size())
    throw InvalidInput("log_gaussian: dimension mismatch");
  return log_gaussian(y, g.mean, chol_jitter(g.covariance));
}

}  // namespace popform::gp

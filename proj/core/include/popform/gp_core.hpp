#pragma once

// Dense Gaussian-process building blocks: squared-exponential kernel, the
// single-mode modal mean function, jittered Cholesky, Gaussian conditioning
// and log densities. No routine here forms an explicit matrix inverse.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <span>
#include <string>

namespace popform::gp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct KernelParams {
  double signal_variance = 1.0;
  double lengthscale = 1.0;  // Hz

  void validate() const;
};

enum class Part { Real, Imaginary };

const char* to_string(Part part);
Part part_from_string(const std::string& s);

// Single-mode accelerance projected onto one part, times a known sign.
struct MeanParams {
  double natural_frequency_hz = 50.0;
  double damping_ratio = 0.02;
  double residue = 1.0;  // magnitude; the sign lives in `sign`
  Part part = Part::Real;
  int sign = +1;

  void validate() const;
};

struct NoiseParam {
  double sigma = 1.0;
};

struct GaussianPosterior {
  Vector mean;
  Matrix covariance;

  Eigen::Index size() const { return mean.size(); }
};

// K[i,j] = s * exp(-(a_i - b_j)^2 / (2 l^2)).
Matrix kernel_matrix(const KernelParams& params, std::span<const double> a,
                     std::span<const double> b);

Vector mean_vector(const MeanParams& params, std::span<const double> grid_hz);

// Columns: d mean / d natural_frequency_hz, d mean / d log(damping_ratio),
// d mean / d log(residue).
Matrix mean_jacobian(const MeanParams& params, std::span<const double> grid_hz);

// Cholesky factor of m + jitter * I. The first attempt uses no jitter; after
// that jitter escalates by decades from 1e-10 to 1e-4 times mean(diag(m)).
class CholeskyFactor {
 public:
  CholeskyFactor() = default;
  CholeskyFactor(Eigen::LLT<Matrix> llt, double jitter) : llt_(std::move(llt)), jitter_(jitter) {}

  Matrix lower() const { return llt_.matrixL(); }
  double jitter() const { return jitter_; }
  Eigen::Index size() const { return llt_.rows(); }
  double log_det() const;

  Vector solve(const Vector& rhs) const { return llt_.solve(rhs); }
  Matrix solve(const Matrix& rhs) const { return llt_.solve(rhs); }
  // L^{-1} rhs
  Matrix solve_lower(const Matrix& rhs) const {
    return llt_.matrixL().solve(rhs);
  }
  Vector solve_lower(const Vector& rhs) const { return llt_.matrixL().solve(rhs); }

  const Eigen::LLT<Matrix>& llt() const { return llt_; }

 private:
  Eigen::LLT<Matrix> llt_;
  double jitter_ = 0.0;
};

CholeskyFactor chol_jitter(const Matrix& m);

// mu* = m* + K*x (Kxx + B^-1)^-1 (y - m)
// S*  = K** - K*x (Kxx + B^-1)^-1 Kx*
// `noise_diag_inv` is the diagonal of B^-1. Any R* noise term is left to the caller.
GaussianPosterior condition(const Vector& prior_mean_train, const Vector& prior_mean_test,
                            const Matrix& k_xx, const Matrix& k_sx, const Matrix& k_ss,
                            const Vector& noise_diag_inv, const Vector& y);

// log N(y | g.mean, g.covariance)
double log_gaussian(const Vector& y, const GaussianPosterior& g);

// Same density with a precomputed factor of the covariance.
double log_gaussian(const Vector& y, const Vector& mean, const CholeskyFactor& cov_factor);

}  // namespace popform::gp

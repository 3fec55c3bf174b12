#pragma once

#include <vector>

#include "popform/omgp.hpp"

namespace popform::omgp::detail {

// One component's view of the training data. Points sharing an input are
// merged into a single pseudo-observation carrying their summed
// responsibility and responsibility-weighted mean target; this leaves the
// collapsed bound unchanged up to the `spread` term and keeps the dense
// algebra at the number of distinct inputs.
struct ActiveSet {
  Vector x_unique;                  // distinct inputs, ascending
  std::vector<Eigen::Index> group;  // per point, index into x_unique
  std::vector<Eigen::Index> dropped;  // points with responsibility at the floor
  std::vector<Eigen::Index> active_groups;  // indices into x_unique
  Vector x_active;
  Vector y_active;   // weighted mean target per active group
  Vector pi_active;  // summed responsibility per active group
  double pi_total = 0.0;
  double spread = 0.0;  // sum_i pi_i (y_i - y_group)^2 over active points
  Matrix d2_active;  // |groups| x |groups|
  Matrix d2_unique;  // |x_unique| x |groups|
  std::size_t active_points = 0;
};

ActiveSet make_active_set(std::span<const double> x, std::span<const double> y,
                          const Vector& pi_column);

enum class EvalMode {
  Value,     // bound and dropped-point terms only
  Gradient,  // plus gradient
  Full,      // plus posterior marginals at every training input
};

struct ComponentEval {
  double bound = 0.0;         // collapsed bound from the active points
  double dropped_term = 0.0;  // sum over dropped points of pi * E[log lik]
  // d/d [log sv, log l, fn, log zeta, log A]
  double grad[5] = {0.0, 0.0, 0.0, 0.0, 0.0};
  double grad_log_sigma = 0.0;
  Vector mean_all;
  Vector var_all;
};

ComponentEval evaluate_component(std::span<const double> x, std::span<const double> y,
                                 const ComponentParams& params, double sigma,
                                 const Vector& pi_column, const ActiveSet& set, EvalMode mode);

// sum_ik pi log(pi / (1/K)), with 0 log 0 = 0
double assignment_kl(const Matrix& responsibilities);

double expected_log_lik(double y, double mean, double var, double sigma);

}  // namespace popform::omgp::detail

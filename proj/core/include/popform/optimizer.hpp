#pragma once

// Box-constrained maximization. Every evaluated point is projected onto the
// box; nothing outside it is ever passed to the objective.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace popform::opt {

struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t size() const { return lower.size(); }
  void validate() const;
  bool contains(std::span<const double> x) const;
};

struct OptResult {
  std::vector<double> argmax;
  double value = 0.0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
  std::vector<bool> boundary_active;
};

// value(x)
using ValueFn = std::function<double(std::span<const double>)>;
// value(x), writing d value / d x into `grad`
using ValueGradFn = std::function<double(std::span<const double>, std::span<double>)>;

struct Objective {
  ValueFn value;
  ValueGradFn value_and_gradient;  // optional; central differences otherwise
};

enum class Method {
  QuasiNewton,    // projected BFGS with backtracking
  PatternSearch,  // derivative-free projected coordinate search
};

struct Options {
  Method method = Method::QuasiNewton;
  double tol = 1e-8;
  std::size_t max_iter = 200;
  // Central-difference step as a fraction of each box width.
  double fd_step = 1e-5;
};

// Returns a point whose value is >= objective(start). Throws InvalidInput when
// start lies outside the box or the objective is non-finite there.
OptResult maximize(const Objective& objective, std::span<const double> start, const Box& box,
                   const Options& options = {});

}  // namespace popform::opt

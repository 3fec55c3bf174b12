#include "popform/optimizer.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "popform/errors.hpp"

namespace popform::opt {

void Box::validate() const {
  if (lower.size() != upper.size()) throw InvalidInput("box: bound lengths differ");
  for (std::size_t i = 0; i < lower.size(); ++i)
    if (!(std::isfinite(lower[i]) && std::isfinite(upper[i]) && lower[i] < upper[i]))
      throw InvalidInput("box: bounds must be finite with lower < upper (index " +
                         std::to_string(i) + ")");
}

bool Box::contains(std::span<const double> x) const {
  if (x.size() != lower.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!(x[i] >= lower[i] && x[i] <= upper[i])) return false;
  return true;
}

namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Works in the unit cube u = (x - lower) / width so steps and tolerances are
// comparable across parameters.
class Problem {
 public:
  Problem(const Objective& objective, const Box& box, double fd_step)
      : objective_(objective), box_(box), fd_step_(fd_step), n_(box.size()) {
    x_.resize(n_);
    g_.resize(n_);
  }

  std::size_t dim() const { return n_; }
  bool has_separate_value() const {
    return static_cast<bool>(objective_.value) && static_cast<bool>(objective_.value_and_gradient);
  }

  // The start point maps back to itself bit-for-bit.
  void anchor(const Vec& u, std::span<const double> x) {
    anchor_u_ = u;
    anchor_x_.assign(x.begin(), x.end());
  }
  std::size_t evaluations() const { return evaluations_; }

  Vec to_unit(std::span<const double> x) const {
    Vec u(static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < n_; ++i)
      u[idx(i)] = (x[i] - box_.lower[i]) / (box_.upper[i] - box_.lower[i]);
    return u;
  }

  // Maps back to the box; u in {0, 1} lands exactly on the bounds.
  std::vector<double> to_box(const Vec& u) const {
    if (anchor_u_.size() == u.size() && anchor_u_ == u) return anchor_x_;
    std::vector<double> x(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      const double ui = u[idx(i)];
      if (ui <= 0.0) x[i] = box_.lower[i];
      else if (ui >= 1.0) x[i] = box_.upper[i];
      else x[i] = std::clamp(box_.lower[i] + ui * (box_.upper[i] - box_.lower[i]), box_.lower[i],
                             box_.upper[i]);
    }
    return x;
  }

  double value(const Vec& u) {
    ++evaluations_;
    const auto x = to_box(u);
    const double v = objective_.value ? objective_.value(x) : value_via_gradient(x);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  }

  // Value and gradient with respect to u.
  double value_and_gradient(const Vec& u, Vec& grad) {
    grad.resize(static_cast<Eigen::Index>(n_));
    if (objective_.value_and_gradient) {
      ++evaluations_;
      const auto x = to_box(u);
      const double v = objective_.value_and_gradient(x, g_);
      for (std::size_t i = 0; i < n_; ++i)
        grad[idx(i)] = g_[i] * (box_.upper[i] - box_.lower[i]);
      if (!std::isfinite(v) || !grad.allFinite()) return -std::numeric_limits<double>::infinity();
      return v;
    }
    const double v = value(u);
    for (std::size_t i = 0; i < n_; ++i) {
      const auto k = idx(i);
      const double hi = std::min(1.0, u[k] + fd_step_);
      const double lo = std::max(0.0, u[k] - fd_step_);
      Vec up = u, dn = u;
      up[k] = hi;
      dn[k] = lo;
      const double fu = hi > u[k] ? value(up) : v;
      const double fd = lo < u[k] ? value(dn) : v;
      grad[k] = (hi > lo) ? (fu - fd) / (hi - lo) : 0.0;
      if (!std::isfinite(grad[k])) grad[k] = 0.0;
    }
    return v;
  }

 private:
  static Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

  double value_via_gradient(std::span<const double> x) {
    return objective_.value_and_gradient(x, g_);
  }

  const Objective& objective_;
  const Box& box_;
  double fd_step_;
  std::size_t n_;
  std::vector<double> x_;
  std::vector<double> g_;
  std::size_t evaluations_ = 0;
  Vec anchor_u_;
  std::vector<double> anchor_x_;
};

Vec project(Vec u) { return u.cwiseMax(0.0).cwiseMin(1.0); }

void fill_result(OptResult& res, const Problem& problem, const Box& box, const Vec& u, double f) {
  res.argmax = problem.to_box(u);
  res.value = f;
  res.evaluations = problem.evaluations();
  res.boundary_active.assign(box.size(), false);
  for (std::size_t i = 0; i < box.size(); ++i)
    res.boundary_active[i] = res.argmax[i] == box.lower[i] || res.argmax[i] == box.upper[i];
}

OptResult quasi_newton(Problem& problem, const Box& box, Vec u, const Options& opts) {
  const auto n = static_cast<Eigen::Index>(problem.dim());
  Vec g;
  double f = problem.value_and_gradient(u, g);
  if (!std::isfinite(f)) throw InvalidInput("maximize: objective is not finite at the start point");

  Mat h = Mat::Identity(n, n);
  bool fresh = true;
  OptResult res;
  std::size_t iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    // Variables pinned at a bound with the gradient pushing outward stay fixed.
    Eigen::Array<bool, Eigen::Dynamic, 1> free(n);
    for (Eigen::Index i = 0; i < n; ++i)
      free[i] = !((u[i] <= 0.0 && g[i] < 0.0) || (u[i] >= 1.0 && g[i] > 0.0));

    Vec gf = free.select(g, Vec::Zero(n));
    if (gf.lpNorm<Eigen::Infinity>() == 0.0) {
      res.converged = true;
      break;
    }
    Vec d = h * gf;
    d = free.select(d, Vec::Zero(n));
    if (!(gf.dot(d) > 0.0)) {
      h.setIdentity();
      fresh = true;
      d = gf;
    }
    if (fresh) {
      const double dmax = d.lpNorm<Eigen::Infinity>();
      if (dmax > 0.25) d *= 0.25 / dmax;
    }

    bool accepted = false;
    Vec u_new, g_new, s;
    double f_new = f;
    double t = 1.0;
    for (int ls = 0; ls < 40; ++ls) {
      u_new = project(u + t * d);
      s = u_new - u;
      if (s.lpNorm<Eigen::Infinity>() == 0.0) break;
      const double slope = g.dot(s);
      // Gains this small are below the resolution of f.
      if (slope < 1e-3 * opts.tol * (1.0 + std::abs(f))) break;
      if (problem.has_separate_value()) {
        f_new = problem.value(u_new);
        if (std::isfinite(f_new) && f_new >= f + 1e-4 * slope) {
          problem.value_and_gradient(u_new, g_new);
          accepted = g_new.allFinite();
          if (accepted) break;
        }
      } else {
        f_new = problem.value_and_gradient(u_new, g_new);
        if (std::isfinite(f_new) && f_new >= f + 1e-4 * slope) {
          accepted = true;
          break;
        }
      }
      // Maximizer of the quadratic through f, the slope and f_new.
      double ratio = 0.1;
      if (std::isfinite(f_new)) {
        const double curvature = f + slope - f_new;
        if (curvature > 0.0) ratio = std::clamp(0.5 * slope / curvature, 0.1, 0.5);
      }
      t *= ratio;
    }
    if (!accepted) {
      if (!fresh) {
        h.setIdentity();
        fresh = true;
        continue;
      }
      res.converged = true;
      break;
    }

    // BFGS on the minimization of -f.
    const Vec y = -(g_new - g);
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) h = Mat::Identity(n, n) * (sy / y.squaredNorm());
      const double rho = 1.0 / sy;
      const Mat i_n = Mat::Identity(n, n);
      h = (i_n - rho * s * y.transpose()) * h * (i_n - rho * y * s.transpose()) +
          rho * s * s.transpose();
      fresh = false;
    }

    const double df = f_new - f;
    u = u_new;
    f = f_new;
    g = g_new;
    if (s.lpNorm<Eigen::Infinity>() < opts.tol && std::abs(df) < opts.tol * (1.0 + std::abs(f))) {
      res.converged = true;
      ++iter;
      break;
    }
  }
  res.iterations = iter;
  fill_result(res, problem, box, u, f);
  return res;
}

OptResult pattern_search(Problem& problem, const Box& box, Vec u, const Options& opts) {
  const auto n = static_cast<Eigen::Index>(problem.dim());
  double f = problem.value(u);
  if (!std::isfinite(f)) throw InvalidInput("maximize: objective is not finite at the start point");

  Vec step = Vec::Constant(n, 0.25);
  OptResult res;
  std::size_t iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    const double f_start = f;
    double max_move = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      bool improved = false;
      for (double dir : {+1.0, -1.0}) {
        Vec trial = u;
        trial[i] = std::clamp(u[i] + dir * step[i], 0.0, 1.0);
        if (trial[i] == u[i]) continue;
        const double ft = problem.value(trial);
        if (ft > f) {
          max_move = std::max(max_move, std::abs(trial[i] - u[i]));
          u = trial;
          f = ft;
          improved = true;
          break;
        }
      }
      step[i] = improved ? std::min(0.5, 2.0 * step[i]) : 0.5 * step[i];
    }
    const bool small_steps = step.maxCoeff() < opts.tol;
    if (small_steps || (max_move > 0.0 && max_move < opts.tol &&
                        std::abs(f - f_start) < opts.tol * (1.0 + std::abs(f)))) {
      res.converged = true;
      ++iter;
      break;
    }
  }
  res.iterations = iter;
  fill_result(res, problem, box, u, f);
  return res;
}

}  // namespace

OptResult maximize(const Objective& objective, std::span<const double> start, const Box& box,
                   const Options& options) {
  box.validate();
  if (!objective.value && !objective.value_and_gradient)
    throw InvalidInput("maximize: objective has no callable");
  if (!box.contains(start)) throw InvalidInput("maximize: start point lies outside the box");
  if (box.size() == 0) {
    OptResult res;
    res.value = objective.value ? objective.value(start) : objective.value_and_gradient(start, {});
    if (!std::isfinite(res.value))
      throw InvalidInput("maximize: objective is not finite at the start point");
    res.converged = true;
    res.evaluations = 1;
    return res;
  }

  Problem problem(objective, box, options.fd_step);
  Vec u = problem.to_unit(start);
  problem.anchor(u, start);
  return options.method == Method::PatternSearch ? pattern_search(problem, box, u, options)
                                                 : quasi_newton(problem, box, u, options);
}

}  // namespace popform::opt

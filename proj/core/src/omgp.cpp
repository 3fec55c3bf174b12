#include "popform/omgp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "omgp_detail.hpp"
#include "popform/errors.hpp"

namespace popform::omgp {

namespace {

std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

void check_bounds(const Bounds& b, const char* name) {
  if (!(std::isfinite(b.lower) && std::isfinite(b.upper) && b.lower < b.upper))
    throw InvalidInput(std::string("hyperparameter box '") + name + "' must be finite with lower < upper");
}

}  // namespace

void HyperBoxes::validate() const {
  check_bounds(signal_variance, "signal_variance");
  check_bounds(lengthscale, "lengthscale");
  check_bounds(natural_frequency_hz, "natural_frequency_hz");
  check_bounds(damping_ratio, "damping_ratio");
  check_bounds(residue, "residue");
  check_bounds(sigma, "sigma");
  if (!(signal_variance.lower > 0 && lengthscale.lower > 0 && natural_frequency_hz.lower > 0 &&
        damping_ratio.lower > 0 && damping_ratio.upper < 1 && residue.lower > 0 && sigma.lower > 0))
    throw InvalidInput("hyperparameter boxes must be strictly positive (damping below 1)");
}

HyperBoxes HyperBoxes::from_data(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw InvalidInput("HyperBoxes::from_data: empty data");
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  double peak = 0.0, mean = 0.0;
  for (double v : y) {
    peak = std::max(peak, std::abs(v));
    mean += v;
  }
  mean /= static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= static_cast<double>(y.size());
  if (!(peak > 0.0) || !(var > 0.0)) throw InvalidInput("HyperBoxes::from_data: constant targets");
  const double span = std::max(*xmax - *xmin, 1e-6);

  HyperBoxes b;
  b.signal_variance = {1e-6 * var, 0.1 * var};
  b.lengthscale = {span / 32.0, 2.0 * span};
  b.natural_frequency_hz = {40.0, 60.0};
  b.damping_ratio = {1e-3, 0.2};
  b.residue = {1e-3 * peak, peak};
  b.sigma = {1e-3 * peak, 0.5 * peak};
  return b;
}

void FitConfig::validate() const {
  if (restarts < 1) throw InvalidInput("fit config: restarts must be at least 1");
  if (max_em_iters < 1) throw InvalidInput("fit config: max_em_iters must be at least 1");
  if (!(elbo_rel_tol > 0.0)) throw InvalidInput("fit config: elbo_rel_tol must be positive");
  if (e_step_inner < 1) throw InvalidInput("fit config: e_step_inner must be at least 1");
  if (sign != 1 && sign != -1) throw InvalidInput("fit config: sign must be +1 or -1");
  if (boxes) boxes->validate();
}

namespace detail {

double expected_log_lik(double y, double mean, double var, double sigma) {
  const double s2 = sigma * sigma;
  const double r = y - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * s2) - (r * r + var) / (2.0 * s2);
}

double assignment_kl(const Matrix& responsibilities) {
  const double log_k = std::log(static_cast<double>(responsibilities.cols()));
  double kl = 0.0;
  for (Eigen::Index j = 0; j < responsibilities.cols(); ++j)
    for (Eigen::Index i = 0; i < responsibilities.rows(); ++i) {
      const double p = responsibilities(i, j);
      if (p > 0.0) kl += p * (std::log(p) + log_k);
    }
  return kl;
}

ActiveSet make_active_set(std::span<const double> x, std::span<const double> y,
                          const Vector& pi_column) {
  ActiveSet set;
  const std::size_t n = x.size();
  std::vector<double> ux(x.begin(), x.end());
  std::sort(ux.begin(), ux.end());
  ux.erase(std::unique(ux.begin(), ux.end()), ux.end());
  set.x_unique = Eigen::Map<const Vector>(ux.data(), static_cast<Eigen::Index>(ux.size()));
  set.group.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    set.group[i] = std::lower_bound(ux.begin(), ux.end(), x[i]) - ux.begin();

  const auto u = static_cast<Eigen::Index>(ux.size());
  Vector pi_sum = Vector::Zero(u), py_sum = Vector::Zero(u);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = pi_column[static_cast<Eigen::Index>(i)];
    if (p > kResponsibilityFloor) {
      pi_sum[set.group[i]] += p;
      py_sum[set.group[i]] += p * y[i];
      set.pi_total += p;
      ++set.active_points;
    } else {
      set.dropped.push_back(static_cast<Eigen::Index>(i));
    }
  }
  for (Eigen::Index g = 0; g < u; ++g)
    if (pi_sum[g] > 0.0) set.active_groups.push_back(g);

  const auto m = static_cast<Eigen::Index>(set.active_groups.size());
  set.x_active.resize(m);
  set.y_active.resize(m);
  set.pi_active.resize(m);
  Vector y_group = Vector::Zero(u);
  for (Eigen::Index a = 0; a < m; ++a) {
    const auto g = set.active_groups[static_cast<std::size_t>(a)];
    set.x_active[a] = set.x_unique[g];
    set.pi_active[a] = pi_sum[g];
    set.y_active[a] = py_sum[g] / pi_sum[g];
    y_group[g] = set.y_active[a];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double p = pi_column[static_cast<Eigen::Index>(i)];
    if (p > kResponsibilityFloor) {
      const double d = y[i] - y_group[set.group[i]];
      set.spread += p * d * d;
    }
  }

  set.d2_active.resize(m, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < m; ++i) {
      const double d = set.x_active[i] - set.x_active[j];
      set.d2_active(i, j) = d * d;
    }
  set.d2_unique.resize(u, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < u; ++i) {
      const double d = set.x_unique[i] - set.x_active[j];
      set.d2_unique(i, j) = d * d;
    }
  return set;
}

ComponentEval evaluate_component(std::span<const double> x, std::span<const double> y,
                                 const ComponentParams& params, double sigma,
                                 const Vector& pi_column, const ActiveSet& set, EvalMode mode) {
  params.kernel.validate();
  params.mean.validate();
  ComponentEval out;
  const double s2 = sigma * sigma;
  const double log_2pi_s2 = std::log(2.0 * std::numbers::pi * s2);
  const double sv = params.kernel.signal_variance;
  const double ls = params.kernel.lengthscale;
  const double inv_2l2 = 1.0 / (2.0 * ls * ls);
  const auto m = static_cast<Eigen::Index>(set.active_groups.size());

  const Vector m_active = gp::mean_vector(params.mean, as_span(set.x_active));
  const Matrix k_aa = sv * (-inv_2l2 * set.d2_active.array()).exp().matrix();
  const Vector sb = (set.pi_active / s2).cwiseSqrt();

  Matrix c = (sb * sb.transpose()).cwiseProduct(k_aa);
  c.diagonal().array() += 1.0;
  const gp::CholeskyFactor chol = gp::chol_jitter(c);

  const Vector r = set.y_active - m_active;
  const Vector beta = m > 0 ? chol.solve(Vector(sb.cwiseProduct(r))) : Vector(0);
  const Vector alpha = sb.cwiseProduct(beta);
  out.bound = -0.5 * r.dot(alpha) - 0.5 * chol.log_det() - 0.5 * set.spread / s2 -
              0.5 * set.pi_total * log_2pi_s2;

  // Marginals of q(f) at every distinct input.
  Vector mu_u, var_u;
  const bool need_marginals = mode == EvalMode::Full || !set.dropped.empty();
  if (need_marginals) {
    const Vector m_unique = gp::mean_vector(params.mean, as_span(set.x_unique));
    if (m == 0) {
      mu_u = m_unique;
      var_u = Vector::Constant(m_unique.size(), sv);
    } else {
      const Matrix k_ua = sv * (-inv_2l2 * set.d2_unique.array()).exp().matrix();
      mu_u = m_unique + k_ua * alpha;
      const Matrix v = chol.solve_lower(Matrix((k_ua * sb.asDiagonal()).transpose()));
      var_u = (sv - v.colwise().squaredNorm().transpose().array()).max(0.0).matrix();
    }
  }
  if (mode == EvalMode::Full) {
    const auto n = static_cast<Eigen::Index>(x.size());
    out.mean_all.resize(n);
    out.var_all.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      out.mean_all[i] = mu_u[set.group[static_cast<std::size_t>(i)]];
      out.var_all[i] = var_u[set.group[static_cast<std::size_t>(i)]];
    }
  }

  for (const auto i : set.dropped) {
    const auto g = set.group[static_cast<std::size_t>(i)];
    out.dropped_term +=
        pi_column[i] * expected_log_lik(y[static_cast<std::size_t>(i)], mu_u[g], var_u[g], sigma);
  }

  if (mode == EvalMode::Gradient) {
    out.grad_log_sigma = set.spread / s2 - set.pi_total;
    if (m > 0) {
      const Matrix c_inv = chol.solve(Matrix(Matrix::Identity(m, m)));
      const Matrix w = (sb * sb.transpose()).cwiseProduct(c_inv);
      const Matrix dk_ls = k_aa.cwiseProduct(set.d2_active) / (ls * ls);
      out.grad[0] = 0.5 * alpha.dot(k_aa * alpha) - 0.5 * w.cwiseProduct(k_aa).sum();
      out.grad[1] = 0.5 * alpha.dot(dk_ls * alpha) - 0.5 * w.cwiseProduct(dk_ls).sum();
      const Matrix jac = gp::mean_jacobian(params.mean, as_span(set.x_active));
      const Vector g_mean = jac.transpose() * alpha;
      out.grad[2] = g_mean[0];
      out.grad[3] = g_mean[1];
      out.grad[4] = g_mean[2];
      out.grad_log_sigma += beta.squaredNorm() - c_inv.trace() + static_cast<double>(m);
    }
    for (const auto i : set.dropped) {
      const auto g = set.group[static_cast<std::size_t>(i)];
      const double rr = y[static_cast<std::size_t>(i)] - mu_u[g];
      out.grad_log_sigma += pi_column[i] * (-1.0 + (rr * rr + var_u[g]) / s2);
    }
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// OmgpModel

OmgpModel::OmgpModel(std::vector<double> x, std::vector<double> y, gp::Part part,
                     std::vector<ComponentParams> components, double sigma,
                     std::optional<Matrix> responsibilities)
    : x_(std::move(x)), y_(std::move(y)), part_(part), sigma_(sigma) {
  const auto k = components.size();
  if (k < 1) throw InvalidInput("OMGP: need at least one component");
  if (x_.size() != y_.size()) throw InvalidInput("OMGP: inputs and targets differ in length");
  if (x_.size() < k) throw InvalidInput("OMGP: need at least as many points as components");
  for (std::size_t i = 0; i < x_.size(); ++i)
    if (!std::isfinite(x_[i]) || !std::isfinite(y_[i]))
      throw InvalidInput("OMGP: non-finite training data");

  components_.resize(k);
  for (std::size_t j = 0; j < k; ++j) components_[j].params = components[j];
  const auto n = static_cast<Eigen::Index>(x_.size());
  if (responsibilities) {
    set_responsibilities(std::move(*responsibilities));
  } else {
    responsibilities_ = Matrix::Constant(n, static_cast<Eigen::Index>(k), 1.0 / static_cast<double>(k));
    refresh();
  }
}

std::vector<ComponentParams> OmgpModel::parameters() const {
  std::vector<ComponentParams> out;
  out.reserve(components_.size());
  for (const auto& c : components_) out.push_back(c.params);
  return out;
}

void OmgpModel::set_parameters(std::vector<ComponentParams> components, double sigma) {
  if (components.size() != components_.size())
    throw InvalidInput("OMGP: component count cannot change");
  for (std::size_t j = 0; j < components.size(); ++j) components_[j].params = components[j];
  sigma_ = sigma;
  refresh();
}

void OmgpModel::set_responsibilities(Matrix responsibilities) {
  if (responsibilities.rows() != static_cast<Eigen::Index>(n()) ||
      responsibilities.cols() != static_cast<Eigen::Index>(k()))
    throw InvalidInput("OMGP: responsibilities must be N x K");
  for (Eigen::Index i = 0; i < responsibilities.rows(); ++i) {
    if ((responsibilities.row(i).array() < 0.0).any() || !responsibilities.row(i).allFinite())
      throw InvalidInput("OMGP: responsibilities must be finite and non-negative");
    if (std::abs(responsibilities.row(i).sum() - 1.0) > 1e-9)
      throw InvalidInput("OMGP: responsibility rows must sum to 1");
  }
  responsibilities_ = std::move(responsibilities);
  refresh();
}

void OmgpModel::refresh() {
  if (!(std::isfinite(sigma_) && sigma_ > 0.0)) throw InvalidInput("OMGP: sigma must be positive");
  const auto n = static_cast<Eigen::Index>(x_.size());
  const auto k = static_cast<Eigen::Index>(components_.size());
  expected_log_lik_.resize(n, k);
  double total = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    auto& comp = components_[static_cast<std::size_t>(j)];
    const Vector pi = responsibilities_.col(j);
    const auto set = detail::make_active_set(x_, y_, pi);
    detail::ComponentEval ev;
    try {
      ev = detail::evaluate_component(x_, y_, comp.params, sigma_, pi, set, detail::EvalMode::Full);
    } catch (const NumericalFailure& e) {
      throw NumericalFailure("component " + std::to_string(j) + ": " + e.what());
    }
    comp.posterior_mean = std::move(ev.mean_all);
    comp.posterior_var = std::move(ev.var_all);
    comp.active_points = set.active_points;
    for (Eigen::Index i = 0; i < n; ++i)
      expected_log_lik_(i, j) = detail::expected_log_lik(y_[static_cast<std::size_t>(i)],
                                                         comp.posterior_mean[i],
                                                         comp.posterior_var[i], sigma_);
    total += ev.bound + ev.dropped_term;
  }
  elbo_ = total - detail::assignment_kl(responsibilities_);
}

// ---------------------------------------------------------------------------
// EM blocks

OmgpModel e_step(const OmgpModel& model, std::size_t inner) {
  if (inner < 1) throw InvalidInput("e_step: need at least one inner iteration");
  OmgpModel out = model;
  const auto k = static_cast<Eigen::Index>(model.k());
  const double log_prior = -std::log(static_cast<double>(k));
  for (std::size_t t = 0; t < inner; ++t) {
    const Matrix& ell = out.expected_log_lik();
    Matrix resp(ell.rows(), k);
    for (Eigen::Index i = 0; i < ell.rows(); ++i) {
      const double mx = ell.row(i).maxCoeff();
      double z = 0.0;
      for (Eigen::Index j = 0; j < k; ++j) {
        resp(i, j) = std::exp(log_prior + ell(i, j) - (log_prior + mx));
        z += resp(i, j);
      }
      resp.row(i) /= z;
    }
    out.set_responsibilities(std::move(resp));
  }
  out.append_trace(out.elbo());
  return out;
}

double elbo(const OmgpModel& model) { return model.elbo(); }

std::vector<std::size_t> map_train_labels(const OmgpModel& model) {
  const Matrix& r = model.responsibilities();
  std::vector<std::size_t> labels(static_cast<std::size_t>(r.rows()));
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < r.cols(); ++j)
      if (r(i, j) > r(i, best)) best = j;
    labels[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Prediction

std::vector<gp::GaussianPosterior> predict(const OmgpModel& model, std::span<const double> x_star) {
  for (double v : x_star)
    if (!std::isfinite(v)) throw InvalidInput("predict: non-finite test input");
  const double s2 = model.sigma() * model.sigma();
  const auto m = static_cast<Eigen::Index>(x_star.size());
  std::vector<gp::GaussianPosterior> out;
  out.reserve(model.k());
  const Vector y = Eigen::Map<const Vector>(model.y().data(), static_cast<Eigen::Index>(model.n()));
  for (std::size_t j = 0; j < model.k(); ++j) {
    if (m == 0) {
      out.push_back({Vector(0), Matrix(0, 0)});
      continue;
    }
    const auto& p = model.components()[j].params;
    const Vector pi = model.responsibilities().col(static_cast<Eigen::Index>(j));
    const Vector noise_inv = s2 / pi.array().max(kResponsibilityFloor);
    try {
      auto post = gp::condition(gp::mean_vector(p.mean, model.x()), gp::mean_vector(p.mean, x_star),
                                gp::kernel_matrix(p.kernel, model.x(), model.x()),
                                gp::kernel_matrix(p.kernel, x_star, model.x()),
                                gp::kernel_matrix(p.kernel, x_star, x_star), noise_inv, y);
      post.covariance.diagonal().array() += s2;
      out.push_back(std::move(post));
    } catch (const NumericalFailure& e) {
      throw NumericalFailure("component " + std::to_string(j) + ": " + e.what());
    }
  }
  return out;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : values) s += std::exp(v - mx);
  return mx + std::log(s);
}

double log_mixture(std::span<const double> log_densities, std::span<const double> log_weights) {
  if (log_densities.size() != log_weights.size())
    throw InvalidInput("log_mixture: weight and density counts differ");
  std::vector<double> terms(log_densities.size());
  for (std::size_t j = 0; j < terms.size(); ++j) terms[j] = log_densities[j] + log_weights[j];
  return log_sum_exp(terms);
}

EvidenceEvaluator::EvidenceEvaluator(const OmgpModel& model, std::span<const double> grid)
    : grid_(grid.begin(), grid.end()), posteriors_(predict(model, grid)) {
  factors_.reserve(posteriors_.size());
  for (const auto& p : posteriors_) factors_.push_back(gp::chol_jitter(p.covariance));
}

std::vector<double> EvidenceEvaluator::component_log_densities(std::span<const double> y) const {
  if (y.size() != grid_.size()) throw InvalidInput("evidence: record length differs from the grid");
  const Vector yv = Eigen::Map<const Vector>(y.data(), static_cast<Eigen::Index>(y.size()));
  std::vector<double> out(posteriors_.size());
  for (std::size_t j = 0; j < posteriors_.size(); ++j)
    out[j] = gp::log_gaussian(yv, posteriors_[j].mean, factors_[j]);
  return out;
}

double EvidenceEvaluator::log_evidence(std::span<const double> y) const {
  const auto dens = component_log_densities(y);
  const double log_w = -std::log(static_cast<double>(dens.size()));
  const std::vector<double> weights(dens.size(), log_w);
  const double ev = log_mixture(dens, weights);
  const double mx = *std::max_element(dens.begin(), dens.end());
  const double slack = 1e-9 * (1.0 + std::abs(mx));
  if (!(ev <= mx + slack && ev >= mx + log_w - slack))
    throw NumericalFailure("log evidence escaped the mixture bounds");
  return ev;
}

Classification EvidenceEvaluator::classify(std::span<const double> y) const {
  const auto dens = component_log_densities(y);
  const double log_w = -std::log(static_cast<double>(dens.size()));
  std::vector<double> joint(dens.size());
  for (std::size_t j = 0; j < dens.size(); ++j) joint[j] = dens[j] + log_w;
  const double z = log_sum_exp(joint);
  Classification c;
  c.log_posterior.resize(dens.size());
  for (std::size_t j = 0; j < dens.size(); ++j) {
    c.log_posterior[j] = joint[j] - z;
    if (c.log_posterior[j] > c.log_posterior[c.label]) c.label = j;
  }
  return c;
}

Classification classify_new(const OmgpModel& model, std::span<const double> x_star,
                            std::span<const double> y_star) {
  if (x_star.size() != y_star.size()) throw InvalidInput("classify_new: dimension mismatch");
  return EvidenceEvaluator(model, x_star).classify(y_star);
}

double log_evidence(const OmgpModel& model, std::span<const double> x_star,
                    std::span<const double> y_star) {
  if (x_star.size() != y_star.size()) throw InvalidInput("log_evidence: dimension mismatch");
  return EvidenceEvaluator(model, x_star).log_evidence(y_star);
}

}  // namespace popform::omgp

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <numbers>
#include <sstream>

#include "omgp_detail.hpp"
#include "popform/errors.hpp"
#include "popform/omgp.hpp"
#include "popform/random.hpp"

namespace popform::omgp {

namespace {

constexpr std::size_t kPerComponent = 5;
constexpr const char* kParamNames[kPerComponent] = {"signal_variance", "lengthscale",
                                                    "natural_frequency_hz", "damping_ratio",
                                                    "residue"};

// Which coordinates are stored as logs.
constexpr bool kLogCoord[kPerComponent] = {true, true, false, true, true};

const Bounds& bounds_for(const HyperBoxes& boxes, std::size_t slot) {
  switch (slot) {
    case 0: return boxes.signal_variance;
    case 1: return boxes.lengthscale;
    case 2: return boxes.natural_frequency_hz;
    case 3: return boxes.damping_ratio;
    default: return boxes.residue;
  }
}

double to_coord(double v, bool log_coord) { return log_coord ? std::log(v) : v; }
double from_coord(double c, bool log_coord) { return log_coord ? std::exp(c) : c; }

// Parameter vector layout: per component [log sv, log l, fn, log zeta, log A],
// then log sigma unless the noise is frozen.
class Packing {
 public:
  Packing(const HyperBoxes& boxes, std::size_t k, bool with_sigma)
      : boxes_(boxes), k_(k), with_sigma_(with_sigma) {
    for (std::size_t j = 0; j < k_; ++j)
      for (std::size_t s = 0; s < kPerComponent; ++s) {
        const auto& b = bounds_for(boxes_, s);
        box_.lower.push_back(to_coord(b.lower, kLogCoord[s]));
        box_.upper.push_back(to_coord(b.upper, kLogCoord[s]));
      }
    if (with_sigma_) {
      box_.lower.push_back(std::log(boxes_.sigma.lower));
      box_.upper.push_back(std::log(boxes_.sigma.upper));
    }
  }

  const opt::Box& box() const { return box_; }
  std::size_t size() const { return box_.size(); }

  std::vector<double> pack(const std::vector<ComponentParams>& params, double sigma) const {
    std::vector<double> v;
    v.reserve(size());
    for (const auto& p : params) {
      const double raw[kPerComponent] = {p.kernel.signal_variance, p.kernel.lengthscale,
                                         p.mean.natural_frequency_hz, p.mean.damping_ratio,
                                         p.mean.residue};
      for (std::size_t s = 0; s < kPerComponent; ++s) v.push_back(to_coord(raw[s], kLogCoord[s]));
    }
    if (with_sigma_) v.push_back(std::log(sigma));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::clamp(v[i], box_.lower[i], box_.upper[i]);
    return v;
  }

  // Coordinates sitting exactly on a bound map to the raw bound exactly.
  void unpack(std::span<const double> v, std::vector<ComponentParams>& params,
              double& sigma) const {
    for (std::size_t j = 0; j < k_; ++j) {
      double raw[kPerComponent];
      for (std::size_t s = 0; s < kPerComponent; ++s) {
        const std::size_t i = j * kPerComponent + s;
        const auto& b = bounds_for(boxes_, s);
        if (v[i] == box_.lower[i]) raw[s] = b.lower;
        else if (v[i] == box_.upper[i]) raw[s] = b.upper;
        else raw[s] = std::clamp(from_coord(v[i], kLogCoord[s]), b.lower, b.upper);
      }
      auto& p = params[j];
      p.kernel.signal_variance = raw[0];
      p.kernel.lengthscale = raw[1];
      p.mean.natural_frequency_hz = raw[2];
      p.mean.damping_ratio = raw[3];
      p.mean.residue = raw[4];
    }
    if (with_sigma_) {
      const std::size_t i = k_ * kPerComponent;
      if (v[i] == box_.lower[i]) sigma = boxes_.sigma.lower;
      else if (v[i] == box_.upper[i]) sigma = boxes_.sigma.upper;
      else sigma = std::clamp(std::exp(v[i]), boxes_.sigma.lower, boxes_.sigma.upper);
    }
  }

  std::string name(std::size_t i) const {
    if (i == k_ * kPerComponent) return "sigma";
    return "component " + std::to_string(i / kPerComponent) + " " +
           kParamNames[i % kPerComponent];
  }

 private:
  HyperBoxes boxes_;
  std::size_t k_;
  bool with_sigma_;
  opt::Box box_;
};

std::vector<ComponentParams> random_components(const HyperBoxes& boxes, std::size_t k,
                                               gp::Part part, int sign, Rng& rng) {
  std::vector<ComponentParams> out(k);
  for (auto& p : out) {
    double raw[kPerComponent];
    for (std::size_t s = 0; s < kPerComponent; ++s) {
      const auto& b = bounds_for(boxes, s);
      std::uniform_real_distribution<double> u(to_coord(b.lower, kLogCoord[s]),
                                               to_coord(b.upper, kLogCoord[s]));
      raw[s] = std::clamp(from_coord(u(rng), kLogCoord[s]), b.lower, b.upper);
    }
    p.kernel.signal_variance = raw[0];
    p.kernel.lengthscale = raw[1];
    p.mean.natural_frequency_hz = raw[2];
    p.mean.damping_ratio = raw[3];
    p.mean.residue = raw[4];
    p.mean.part = part;
    p.mean.sign = sign;
  }
  return out;
}

double random_sigma(const HyperBoxes& boxes, Rng& rng) {
  std::uniform_real_distribution<double> u(std::log(boxes.sigma.lower),
                                           std::log(boxes.sigma.upper));
  return std::clamp(std::exp(u(rng)), boxes.sigma.lower, boxes.sigma.upper);
}


struct Prefit {
  std::vector<gp::MeanParams> means;
  double sigma = 0.0;
  Matrix responsibilities;
  double log_lik = -std::numeric_limits<double>::infinity();
};

// Mixture of modal-mean regressions with independent Gaussian noise and
// equal weights: the mixture model with every GP residual switched off.
// Each draw runs EM to a local optimum; the best log-likelihood wins.
Prefit prefit_means(std::span<const double> x, std::span<const double> y, std::size_t k,
                    gp::Part part, int sign, const HyperBoxes& boxes, const FitConfig& config,
                    Rng& rng) {
  const std::size_t n = x.size();
  std::vector<double> ux(x.begin(), x.end());
  std::sort(ux.begin(), ux.end());
  ux.erase(std::unique(ux.begin(), ux.end()), ux.end());
  const std::size_t u = ux.size();
  std::vector<std::size_t> group(n);
  for (std::size_t i = 0; i < n; ++i)
    group[i] = static_cast<std::size_t>(std::lower_bound(ux.begin(), ux.end(), x[i]) - ux.begin());

  const double log_k = std::log(static_cast<double>(k));
  const opt::Box box{{boxes.natural_frequency_hz.lower, std::log(boxes.damping_ratio.lower),
                      std::log(boxes.residue.lower)},
                     {boxes.natural_frequency_hz.upper, std::log(boxes.damping_ratio.upper),
                      std::log(boxes.residue.upper)}};
  opt::Options options;
  options.max_iter = 20;
  options.tol = 1e-9;

  Prefit best;
  Matrix resp(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  std::vector<Vector> m(k);
  for (std::size_t draw = 0; draw < config.prefit_draws; ++draw) {
    std::vector<gp::MeanParams> means;
    for (const auto& c : random_components(boxes, k, part, sign, rng)) means.push_back(c.mean);
    double sigma = random_sigma(boxes, rng);

    double log_lik = -std::numeric_limits<double>::infinity();
    for (std::size_t it = 0;; ++it) {
      for (std::size_t j = 0; j < k; ++j) m[j] = gp::mean_vector(means[j], ux);
      const double s2 = sigma * sigma;
      const double c0 = -0.5 * std::log(2.0 * std::numbers::pi * s2);
      double ll = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) {
          const double r = y[i] - m[j][static_cast<Eigen::Index>(group[i])];
          resp(ii, static_cast<Eigen::Index>(j)) = c0 - r * r / (2.0 * s2);
          mx = std::max(mx, resp(ii, static_cast<Eigen::Index>(j)));
        }
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          auto& v = resp(ii, static_cast<Eigen::Index>(j));
          v = std::exp(v - mx);
          z += v;
        }
        resp.row(ii) /= z;
        ll += mx + std::log(z) - log_k;
      }
      const bool done = std::abs(ll - log_lik) <= 1e-9 * (1.0 + std::abs(ll));
      log_lik = ll;
      if (done || it >= config.prefit_iters) break;

      // Weighted least squares per component over the distinct inputs.
      double ss = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        Vector r_sum = Vector::Zero(static_cast<Eigen::Index>(u));
        Vector ry_sum = Vector::Zero(static_cast<Eigen::Index>(u));
        for (std::size_t i = 0; i < n; ++i) {
          const double r = resp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          r_sum[static_cast<Eigen::Index>(group[i])] += r;
          ry_sum[static_cast<Eigen::Index>(group[i])] += r * y[i];
        }
        gp::MeanParams trial = means[j];
        const auto set_trial = [&](std::span<const double> v) {
          trial.natural_frequency_hz = v[0];
          trial.damping_ratio = std::exp(v[1]);
          trial.residue = std::exp(v[2]);
        };
        opt::Objective obj;
        obj.value = [&](std::span<const double> v) {
          set_trial(v);
          const Vector mu = gp::mean_vector(trial, ux);
          return -(r_sum.array() * mu.array().square() - 2.0 * ry_sum.array() * mu.array()).sum();
        };
        obj.value_and_gradient = [&](std::span<const double> v, std::span<double> g) {
          set_trial(v);
          const Vector mu = gp::mean_vector(trial, ux);
          const Matrix jac = gp::mean_jacobian(trial, ux);
          const Vector w = 2.0 * (ry_sum.array() - r_sum.array() * mu.array()).matrix();
          const Vector grad = jac.transpose() * w;
          for (std::size_t q = 0; q < 3; ++q) g[q] = grad[static_cast<Eigen::Index>(q)];
          return -(r_sum.array() * mu.array().square() - 2.0 * ry_sum.array() * mu.array()).sum();
        };
        const std::vector<double> start = {
            std::clamp(means[j].natural_frequency_hz, box.lower[0], box.upper[0]),
            std::clamp(std::log(means[j].damping_ratio), box.lower[1], box.upper[1]),
            std::clamp(std::log(means[j].residue), box.lower[2], box.upper[2])};
        const auto res = opt::maximize(obj, start, box, options);
        set_trial(res.argmax);
        trial.damping_ratio = std::clamp(trial.damping_ratio, boxes.damping_ratio.lower,
                                         boxes.damping_ratio.upper);
        trial.residue = std::clamp(trial.residue, boxes.residue.lower, boxes.residue.upper);
        means[j] = trial;
        const Vector mu = gp::mean_vector(trial, ux);
        for (std::size_t i = 0; i < n; ++i) {
          const double r = y[i] - mu[static_cast<Eigen::Index>(group[i])];
          ss += resp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * r * r;
        }
      }
      sigma = std::clamp(std::sqrt(ss / static_cast<double>(n)), boxes.sigma.lower,
                         boxes.sigma.upper);
    }
    if (log_lik > best.log_lik) {
      best.means = means;
      best.sigma = sigma;
      best.responsibilities = resp;
      best.log_lik = log_lik;
    }
  }
  return best;
}
}  // namespace

OmgpModel m_step(const OmgpModel& model, const FitConfig& config) {
  const HyperBoxes boxes = config.boxes ? *config.boxes : model.boxes();
  boxes.validate();
  const std::size_t k = model.k();
  const Packing packing(boxes, k, !config.freeze_noise);

  std::vector<detail::ActiveSet> sets;
  std::vector<Vector> pis;
  sets.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    pis.push_back(model.responsibilities().col(static_cast<Eigen::Index>(j)));
    sets.push_back(detail::make_active_set(model.x(), model.y(), pis.back()));
  }

  const auto x = model.x();
  const auto y = model.y();
  std::vector<ComponentParams> params = model.parameters();
  double sigma = model.sigma();
  const double neg_inf = -std::numeric_limits<double>::infinity();

  const auto evaluate = [&](std::span<const double> v, std::span<double> grad) -> double {
    std::vector<ComponentParams> p = params;
    double s = sigma;
    packing.unpack(v, p, s);
    const bool want_grad = !grad.empty();
    double total = 0.0, g_sigma = 0.0;
    try {
      for (std::size_t j = 0; j < k; ++j) {
        const auto ev = detail::evaluate_component(
            x, y, p[j], s, pis[j], sets[j],
            want_grad ? detail::EvalMode::Gradient : detail::EvalMode::Value);
        total += ev.bound + ev.dropped_term;
        if (want_grad) {
          for (std::size_t q = 0; q < kPerComponent; ++q) grad[j * kPerComponent + q] = ev.grad[q];
          g_sigma += ev.grad_log_sigma;
        }
      }
    } catch (const NumericalFailure&) {
      return neg_inf;
    }
    if (want_grad && packing.size() > k * kPerComponent) grad[k * kPerComponent] = g_sigma;
    return total;
  };

  opt::Objective objective;
  objective.value = [&](std::span<const double> v) { return evaluate(v, {}); };
  objective.value_and_gradient = [&](std::span<const double> v, std::span<double> g) {
    return evaluate(v, g);
  };

  opt::Options options;
  options.method = config.method;
  options.max_iter = config.m_step_max_iter;
  options.tol = config.m_step_tol;
  if (config.method == opt::Method::PatternSearch) objective.value_and_gradient = nullptr;

  const std::vector<double> start = packing.pack(params, sigma);
  OmgpModel out = model;
  out.set_boxes(boxes);
  opt::OptResult res;
  try {
    res = opt::maximize(objective, start, packing.box(), options);
  } catch (const std::exception& e) {
    out.add_warning(std::string("m-step: optimizer failed: ") + e.what());
    return out;
  }

  std::vector<ComponentParams> new_params = params;
  double new_sigma = sigma;
  packing.unpack(res.argmax, new_params, new_sigma);
  OmgpModel candidate = model;
  try {
    candidate.set_parameters(new_params, new_sigma);
  } catch (const std::exception& e) {
    out.add_warning(std::string("m-step: rejected step: ") + e.what());
    return out;
  }
  if (!(candidate.elbo() >= model.elbo() - 1e-8)) {
    out.add_warning("m-step: optimizer returned a lower bound; kept entry parameters");
    return out;
  }
  std::vector<std::string> active;
  for (std::size_t i = 0; i < res.boundary_active.size(); ++i)
    if (res.boundary_active[i])
      active.push_back(packing.name(i) +
                       (res.argmax[i] == packing.box().lower[i] ? " at lower" : " at upper"));
  candidate.set_boxes(boxes);
  candidate.set_active_bounds(std::move(active));
  candidate.append_trace(candidate.elbo());
  return candidate;
}

FitReport fit_with_report(std::span<const double> x, std::span<const double> y, std::size_t k,
                          gp::Part part, const FitConfig& config,
                          const std::optional<HyperSeed>& init) {
  config.validate();
  if (k < 1) throw InvalidInput("fit: K must be at least 1");
  if (x.size() != y.size()) throw InvalidInput("fit: inputs and targets differ in length");
  if (x.size() < k) throw InvalidInput("fit: need at least K points");
  if (init && init->components.size() != k)
    throw InvalidInput("fit: initial hyperparameters have the wrong component count");
  if (config.freeze_noise && !init)
    throw InvalidInput("fit: freezing the noise needs initial hyperparameters");

  const HyperBoxes boxes = config.boxes ? *config.boxes : HyperBoxes::from_data(x, y);
  boxes.validate();
  FitConfig step_config = config;
  step_config.boxes = boxes;

  const std::vector<double> xv(x.begin(), x.end());
  const std::vector<double> yv(y.begin(), y.end());

  FitReport report;
  std::optional<OmgpModel> best;
  std::vector<std::string> failures;
  for (std::size_t r = 0; r < config.restarts; ++r) {
    RestartDiagnostic diag;
    diag.restart = r;
    Rng rng = make_rng(derive_seed(config.seed, r));
    std::vector<ComponentParams> params;
    double sigma = 0.0;
    std::optional<Matrix> start_resp;
    if (r == 0 && init) {
      params = init->components;
      for (auto& p : params) {
        p.mean.part = part;
        p.mean.sign = config.sign;
      }
      sigma = std::clamp(init->sigma, boxes.sigma.lower, boxes.sigma.upper);
      // Values already inside the boxes pass through untouched.
      for (auto& p : params) {
        p.kernel.signal_variance = std::clamp(p.kernel.signal_variance, boxes.signal_variance.lower,
                                              boxes.signal_variance.upper);
        p.kernel.lengthscale =
            std::clamp(p.kernel.lengthscale, boxes.lengthscale.lower, boxes.lengthscale.upper);
        p.mean.natural_frequency_hz =
            std::clamp(p.mean.natural_frequency_hz, boxes.natural_frequency_hz.lower,
                       boxes.natural_frequency_hz.upper);
        p.mean.damping_ratio = std::clamp(p.mean.damping_ratio, boxes.damping_ratio.lower,
                                          boxes.damping_ratio.upper);
        p.mean.residue = std::clamp(p.mean.residue, boxes.residue.lower, boxes.residue.upper);
      }
      if (init->responsibilities) start_resp = *init->responsibilities;
    } else {
      params = random_components(boxes, k, part, config.sign, rng);
      sigma = config.freeze_noise ? init->sigma : random_sigma(boxes, rng);
      if (config.prefit_draws > 0) {
        try {
          auto pre = prefit_means(x, y, k, part, config.sign, boxes, config, rng);
          for (std::size_t j = 0; j < k; ++j) params[j].mean = pre.means[j];
          if (!config.freeze_noise) sigma = pre.sigma;
          start_resp = std::move(pre.responsibilities);
        } catch (const std::exception& e) {
          diag.message = std::string("prefit skipped: ") + e.what();
        }
      }
    }

    try {
      OmgpModel model(xv, yv, part, params, sigma, start_resp);
      model.set_seed(config.seed);
      model.set_boxes(boxes);
      double previous = model.elbo();
      std::size_t it = 0;
      for (; it < config.max_em_iters; ++it) {
        model = e_step(model, config.e_step_inner);
        model = m_step(model, step_config);
        const double current = model.elbo();
        if (!std::isfinite(current)) throw NumericalFailure("bound became non-finite");
        const bool done =
            std::abs(current - previous) <= config.elbo_rel_tol * std::max(1.0, std::abs(previous));
        previous = current;
        if (done) {
          ++it;
          break;
        }
      }
      diag.ok = true;
      diag.final_elbo = model.elbo();
      diag.em_iterations = it;
      if (it == config.max_em_iters) diag.message = "reached the EM iteration cap";
      if (!best || model.elbo() > best->elbo()) {
        best = std::move(model);
        report.best_restart = r;
      }
    } catch (const std::exception& e) {
      diag.ok = false;
      diag.message = e.what();
      failures.push_back("restart " + std::to_string(r) + ": " + e.what());
    }
    report.restarts.push_back(diag);
  }
  if (!best) throw FitFailure("every restart of the mixture fit failed", failures);
  report.model = std::move(*best);
  return report;
}

double permutation_accuracy(std::span<const std::size_t> predicted,
                            std::span<const std::size_t> truth) {
  if (predicted.size() != truth.size()) throw InvalidInput("accuracy: label counts differ");
  if (predicted.empty()) throw InvalidInput("accuracy: no labels");
  const std::size_t classes =
      1 + std::max(*std::max_element(predicted.begin(), predicted.end()),
                   *std::max_element(truth.begin(), truth.end()));
  if (classes > 9) throw InvalidInput("accuracy: more than 9 classes");
  std::vector<std::size_t> counts(classes * classes, 0);
  for (std::size_t i = 0; i < predicted.size(); ++i) ++counts[predicted[i] * classes + truth[i]];
  std::vector<std::size_t> perm(classes);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t c = 0; c < classes; ++c) hits += counts[c * classes + perm[c]];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(predicted.size());
}

OmgpModel fit(std::span<const double> x, std::span<const double> y, std::size_t k, gp::Part part,
              const FitConfig& config, const std::optional<HyperSeed>& init) {
  return fit_with_report(x, y, k, part, config, init).model;
}

}  // namespace popform::omgp

#pragma once

// Overlapping mixture of Gaussian processes.
//
// K latent functions share the inputs; each observation belongs to exactly
// one of them. The assignment posterior is carried as an N x K matrix of
// responsibilities and q(f^(k)) is kept at its optimum for the current
// responsibilities, so the model state is (hyperparameters, responsibilities)
// and the cached per-component posteriors follow from it.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "popform/gp_core.hpp"
#include "popform/optimizer.hpp"

namespace popform::omgp {

using gp::Matrix;
using gp::Vector;

struct Bounds {
  double lower = 0.0;
  double upper = 1.0;
};

// Box constraints on the hyperparameters, shared by every component.
struct HyperBoxes {
  Bounds signal_variance{1e-6, 1.0};
  Bounds lengthscale{0.25, 16.0};
  Bounds natural_frequency_hz{40.0, 60.0};
  Bounds damping_ratio{1e-3, 0.2};
  Bounds residue{1e-3, 10.0};
  Bounds sigma{1e-3, 1.0};

  void validate() const;

  // Boxes scaled to the data: variance-like bounds follow the target
  // spread, lengthscale follows the input span.
  static HyperBoxes from_data(std::span<const double> x, std::span<const double> y);
};

struct ComponentParams {
  gp::KernelParams kernel;
  gp::MeanParams mean;
};

// Responsibilities below this are treated as zero when conditioning.
inline constexpr double kResponsibilityFloor = 1e-12;

struct FitConfig {
  std::size_t restarts = 10;
  std::size_t max_em_iters = 200;
  double elbo_rel_tol = 1e-6;
  std::size_t e_step_inner = 5;
  std::size_t m_step_max_iter = 200;
  double m_step_tol = 1e-7;
  opt::Method method = opt::Method::QuasiNewton;
  std::optional<HyperBoxes> boxes;  // HyperBoxes::from_data() when empty
  std::uint64_t seed = 0;
  bool freeze_noise = false;
  int sign = +1;
  // Random restarts first fit a mixture of modal means with independent
  // noise (no GP residual) from this many uniform draws and start EM from
  // the best one. Zero starts EM straight from a single uniform draw.
  std::size_t prefit_draws = 24;
  std::size_t prefit_iters = 60;

  void validate() const;
};

// Hyperparameters used to seed restart 1 of a fit.
struct HyperSeed {
  std::vector<ComponentParams> components;
  double sigma = 1.0;
  // Optional starting responsibilities (N x K); 1/K otherwise.
  std::optional<Matrix> responsibilities;
};

// Cached q(f^(k)) marginals at the training inputs.
struct ComponentState {
  ComponentParams params;
  Vector posterior_mean;
  Vector posterior_var;
  std::size_t active_points = 0;
};

class OmgpModel {
 public:
  OmgpModel() = default;

  // Responsibilities default to 1/K everywhere.
  OmgpModel(std::vector<double> x, std::vector<double> y, gp::Part part,
            std::vector<ComponentParams> components, double sigma,
            std::optional<Matrix> responsibilities = std::nullopt);

  std::size_t n() const { return x_.size(); }
  std::size_t k() const { return components_.size(); }
  std::span<const double> x() const { return x_; }
  std::span<const double> y() const { return y_; }
  gp::Part part() const { return part_; }
  double sigma() const { return sigma_; }
  const std::vector<ComponentState>& components() const { return components_; }
  std::vector<ComponentParams> parameters() const;
  const Matrix& responsibilities() const { return responsibilities_; }

  // Lower bound of the current state.
  double elbo() const { return elbo_; }
  // Expected log-likelihood of every point under every component (N x K).
  const Matrix& expected_log_lik() const { return expected_log_lik_; }

  const std::vector<double>& elbo_trace() const { return elbo_trace_; }
  std::uint64_t seed() const { return seed_; }
  const HyperBoxes& boxes() const { return boxes_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::vector<std::string>& active_bounds() const { return active_bounds_; }

  void set_parameters(std::vector<ComponentParams> components, double sigma);
  void set_responsibilities(Matrix responsibilities);
  void append_trace(double value) { elbo_trace_.push_back(value); }
  void set_trace(std::vector<double> trace) { elbo_trace_ = std::move(trace); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void set_boxes(const HyperBoxes& boxes) { boxes_ = boxes; }
  void add_warning(std::string w) { warnings_.push_back(std::move(w)); }
  void set_active_bounds(std::vector<std::string> b) { active_bounds_ = std::move(b); }

 private:
  void refresh();

  std::vector<double> x_;
  std::vector<double> y_;
  gp::Part part_ = gp::Part::Real;
  std::vector<ComponentState> components_;
  double sigma_ = 1.0;
  Matrix responsibilities_;
  Matrix expected_log_lik_;
  double elbo_ = 0.0;
  std::vector<double> elbo_trace_;
  std::uint64_t seed_ = 0;
  HyperBoxes boxes_;
  std::vector<std::string> warnings_;
  std::vector<std::string> active_bounds_;
};

// Alternates the responsibility update and the q(f) refresh `inner` times
// and appends the resulting bound to the trace.
OmgpModel e_step(const OmgpModel& model, std::size_t inner = 5);

double elbo(const OmgpModel& model);

// Maximizes the bound over every hyperparameter with responsibilities held
// fixed. Never returns a model with a lower bound than the entry model.
OmgpModel m_step(const OmgpModel& model, const FitConfig& config);

struct RestartDiagnostic {
  std::size_t restart = 0;
  bool ok = false;
  double final_elbo = 0.0;
  std::size_t em_iterations = 0;
  std::string message;
};

struct FitReport {
  OmgpModel model;
  std::size_t best_restart = 0;
  std::vector<RestartDiagnostic> restarts;
};

FitReport fit_with_report(std::span<const double> x, std::span<const double> y, std::size_t k,
                          gp::Part part, const FitConfig& config,
                          const std::optional<HyperSeed>& init = std::nullopt);

OmgpModel fit(std::span<const double> x, std::span<const double> y, std::size_t k, gp::Part part,
              const FitConfig& config, const std::optional<HyperSeed>& init = std::nullopt);

// argmax_k responsibilities per training point; ties go to the lowest index.
std::vector<std::size_t> map_train_labels(const OmgpModel& model);

// Fraction of points whose predicted label matches the truth under the best
// one-to-one relabelling of the predicted classes.
double permutation_accuracy(std::span<const std::size_t> predicted,
                            std::span<const std::size_t> truth);

// Per-component predictive distributions at x*, noise term sigma^2 I included.
std::vector<gp::GaussianPosterior> predict(const OmgpModel& model, std::span<const double> x_star);

struct Classification {
  std::size_t label = 0;
  std::vector<double> log_posterior;  // normalized, length K
};

Classification classify_new(const OmgpModel& model, std::span<const double> x_star,
                            std::span<const double> y_star);

// log sum_k (1/K) N(y* | mu*_k, S*_k)
double log_evidence(const OmgpModel& model, std::span<const double> x_star,
                    std::span<const double> y_star);

// log sum_k exp(log_weights[k] + log_densities[k]), evaluated stably.
double log_mixture(std::span<const double> log_densities, std::span<const double> log_weights);

double log_sum_exp(std::span<const double> values);

// Predictive distributions and their factors cached for repeated scoring of
// records that share one input grid.
class EvidenceEvaluator {
 public:
  EvidenceEvaluator(const OmgpModel& model, std::span<const double> grid);

  std::size_t k() const { return posteriors_.size(); }
  std::span<const double> grid() const { return grid_; }
  const std::vector<gp::GaussianPosterior>& posteriors() const { return posteriors_; }

  std::vector<double> component_log_densities(std::span<const double> y) const;
  double log_evidence(std::span<const double> y) const;
  Classification classify(std::span<const double> y) const;

 private:
  std::vector<double> grid_;
  std::vector<gp::GaussianPosterior> posteriors_;
  std::vector<gp::CholeskyFactor> factors_;
};

}  // namespace popform::omgp

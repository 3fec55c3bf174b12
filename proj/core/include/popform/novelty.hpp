#pragma once

// Damage detection on top of a fitted real/imaginary form: the novelty index
// is the negative log evidence of a whole record summed over both parts.

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "popform/frf_model.hpp"
#include "popform/omgp.hpp"

namespace popform::novelty {

struct FormPair {
  omgp::OmgpModel real_model;
  omgp::OmgpModel imag_model;
  frf::FrequencyBand band;

  std::size_t k() const { return real_model.k(); }
  void validate() const;
};

struct NoveltyReport {
  double index = 0.0;
  double real_index = 0.0;
  double imag_index = 0.0;
  double threshold = std::numeric_limits<double>::infinity();
  bool outlying = false;
  // Class posterior of the record under the real-part form.
  std::vector<double> per_component_log_posterior;
};

// Scores records on one fixed grid with the predictive factors computed once.
class FormScorer {
 public:
  FormScorer(const FormPair& form, std::span<const double> grid);

  std::span<const double> grid() const { return real_.grid(); }
  double real_index(std::span<const double> real_part) const;
  double imag_index(std::span<const double> imag_part) const;
  double index(const frf::FrfRecord& record) const;
  NoveltyReport report(const frf::FrfRecord& record, double threshold) const;

  // Per-frequency negative log of the marginal mixture density, both parts
  // summed. For plotting only; it carries no verdict.
  std::vector<double> pointwise_trace(const frf::FrfRecord& record) const;

  const omgp::EvidenceEvaluator& real_evaluator() const { return real_; }
  const omgp::EvidenceEvaluator& imag_evaluator() const { return imag_; }

 private:
  void check_grid(const frf::FrfRecord& record) const;

  omgp::EvidenceEvaluator real_;
  omgp::EvidenceEvaluator imag_;
};

NoveltyReport novelty_index(const FormPair& form, const frf::FrfRecord& record,
                            double threshold = std::numeric_limits<double>::infinity());

// Two-sided normal quantile for `confidence`, rounded to two decimals
// (0.99 -> 2.58).
double threshold_multiplier(double confidence);

struct Threshold {
  double value = 0.0;
  double mean = 0.0;
  double std_dev = 0.0;
  double multiplier = 0.0;
  double confidence = 0.0;
  std::size_t trials = 0;
  std::size_t samples_per_trial = 0;
  std::vector<double> indices;  // every collected index, trial-major
};

// mean + multiplier * std over the pooled indices.
Threshold threshold_from_indices(std::span<const double> indices, double confidence);

// Monte-Carlo threshold: each trial draws `n_samples` records from the
// normal-condition pool, re-injects noise and scores them; indices from all
// trials are pooled.
Threshold mc_threshold(const FormPair& form, const frf::FrfDataset& pool, std::size_t n_samples,
                       std::size_t trials, double confidence, std::uint64_t seed,
                       double fraction = 0.05);

struct Summary {
  double mean = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
  double outlier_rate = 0.0;  // fraction strictly above the threshold
};

Summary summarize(std::span<const double> indices, double threshold);

// Linear-interpolation sample quantile of unsorted data.
double quantile(std::vector<double> values, double q);

struct SweepResult {
  std::string member;
  double shift = 0.0;  // fractional, -0.035 is a 3.5% drop
  std::vector<double> indices;
  Summary summary;
};

// One result per (member, shift), member-major.
std::vector<SweepResult> damage_sweep(const FormPair& form, std::span<const frf::BladeSpec> specs,
                                      std::span<const double> shifts, std::size_t copies,
                                      double fraction, std::uint64_t seed,
                                      std::span<const double> grid,
                                      double threshold = std::numeric_limits<double>::infinity());

// {0, -0.005, ..., -0.035}
std::vector<double> default_sweep();

struct MagnitudeBand {
  std::size_t component = 0;
  std::vector<double> mean;
  std::vector<double> lower;  // 2.5% quantile
  std::vector<double> upper;  // 97.5% quantile
};

// Samples each component's real and imaginary predictive distributions
// independently and summarizes the magnitude per grid point.
std::vector<MagnitudeBand> magnitude_band(const FormPair& form, std::span<const double> grid,
                                          std::size_t n_samples, std::uint64_t seed);

}  // namespace popform::novelty

#include "popform/novelty.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "popform/errors.hpp"
#include "popform/random.hpp"

namespace popform::novelty {

using gp::Matrix;
using gp::Vector;

void FormPair::validate() const {
  band.validate();
  if (real_model.k() == 0 || real_model.k() != imag_model.k())
    throw InvalidInput("form: real and imaginary models must share K");
  for (const auto* m : {&real_model, &imag_model})
    for (double f : m->x())
      if (!band.contains(f)) throw InvalidInput("form: training inputs lie outside the form band");
}

FormScorer::FormScorer(const FormPair& form, std::span<const double> grid)
    : real_(form.real_model, grid), imag_(form.imag_model, grid) {
  for (double f : grid)
    if (!form.band.contains(f))
      throw InvalidInput("novelty: record frequency " + std::to_string(f) +
                         " Hz lies outside the form band");
}

void FormScorer::check_grid(const frf::FrfRecord& record) const {
  record.validate();
  const auto g = grid();
  if (!std::equal(g.begin(), g.end(), record.frequency_hz.begin(), record.frequency_hz.end()))
    throw InvalidInput("novelty: record grid differs from the scorer grid");
}

double FormScorer::real_index(std::span<const double> real_part) const {
  return -real_.log_evidence(real_part);
}

double FormScorer::imag_index(std::span<const double> imag_part) const {
  return -imag_.log_evidence(imag_part);
}

double FormScorer::index(const frf::FrfRecord& record) const {
  check_grid(record);
  return real_index(record.real_part) + imag_index(record.imag_part);
}

NoveltyReport FormScorer::report(const frf::FrfRecord& record, double threshold) const {
  check_grid(record);
  NoveltyReport r;
  r.real_index = real_index(record.real_part);
  r.imag_index = imag_index(record.imag_part);
  r.index = r.real_index + r.imag_index;
  r.threshold = threshold;
  r.outlying = r.index > threshold;
  r.per_component_log_posterior = real_.classify(record.real_part).log_posterior;
  return r;
}

std::vector<double> FormScorer::pointwise_trace(const frf::FrfRecord& record) const {
  check_grid(record);
  const std::size_t n = record.size();
  std::vector<double> out(n, 0.0);
  for (const auto* ev : {&real_, &imag_}) {
    const auto& values = ev == &real_ ? record.real_part : record.imag_part;
    const std::size_t k = ev->k();
    const std::vector<double> log_w(k, -std::log(static_cast<double>(k)));
    std::vector<double> dens(k);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const auto& post = ev->posteriors()[j];
        const auto ii = static_cast<Eigen::Index>(i);
        const double var = post.covariance(ii, ii);
        const double r = values[i] - post.mean[ii];
        dens[j] = -0.5 * (std::log(2.0 * std::numbers::pi * var) + r * r / var);
      }
      out[i] -= omgp::log_mixture(dens, log_w);
    }
  }
  return out;
}

NoveltyReport novelty_index(const FormPair& form, const frf::FrfRecord& record, double threshold) {
  record.validate();
  return FormScorer(form, record.frequency_hz).report(record, threshold);
}

double threshold_multiplier(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0))
    throw InvalidInput("confidence must lie strictly between 0 and 1");
  const boost::math::normal_distribution<double> normal;
  const double z = boost::math::quantile(normal, 0.5 * (1.0 + confidence));
  return std::round(z * 100.0) / 100.0;
}

Threshold threshold_from_indices(std::span<const double> indices, double confidence) {
  if (indices.empty()) throw InvalidInput("threshold: no indices");
  Threshold t;
  t.confidence = confidence;
  t.multiplier = threshold_multiplier(confidence);
  t.indices.assign(indices.begin(), indices.end());
  for (double v : indices)
    if (!std::isfinite(v)) throw NumericalFailure("threshold: non-finite novelty index");
  const auto n = static_cast<double>(indices.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < indices.size(); ++i)
    mean += (indices[i] - mean) / static_cast<double>(i + 1);
  double ss = 0.0;
  for (double v : indices) ss += (v - mean) * (v - mean);
  t.mean = mean;
  t.std_dev = indices.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  t.value = t.mean + t.multiplier * t.std_dev;
  t.trials = 1;
  t.samples_per_trial = indices.size();
  return t;
}

Threshold mc_threshold(const FormPair& form, const frf::FrfDataset& pool, std::size_t n_samples,
                       std::size_t trials, double confidence, std::uint64_t seed,
                       double fraction) {
  if (pool.records.empty()) throw InvalidInput("threshold: empty normal-condition pool");
  if (n_samples < 1 || trials < 1) throw InvalidInput("threshold: need samples and trials");
  threshold_multiplier(confidence);
  pool.validate();

  // One scorer per distinct grid in the pool.
  std::map<std::vector<double>, FormScorer> scorers;
  for (const auto& rec : pool.records)
    if (!scorers.count(rec.frequency_hz)) scorers.emplace(rec.frequency_hz, FormScorer(form, rec.frequency_hz));

  std::vector<double> indices;
  indices.reserve(n_samples * trials);
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = make_rng(derive_seed(seed, t));
    std::uniform_int_distribution<std::size_t> pick(0, pool.records.size() - 1);
    for (std::size_t s = 0; s < n_samples; ++s) {
      const auto& clean = pool.records[pick(rng)];
      const auto noisy = frf::inject_noise(clean, fraction, 1, rng());
      indices.push_back(scorers.at(clean.frequency_hz).index(noisy.records.front()));
    }
  }
  Threshold th = threshold_from_indices(indices, confidence);
  if (!(th.std_dev > 0.0)) throw InvalidInput("threshold: degenerate pool, indices have no spread");
  th.trials = trials;
  th.samples_per_trial = n_samples;
  return th;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidInput("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidInput("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0 || values[lo] == values[hi]) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

Summary summarize(std::span<const double> indices, double threshold) {
  if (indices.empty()) throw InvalidInput("summary of an empty sample");
  Summary s;
  std::size_t above = 0;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    s.mean += (indices[i] - s.mean) / static_cast<double>(i + 1);
    if (indices[i] > threshold) ++above;
  }
  const std::vector<double> v(indices.begin(), indices.end());
  s.q05 = quantile(v, 0.05);
  s.q50 = quantile(v, 0.50);
  s.q95 = quantile(v, 0.95);
  s.outlier_rate = static_cast<double>(above) / static_cast<double>(indices.size());
  return s;
}

std::vector<double> default_sweep() {
  std::vector<double> out;
  for (int i = 0; i <= 7; ++i) out.push_back(-0.005 * i);
  return out;
}

std::vector<SweepResult> damage_sweep(const FormPair& form, std::span<const frf::BladeSpec> specs,
                                      std::span<const double> shifts, std::size_t copies,
                                      double fraction, std::uint64_t seed,
                                      std::span<const double> grid, double threshold) {
  if (specs.empty()) throw InvalidInput("sweep: no blade specs");
  if (shifts.empty()) throw InvalidInput("sweep: empty shift grid");
  if (copies < 1) throw InvalidInput("sweep: copies must be at least 1");
  for (double s : shifts)
    if (!(s >= -0.5 && s <= 0.0)) throw InvalidInput("sweep: shifts must lie in [-0.5, 0]");
  const FormScorer scorer(form, grid);

  std::vector<SweepResult> out;
  out.reserve(specs.size() * shifts.size());
  for (std::size_t m = 0; m < specs.size(); ++m) {
    specs[m].validate();
    const std::uint64_t member_seed = derive_seed(seed, m);
    for (std::size_t j = 0; j < shifts.size(); ++j) {
      const auto shifted = frf::apply_frequency_shift(specs[m], shifts[j]);
      const auto clean = frf::make_record(grid, frf::accelerance_frf(shifted.modes, grid), specs[m].id);
      const auto noisy = frf::inject_noise(clean, fraction, copies, derive_seed(member_seed, j));
      SweepResult r;
      r.member = specs[m].id;
      r.shift = shifts[j];
      r.indices.reserve(copies);
      for (const auto& rec : noisy.records) r.indices.push_back(scorer.index(rec));
      r.summary = summarize(r.indices, threshold);
      out.push_back(std::move(r));
    }
  }
  return out;
}

namespace {

// Symmetric square root factor S with S S^T = cov; exact zero for a zero matrix.
Matrix sqrt_factor(const Matrix& cov) {
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalFailure("magnitude band: eigensolver failed");
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

}  // namespace

std::vector<MagnitudeBand> magnitude_band(const FormPair& form, std::span<const double> grid,
                                          std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 2) throw InvalidInput("magnitude band: need at least two samples");
  const auto real_post = omgp::predict(form.real_model, grid);
  const auto imag_post = omgp::predict(form.imag_model, grid);
  const auto m = static_cast<Eigen::Index>(grid.size());
  const auto ns = static_cast<Eigen::Index>(n_samples);

  std::vector<MagnitudeBand> out;
  for (std::size_t k = 0; k < real_post.size(); ++k) {
    Rng rng = make_rng(derive_seed(seed, k));
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix z_re(m, ns), z_im(m, ns);
    for (Eigen::Index s = 0; s < ns; ++s)
      for (Eigen::Index i = 0; i < m; ++i) z_re(i, s) = normal(rng);
    for (Eigen::Index s = 0; s < ns; ++s)
      for (Eigen::Index i = 0; i < m; ++i) z_im(i, s) = normal(rng);
    Matrix re = sqrt_factor(real_post[k].covariance) * z_re;
    Matrix im = sqrt_factor(imag_post[k].covariance) * z_im;
    re.colwise() += real_post[k].mean;
    im.colwise() += imag_post[k].mean;
    const Matrix mag = (re.array().square() + im.array().square()).sqrt().matrix();

    MagnitudeBand band;
    band.component = k;
    band.mean.resize(grid.size());
    band.lower.resize(grid.size());
    band.upper.resize(grid.size());
    std::vector<double> row(n_samples);
    for (Eigen::Index i = 0; i < m; ++i) {
      double mean = 0.0;
      for (Eigen::Index s = 0; s < ns; ++s) {
        row[static_cast<std::size_t>(s)] = mag(i, s);
        mean += (mag(i, s) - mean) / static_cast<double>(s + 1);
      }
      const auto ui = static_cast<std::size_t>(i);
      band.mean[ui] = mean;
      band.lower[ui] = quantile(row, 0.025);
      band.upper[ui] = quantile(row, 0.975);
    }
    out.push_back(std::move(band));
  }
  return out;
}

}  // namespace popform::novelty

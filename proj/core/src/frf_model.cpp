#include "popform/frf_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "popform/errors.hpp"
#include "popform/random.hpp"

namespace popform::frf {

namespace {

double peak_abs(std::span<const double> v) {
  double peak = 0.0;
  for (double x : v) peak = std::max(peak, std::abs(x));
  return peak;
}

}  // namespace

void ModalMode::validate() const {
  if (!(std::isfinite(natural_frequency_hz) && natural_frequency_hz > 0.0))
    throw InvalidInput("modal mode: natural frequency must be positive and finite");
  if (!(damping_ratio > 0.0 && damping_ratio < 1.0))
    throw InvalidInput("modal mode: damping ratio must lie in (0, 1)");
  if (!std::isfinite(residue) || residue == 0.0)
    throw InvalidInput("modal mode: residue must be finite and non-zero");
}

void BladeSpec::validate() const {
  if (modes.empty()) throw InvalidInput("blade spec '" + id + "': no modes");
  for (std::size_t i = 0; i < modes.size(); ++i) {
    modes[i].validate();
    if (i > 0 && !(modes[i].natural_frequency_hz > modes[i - 1].natural_frequency_hz))
      throw InvalidInput("blade spec '" + id + "': natural frequencies must be strictly increasing");
  }
}

void FrequencyBand::validate() const {
  if (!(std::isfinite(low_hz) && std::isfinite(high_hz) && low_hz > 0.0 && low_hz < high_hz))
    throw InvalidInput("frequency band must satisfy 0 < low < high");
}

void FrfRecord::validate() const {
  const std::size_t n = frequency_hz.size();
  if (n < 2) throw InvalidInput("FRF record needs at least two samples");
  if (real_part.size() != n || imag_part.size() != n)
    throw InvalidInput("FRF record: frequency, real and imaginary lengths differ");
  for (std::size_t i = 0; i < n; ++i) {
    const double f = frequency_hz[i];
    if (!std::isfinite(f) || f <= 0.0)
      throw InvalidInput("FRF record: frequencies must be finite and positive");
    if (i > 0 && !(f > frequency_hz[i - 1]))
      throw InvalidInput("FRF record: frequencies must be strictly increasing");
    if (!std::isfinite(real_part[i]) || !std::isfinite(imag_part[i]))
      throw InvalidInput("FRF record: non-finite response value");
  }
}

void FrfDataset::validate() const {
  band.validate();
  for (const auto& r : records) {
    r.validate();
    if (!band.contains(r.frequency_hz.front()) || !band.contains(r.frequency_hz.back()))
      throw InvalidInput("FRF record lies outside the dataset band");
  }
}

std::vector<double> linear_grid(const FrequencyBand& band, std::size_t n) {
  band.validate();
  if (n < 2) throw InvalidInput("frequency grid needs at least two points");
  std::vector<double> grid(n);
  const double step = band.width() / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) grid[i] = band.low_hz + step * static_cast<double>(i);
  grid.back() = band.high_hz;
  return grid;
}

std::vector<std::complex<double>> accelerance_frf(std::span<const ModalMode> modes,
                                                  std::span<const double> freq_hz) {
  if (modes.empty()) throw InvalidInput("accelerance_frf: empty mode list");
  for (const auto& m : modes) m.validate();
  for (double f : freq_hz)
    if (!std::isfinite(f) || f < 0.0)
      throw InvalidInput("accelerance_frf: frequency grid must be finite and non-negative");

  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<std::complex<double>> out(freq_hz.size());
  for (std::size_t i = 0; i < freq_hz.size(); ++i) {
    const double w = two_pi * freq_hz[i];
    std::complex<double> sum{0.0, 0.0};
    for (const auto& m : modes) {
      const double wn = two_pi * m.natural_frequency_hz;
      const std::complex<double> den{wn * wn - w * w, 2.0 * m.damping_ratio * w * wn};
      sum += m.residue / den;
    }
    out[i] = -w * w * sum;
  }
  return out;
}

FrfRecord make_record(std::span<const double> freq_hz,
                      std::span<const std::complex<double>> values,
                      std::optional<std::string> label) {
  if (freq_hz.size() != values.size())
    throw InvalidInput("make_record: grid and value lengths differ");
  FrfRecord rec;
  rec.frequency_hz.assign(freq_hz.begin(), freq_hz.end());
  rec.real_part.reserve(values.size());
  rec.imag_part.reserve(values.size());
  for (const auto& v : values) {
    rec.real_part.push_back(v.real());
    rec.imag_part.push_back(v.imag());
  }
  rec.member_label = std::move(label);
  return rec;
}

BladeSpec apply_frequency_shift(const BladeSpec& spec, double fraction) {
  if (!(fraction >= -0.5 && fraction <= 0.5))
    throw InvalidInput("apply_frequency_shift: fraction must lie in [-0.5, 0.5]");
  BladeSpec out = spec;
  for (auto& m : out.modes) {
    m.natural_frequency_hz *= (1.0 + fraction);
    if (!(m.natural_frequency_hz > 0.0))
      throw InvalidInput("apply_frequency_shift: shift produced a non-positive frequency");
  }
  return out;
}

FrfDataset inject_noise(const FrfRecord& record, double fraction, std::size_t copies,
                        std::uint64_t seed) {
  if (!(fraction > 0.0) || !std::isfinite(fraction))
    throw InvalidInput("inject_noise: fraction must be positive");
  if (copies < 1) throw InvalidInput("inject_noise: copies must be at least 1");
  record.validate();

  const double sd_re = fraction * peak_abs(record.real_part);
  const double sd_im = fraction * peak_abs(record.imag_part);
  if (sd_re == 0.0 && sd_im == 0.0)
    throw InvalidInput("inject_noise: record is identically zero");

  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  FrfDataset out;
  out.band = {record.frequency_hz.front(), record.frequency_hz.back()};
  out.records.reserve(copies);
  for (std::size_t c = 0; c < copies; ++c) {
    FrfRecord noisy = record;
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      noisy.real_part[i] += sd_re * normal(rng);
      noisy.imag_part[i] += sd_im * normal(rng);
    }
    out.records.push_back(std::move(noisy));
  }
  return out;
}

FrfDataset synthesize_population(std::span<const BladeSpec> specs, const FrequencyBand& band,
                                 std::size_t grid_size) {
  if (specs.empty()) throw InvalidInput("synthesize_population: no blade specs");
  const auto grid = linear_grid(band, grid_size);
  FrfDataset out;
  out.band = band;
  for (const auto& spec : specs) {
    spec.validate();
    const auto h = accelerance_frf(spec.modes, grid);
    out.records.push_back(make_record(grid, h, spec.id));
  }
  return out;
}

FrfDataset replicate_dataset(const FrfDataset& dataset, std::size_t copies, double fraction,
                             std::uint64_t seed) {
  dataset.validate();
  FrfDataset pool;
  pool.band = dataset.band;
  for (std::size_t r = 0; r < dataset.records.size(); ++r) {
    auto noisy = inject_noise(dataset.records[r], fraction, copies, derive_seed(seed, r));
    for (auto& rec : noisy.records) pool.records.push_back(std::move(rec));
  }
  return pool;
}

TrainingSet build_training_set(const FrfDataset& dataset, std::size_t copies, double fraction,
                               std::size_t n_points, std::uint64_t seed) {
  if (copies < 1) throw InvalidInput("build_training_set: copies must be at least 1");
  std::size_t per_copy = 0;
  for (const auto& r : dataset.records) per_copy += r.size();
  const std::size_t pool_size = per_copy * copies;
  if (n_points > pool_size)
    throw InvalidInput("build_training_set: requested " + std::to_string(n_points) +
                       " points from a pool of " + std::to_string(pool_size));

  const FrfDataset pool = replicate_dataset(dataset, copies, fraction, seed);

  TrainingSet all;
  all.inputs.reserve(pool_size);
  for (const auto& rec : pool.records) {
    const std::string label = rec.member_label.value_or("");
    for (std::size_t i = 0; i < rec.size(); ++i) {
      all.inputs.push_back(rec.frequency_hz[i]);
      all.targets_real.push_back(rec.real_part[i]);
      all.targets_imag.push_back(rec.imag_part[i]);
      all.labels.push_back(label);
    }
  }

  std::vector<std::size_t> index(pool_size);
  std::iota(index.begin(), index.end(), std::size_t{0});
  std::vector<std::size_t> chosen;
  chosen.reserve(n_points);
  Rng rng = make_rng(derive_seed(seed, 0xfeedULL));
  std::sample(index.begin(), index.end(), std::back_inserter(chosen), n_points, rng);

  TrainingSet out;
  for (std::size_t i : chosen) {
    out.inputs.push_back(all.inputs[i]);
    out.targets_real.push_back(all.targets_real[i]);
    out.targets_imag.push_back(all.targets_imag[i]);
    out.labels.push_back(all.labels[i]);
  }
  return out;
}

std::vector<BladeSpec> default_population(bool with_second_mode) {
  struct Member {
    const char* id;
    double fn_hz, zeta, residue;
  };
  // Two sharply resonant members low in the band, two broad ones higher up.
  // Member 2 sits ~3% above member 1, so a 3% downshift aligns their peaks.
  constexpr Member members[] = {
      {"blade1", 50.27, 0.022, 1.05},
      {"blade2", 51.85, 0.019, 1.18},
      {"blade3", 52.99, 0.061, 1.00},
      {"blade4", 55.09, 0.084, 0.66},
  };
  std::vector<BladeSpec> out;
  for (const auto& m : members) {
    BladeSpec spec{m.id, {{m.fn_hz, m.zeta, m.residue}}};
    if (with_second_mode) spec.modes.push_back({m.fn_hz * 1.012, m.zeta, 0.08 * m.residue});
    out.push_back(std::move(spec));
  }
  return out;
}

}  // namespace popform::frf

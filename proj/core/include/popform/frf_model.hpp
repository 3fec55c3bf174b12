#pragma once

// Forward synthesis of accelerance FRFs from modal parameters, population
// generation, noise injection and damage simulation.
//
// Frequencies are carried in Hz everywhere; the conversion to rad/s happens
// only inside accelerance_frf().

#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace popform::frf {

struct ModalMode {
  double natural_frequency_hz = 0.0;
  double damping_ratio = 0.0;
  double residue = 0.0;

  void validate() const;
};

// One member of the population.
struct BladeSpec {
  std::string id;
  std::vector<ModalMode> modes;  // strictly increasing natural frequency

  void validate() const;
};

struct FrequencyBand {
  double low_hz = 48.0;
  double high_hz = 56.0;

  void validate() const;
  bool contains(double f_hz) const { return f_hz >= low_hz && f_hz <= high_hz; }
  double width() const { return high_hz - low_hz; }
};

struct FrfRecord {
  std::vector<double> frequency_hz;
  std::vector<double> real_part;
  std::vector<double> imag_part;
  std::optional<std::string> member_label;

  std::size_t size() const { return frequency_hz.size(); }
  void validate() const;
};

struct FrfDataset {
  std::vector<FrfRecord> records;
  FrequencyBand band;

  void validate() const;
};

// Evenly spaced grid of `n` points covering the closed band.
std::vector<double> linear_grid(const FrequencyBand& band, std::size_t n);

// H(w) = -w^2 * sum_k A_k / (wn_k^2 - w^2 + 2 i zeta_k w wn_k), w = 2 pi f.
std::vector<std::complex<double>> accelerance_frf(std::span<const ModalMode> modes,
                                                  std::span<const double> freq_hz);

FrfRecord make_record(std::span<const double> freq_hz,
                      std::span<const std::complex<double>> values,
                      std::optional<std::string> label = std::nullopt);

// Scales every natural frequency by (1 + fraction); fraction = -0.035 is a 3.5% drop.
BladeSpec apply_frequency_shift(const BladeSpec& spec, double fraction);

// `copies` noisy replicas of `record`. Real and imaginary parts get
// independent zero-mean Gaussian noise with standard deviation
// fraction * max|part| computed per part.
FrfDataset inject_noise(const FrfRecord& record, double fraction, std::size_t copies,
                        std::uint64_t seed);

FrfDataset synthesize_population(std::span<const BladeSpec> specs, const FrequencyBand& band,
                                 std::size_t grid_size);

struct TrainingSet {
  std::vector<double> inputs;
  std::vector<double> targets_real;
  std::vector<double> targets_imag;
  std::vector<std::string> labels;  // ground-truth member of each point ("" if unknown)

  std::size_t size() const { return inputs.size(); }
};

// Replicates each record `copies` times with injected noise, pools every
// (frequency, value) pair and draws `n_points` of them without replacement.
// Real and imaginary targets share one index set.
TrainingSet build_training_set(const FrfDataset& dataset, std::size_t copies, double fraction,
                               std::size_t n_points, std::uint64_t seed);

// The noisy replica pool build_training_set() draws from, as records.
FrfDataset replicate_dataset(const FrfDataset& dataset, std::size_t copies, double fraction,
                             std::uint64_t seed);

// Four-member synthetic population in the 48-56 Hz band. With
// `with_second_mode` each member also carries a weak, closely spaced
// second mode.
std::vector<BladeSpec> default_population(bool with_second_mode = false);

}  // namespace popform::frf

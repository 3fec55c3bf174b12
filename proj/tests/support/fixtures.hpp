#pragma once

// Synthetic populations and forms built from the generating parameters, so
// tests that only need a plausible fitted model skip the restarts.

#include <cmath>
#include <map>

#include "popform/frf_model.hpp"
#include "popform/novelty.hpp"
#include "popform/omgp.hpp"

namespace fixture {

using namespace popform;

struct Population {
  std::vector<frf::BladeSpec> specs;
  frf::FrfDataset clean;
  frf::TrainingSet train;
  std::vector<std::size_t> truth;  // member index per training point
};

inline Population population(std::size_t n_train = 600, std::uint64_t seed = 1, std::size_t grid = 200) {
  Population p;
  p.specs = frf::default_population();
  p.clean = frf::synthesize_population(p.specs, {48.0, 56.0}, grid);
  p.train = frf::build_training_set(p.clean, 20, 0.05, n_train, seed);
  std::map<std::string, std::size_t> index;
  for (std::size_t m = 0; m < p.specs.size(); ++m) index[p.specs[m].id] = m;
  for (const auto& l : p.train.labels) p.truth.push_back(index.at(l));
  return p;
}

inline std::vector<omgp::ComponentParams> truth_components(const std::vector<frf::BladeSpec>& specs,
                                                           gp::Part part, double signal_variance,
                                                           double lengthscale = 1.0) {
  std::vector<omgp::ComponentParams> out;
  for (const auto& s : specs) {
    const auto& m = s.modes.front();
    out.push_back({{signal_variance, lengthscale},
                   {m.natural_frequency_hz, m.damping_ratio, std::abs(m.residue), part, m.residue > 0 ? 1 : -1}});
  }
  return out;
}

inline omgp::Matrix one_hot(const std::vector<std::size_t>& labels, std::size_t k) {
  omgp::Matrix r = omgp::Matrix::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < labels.size(); ++i) r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(labels[i])) = 1.0;
  return r;
}

// Noise level of one part: rms distance of the targets from the clean curves.
inline double residual_sigma(const Population& p, gp::Part part) {
  double ss = 0.0;
  for (std::size_t i = 0; i < p.train.size(); ++i) {
    const std::vector<double> f{p.train.inputs[i]};
    const auto h = frf::accelerance_frf(p.specs[p.truth[i]].modes, f)[0];
    const double clean = part == gp::Part::Real ? h.real() : h.imag();
    const double y = part == gp::Part::Real ? p.train.targets_real[i] : p.train.targets_imag[i];
    ss += (y - clean) * (y - clean);
  }
  return std::sqrt(ss / static_cast<double>(p.train.size()));
}

inline omgp::OmgpModel truth_model(const Population& p, gp::Part part, std::size_t e_steps = 2) {
  const auto& y = part == gp::Part::Real ? p.train.targets_real : p.train.targets_imag;
  const double sigma = residual_sigma(p, part);
  omgp::OmgpModel m(p.train.inputs, y, part, truth_components(p.specs, part, 0.01 * sigma * sigma), sigma,
                    one_hot(p.truth, p.specs.size()));
  for (std::size_t s = 0; s < e_steps; ++s) m = omgp::e_step(m);
  return m;
}

inline novelty::FormPair truth_form(const Population& p) {
  return {truth_model(p, gp::Part::Real), truth_model(p, gp::Part::Imaginary), {48.0, 56.0}};
}

}  // namespace fixture

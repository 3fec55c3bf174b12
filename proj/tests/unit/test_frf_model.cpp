#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"
#include "popform/errors.hpp"
#include "popform/frf_model.hpp"
#include "support/oracles.hpp"

using namespace popform;
using namespace popform::frf;

namespace {

std::vector<oracle::Mode> to_oracle(const std::vector<ModalMode>& modes) {
  std::vector<oracle::Mode> out;
  for (const auto& m : modes) out.push_back({m.natural_frequency_hz, m.damping_ratio, m.residue});
  return out;
}

double peak_abs(const std::vector<double>& v) {
  double p = 0.0;
  for (double x : v) p = std::max(p, std::abs(x));
  return p;
}

}  // namespace

TEST_CASE("accelerance vanishes at zero frequency") {
  const std::vector<ModalMode> modes{{52.0, 0.03, 1.4}};
  const std::vector<double> f{0.0};
  const auto h = accelerance_frf(modes, f);
  CHECK(h[0].real() == 0.0);
  CHECK(h[0].imag() == 0.0);
}

TEST_CASE("accelerance at resonance is i A / (2 zeta)") {
  const std::vector<ModalMode> modes{{52.0, 0.03, 1.4}};
  const std::vector<double> f{52.0};
  const auto h = accelerance_frf(modes, f);
  CHECK(std::abs(h[0].real()) <= 1e-12 * 1.4 / 0.06);
  CHECK(h[0].imag() == doctest::Approx(1.4 / 0.06).epsilon(1e-12));
  CHECK(std::abs(h[0]) == doctest::Approx(1.4 / 0.06).epsilon(1e-12));
}

TEST_CASE("accelerance tends to the residue sum at high frequency") {
  const std::vector<ModalMode> modes{{50.0, 0.02, 0.7}, {53.0, 0.05, 1.1}};
  // The imaginary part decays like 2 zeta A fn / f, so go far enough out.
  const std::vector<double> f{1e14};
  const auto h = accelerance_frf(modes, f);
  CHECK(h[0].real() == doctest::Approx(1.8).epsilon(1e-12));
  CHECK(std::abs(h[0].imag()) < 1e-12);
}

TEST_CASE("four-mode accelerance matches a direct complex evaluation") {
  const std::vector<ModalMode> modes{{49.1, 0.02, 1.0}, {50.6, 0.035, -0.4}, {52.8, 0.05, 0.9}, {55.2, 0.08, 0.3}};
  const auto grid = linear_grid({48.0, 56.0}, 200);
  const auto h = accelerance_frf(modes, grid);
  const auto ref = oracle::frf(to_oracle(modes), grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double scale = std::abs(ref[i]);
    CHECK(std::abs(h[i] - ref[i]) <= 1e-12 * scale);
  }
}

TEST_CASE("accelerance is linear in the residues") {
  const std::vector<ModalMode> modes{{50.0, 0.02, 0.7}, {53.0, 0.05, 1.1}};
  auto scaled = modes;
  for (auto& m : scaled) m.residue *= -3.5;
  const auto grid = linear_grid({48.0, 56.0}, 64);
  const auto h = accelerance_frf(modes, grid);
  const auto hs = accelerance_frf(scaled, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(std::abs(hs[i] + 3.5 * h[i]) <= 1e-12 * std::abs(hs[i]));
}

TEST_CASE("flipping the damping sign conjugates the response") {
  const std::vector<ModalMode> modes{{50.0, 0.02, 0.7}, {53.0, 0.05, 1.1}};
  auto flipped = to_oracle(modes);
  for (auto& m : flipped) m.zeta = -m.zeta;
  const auto grid = linear_grid({48.0, 56.0}, 64);
  const auto h = accelerance_frf(modes, grid);
  const auto hf = oracle::frf(flipped, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(h[i].real() == doctest::Approx(hf[i].real()).epsilon(1e-12));
    CHECK(h[i].imag() == doctest::Approx(-hf[i].imag()).epsilon(1e-12));
  }
}

TEST_CASE("accelerance rejects bad input") {
  const std::vector<double> f{50.0};
  CHECK_THROWS_AS(accelerance_frf(std::vector<ModalMode>{}, f), InvalidInput);
  const std::vector<ModalMode> modes{{50.0, 0.02, 1.0}};
  const std::vector<double> bad{50.0, NAN};
  CHECK_THROWS_AS(accelerance_frf(modes, bad), InvalidInput);
  const std::vector<double> negative{-1.0};
  CHECK_THROWS_AS(accelerance_frf(modes, negative), InvalidInput);
  CHECK_THROWS_AS(accelerance_frf(std::vector<ModalMode>{{50.0, 1.2, 1.0}}, f), InvalidInput);
  CHECK_THROWS_AS(accelerance_frf(std::vector<ModalMode>{{50.0, 0.02, 0.0}}, f), InvalidInput);
}

TEST_CASE("frequency shift") {
  const BladeSpec spec{"b", {{52.0, 0.03, 1.0}}};
  SUBCASE("zero shift is the identity") {
    const auto s = apply_frequency_shift(spec, 0.0);
    CHECK(s.modes[0].natural_frequency_hz == 52.0);
    CHECK(s.modes[0].damping_ratio == 0.03);
    CHECK(s.modes[0].residue == 1.0);
  }
  SUBCASE("a 3.5% drop from 52 Hz lands on 50.18 Hz") {
    CHECK(apply_frequency_shift(spec, -0.035).modes[0].natural_frequency_hz == doctest::Approx(50.18).epsilon(1e-12));
  }
  SUBCASE("monotone in the shift") {
    double prev = -1.0;
    for (double p = -0.035; p <= 0.0; p += 0.005) {
      const double fn = apply_frequency_shift(spec, p).modes[0].natural_frequency_hz;
      CHECK(fn > prev);
      prev = fn;
    }
  }
  SUBCASE("out-of-range shift is rejected") { CHECK_THROWS_AS(apply_frequency_shift(spec, -0.6), InvalidInput); }
}

TEST_CASE("peak grid index moves monotonically with the shift") {
  const BladeSpec spec{"b", {{52.0, 0.01, 1.0}}};
  const auto grid = linear_grid({48.0, 56.0}, 2001);
  std::size_t prev = grid.size();
  for (int j = 0; j <= 7; ++j) {
    const auto shifted = apply_frequency_shift(spec, -0.005 * j);
    const auto h = accelerance_frf(shifted.modes, grid);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < h.size(); ++i)
      if (std::abs(h[i]) > std::abs(h[arg])) arg = i;
    CHECK(arg < prev);
    prev = arg;
  }
}

TEST_CASE("noise injection") {
  const BladeSpec spec{"b", {{52.0, 0.03, 1.0}}};
  const auto grid = linear_grid({48.0, 56.0}, 200);
  const auto clean = make_record(grid, accelerance_frf(spec.modes, grid), "b");
  const double sd_re = 0.05 * peak_abs(clean.real_part);
  const double sd_im = 0.05 * peak_abs(clean.imag_part);

  SUBCASE("twenty copies with the per-part standard deviation") {
    const auto noisy = inject_noise(clean, 0.05, 20, 11);
    REQUIRE(noisy.records.size() == 20);
    for (const auto& rec : noisy.records) {
      double ss_re = 0.0, ss_im = 0.0;
      for (std::size_t i = 0; i < grid.size(); ++i) {
        ss_re += std::pow(rec.real_part[i] - clean.real_part[i], 2);
        ss_im += std::pow(rec.imag_part[i] - clean.imag_part[i], 2);
      }
      CHECK(std::sqrt(ss_re / 199.0) == doctest::Approx(sd_re).epsilon(0.10));
      CHECK(std::sqrt(ss_im / 199.0) == doctest::Approx(sd_im).epsilon(0.10));
      CHECK(rec.member_label == clean.member_label);
    }
  }
  SUBCASE("same seed gives identical output") {
    const auto a = inject_noise(clean, 0.05, 3, 5);
    const auto b = inject_noise(clean, 0.05, 3, 5);
    for (std::size_t r = 0; r < 3; ++r) {
      CHECK(a.records[r].real_part == b.records[r].real_part);
      CHECK(a.records[r].imag_part == b.records[r].imag_part);
    }
    CHECK(inject_noise(clean, 0.05, 1, 6).records[0].real_part != a.records[0].real_part);
  }
  SUBCASE("the mean of many copies converges to the clean record") {
    const auto noisy = inject_noise(clean, 0.05, 1000, 17);
    // Two-sided z for a 1% family-wise level over 400 checks.
    const double z = 4.21;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double m_re = 0.0, m_im = 0.0;
      for (const auto& rec : noisy.records) {
        m_re += rec.real_part[i];
        m_im += rec.imag_part[i];
      }
      CHECK(std::abs(m_re / 1000.0 - clean.real_part[i]) <= z * sd_re / std::sqrt(1000.0));
      CHECK(std::abs(m_im / 1000.0 - clean.imag_part[i]) <= z * sd_im / std::sqrt(1000.0));
    }
  }
  SUBCASE("invalid requests") {
    CHECK_THROWS_AS(inject_noise(clean, 0.0, 1, 1), InvalidInput);
    CHECK_THROWS_AS(inject_noise(clean, 0.05, 0, 1), InvalidInput);
    FrfRecord zero = clean;
    std::fill(zero.real_part.begin(), zero.real_part.end(), 0.0);
    std::fill(zero.imag_part.begin(), zero.imag_part.end(), 0.0);
    CHECK_THROWS_AS(inject_noise(zero, 0.05, 1, 1), InvalidInput);
  }
}

TEST_CASE("population synthesis") {
  const auto specs = default_population();
  SUBCASE("default population has four distinct peaks inside the band") {
    const auto ds = synthesize_population(specs, {48.0, 56.0}, 200);
    REQUIRE(ds.records.size() == 4);
    std::set<std::size_t> peaks;
    double lo = 1e9, hi = 0.0;
    for (std::size_t r = 0; r < 4; ++r) {
      const auto& rec = ds.records[r];
      CHECK(rec.member_label == specs[r].id);
      std::size_t arg = 0;
      for (std::size_t i = 1; i < rec.size(); ++i)
        if (std::hypot(rec.real_part[i], rec.imag_part[i]) > std::hypot(rec.real_part[arg], rec.imag_part[arg]))
          arg = i;
      peaks.insert(arg);
      lo = std::min(lo, rec.frequency_hz[arg]);
      hi = std::max(hi, rec.frequency_hz[arg]);
    }
    CHECK(peaks.size() == 4);
    CHECK(hi - lo <= 6.3);
  }
  SUBCASE("single spec and two-point grid") {
    const auto ds = synthesize_population(std::span(specs).first(1), {48.0, 56.0}, 2);
    REQUIRE(ds.records.size() == 1);
    CHECK(ds.records[0].size() == 2);
  }
  SUBCASE("second mode option adds a weak mode") {
    for (const auto& s : default_population(true)) {
      REQUIRE(s.modes.size() == 2);
      CHECK(std::abs(s.modes[1].residue) < std::abs(s.modes[0].residue));
    }
  }
  SUBCASE("empty spec list") { CHECK_THROWS_AS(synthesize_population({}, {48.0, 56.0}, 10), InvalidInput); }
}

TEST_CASE("training set") {
  const auto ds = synthesize_population(default_population(), {48.0, 56.0}, 50);
  SUBCASE("six hundred points with shared inputs for both parts") {
    const auto t = build_training_set(ds, 20, 0.05, 600, 3);
    CHECK(t.size() == 600);
    CHECK(t.targets_real.size() == 600);
    CHECK(t.targets_imag.size() == 600);
    CHECK(t.labels.size() == 600);
    for (double x : t.inputs) CHECK(ds.band.contains(x));
  }
  SUBCASE("fixed seed reproduces the draw") {
    const auto a = build_training_set(ds, 5, 0.05, 100, 9);
    const auto b = build_training_set(ds, 5, 0.05, 100, 9);
    CHECK(a.inputs == b.inputs);
    CHECK(a.targets_real == b.targets_real);
    CHECK(a.labels == b.labels);
  }
  SUBCASE("tiny noise and the whole pool recovers the clean data") {
    const auto t = build_training_set(ds, 1, 1e-14, 200, 4);
    std::multiset<std::tuple<std::string, double, double>> got, want;
    for (std::size_t i = 0; i < t.size(); ++i) got.insert({t.labels[i], t.inputs[i], std::round(t.targets_real[i] * 1e6)});
    for (const auto& rec : ds.records)
      for (std::size_t i = 0; i < rec.size(); ++i)
        want.insert({*rec.member_label, rec.frequency_hz[i], std::round(rec.real_part[i] * 1e6)});
    CHECK(got == want);
  }
  SUBCASE("asking for more than the pool") { CHECK_THROWS_AS(build_training_set(ds, 1, 0.05, 201, 1), InvalidInput); }
}

TEST_CASE("record and band validation") {
  FrfRecord r{{48.0, 48.0}, {1.0, 2.0}, {0.0, 0.0}, std::nullopt};
  CHECK_THROWS_AS(r.validate(), InvalidInput);
  r.frequency_hz = {48.0};
  r.real_part = {1.0};
  r.imag_part = {1.0};
  CHECK_THROWS_AS(r.validate(), InvalidInput);
  CHECK_THROWS_AS((FrequencyBand{56.0, 48.0}.validate()), InvalidInput);
  const auto g = linear_grid({48.0, 56.0}, 5);
  CHECK(g.front() == 48.0);
  CHECK(g.back() == 56.0);
  CHECK(g[2] == doctest::Approx(52.0));
}

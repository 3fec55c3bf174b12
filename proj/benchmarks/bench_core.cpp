#include <benchmark/benchmark.h>

#include "popform/frf_model.hpp"
#include "popform/gp_core.hpp"
#include "popform/novelty.hpp"
#include "popform/omgp.hpp"

using namespace popform;

namespace {

struct Data {
  std::vector<frf::BladeSpec> specs = frf::default_population();
  frf::FrfDataset clean = frf::synthesize_population(specs, {48.0, 56.0}, 200);
  frf::TrainingSet train = frf::build_training_set(clean, 20, 0.05, 600, 1);
};

const Data& data() {
  static const Data d;
  return d;
}

std::vector<omgp::ComponentParams> components(const Data& d, gp::Part part) {
  std::vector<omgp::ComponentParams> out;
  for (const auto& s : d.specs) {
    const auto& m = s.modes.front();
    out.push_back({{1e-3, 1.0}, {m.natural_frequency_hz, m.damping_ratio, m.residue, part, +1}});
  }
  return out;
}

omgp::OmgpModel model(gp::Part part) {
  const auto& d = data();
  const auto& y = part == gp::Part::Real ? d.train.targets_real : d.train.targets_imag;
  return omgp::e_step(omgp::OmgpModel(d.train.inputs, y, part, components(d, part), 0.3));
}

}  // namespace

static void BM_KernelMatrix(benchmark::State& state) {
  const auto x = frf::linear_grid({48.0, 56.0}, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(gp::kernel_matrix({1.0, 1.0}, x, x));
}
BENCHMARK(BM_KernelMatrix)->Arg(200)->Arg(600);

static void BM_EStep(benchmark::State& state) {
  const auto m = model(gp::Part::Real);
  for (auto _ : state) benchmark::DoNotOptimize(omgp::e_step(m, 1));
}
BENCHMARK(BM_EStep)->Unit(benchmark::kMillisecond);

static void BM_MStep(benchmark::State& state) {
  const auto m = model(gp::Part::Imaginary);
  omgp::FitConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(omgp::m_step(m, cfg));
}
BENCHMARK(BM_MStep)->Unit(benchmark::kMillisecond);

static void BM_NoveltyIndex(benchmark::State& state) {
  const auto& d = data();
  const novelty::FormPair form{model(gp::Part::Real), model(gp::Part::Imaginary), {48.0, 56.0}};
  const novelty::FormScorer scorer(form, d.clean.records[0].frequency_hz);
  const auto rec = frf::inject_noise(d.clean.records[1], 0.05, 1, 3).records[0];
  for (auto _ : state) benchmark::DoNotOptimize(scorer.index(rec));
}
BENCHMARK(BM_NoveltyIndex)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();

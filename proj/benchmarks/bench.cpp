#include <benchmark/benchmark.h>

#include <memory>

#include "vbad/estimator.hpp"
#include "vbad/harness.hpp"
#include "vbad/models.hpp"
#include "vbad/partition.hpp"
#include "vbad/tentative.hpp"

namespace {

using namespace vbad;

struct Fixture {
  ModelBundle bundle = generate_bundle(ModelConfig{});
  VideoTensor x;
  std::uint32_t label = 0;

  Fixture() {
    Rng rng(1);
    x = smooth_noise_video(bundle.classifier.input_shape(), rng);
    label = top1_of(bundle.classifier.forward(x)).label;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_Forward(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(f.bundle.classifier.forward(f.x));
}
BENCHMARK(BM_Forward);

void BM_InputGradient(benchmark::State& state) {
  const auto& f = fixture();
  const AttackGoal goal = AttackGoal::untargeted(f.label);
  for (auto _ : state) benchmark::DoNotOptimize(f.bundle.classifier.input_gradient(f.x, goal));
}
BENCHMARK(BM_InputGradient);

void BM_EnsembleTentative(benchmark::State& state) {
  const auto& f = fixture();
  Rng rng(2);
  const TentativeSpec spec =
      make_tentative_spec(TentativeKind::transferred_ensemble, f.bundle.surrogates,
                          AttackGoal::untargeted(f.label), f.x.shape(), nullptr, rng);
  for (auto _ : state) benchmark::DoNotOptimize(tentative_transferred(f.x, spec, rng));
}
BENCHMARK(BM_EnsembleTentative);

void BM_BuildBasis(benchmark::State& state) {
  const auto& f = fixture();
  Rng rng(3);
  const VideoTensor h = tentative_random(f.x.shape(), rng);
  const PartitionSpec spec = state.range(0) == 0 ? PartitionSpec::uniform(8, 8)
                                                 : PartitionSpec::per_pixel();
  for (auto _ : state) benchmark::DoNotOptimize(build_basis(h, spec, rng));
}
BENCHMARK(BM_BuildBasis)->Arg(0)->Arg(1);

void BM_NesEstimate(benchmark::State& state) {
  const auto& f = fixture();
  auto model = std::make_shared<const ToyClassifier>(f.bundle.classifier);
  ToyOracle oracle(model);
  Rng rng(4);
  const PatchBasis basis =
      build_basis(tentative_static(f.x.shape()), PartitionSpec::uniform(8, 8), rng);
  NesConfig cfg;
  cfg.population = static_cast<std::uint32_t>(state.range(0));
  for (auto _ : state) {
    QueryCounter counter(cfg.population);
    benchmark::DoNotOptimize(nes_estimate(f.x, basis, oracle, AttackGoal::untargeted(f.label),
                                          cfg, counter, rng));
  }
}
BENCHMARK(BM_NesEstimate)->Arg(24)->Arg(48);

}  // namespace

BENCHMARK_MAIN();

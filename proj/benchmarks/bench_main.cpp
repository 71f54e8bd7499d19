#include <benchmark/benchmark.h>

#include "calib/kinematics.hpp"
#include "calib/random.hpp"
#include "calib/refiner.hpp"
#include "calib/renderer.hpp"
#include "calib/synth.hpp"
#include "calib/temporal_pnp.hpp"

namespace {

const calib::SynthEpisode& episode() {
  static const calib::SynthEpisode ep = [] {
    calib::SynthSpec spec;
    spec.n_frames = 20;
    return calib::make_synth_episode(spec);
  }();
  return ep;
}

void BM_ForwardKinematics(benchmark::State& state) {
  const auto& ep = episode();
  for (auto _ : state) {
    benchmark::DoNotOptimize(calib::forward_kinematics(ep.model, ep.joints[3]));
  }
}
BENCHMARK(BM_ForwardKinematics);

void BM_RenderBundle(benchmark::State& state) {
  const auto& ep = episode();
  const int ss = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(calib::render(ep.model, ep.joints[0], ep.gt, ep.K, ss));
  }
}
BENCHMARK(BM_RenderBundle)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMicrosecond);

void BM_CoverageLoss(benchmark::State& state) {
  const auto& ep = episode();
  const int ss = static_cast<int>(state.range(0));
  calib::MaskLoss loss(ep.model, {ep.joints[0]}, {ep.clean_masks[0]}, ep.K, ss);
  for (auto _ : state) benchmark::DoNotOptimize(loss(ep.gt));
}
BENCHMARK(BM_CoverageLoss)->Arg(2)->Arg(4)->Unit(benchmark::kMicrosecond);

void BM_SolvePnp(benchmark::State& state) {
  const auto& ep = episode();
  calib::Correspondences c;
  for (int t = 0; t < ep.spec.n_frames; ++t) {
    c.push_back({calib::project(ep.K, calib::transform_point(ep.gt, ep.mark_path[t])),
                 ep.mark_path[t], t});
  }
  for (auto _ : state) benchmark::DoNotOptimize(calib::solve_pnp(c, ep.K));
}
BENCHMARK(BM_SolvePnp)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();

// Parallel kernels against their serial references.
//   slipforge_bench --benchmark_filter=Events

#include <benchmark/benchmark.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "slipforge/evsim.hpp"
#include "slipforge/features.hpp"
#include "slipforge/learn.hpp"
#include "slipforge/pipeline.hpp"
#include "slipforge/rng.hpp"

using namespace slipforge;

namespace {

// Frames of a real pick-and-place run, rendered once.
const std::vector<Frame>& run_frames() {
  static const std::vector<Frame> frames = [] {
    ScenarioParams p;
    p.cuboid_mass = 1.0;
    p.grip_offset_horizontal = 0.03;
    const PipelineConfig cfg;
    const PoseLog log = simulate_slip(p, build_trajectory(p));
    const SceneModel scene = make_scene(p, cfg.render);
    const CameraModel cam = make_camera(cfg.render);
    std::vector<Frame> out;
    for (std::size_t k = 150; k < 182; ++k) {  // lift into tilt
      out.push_back(render_frame_relative(scene, cam, log.records[k].gripper, log.cube_in_gripper[k],
                                          log.records[k].t));
    }
    return out;
  }();
  return frames;
}

void set_threads(const benchmark::State& state) {
#ifdef _OPENMP
  omp_set_num_threads(static_cast<int>(state.range(0)));
#else
  (void)state;
#endif
}

void BM_EventsParallel(benchmark::State& state) {
  set_threads(state);
  const auto& frames = run_frames();
  std::size_t n = 0;
  for (auto _ : state) {
    const EventStream s = frames_to_events(frames, {}, 1);
    n = s.size();
    benchmark::DoNotOptimize(n);
  }
  state.counters["events"] = static_cast<double>(n);
  state.counters["frames/s"] = benchmark::Counter(static_cast<double>(frames.size()), benchmark::Counter::kIsIterationInvariantRate);
}

void BM_EventsReference(benchmark::State& state) {
  const auto& frames = run_frames();
  for (auto _ : state) benchmark::DoNotOptimize(reference_frames_to_events(frames, {}, 1).size());
  state.counters["frames/s"] = benchmark::Counter(static_cast<double>(frames.size()), benchmark::Counter::kIsIterationInvariantRate);
}

void BM_RenderFrame(benchmark::State& state) {
  set_threads(state);
  ScenarioParams p;
  const PipelineConfig cfg;
  const PoseLog log = simulate_slip(p, build_trajectory(p));
  const SceneModel scene = make_scene(p, cfg.render);
  const CameraModel cam = make_camera(cfg.render);
  std::size_t k = 0;
  for (auto _ : state) {
    const Frame f = render_frame_relative(scene, cam, log.records[k].gripper, log.cube_in_gripper[k]);
    benchmark::DoNotOptimize(f.pixels.data());
    k = (k + 1) % log.size();
  }
}

void BM_MlpBatchGradient(benchmark::State& state) {
  set_threads(state);
  Rng rng(3);
  std::vector<BinnedTensor> ts;
  for (int i = 0; i < 32; ++i) {
    Subsample s;
    s.label = i % 2 ? Label::nonslip : Label::slip;
    for (int k = 0; k < 3000; ++k) {
      s.events.push_back({rng.uniform(0.0, 0.16), static_cast<std::uint16_t>(rng.index(200)),
                          static_cast<std::uint16_t>(rng.index(250)), rng.uniform() < 0.5 ? std::int8_t{1} : std::int8_t{-1}});
    }
    std::sort(s.events.begin(), s.events.end(), event_less);
    ts.push_back(bin(s, 150));
  }
  const FeatureDataset d = make_feature_dataset(ts);
  ModelConfig mc;
  const Classifier model = Classifier::create(mc, d.layout, 1);
  std::vector<const LabeledFeatures*> batch;
  for (const auto& e : d.items) batch.push_back(&e);
  std::vector<float> grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.loss_and_grad(batch, grad).loss);
}

}  // namespace

BENCHMARK(BM_EventsParallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EventsReference)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RenderFrame)->Arg(1)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MlpBatchGradient)->Arg(1)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

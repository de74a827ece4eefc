#include <benchmark/benchmark.h>

#include "savn/rl.hpp"
#include "savn/sensors.hpp"
#include "savn/world.hpp"

namespace {

using namespace savn;

config::RunConfig desk_config() {
  config::RunConfig cfg;
  cfg.mode = "train-saavn";
  cfg.attacker_mode = "learned";
  cfg.scene_width = 10;
  cfg.scene_height = 10;
  cfg.scene_pool = 4;
  cfg.audio_chunk_samples = 1000;
  cfg.env_max_steps = 100;
  return cfg;
}

void BM_SceneGeneration(benchmark::State& state) {
  std::uint64_t seed = 1;
  for (auto _ : state) {
    auto scene = world::generate_scene(seed++, 10, 10, 0.25);
    benchmark::DoNotOptimize(scene);
  }
}
BENCHMARK(BM_SceneGeneration);

void BM_Observation(benchmark::State& state) {
  config::RunConfig cfg = desk_config();
  cfg.attacker_mode = "random";
  cfg.mode = "eval";
  rl::EnvSetup setup = rl::build_setup(cfg);
  const world::Scene& scene = setup.scenes[0];
  world::EpisodeState st =
      world::reset_episode(scene, 9, setup.attacker, setup.env);
  Rng rng(3);
  sensors::RirCache cache;
  for (auto _ : state) {
    auto obs = sensors::make_observation(scene, st, setup.bank, setup.visual,
                                         setup.audio, rng, &cache);
    benchmark::DoNotOptimize(obs);
  }
}
BENCHMARK(BM_Observation);

void BM_TrainIteration(benchmark::State& state) {
  config::RunConfig cfg = desk_config();
  cfg.train_env_steps = 0;  // drive iterations manually
  rl::Trainer trainer(cfg);
  for (auto _ : state) {
    auto stats = trainer.run_iteration();
    benchmark::DoNotOptimize(stats);
  }
  state.SetItemsProcessed(trainer.env_steps());
}
BENCHMARK(BM_TrainIteration)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include "savn/nn.hpp"
#include "savn/rng.hpp"
#include "savn/world.hpp"

namespace {

using namespace savn;

nn::EncoderConfig bench_encoder(int obs_dim, int hidden) {
  nn::EncoderConfig cfg;
  cfg.visual_dim = 16;
  cfg.audio_dim = obs_dim - 16;
  cfg.visual_hidden = hidden;
  cfg.audio_hidden = hidden;
  cfg.gru_hidden = hidden;
  return cfg;
}

void BM_PolicyForward(benchmark::State& state) {
  const int hidden = static_cast<int>(state.range(0));
  const int obs_dim = 16 + 578;
  nn::ParameterStore store;
  Rng init(1);
  nn::PolicyNetwork net(store, "agent", bench_encoder(obs_dim, hidden),
                        {world::kAgentActionCount}, init);
  std::vector<double> obs(obs_dim, 0.1);
  std::vector<double> h(static_cast<std::size_t>(hidden), 0.0);
  std::vector<double> h_out(static_cast<std::size_t>(hidden), 0.0);
  for (auto _ : state) {
    auto out = net.forward(obs.data(), h.data(), h_out.data(), nullptr);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_PolicyForward)->Arg(64)->Arg(128)->Arg(512);

void BM_PolicyBackward(benchmark::State& state) {
  const int hidden = static_cast<int>(state.range(0));
  const int obs_dim = 16 + 578;
  nn::ParameterStore store;
  Rng init(1);
  nn::PolicyNetwork net(store, "agent", bench_encoder(obs_dim, hidden),
                        {world::kAgentActionCount}, init);
  std::vector<double> obs(obs_dim, 0.1);
  std::vector<double> h(static_cast<std::size_t>(hidden), 0.0);
  std::vector<double> h_out(static_cast<std::size_t>(hidden), 0.0);
  nn::StepCache cache;
  net.forward(obs.data(), h.data(), h_out.data(), &cache);
  std::vector<std::vector<double>> dlogits{{0.1, -0.2, 0.05, 0.05}};
  std::vector<double> dvalues{0.3};
  std::vector<double> dh_prev(static_cast<std::size_t>(hidden), 0.0);
  for (auto _ : state) {
    store.zero_grad();
    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
    net.backward(cache, dlogits, dvalues, nullptr, dh_prev.data());
    benchmark::DoNotOptimize(dh_prev);
  }
}
BENCHMARK(BM_PolicyBackward)->Arg(64)->Arg(128);

void BM_AdamStep(benchmark::State& state) {
  nn::ParameterStore store;
  Rng init(2);
  nn::PolicyNetwork net(store, "agent", bench_encoder(128, 64),
                        {world::kAgentActionCount}, init);
  // Touch every gradient once so Adam has work to do.
  for (const auto& name : store.names()) {
    auto& t = store.at(name);
    for (auto& g : t.g) g = 1e-3;
  }
  for (auto _ : state) {
    store.adam_step(2.5e-4);
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(store.parameter_count()));
}
BENCHMARK(BM_AdamStep);

}  // namespace

BENCHMARK_MAIN();

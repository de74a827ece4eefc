#include <benchmark/benchmark.h>

#include "savn/audio.hpp"
#include "savn/rng.hpp"

namespace {

using namespace savn;

audio::Waveform random_signal(int n, std::uint64_t seed) {
  Rng rng(seed);
  audio::Waveform w;
  w.samples.resize(static_cast<std::size_t>(n));
  for (auto& v : w.samples) v = rng.uniform(-1.0, 1.0);
  return w;
}

void BM_Stft(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const audio::Waveform x = random_signal(n, 42);
  audio::StftConfig cfg;
  for (auto _ : state) {
    auto spec = audio::stft(x, cfg);
    benchmark::DoNotOptimize(spec);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Stft)->Arg(1000)->Arg(4000)->Arg(16000);

void BM_SpectrogramPipeline(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  audio::Binaural b{random_signal(n, 43), random_signal(n, 44)};
  audio::SpectrogramConfig cfg;
  for (auto _ : state) {
    auto spec = audio::spectrogram_pipeline(b, cfg);
    benchmark::DoNotOptimize(spec);
  }
}
BENCHMARK(BM_SpectrogramPipeline)->Arg(1000)->Arg(4000);

void BM_Convolve(benchmark::State& state) {
  const audio::Waveform x = random_signal(4000, 44);
  const audio::Waveform taps = random_signal(static_cast<int>(state.range(0)), 45);
  for (auto _ : state) {
    auto y = audio::convolve(x, taps.samples);
    benchmark::DoNotOptimize(y);
  }
}
BENCHMARK(BM_Convolve)->Arg(16)->Arg(64)->Arg(256);

void BM_BankBuild(benchmark::State& state) {
  const int categories = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto bank = audio::build_sound_bank(7, categories, 1.0);
    benchmark::DoNotOptimize(bank);
  }
}
BENCHMARK(BM_BankBuild)->Arg(8)->Arg(32);

}  // namespace

BENCHMARK_MAIN();

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "savn/audio.hpp"
#include "savn/rng.hpp"
#include "savn/world.hpp"

namespace savn::sensors {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct VisualConfig {
  int n_rays = 16;
  double max_range = 10.0;  // cells
  double noise_std = 0.0;   // additive gaussian, unclamped
  bool blind = false;
};

struct AudioConfig {
  audio::StftConfig stft{};          // window 64, hop 16
  int downsample = 4;
  bool log_compress = true;
  int chunk_samples = 4000;          // rendered audio per step (0.5 s at 8 kHz)
  audio::RirConfig rir{};
  audio::RirMode rir_mode = audio::RirMode::Geometric;
};

struct Observation {
  std::vector<double> visual;
  audio::Spectrogram audio;
};

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

// Depth fan: n_rays across the 180 degree field centered on the heading,
// each min(distance to first wall-cell center, max_range) / max_range, plus
// optional gaussian noise. Blind mode returns zeros and draws nothing.
std::vector<double> render_visual(const world::Scene& scene, const world::Pose& pose,
                                  const VisualConfig& cfg, Rng& rng);

// Memoizes impulse responses per (source, listener pose); scenes are static
// so entries never invalidate.
class RirCache {
 public:
  const audio::ImpulseResponse& get(const world::Scene& scene, world::Cell source,
                                    const world::Pose& listener,
                                    const audio::RirConfig& cfg, int sample_rate,
                                    audio::RirMode mode);
  std::size_t size() const { return cache_.size(); }

 private:
  std::unordered_map<std::uint64_t, audio::ImpulseResponse> cache_;
};

// Target source at the goal plus attacker source, both rendered binaurally at
// the agent's pose and mixed with the current attacker volume; the result is
// cut to exactly one chunk.
audio::Binaural render_audio(const world::Scene& scene,
                             const world::EpisodeState& state,
                             const audio::SoundBank& bank, const AudioConfig& cfg,
                             RirCache* cache = nullptr);

Observation make_observation(const world::Scene& scene,
                             const world::EpisodeState& state,
                             const audio::SoundBank& bank,
                             const VisualConfig& vcfg, const AudioConfig& acfg,
                             Rng& rng, RirCache* cache = nullptr);

// Flattened observation width for a given config (visual rays followed by the
// spectrogram tensor); the network input contract.
int observation_width(const VisualConfig& vcfg, const AudioConfig& acfg);
std::vector<double> flatten(const Observation& obs);

// ---------------------------------------------------------------------------
// Observation dumps (replay support)
// ---------------------------------------------------------------------------

void save_observations(const std::vector<Observation>& steps, const std::string& path);
std::vector<Observation> load_observations(const std::string& path);

}  // namespace savn::sensors

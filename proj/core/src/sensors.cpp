#include "savn/sensors.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace savn::sensors {

std::vector<double> render_visual(const world::Scene& scene, const world::Pose& pose,
                                  const VisualConfig& cfg, Rng& rng) {
  if (cfg.n_rays < 1) throw std::invalid_argument("need at least one ray");
  if (!std::isfinite(cfg.noise_std) || cfg.noise_std < 0.0) {
    throw std::invalid_argument("noise std must be finite and nonnegative");
  }
  std::vector<double> out(cfg.n_rays, 0.0);
  if (cfg.blind) return out;  // no marching, no rng draws

  const double base = world::heading_angle(pose.heading);
  for (int i = 0; i < cfg.n_rays; ++i) {
    const double frac =
        cfg.n_rays == 1 ? 0.5 : static_cast<double>(i) / (cfg.n_rays - 1);
    const double ang = base + (0.5 - frac) * M_PI;  // left-to-right fan
    const double dx = std::cos(ang);
    const double dy = -std::sin(ang);  // grid y grows southward

    double depth = cfg.max_range;
    const int steps = static_cast<int>(std::ceil(cfg.max_range * 10.0));
    for (int s = 1; s <= steps; ++s) {
      const double t = s * 0.1;
      const world::Cell c{
          static_cast<int>(std::lround(pose.node.x + t * dx)),
          static_cast<int>(std::lround(pose.node.y + t * dy))};
      if (scene.is_wall(c)) {
        depth = std::hypot(c.x - pose.node.x, c.y - pose.node.y);
        break;
      }
    }
    out[i] = std::min(depth, cfg.max_range) / cfg.max_range;
  }
  if (cfg.noise_std > 0.0) {
    for (double& v : out) v += cfg.noise_std * rng.normal();
  }
  return out;
}

const audio::ImpulseResponse& RirCache::get(const world::Scene& scene,
                                            world::Cell source,
                                            const world::Pose& listener,
                                            const audio::RirConfig& cfg,
                                            int sample_rate,
                                            audio::RirMode mode) {
  // Scene pointers are stable for the cache's lifetime (one cache per scene
  // in practice); the key only needs the geometry inputs.
  const std::uint64_t key =
      (static_cast<std::uint64_t>(mode == audio::RirMode::UnitImpulse) << 63) |
      (static_cast<std::uint64_t>(source.x & 0xFFF) << 40) |
      (static_cast<std::uint64_t>(source.y & 0xFFF) << 28) |
      (static_cast<std::uint64_t>(listener.node.x & 0xFFF) << 16) |
      (static_cast<std::uint64_t>(listener.node.y & 0xFFF) << 4) |
      static_cast<std::uint64_t>(listener.heading);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  audio::ImpulseResponse rir =
      mode == audio::RirMode::UnitImpulse
          ? audio::unit_impulse_rir(source, listener)
          : audio::synth_rir(scene, source, listener, cfg, sample_rate);
  return cache_.emplace(key, std::move(rir)).first->second;
}

audio::Binaural render_audio(const world::Scene& scene,
                             const world::EpisodeState& state,
                             const audio::SoundBank& bank, const AudioConfig& cfg,
                             RirCache* cache) {
  const int k = static_cast<int>(bank.entries.size());
  if (state.target_category < 0 || state.target_category >= k ||
      state.attacker_category < 0 || state.attacker_category >= k) {
    throw std::invalid_argument("sound category outside the bank");
  }
  RirCache local;
  RirCache& rirs = cache ? *cache : local;

  const audio::ImpulseResponse& rir_target =
      rirs.get(scene, scene.goal(), state.agent, cfg.rir, bank.sample_rate,
               cfg.rir_mode);
  const audio::Binaural target =
      audio::render(bank.entries[state.target_category], rir_target);

  const double alpha = state.alpha();
  if (alpha == 0.0) {
    return audio::fit_length(target, cfg.chunk_samples);
  }
  const audio::ImpulseResponse& rir_attacker =
      rirs.get(scene, state.attacker.node, state.agent, cfg.rir,
               bank.sample_rate, cfg.rir_mode);
  const audio::Binaural attacker =
      audio::render(bank.entries[state.attacker_category], rir_attacker);
  return audio::fit_length(audio::mix_attack(target, attacker, alpha),
                           cfg.chunk_samples);
}

Observation make_observation(const world::Scene& scene,
                             const world::EpisodeState& state,
                             const audio::SoundBank& bank,
                             const VisualConfig& vcfg, const AudioConfig& acfg,
                             Rng& rng, RirCache* cache) {
  Observation obs;
  obs.visual = render_visual(scene, state.agent, vcfg, rng);
  audio::SpectrogramConfig scfg;
  scfg.stft = acfg.stft;
  scfg.downsample = acfg.downsample;
  scfg.log_compress = acfg.log_compress;
  obs.audio = audio::spectrogram_pipeline(
      render_audio(scene, state, bank, acfg, cache), scfg);
  return obs;
}

int observation_width(const VisualConfig& vcfg, const AudioConfig& acfg) {
  const int bins = acfg.stft.window / 2 + 1;
  const int frames = (acfg.chunk_samples - acfg.stft.window) / acfg.stft.hop + 1;
  const int ds = acfg.downsample;
  const int out_bins = (bins + ds - 1) / ds;
  const int out_frames = (frames + ds - 1) / ds;
  return vcfg.n_rays + out_bins * out_frames * 2;
}

std::vector<double> flatten(const Observation& obs) {
  std::vector<double> out;
  out.reserve(obs.visual.size() + obs.audio.values.size());
  out.insert(out.end(), obs.visual.begin(), obs.visual.end());
  out.insert(out.end(), obs.audio.values.begin(), obs.audio.values.end());
  return out;
}

// ---------------------------------------------------------------------------
// Observation dumps
// ---------------------------------------------------------------------------

namespace {

constexpr char kObsMagic[8] = {'S', 'A', 'V', 'N', 'O', 'B', 'S', '\0'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("observation dump truncated");
}

}  // namespace

void save_observations(const std::vector<Observation>& steps,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open dump for writing: " + path);
  out.write(kObsMagic, sizeof(kObsMagic));
  write_pod(out, std::uint32_t{1});
  write_pod(out, static_cast<std::uint32_t>(steps.size()));
  for (const Observation& o : steps) {
    write_pod(out, static_cast<std::uint32_t>(o.visual.size()));
    out.write(reinterpret_cast<const char*>(o.visual.data()),
              static_cast<std::streamsize>(o.visual.size() * sizeof(double)));
    write_pod(out, static_cast<std::uint32_t>(o.audio.bins));
    write_pod(out, static_cast<std::uint32_t>(o.audio.frames));
    write_pod(out, static_cast<std::uint32_t>(o.audio.channels));
    out.write(reinterpret_cast<const char*>(o.audio.values.data()),
              static_cast<std::streamsize>(o.audio.values.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("observation dump write failed: " + path);
}

std::vector<Observation> load_observations(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dump: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kObsMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not an observation dump: " + path);
  }
  std::uint32_t version = 0, count = 0;
  read_pod(in, version);
  if (version != 1) throw std::runtime_error("unsupported dump version");
  read_pod(in, count);
  std::vector<Observation> steps(count);
  for (auto& o : steps) {
    std::uint32_t nv = 0, bins = 0, frames = 0, channels = 0;
    read_pod(in, nv);
    o.visual.resize(nv);
    in.read(reinterpret_cast<char*>(o.visual.data()),
            static_cast<std::streamsize>(nv * sizeof(double)));
    read_pod(in, bins);
    read_pod(in, frames);
    read_pod(in, channels);
    o.audio.bins = static_cast<int>(bins);
    o.audio.frames = static_cast<int>(frames);
    o.audio.channels = static_cast<int>(channels);
    o.audio.values.resize(static_cast<std::size_t>(bins) * frames * channels);
    in.read(reinterpret_cast<char*>(o.audio.values.data()),
            static_cast<std::streamsize>(o.audio.values.size() * sizeof(double)));
    if (!in) throw std::runtime_error("observation dump truncated");
  }
  return steps;
}

}  // namespace savn::sensors

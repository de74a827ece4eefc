#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "savn/rng.hpp"
#include "savn/world.hpp"

namespace savn::audio {

// ---------------------------------------------------------------------------
// Signals
// ---------------------------------------------------------------------------

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 8000;
};

struct Binaural {
  Waveform left;
  Waveform right;
};

// Truncates or zero-pads to exactly `n` samples (shape-stable rendering).
Waveform fit_length(const Waveform& w, std::size_t n);
Binaural fit_length(const Binaural& b, std::size_t n);

struct ImpulseResponse {
  std::vector<double> left;   // taps, same length as right
  std::vector<double> right;
  world::Cell source{};
  world::Cell listener{};
  world::Heading listener_heading = world::Heading::North;
};

// ---------------------------------------------------------------------------
// Spectral analysis
// ---------------------------------------------------------------------------

struct StftConfig {
  int window = 64;  // Hann analysis window length (also the DFT size)
  int hop = 16;
};

// One-sided complex STFT: bins = window/2 + 1, frames = floor((len - window)/hop) + 1.
struct ComplexSpectrogram {
  int bins = 0;
  int frames = 0;
  std::vector<std::complex<double>> coeffs;  // indexed [frame * bins + bin]

  std::complex<double> at(int bin, int frame) const {
    return coeffs[static_cast<std::size_t>(frame) * bins + bin];
  }
};

struct SpectrogramConfig {
  StftConfig stft{};
  int downsample = 4;        // mean-pool factor on both axes (partial edge groups)
  bool log_compress = true;  // log(1 + x) on pooled magnitudes
};

// Pooled magnitude tensor, channels stacked last: [bins x frames x channels].
struct Spectrogram {
  int bins = 0;
  int frames = 0;
  int channels = 0;
  std::vector<double> values;  // indexed [(bin * frames + frame) * channels + ch]

  double at(int bin, int frame, int ch) const {
    return values[(static_cast<std::size_t>(bin) * frames + frame) * channels + ch];
  }
  std::size_t size() const { return values.size(); }
};

// Direct discrete Fourier transform of a real signal (any length). Used for
// the property suite; the STFT path uses a radix-2 transform internally.
std::vector<std::complex<double>> dft(const std::vector<double>& x);

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg);

// Sum of squared magnitudes over the stored one-sided coefficients. All
// spectral norms in this module use this convention.
double spectral_energy(const ComplexSpectrogram& s);

Spectrogram spectrogram_pipeline(const Binaural& b, const SpectrogramConfig& cfg);

// ---------------------------------------------------------------------------
// Convolution, rendering, mixing
// ---------------------------------------------------------------------------

// Full linear convolution; output length = len(s) + len(taps) - 1. Sparse tap
// vectors (few nonzeros) take a fast accumulation path.
Waveform convolve(const Waveform& s, const std::vector<double>& taps);

Binaural render(const Waveform& source, const ImpulseResponse& rir);

// Per channel: target + alpha * attacker, shorter side zero-padded. alpha = 0
// returns the target verbatim so a zero-volume attacker is bit-invisible.
Binaural mix_attack(const Binaural& target, const Binaural& attacker, double alpha);

// ---------------------------------------------------------------------------
// Observation distance (pre-log complex STFTs, per channel, summed)
// ---------------------------------------------------------------------------

struct SignalObservation {
  std::vector<double> visual;
  Binaural audio;
};

double observation_distance(const SignalObservation& a, const SignalObservation& b,
                            const StftConfig& cfg);

// ---------------------------------------------------------------------------
// Room impulse responses
// ---------------------------------------------------------------------------

struct RirConfig {
  double speed_of_sound = 343.0;   // length units per second
  double wall_attenuation = 0.3;   // gain factor when the direct path is occluded
  bool add_reflection = false;     // one first-order boundary reflection
  double reflection_gain = 0.5;
};

enum class RirMode { UnitImpulse, Geometric };

// First-order geometric model: direct-path delay (distance/speed), 1/max(1,d)
// gain, equal-power interaural level difference from the source bearing
// relative to the listener heading, optional single boundary reflection.
ImpulseResponse synth_rir(const world::Scene& scene, world::Cell source,
                          world::Pose listener, const RirConfig& cfg,
                          int sample_rate);

ImpulseResponse unit_impulse_rir(world::Cell source, world::Pose listener);

// ---------------------------------------------------------------------------
// Sound bank
// ---------------------------------------------------------------------------

struct SoundBank {
  int sample_rate = 8000;
  double energy_cap = 1.0;         // e: DFT-domain energy of every entry
  std::vector<Waveform> entries;   // category k at index k
};

// Procedural bank: tones, chirps, band-limited noise, square waves, cycled
// over categories with per-category frequencies. Every entry is scaled so its
// DFT-domain energy (N * sum x^2, by Parseval) equals `e` exactly.
SoundBank build_sound_bank(std::uint64_t seed, int n_categories, double e,
                           int sample_rate = 8000, int n_samples = 4000);

// Largest two-channel unit-impulse-render STFT energy over bank entries: the
// discrete energy cap the intervention bound is stated against.
double discrete_energy_cap(const SoundBank& bank, const StftConfig& cfg);

void save_bank(const SoundBank& bank, const std::string& path);
SoundBank load_bank(const std::string& path);

// ---------------------------------------------------------------------------
// Verification reports
// ---------------------------------------------------------------------------

struct FourierReport {
  int trials = 0;
  int failures = 0;
  double max_rel_linearity = 0.0;
  double max_rel_convolution = 0.0;
  double max_rel_parseval = 0.0;
  double max_abs_impulse = 0.0;
};

// Property suite over random signals: DFT/STFT linearity, the circular
// convolution theorem, discrete Parseval, and the unit-impulse spectrum.
FourierReport verify_fourier_properties(Rng& rng, int trials);

struct BoundReport {
  int trials = 0;
  int violations = 0;
  double e_disc = 0.0;
  double max_ratio = 0.0;  // max over trials of delta / (alpha * e_disc)
  double max_delta = 0.0;
  RirMode mode = RirMode::UnitImpulse;
};

// Samples random attacker configurations and checks the intervention bound
// delta <= alpha * e_disc + tol. Unit-impulse mode realizes the bound's
// hypotheses exactly; geometric mode is measured and reported only.
BoundReport verify_attack_bound(const world::Scene& scene, const SoundBank& bank,
                                int trials, double tol, RirMode mode, Rng& rng,
                                const StftConfig& stft_cfg, const RirConfig& rir_cfg);

}  // namespace savn::audio

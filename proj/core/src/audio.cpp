#include "savn/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace savn::audio {

static_assert(std::endian::native == std::endian::little,
              "bank container I/O assumes a little-endian host");

// ---------------------------------------------------------------------------
// Basic signal plumbing
// ---------------------------------------------------------------------------

Waveform fit_length(const Waveform& w, std::size_t n) {
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(n, 0.0);
  std::copy_n(w.samples.begin(), std::min(n, w.samples.size()), out.samples.begin());
  return out;
}

Binaural fit_length(const Binaural& b, std::size_t n) {
  return Binaural{fit_length(b.left, n), fit_length(b.right, n)};
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

namespace {

// Iterative radix-2 decimation-in-time FFT, in place. Size must be a power of
// two. Deterministic: no plan selection, no alignment dependence.
void fft_pow2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j |= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / static_cast<double>(n));
  }
  return w;
}

}  // namespace

std::vector<std::complex<double>> dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t m = 0; m < n; ++m) {
      const double ang = -2.0 * M_PI * static_cast<double>(k) *
                         static_cast<double>(m) / static_cast<double>(n);
      acc += x[m] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg) {
  const int window = cfg.window;
  const int hop = cfg.hop;
  if (window < 2 || hop < 1) {
    throw std::invalid_argument("stft needs window >= 2 and hop >= 1");
  }
  if (w.samples.size() < static_cast<std::size_t>(window)) {
    throw std::invalid_argument("signal shorter than the analysis window");
  }
  const int frames =
      static_cast<int>((w.samples.size() - window) / hop) + 1;
  const int bins = window / 2 + 1;

  ComplexSpectrogram out;
  out.bins = bins;
  out.frames = frames;
  out.coeffs.resize(static_cast<std::size_t>(bins) * frames);

  const std::vector<double> win = hann_window(window);
  std::vector<std::complex<double>> buf(window);
  const bool fast = is_pow2(window);
  std::vector<double> frame(window);

  for (int f = 0; f < frames; ++f) {
    const double* src = w.samples.data() + static_cast<std::size_t>(f) * hop;
    if (fast) {
      for (int i = 0; i < window; ++i) buf[i] = {src[i] * win[i], 0.0};
      fft_pow2(buf);
      for (int b = 0; b < bins; ++b) {
        out.coeffs[static_cast<std::size_t>(f) * bins + b] = buf[b];
      }
    } else {
      for (int i = 0; i < window; ++i) frame[i] = src[i] * win[i];
      const auto spec = dft(frame);
      for (int b = 0; b < bins; ++b) {
        out.coeffs[static_cast<std::size_t>(f) * bins + b] = spec[b];
      }
    }
  }
  return out;
}

double spectral_energy(const ComplexSpectrogram& s) {
  double acc = 0.0;
  for (const auto& c : s.coeffs) acc += std::norm(c);
  return acc;
}

Spectrogram spectrogram_pipeline(const Binaural& b, const SpectrogramConfig& cfg) {
  if (b.left.samples.size() != b.right.samples.size()) {
    throw std::invalid_argument("binaural channels must have equal length");
  }
  if (cfg.downsample < 1) {
    throw std::invalid_argument("downsample factor must be >= 1");
  }
  const ComplexSpectrogram specs[2] = {stft(b.left, cfg.stft),
                                       stft(b.right, cfg.stft)};
  const int ds = cfg.downsample;
  const int out_bins = (specs[0].bins + ds - 1) / ds;
  const int out_frames = (specs[0].frames + ds - 1) / ds;

  Spectrogram out;
  out.bins = out_bins;
  out.frames = out_frames;
  out.channels = 2;
  out.values.assign(static_cast<std::size_t>(out_bins) * out_frames * 2, 0.0);

  for (int ch = 0; ch < 2; ++ch) {
    const ComplexSpectrogram& s = specs[ch];
    for (int ob = 0; ob < out_bins; ++ob) {
      const int b0 = ob * ds;
      const int b1 = std::min(b0 + ds, s.bins);
      for (int of = 0; of < out_frames; ++of) {
        const int f0 = of * ds;
        const int f1 = std::min(f0 + ds, s.frames);
        double acc = 0.0;
        for (int bb = b0; bb < b1; ++bb) {
          for (int ff = f0; ff < f1; ++ff) {
            acc += std::abs(s.at(bb, ff));
          }
        }
        double pooled = acc / static_cast<double>((b1 - b0) * (f1 - f0));
        if (cfg.log_compress) pooled = std::log1p(pooled);
        out.values[(static_cast<std::size_t>(ob) * out_frames + of) * 2 + ch] =
            pooled;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution / rendering / mixing
// ---------------------------------------------------------------------------

Waveform convolve(const Waveform& s, const std::vector<double>& taps) {
  if (s.samples.empty() || taps.empty()) {
    throw std::invalid_argument("convolution operands must be nonempty");
  }
  Waveform out;
  out.sample_rate = s.sample_rate;
  out.samples.assign(s.samples.size() + taps.size() - 1, 0.0);

  // Impulse responses here are a handful of nonzero taps in a long delay
  // line; accumulating only those is much cheaper than the dense loop.
  std::vector<std::pair<std::size_t, double>> sparse;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    if (taps[i] != 0.0) {
      sparse.emplace_back(i, taps[i]);
      if (sparse.size() > 32) break;
    }
  }
  if (sparse.size() <= 32) {
    for (const auto& [off, g] : sparse) {
      for (std::size_t i = 0; i < s.samples.size(); ++i) {
        out.samples[off + i] += g * s.samples[i];
      }
    }
    return out;
  }
  for (std::size_t i = 0; i < s.samples.size(); ++i) {
    const double x = s.samples[i];
    for (std::size_t j = 0; j < taps.size(); ++j) {
      out.samples[i + j] += x * taps[j];
    }
  }
  return out;
}

Binaural render(const Waveform& source, const ImpulseResponse& rir) {
  return Binaural{convolve(source, rir.left), convolve(source, rir.right)};
}

Binaural mix_attack(const Binaural& target, const Binaural& attacker, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in [0, 1]");
  }
  const std::size_t n = std::max(target.left.samples.size(),
                                 attacker.left.samples.size());
  Binaural out = fit_length(target, n);
  if (alpha == 0.0) return out;  // a silent attacker is bit-invisible
  const Binaural att = fit_length(attacker, n);
  for (std::size_t i = 0; i < n; ++i) {
    out.left.samples[i] += alpha * att.left.samples[i];
    out.right.samples[i] += alpha * att.right.samples[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Observation distance
// ---------------------------------------------------------------------------

double observation_distance(const SignalObservation& a, const SignalObservation& b,
                            const StftConfig& cfg) {
  if (a.visual.size() != b.visual.size()) {
    throw std::invalid_argument("visual vectors differ in shape");
  }
  if (a.audio.left.samples.size() != b.audio.left.samples.size() ||
      a.audio.right.samples.size() != b.audio.right.samples.size()) {
    throw std::invalid_argument("audio signals differ in shape");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < a.visual.size(); ++i) {
    const double d = a.visual[i] - b.visual[i];
    total += d * d;
  }
  const Waveform* lhs[2] = {&a.audio.left, &a.audio.right};
  const Waveform* rhs[2] = {&b.audio.left, &b.audio.right};
  for (int ch = 0; ch < 2; ++ch) {
    const ComplexSpectrogram sa = stft(*lhs[ch], cfg);
    const ComplexSpectrogram sb = stft(*rhs[ch], cfg);
    for (std::size_t i = 0; i < sa.coeffs.size(); ++i) {
      total += std::norm(sa.coeffs[i] - sb.coeffs[i]);
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Impulse responses
// ---------------------------------------------------------------------------

namespace {

// True when the open segment between the two cell centers crosses no wall.
bool line_of_sight(const world::Scene& scene, world::Cell a, world::Cell b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double dist = std::hypot(dx, dy);
  if (dist == 0.0) return true;
  const int steps = static_cast<int>(std::ceil(dist * 4.0));
  for (int i = 1; i < steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const world::Cell c{static_cast<int>(std::lround(a.x + t * dx)),
                        static_cast<int>(std::lround(a.y + t * dy))};
    if (scene.is_wall(c)) return false;
  }
  return true;
}

struct Tap {
  std::int64_t delay = 0;
  double left = 0.0;
  double right = 0.0;
};

// Equal-power interaural split of `gain` given the source bearing relative to
// the listener heading (positive bearing = source to the listener's left).
Tap make_tap(double sx, double sy, const world::Pose& listener, double gain,
             double distance, double speed, int sample_rate) {
  double gl, gr;
  if (distance == 0.0) {
    gl = gr = std::sqrt(0.5);
  } else {
    // Grid y grows southward; flip to the math convention for bearings.
    const double theta = std::atan2(-(sy - listener.node.y), sx - listener.node.x);
    const double bearing = theta - world::heading_angle(listener.heading);
    const double s = std::sin(bearing);
    gl = std::sqrt((1.0 + s) / 2.0);
    gr = std::sqrt((1.0 - s) / 2.0);
  }
  Tap t;
  t.delay = std::llround(distance / speed * sample_rate);
  t.left = gain * gl;
  t.right = gain * gr;
  return t;
}

}  // namespace

ImpulseResponse synth_rir(const world::Scene& scene, world::Cell source,
                          world::Pose listener, const RirConfig& cfg,
                          int sample_rate) {
  if (!scene.is_free(source) || !scene.is_free(listener.node)) {
    throw std::invalid_argument("source and listener must be free cells");
  }
  if (sample_rate <= 0) throw std::invalid_argument("sample rate must be positive");

  std::vector<Tap> taps;
  const double res = scene.resolution();
  const double dist =
      std::hypot(source.x - listener.node.x, source.y - listener.node.y) * res;
  double gain = 1.0 / std::max(1.0, dist);
  if (!line_of_sight(scene, source, listener.node)) gain *= cfg.wall_attenuation;
  taps.push_back(make_tap(source.x, source.y, listener, gain, dist,
                          cfg.speed_of_sound, sample_rate));

  if (cfg.add_reflection) {
    // Image sources across the four boundary planes (cell centers sit at
    // integer coordinates, so the walls lie half a cell outside them).
    const double planes[4][2] = {
        {0, -0.5},
        {0, scene.width() - 0.5},
        {1, -0.5},
        {1, scene.height() - 0.5},
    };
    double best = -1.0;
    double bx = 0.0, by = 0.0;
    for (const auto& p : planes) {
      double ix = source.x, iy = source.y;
      if (p[0] == 0) {
        ix = 2.0 * p[1] - source.x;
      } else {
        iy = 2.0 * p[1] - source.y;
      }
      const double d =
          std::hypot(ix - listener.node.x, iy - listener.node.y) * res;
      if (best < 0.0 || d < best) {
        best = d;
        bx = ix;
        by = iy;
      }
    }
    const double rgain = cfg.reflection_gain / std::max(1.0, best);
    taps.push_back(make_tap(bx, by, listener, rgain, best, cfg.speed_of_sound,
                            sample_rate));
  }

  std::int64_t max_delay = 0;
  for (const Tap& t : taps) max_delay = std::max(max_delay, t.delay);

  ImpulseResponse rir;
  rir.source = source;
  rir.listener = listener.node;
  rir.listener_heading = listener.heading;
  rir.left.assign(max_delay + 1, 0.0);
  rir.right.assign(max_delay + 1, 0.0);
  for (const Tap& t : taps) {
    rir.left[t.delay] += t.left;
    rir.right[t.delay] += t.right;
  }
  return rir;
}

ImpulseResponse unit_impulse_rir(world::Cell source, world::Pose listener) {
  ImpulseResponse rir;
  rir.source = source;
  rir.listener = listener.node;
  rir.listener_heading = listener.heading;
  rir.left = {1.0};
  rir.right = {1.0};
  return rir;
}

// ---------------------------------------------------------------------------
// Sound bank
// ---------------------------------------------------------------------------

SoundBank build_sound_bank(std::uint64_t seed, int n_categories, double e,
                           int sample_rate, int n_samples) {
  if (n_categories < 2) {
    throw std::invalid_argument("sound bank needs at least two categories");
  }
  if (e <= 0.0) throw std::invalid_argument("energy cap must be positive");
  if (n_samples < 16) throw std::invalid_argument("bank entries too short");

  SoundBank bank;
  bank.sample_rate = sample_rate;
  bank.energy_cap = e;
  bank.entries.reserve(n_categories);

  const double fmax = 0.4 * sample_rate;
  for (int k = 0; k < n_categories; ++k) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(k), 0xBA4E);
    const double f0 = 100.0 + std::fmod(137.0 * k, fmax - 100.0);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    Waveform w;
    w.sample_rate = sample_rate;
    w.samples.resize(n_samples);
    switch (k % 4) {
      case 0:  // pure tone
        for (int i = 0; i < n_samples; ++i) {
          const double t = static_cast<double>(i) / sample_rate;
          w.samples[i] = std::sin(2.0 * M_PI * f0 * t + phase);
        }
        break;
      case 1: {  // linear chirp f0 -> f1
        const double f1 = std::min(fmax, 2.0 * f0);
        const double dur = static_cast<double>(n_samples) / sample_rate;
        for (int i = 0; i < n_samples; ++i) {
          const double t = static_cast<double>(i) / sample_rate;
          w.samples[i] =
              std::sin(2.0 * M_PI * (f0 * t + 0.5 * (f1 - f0) * t * t / dur) + phase);
        }
        break;
      }
      case 2: {  // band-limited noise: white noise through a moving average
        const int width = 2 + static_cast<int>((k / 4) % 6);
        std::vector<double> white(n_samples + width - 1);
        for (double& v : white) v = rng.normal();
        for (int i = 0; i < n_samples; ++i) {
          double acc = 0.0;
          for (int j = 0; j < width; ++j) acc += white[i + j];
          w.samples[i] = acc / width;
        }
        break;
      }
      case 3:  // square wave
        for (int i = 0; i < n_samples; ++i) {
          const double t = static_cast<double>(i) / sample_rate;
          w.samples[i] = std::sin(2.0 * M_PI * f0 * t + phase) >= 0.0 ? 1.0 : -1.0;
        }
        break;
    }
    // Parseval: DFT-domain energy is N * sum(x^2); scale it to exactly e.
    double ssq = 0.0;
    for (double v : w.samples) ssq += v * v;
    if (ssq <= 0.0) throw std::runtime_error("degenerate bank entry");
    const double scale = std::sqrt(e / (static_cast<double>(n_samples) * ssq));
    for (double& v : w.samples) v *= scale;
    bank.entries.push_back(std::move(w));
  }
  return bank;
}

double discrete_energy_cap(const SoundBank& bank, const StftConfig& cfg) {
  double cap = 0.0;
  for (const Waveform& w : bank.entries) {
    // Unit-impulse binaural render duplicates the waveform on both channels.
    cap = std::max(cap, 2.0 * spectral_energy(stft(w, cfg)));
  }
  return cap;
}

namespace {

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("bank file truncated");
}

constexpr char kBankMagic[8] = {'S', 'A', 'V', 'N', 'B', 'A', 'N', 'K'};

}  // namespace

void save_bank(const SoundBank& bank, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open bank file for writing: " + path);
  out.write(kBankMagic, sizeof(kBankMagic));
  write_pod(out, std::uint32_t{1});  // format version
  write_pod(out, static_cast<std::uint32_t>(bank.sample_rate));
  write_pod(out, static_cast<std::uint32_t>(bank.entries.size()));
  write_pod(out, bank.energy_cap);
  for (const Waveform& w : bank.entries) {
    write_pod(out, static_cast<std::uint64_t>(w.samples.size()));
    out.write(reinterpret_cast<const char*>(w.samples.data()),
              static_cast<std::streamsize>(w.samples.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("bank write failed: " + path);
}

SoundBank load_bank(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open bank file: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kBankMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not a sound bank file: " + path);
  }
  std::uint32_t version = 0, sample_rate = 0, count = 0;
  read_pod(in, version);
  if (version != 1) throw std::runtime_error("unsupported bank format version");
  read_pod(in, sample_rate);
  read_pod(in, count);
  SoundBank bank;
  bank.sample_rate = static_cast<int>(sample_rate);
  read_pod(in, bank.energy_cap);
  bank.entries.resize(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::uint64_t n = 0;
    read_pod(in, n);
    bank.entries[k].sample_rate = bank.sample_rate;
    bank.entries[k].samples.resize(n);
    in.read(reinterpret_cast<char*>(bank.entries[k].samples.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw std::runtime_error("bank file truncated");
  }
  return bank;
}

// ---------------------------------------------------------------------------
// Verification suites
// ---------------------------------------------------------------------------

namespace {

double rel_err(double diff_norm, double ref_norm) {
  return diff_norm / std::max(ref_norm, 1e-300);
}

double cnorm(const std::vector<std::complex<double>>& v) {
  double acc = 0.0;
  for (const auto& c : v) acc += std::norm(c);
  return std::sqrt(acc);
}

}  // namespace

FourierReport verify_fourier_properties(Rng& rng, int trials) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  FourierReport rep;
  rep.trials = trials;
  constexpr double kRelTol = 1e-6;
  constexpr double kStftAbsTol = 1e-9;

  for (int t = 0; t < trials; ++t) {
    const int n = 16 + static_cast<int>(rng.uniform_index(177));  // 16..192
    std::vector<double> a(n), b(n);
    for (double& v : a) v = rng.normal();
    for (double& v : b) v = rng.normal();
    const double c = rng.uniform(-2.0, 2.0);

    bool failed = false;

    // (a) Linearity: DFT(a + c b) = DFT(a) + c DFT(b).
    {
      std::vector<double> sum(n);
      for (int i = 0; i < n; ++i) sum[i] = a[i] + c * b[i];
      const auto lhs = dft(sum);
      auto fa = dft(a);
      const auto fb = dft(b);
      std::vector<std::complex<double>> diff(n);
      for (int i = 0; i < n; ++i) diff[i] = lhs[i] - (fa[i] + c * fb[i]);
      std::vector<std::complex<double>> ref(n);
      for (int i = 0; i < n; ++i) ref[i] = fa[i] + c * fb[i];
      const double e = rel_err(cnorm(diff), cnorm(ref));
      rep.max_rel_linearity = std::max(rep.max_rel_linearity, e);
      failed |= e > kRelTol;
    }

    // STFT additivity on complex coefficients (absolute tolerance).
    {
      const int len = 256;
      Waveform wa, wb, ws;
      wa.samples.resize(len);
      wb.samples.resize(len);
      ws.samples.resize(len);
      for (int i = 0; i < len; ++i) {
        wa.samples[i] = rng.normal();
        wb.samples[i] = rng.normal();
        ws.samples[i] = wa.samples[i] + wb.samples[i];
      }
      const StftConfig cfg{64, 16};
      const auto sa = stft(wa, cfg), sb = stft(wb, cfg), ss = stft(ws, cfg);
      double worst = 0.0;
      for (std::size_t i = 0; i < ss.coeffs.size(); ++i) {
        worst = std::max(worst,
                         std::abs(ss.coeffs[i] - sa.coeffs[i] - sb.coeffs[i]));
      }
      rep.max_rel_linearity = std::max(rep.max_rel_linearity, worst);
      failed |= worst > kStftAbsTol;
    }

    // (b) Circular convolution theorem: DFT(a (*) b) = DFT(a) . DFT(b).
    {
      std::vector<double> circ(n, 0.0);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) circ[(i + j) % n] += a[i] * b[j];
      }
      const auto lhs = dft(circ);
      const auto fa = dft(a);
      const auto fb = dft(b);
      std::vector<std::complex<double>> diff(n), ref(n);
      for (int i = 0; i < n; ++i) {
        ref[i] = fa[i] * fb[i];
        diff[i] = lhs[i] - ref[i];
      }
      const double e = rel_err(cnorm(diff), cnorm(ref));
      rep.max_rel_convolution = std::max(rep.max_rel_convolution, e);
      failed |= e > kRelTol;
    }

    // (c) Discrete Parseval: sum x^2 = (1/N) sum |X|^2.
    {
      double time_e = 0.0;
      for (double v : a) time_e += v * v;
      const auto fa = dft(a);
      double freq_e = 0.0;
      for (const auto& z : fa) freq_e += std::norm(z);
      freq_e /= n;
      const double e = rel_err(std::abs(time_e - freq_e), std::abs(time_e));
      rep.max_rel_parseval = std::max(rep.max_rel_parseval, e);
      failed |= e > kRelTol;
    }

    // (d) Unit impulse: delta at 0 transforms to the all-ones spectrum, and a
    // shifted delta keeps unit magnitude everywhere.
    {
      std::vector<double> imp(n, 0.0);
      imp[0] = 1.0;
      auto fi = dft(imp);
      double worst = 0.0;
      for (const auto& z : fi) {
        worst = std::max(worst, std::abs(z - std::complex<double>(1.0, 0.0)));
      }
      const int shift = 1 + static_cast<int>(rng.uniform_index(n - 1));
      std::vector<double> imp2(n, 0.0);
      imp2[shift] = 1.0;
      const auto fi2 = dft(imp2);
      for (const auto& z : fi2) {
        worst = std::max(worst, std::abs(std::abs(z) - 1.0));
      }
      rep.max_abs_impulse = std::max(rep.max_abs_impulse, worst);
      failed |= worst > kRelTol;
    }

    if (failed) ++rep.failures;
  }
  return rep;
}

BoundReport verify_attack_bound(const world::Scene& scene, const SoundBank& bank,
                                int trials, double tol, RirMode mode, Rng& rng,
                                const StftConfig& stft_cfg,
                                const RirConfig& rir_cfg) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (bank.entries.empty()) throw std::invalid_argument("empty sound bank");

  BoundReport rep;
  rep.trials = trials;
  rep.mode = mode;
  rep.e_disc = discrete_energy_cap(bank, stft_cfg);

  const auto& nodes = scene.nodes();
  for (int t = 0; t < trials; ++t) {
    world::Pose listener{nodes[rng.uniform_index(nodes.size())],
                         static_cast<world::Heading>(rng.uniform_index(4))};
    const world::Cell target_cell = nodes[rng.uniform_index(nodes.size())];
    const world::Cell attacker_cell = nodes[rng.uniform_index(nodes.size())];
    const int target_cat = static_cast<int>(rng.uniform_index(bank.entries.size()));
    const int attacker_cat = static_cast<int>(rng.uniform_index(bank.entries.size()));
    const double alpha =
        world::volume_value(static_cast<int>(rng.uniform_index(world::kVolumeLevels)));

    ImpulseResponse rir_target, rir_attacker;
    if (mode == RirMode::UnitImpulse) {
      rir_target = unit_impulse_rir(target_cell, listener);
      rir_attacker = unit_impulse_rir(attacker_cell, listener);
    } else {
      rir_target = synth_rir(scene, target_cell, listener, rir_cfg,
                             bank.sample_rate);
      rir_attacker = synth_rir(scene, attacker_cell, listener, rir_cfg,
                               bank.sample_rate);
    }

    const Binaural target_render = render(bank.entries[target_cat], rir_target);
    const Binaural attacker_render =
        render(bank.entries[attacker_cat], rir_attacker);
    const std::size_t n = std::max(target_render.left.samples.size(),
                                   attacker_render.left.samples.size());

    // Same pose on both sides: the visual term cancels identically (the
    // attacker is invisible), leaving only the audio intervention.
    SignalObservation clean{{}, fit_length(target_render, n)};
    SignalObservation attacked{
        {}, mix_attack(target_render, attacker_render, alpha)};
    attacked.audio = fit_length(attacked.audio, n);

    const double delta = observation_distance(attacked, clean, stft_cfg);
    rep.max_delta = std::max(rep.max_delta, delta);
    bool violated = delta > alpha * rep.e_disc + tol;
    // A zero-volume attacker must be exactly invisible, not just within tol.
    if (alpha == 0.0 && delta != 0.0) violated = true;
    if (violated) ++rep.violations;
    if (alpha > 0.0) {
      rep.max_ratio = std::max(rep.max_ratio, delta / (alpha * rep.e_disc));
    }
  }
  return rep;
}

}  // namespace savn::audio

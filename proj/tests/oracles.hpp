#pragma once

// Independent oracles for the test suite. Everything here recomputes the
// expected quantity from first principles (direct DFT, flood fill, Dijkstra,
// explicit double sums, central finite differences) without touching the
// code paths under test. Keep it that way: if an oracle ever delegates to
// the library, the tests stop proving anything.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <stdexcept>
#include <vector>

#include "savn/nn.hpp"
#include "savn/world.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Fourier
// ---------------------------------------------------------------------------

// O(N^2) direct DFT; the reference every fast transform is checked against.
inline std::vector<std::complex<double>> dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  const double two_pi = 6.283185307179586476925286766559;
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -two_pi * static_cast<double>(k) *
                         static_cast<double>(t) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

inline int stft_frames(int len, int window, int hop) {
  if (len < window) return 0;
  return (len - window) / hop + 1;
}

inline int stft_bins(int window) { return window / 2 + 1; }

inline int pooled(int n, int factor) { return (n + factor - 1) / factor; }

inline double hann(int i, int window) {
  const double two_pi = 6.283185307179586476925286766559;
  return 0.5 * (1.0 - std::cos(two_pi * static_cast<double>(i) /
                               static_cast<double>(window)));
}

// One-sided STFT energy (sum of |coefficient|^2 over kept bins) computed
// entirely with the direct DFT.
inline double stft_energy(const std::vector<double>& x, int window, int hop) {
  const int frames = stft_frames(static_cast<int>(x.size()), window, hop);
  const int bins = stft_bins(window);
  double total = 0.0;
  std::vector<double> frame(static_cast<std::size_t>(window));
  for (int f = 0; f < frames; ++f) {
    for (int i = 0; i < window; ++i) {
      frame[static_cast<std::size_t>(i)] =
          x[static_cast<std::size_t>(f * hop + i)] * hann(i, window);
    }
    const auto spec = dft(frame);
    for (int b = 0; b < bins; ++b) total += std::norm(spec[static_cast<std::size_t>(b)]);
  }
  return total;
}

// Spectral centroid (magnitude-weighted mean bin) of a raw signal.
inline double spectral_centroid(const std::vector<double>& x) {
  const auto spec = dft(x);
  const std::size_t bins = x.size() / 2 + 1;
  double num = 0.0, den = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double mag = std::abs(spec[b]);
    num += static_cast<double>(b) * mag;
    den += mag;
  }
  return den > 0.0 ? num / den : 0.0;
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

// Flood fill from the goal; true when every free cell is reachable.
inline bool connected(const savn::world::Scene& s) {
  const int w = s.width(), h = s.height();
  std::vector<char> seen(static_cast<std::size_t>(w) * h, 0);
  std::queue<savn::world::Cell> q;
  q.push(s.goal());
  seen[static_cast<std::size_t>(s.goal().y) * w + s.goal().x] = 1;
  int reached = 0;
  while (!q.empty()) {
    const auto c = q.front();
    q.pop();
    ++reached;
    const int dx[4] = {1, -1, 0, 0};
    const int dy[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const savn::world::Cell n{c.x + dx[k], c.y + dy[k]};
      if (!s.is_free(n)) continue;
      auto& flag = seen[static_cast<std::size_t>(n.y) * w + n.x];
      if (!flag) {
        flag = 1;
        q.push(n);
      }
    }
  }
  int free_cells = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (s.is_free({x, y})) ++free_cells;
    }
  }
  return reached == free_cells;
}

// Uniform-cost Dijkstra over free cells; returns the hop count or -1.
inline int dijkstra_cells(const savn::world::Scene& s, savn::world::Cell from,
                          savn::world::Cell to) {
  const int w = s.width(), h = s.height();
  std::vector<int> dist(static_cast<std::size_t>(w) * h, -1);
  using Item = std::pair<int, int>;  // (distance, index)
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  const auto idx = [w](savn::world::Cell c) {
    return static_cast<std::size_t>(c.y) * w + c.x;
  };
  if (!s.is_free(from) || !s.is_free(to)) return -1;
  dist[idx(from)] = 0;
  pq.push({0, static_cast<int>(idx(from))});
  while (!pq.empty()) {
    auto [d, i] = pq.top();
    pq.pop();
    if (d != dist[static_cast<std::size_t>(i)]) continue;
    const savn::world::Cell c{i % w, i / w};
    if (c == to) return d;
    const int dx[4] = {1, -1, 0, 0};
    const int dy[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const savn::world::Cell n{c.x + dx[k], c.y + dy[k]};
      if (!s.is_free(n)) continue;
      const auto j = idx(n);
      if (dist[j] == -1 || dist[j] > d + 1) {
        dist[j] = d + 1;
        pq.push({d + 1, static_cast<int>(j)});
      }
    }
  }
  return -1;
}

// ---------------------------------------------------------------------------
// Advantage estimation
// ---------------------------------------------------------------------------

// Brute-force double sum: A_t = sum_l (gamma*tau)^l * prod_{j=1..l}
// mask_{t+j} * delta_{t+l}, delta_u = r_u + gamma*mask_{u+1}*V_{u+1} - V_u.
// values and masks carry T+1 entries (bootstrap row included).
inline std::vector<double> gae_double_sum(const std::vector<double>& rewards,
                                          const std::vector<double>& values,
                                          const std::vector<double>& masks,
                                          double gamma, double tau) {
  const std::size_t T = rewards.size();
  if (values.size() != T + 1 || masks.size() != T + 1) {
    throw std::invalid_argument("gae oracle buffer sizes disagree");
  }
  std::vector<double> delta(T);
  for (std::size_t u = 0; u < T; ++u) {
    delta[u] = rewards[u] + gamma * masks[u + 1] * values[u + 1] - values[u];
  }
  std::vector<double> adv(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double scale = 1.0;
    for (std::size_t l = 0; t + l < T; ++l) {
      if (l > 0) {
        scale *= gamma * tau * masks[t + l];
        if (scale == 0.0) break;
      }
      adv[t] += scale * delta[t + l];
    }
  }
  return adv;
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

// Central finite difference of a scalar function at every parameter of a
// store, compared against the gradients the store currently holds. Returns
// the worst relative error (|analytic - numeric| / max(1e-12, |numeric|,
// |analytic|)).
inline double finite_difference_worst(
    savn::nn::ParameterStore& store, const std::function<double()>& loss,
    double h = 1e-5) {
  double worst = 0.0;
  for (const auto& name : store.names()) {
    auto& tensor = store.at(name);
    for (std::size_t i = 0; i < tensor.v.size(); ++i) {
      const double saved = tensor.v[i];
      tensor.v[i] = saved + h;
      const double up = loss();
      tensor.v[i] = saved - h;
      const double down = loss();
      tensor.v[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = tensor.g[i];
      const double scale =
          std::max({1e-12, std::abs(numeric), std::abs(analytic)});
      worst = std::max(worst, std::abs(analytic - numeric) / scale);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

inline double chi_square_uniform(const std::vector<std::int64_t>& counts) {
  std::int64_t total = 0;
  for (auto c : counts) total += c;
  const double expected =
      static_cast<double>(total) / static_cast<double>(counts.size());
  double stat = 0.0;
  for (auto c : counts) {
    const double d = static_cast<double>(c) - expected;
    stat += d * d / expected;
  }
  return stat;
}

// 0.999 quantiles of the chi-square distribution, transcribed from standard
// tables for the degrees of freedom the suite uses.
inline double chi_square_q999(int df) {
  static const std::map<int, double> table = {
      {1, 10.828}, {2, 13.816}, {3, 16.266},  {5, 20.515},
      {7, 24.322}, {9, 27.877}, {10, 29.588}, {15, 37.697},
  };
  const auto it = table.find(df);
  if (it == table.end()) {
    throw std::invalid_argument("no tabulated chi-square quantile for df");
  }
  return it->second;
}

// E|X| for X ~ N(0, std): std * sqrt(2/pi).
inline double gaussian_mad(double std_dev) {
  return std_dev * std::sqrt(2.0 / 3.14159265358979323846);
}

}  // namespace oracle

#include "savn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace savn::nn {

// ---------------------------------------------------------------------------
// ParameterStore
// ---------------------------------------------------------------------------

Tensor& ParameterStore::create(const std::string& name, std::vector<int> shape) {
  if (entries_.count(name)) throw std::logic_error("duplicate parameter: " + name);
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("nonpositive dim in " + name);
    n *= static_cast<std::size_t>(d);
  }
  Entry& e = entries_[name];
  e.t.shape = std::move(shape);
  e.t.v.assign(n, 0.0);
  e.t.g.assign(n, 0.0);
  e.m.assign(n, 0.0);
  e.v.assign(n, 0.0);
  return e.t;
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("no parameter: " + name);
  return it->second.t;
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("no parameter: " + name);
  return it->second.t;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, _] : entries_) out.push_back(k);
  return out;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.t.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, e] : entries_) std::fill(e.t.g.begin(), e.t.g.end(), 0.0);
}

double ParameterStore::global_grad_norm() const {
  double acc = 0.0;
  for (const auto& [_, e] : entries_) {
    for (double g : e.t.g) acc += g * g;
  }
  return std::sqrt(acc);
}

double ParameterStore::clip_global_norm(double max_norm) {
  for (const auto& [name, e] : entries_) {
    for (double g : e.t.g) {
      if (!std::isfinite(g)) {
        throw std::runtime_error("non-finite gradient in parameter: " + name);
      }
    }
  }
  const double norm = global_grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& [_, e] : entries_) {
      for (double& g : e.t.g) g *= s;
    }
  }
  return norm;
}

void ParameterStore::scale_grads(double factor) {
  for (auto& [_, e] : entries_) {
    for (double& g : e.t.g) g *= factor;
  }
}

void ParameterStore::adam_step(double lr, double beta1, double beta2, double eps) {
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (auto& [name, e] : entries_) {
    for (std::size_t i = 0; i < e.t.size(); ++i) {
      const double g = e.t.g[i];
      if (!std::isfinite(g)) {
        throw std::runtime_error("non-finite gradient in parameter: " + name);
      }
      e.m[i] = beta1 * e.m[i] + (1.0 - beta1) * g;
      e.v[i] = beta2 * e.v[i] + (1.0 - beta2) * g * g;
      const double mhat = e.m[i] / bc1;
      const double vhat = e.v[i] / bc2;
      e.t.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

namespace {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint stream truncated");
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  std::uint32_t n = 0;
  read_pod(in, n);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("checkpoint stream truncated");
  return s;
}

void write_doubles(std::ostream& out, const std::vector<double>& v) {
  write_pod(out, static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::istream& in) {
  std::uint64_t n = 0;
  read_pod(in, n);
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint stream truncated");
  return v;
}

}  // namespace

void ParameterStore::save(std::ostream& out) const {
  write_pod(out, static_cast<std::int64_t>(step_));
  write_pod(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, e] : entries_) {
    write_string(out, name);
    write_pod(out, static_cast<std::uint32_t>(e.t.shape.size()));
    for (int d : e.t.shape) write_pod(out, static_cast<std::uint32_t>(d));
    write_doubles(out, e.t.v);
    write_doubles(out, e.m);
    write_doubles(out, e.v);
  }
}

void ParameterStore::load(std::istream& in) {
  entries_.clear();
  read_pod(in, step_);
  std::uint32_t count = 0;
  read_pod(in, count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(in);
    std::uint32_t ndim = 0;
    read_pod(in, ndim);
    std::vector<int> shape(ndim);
    for (auto& d : shape) {
      std::uint32_t u = 0;
      read_pod(in, u);
      d = static_cast<int>(u);
    }
    Entry& e = entries_[name];
    e.t.shape = std::move(shape);
    e.t.v = read_doubles(in);
    e.m = read_doubles(in);
    e.v = read_doubles(in);
    e.t.g.assign(e.t.v.size(), 0.0);
    if (e.m.size() != e.t.v.size() || e.v.size() != e.t.v.size()) {
      throw std::runtime_error("moment/parameter size mismatch in " + name);
    }
  }
}

void scaled_uniform_init(Tensor& w, int fan_in, int fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& x : w.v) x = rng.uniform(-a, a);
}

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

void dense_forward(const Tensor& w, const Tensor& b, const double* x, double* y) {
  const int out = w.rows();
  const int in = w.cols();
  if (b.size() != static_cast<std::size_t>(out)) {
    throw std::invalid_argument("bias size does not match weight rows");
  }
  for (int o = 0; o < out; ++o) {
    const double* row = w.v.data() + static_cast<std::size_t>(o) * in;
    double acc = b.v[o];
    for (int i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

void dense_backward(Tensor& w, Tensor& b, const double* x, const double* dy,
                    double* dx) {
  const int out = w.rows();
  const int in = w.cols();
  for (int o = 0; o < out; ++o) {
    const double d = dy[o];
    b.g[o] += d;
    double* grow = w.g.data() + static_cast<std::size_t>(o) * in;
    const double* row = w.v.data() + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) {
      grow[i] += d * x[i];
      if (dx) dx[i] += row[i] * d;
    }
  }
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y += W[block] x where W is [3H x I] and block selects H rows.
void gate_matvec(const Tensor& w, int block, int hidden, int in, const double* x,
                 double* y) {
  for (int o = 0; o < hidden; ++o) {
    const double* row =
        w.v.data() + static_cast<std::size_t>(block * hidden + o) * in;
    double acc = 0.0;
    for (int i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] += acc;
  }
}

// Accumulate dW[block] += dy outer x and dx += W[block]^T dy.
void gate_matvec_backward(Tensor& w, int block, int hidden, int in,
                          const double* x, const double* dy, double* dx) {
  for (int o = 0; o < hidden; ++o) {
    const std::size_t off = static_cast<std::size_t>(block * hidden + o) * in;
    const double d = dy[o];
    for (int i = 0; i < in; ++i) {
      w.g[off + i] += d * x[i];
      if (dx) dx[i] += w.v[off + i] * d;
    }
  }
}

}  // namespace

void gru_forward(const GruParams& p, const double* x, const double* h_prev,
                 double* h_out, GruCache* cache) {
  const int h = p.hidden;
  const int in = p.input;
  std::vector<double> pre_r(h), pre_z(h), pre_n(h), q(h);
  for (int i = 0; i < h; ++i) {
    pre_r[i] = p.b_ih->v[0 * h + i] + p.b_hh->v[0 * h + i];
    pre_z[i] = p.b_ih->v[1 * h + i] + p.b_hh->v[1 * h + i];
    pre_n[i] = p.b_ih->v[2 * h + i];
    q[i] = p.b_hh->v[2 * h + i];
  }
  gate_matvec(*p.w_ih, 0, h, in, x, pre_r.data());
  gate_matvec(*p.w_hh, 0, h, h, h_prev, pre_r.data());
  gate_matvec(*p.w_ih, 1, h, in, x, pre_z.data());
  gate_matvec(*p.w_hh, 1, h, h, h_prev, pre_z.data());
  gate_matvec(*p.w_ih, 2, h, in, x, pre_n.data());
  gate_matvec(*p.w_hh, 2, h, h, h_prev, q.data());

  std::vector<double> r(h), z(h), n(h);
  for (int i = 0; i < h; ++i) {
    r[i] = sigmoid(pre_r[i]);
    z[i] = sigmoid(pre_z[i]);
    n[i] = std::tanh(pre_n[i] + r[i] * q[i]);
    h_out[i] = (1.0 - z[i]) * n[i] + z[i] * h_prev[i];
  }
  if (cache) {
    cache->x.assign(x, x + in);
    cache->h_prev.assign(h_prev, h_prev + h);
    cache->r = std::move(r);
    cache->z = std::move(z);
    cache->n = std::move(n);
    cache->q = std::move(q);
  }
}

void gru_backward(GruParams& p, const GruCache& c, const double* dh,
                  double* dx, double* dh_prev) {
  const int h = p.hidden;
  const int in = p.input;
  std::vector<double> da_r(h), da_z(h), da_n(h), dq(h);
  std::vector<double> dh_local(h, 0.0);
  for (int i = 0; i < h; ++i) {
    const double dn = dh[i] * (1.0 - c.z[i]);
    const double dz = dh[i] * (c.h_prev[i] - c.n[i]);
    dh_local[i] += dh[i] * c.z[i];
    const double dan = dn * (1.0 - c.n[i] * c.n[i]);
    da_n[i] = dan;
    const double dr = dan * c.q[i];
    dq[i] = dan * c.r[i];
    da_z[i] = dz * c.z[i] * (1.0 - c.z[i]);
    da_r[i] = dr * c.r[i] * (1.0 - c.r[i]);
  }
  // Bias gradients.
  for (int i = 0; i < h; ++i) {
    p.b_ih->g[0 * h + i] += da_r[i];
    p.b_hh->g[0 * h + i] += da_r[i];
    p.b_ih->g[1 * h + i] += da_z[i];
    p.b_hh->g[1 * h + i] += da_z[i];
    p.b_ih->g[2 * h + i] += da_n[i];
    p.b_hh->g[2 * h + i] += dq[i];
  }
  gate_matvec_backward(*p.w_ih, 0, h, in, c.x.data(), da_r.data(), dx);
  gate_matvec_backward(*p.w_hh, 0, h, h, c.h_prev.data(), da_r.data(),
                       dh_local.data());
  gate_matvec_backward(*p.w_ih, 1, h, in, c.x.data(), da_z.data(), dx);
  gate_matvec_backward(*p.w_hh, 1, h, h, c.h_prev.data(), da_z.data(),
                       dh_local.data());
  gate_matvec_backward(*p.w_ih, 2, h, in, c.x.data(), da_n.data(), dx);
  gate_matvec_backward(*p.w_hh, 2, h, h, c.h_prev.data(), dq.data(),
                       dh_local.data());
  if (dh_prev) {
    for (int i = 0; i < h; ++i) dh_prev[i] += dh_local[i];
  }
}

std::vector<double> softmax(const std::vector<double>& logits) {
  for (double l : logits) {
    if (!std::isfinite(l)) throw std::invalid_argument("non-finite logit");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double entropy(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

int sample_categorical(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;  // guard against rounding
}

int argmax(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

void add_logprob_grad(const std::vector<double>& probs, int action, double coeff,
                      std::vector<double>& dlogits) {
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double ind = static_cast<int>(i) == action ? 1.0 : 0.0;
    dlogits[i] += coeff * (ind - probs[i]);
  }
}

void add_entropy_grad(const std::vector<double>& probs, double coeff,
                      std::vector<double>& dlogits) {
  const double h = entropy(probs);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) {
      dlogits[i] += -coeff * probs[i] * (std::log(probs[i]) + h);
    }
  }
}

// ---------------------------------------------------------------------------
// PolicyNetwork
// ---------------------------------------------------------------------------

PolicyNetwork::PolicyNetwork(ParameterStore& store, std::string prefix,
                             EncoderConfig cfg, std::vector<int> head_sizes,
                             Rng& init_rng)
    : store_(store),
      prefix_(std::move(prefix)),
      cfg_(cfg),
      head_sizes_(std::move(head_sizes)) {
  if (cfg_.visual_dim <= 0 || cfg_.audio_dim <= 0) {
    throw std::invalid_argument("encoder needs positive branch input widths");
  }
  if (cfg_.fusion == Fusion::ElementwiseMultiply &&
      cfg_.visual_hidden != cfg_.audio_hidden) {
    throw std::invalid_argument(
        "elementwise fusion requires equal branch widths");
  }
  if (head_sizes_.empty()) throw std::invalid_argument("need at least one head");
  fused_dim_ = cfg_.fusion == Fusion::Concatenate
                   ? cfg_.visual_hidden + cfg_.audio_hidden
                   : cfg_.visual_hidden;

  auto make_dense = [&](const std::string& name, int out, int in) {
    Tensor& w = store_.create(prefix_ + name + ".w", {out, in});
    scaled_uniform_init(w, in, out, init_rng);
    store_.create(prefix_ + name + ".b", {out});
  };
  make_dense("vis1", cfg_.visual_hidden, cfg_.visual_dim);
  make_dense("vis2", cfg_.visual_hidden, cfg_.visual_hidden);
  make_dense("aud1", cfg_.audio_hidden, cfg_.audio_dim);
  make_dense("aud2", cfg_.audio_hidden, cfg_.audio_hidden);

  const int h = cfg_.gru_hidden;
  Tensor& w_ih = store_.create(prefix_ + "gru.w_ih", {3 * h, fused_dim_});
  scaled_uniform_init(w_ih, fused_dim_, h, init_rng);
  Tensor& w_hh = store_.create(prefix_ + "gru.w_hh", {3 * h, h});
  scaled_uniform_init(w_hh, h, h, init_rng);
  store_.create(prefix_ + "gru.b_ih", {3 * h});
  store_.create(prefix_ + "gru.b_hh", {3 * h});

  for (std::size_t k = 0; k < head_sizes_.size(); ++k) {
    make_dense("head" + std::to_string(k), head_sizes_[k], h);
    make_dense("value" + std::to_string(k), 1, h);
  }
}

std::size_t PolicyNetwork::expected_parameter_count(
    const EncoderConfig& cfg, const std::vector<int>& head_sizes) {
  const int fused = cfg.fusion == Fusion::Concatenate
                        ? cfg.visual_hidden + cfg.audio_hidden
                        : cfg.visual_hidden;
  std::size_t n = 0;
  auto dense = [](int out, int in) {
    return static_cast<std::size_t>(out) * in + out;
  };
  n += dense(cfg.visual_hidden, cfg.visual_dim);
  n += dense(cfg.visual_hidden, cfg.visual_hidden);
  n += dense(cfg.audio_hidden, cfg.audio_dim);
  n += dense(cfg.audio_hidden, cfg.audio_hidden);
  const int h = cfg.gru_hidden;
  n += static_cast<std::size_t>(3 * h) * fused + 3 * h;  // w_ih + b_ih
  n += static_cast<std::size_t>(3 * h) * h + 3 * h;      // w_hh + b_hh
  for (int hs : head_sizes) {
    n += dense(hs, h);
    n += dense(1, h);
  }
  return n;
}

namespace {

void tanh_inplace(std::vector<double>& v) {
  for (double& x : v) x = std::tanh(x);
}

}  // namespace

StepOutput PolicyNetwork::forward(const double* obs, const double* h_prev,
                                  double* h_out, StepCache* cache) const {
  const int vd = cfg_.visual_dim;
  const int ad = cfg_.audio_dim;
  std::vector<double> v1(cfg_.visual_hidden), v2(cfg_.visual_hidden);
  std::vector<double> a1(cfg_.audio_hidden), a2(cfg_.audio_hidden);

  dense_forward(store_.at(prefix_ + "vis1.w"), store_.at(prefix_ + "vis1.b"),
                obs, v1.data());
  tanh_inplace(v1);
  dense_forward(store_.at(prefix_ + "vis2.w"), store_.at(prefix_ + "vis2.b"),
                v1.data(), v2.data());
  tanh_inplace(v2);
  dense_forward(store_.at(prefix_ + "aud1.w"), store_.at(prefix_ + "aud1.b"),
                obs + vd, a1.data());
  tanh_inplace(a1);
  dense_forward(store_.at(prefix_ + "aud2.w"), store_.at(prefix_ + "aud2.b"),
                a1.data(), a2.data());
  tanh_inplace(a2);

  std::vector<double> fused(fused_dim_);
  if (cfg_.fusion == Fusion::Concatenate) {
    std::copy(v2.begin(), v2.end(), fused.begin());
    std::copy(a2.begin(), a2.end(), fused.begin() + cfg_.visual_hidden);
  } else {
    for (int i = 0; i < fused_dim_; ++i) fused[i] = v2[i] * a2[i];
  }

  GruParams gp;
  // forward only reads the tensors; the const_cast is confined here so the
  // same GruParams plumbing serves forward and backward.
  auto& ncstore = const_cast<ParameterStore&>(store_);
  gp.w_ih = &ncstore.at(prefix_ + "gru.w_ih");
  gp.w_hh = &ncstore.at(prefix_ + "gru.w_hh");
  gp.b_ih = &ncstore.at(prefix_ + "gru.b_ih");
  gp.b_hh = &ncstore.at(prefix_ + "gru.b_hh");
  gp.input = fused_dim_;
  gp.hidden = cfg_.gru_hidden;
  gru_forward(gp, fused.data(), h_prev, h_out, cache ? &cache->gru : nullptr);

  StepOutput out;
  out.logits.resize(head_sizes_.size());
  out.probs.resize(head_sizes_.size());
  out.values.resize(head_sizes_.size());
  for (std::size_t k = 0; k < head_sizes_.size(); ++k) {
    out.logits[k].resize(head_sizes_[k]);
    dense_forward(store_.at(prefix_ + "head" + std::to_string(k) + ".w"),
                  store_.at(prefix_ + "head" + std::to_string(k) + ".b"), h_out,
                  out.logits[k].data());
    out.probs[k] = softmax(out.logits[k]);
    double v = 0.0;
    dense_forward(store_.at(prefix_ + "value" + std::to_string(k) + ".w"),
                  store_.at(prefix_ + "value" + std::to_string(k) + ".b"),
                  h_out, &v);
    out.values[k] = v;
  }

  if (cache) {
    cache->obs.assign(obs, obs + vd + ad);
    cache->v1 = std::move(v1);
    cache->v2 = std::move(v2);
    cache->a1 = std::move(a1);
    cache->a2 = std::move(a2);
    cache->fused = std::move(fused);
    cache->h_out.assign(h_out, h_out + cfg_.gru_hidden);
    cache->logits = out.logits;
    cache->probs = out.probs;
    cache->values = out.values;
  }
  return out;
}

void PolicyNetwork::backward(const StepCache& c,
                             const std::vector<std::vector<double>>& dlogits,
                             const std::vector<double>& dvalues,
                             const double* dh_next, double* dh_prev) {
  const int h = cfg_.gru_hidden;
  std::vector<double> dh(h, 0.0);
  if (dh_next) dh.assign(dh_next, dh_next + h);

  for (std::size_t k = 0; k < head_sizes_.size(); ++k) {
    if (!dlogits[k].empty()) {
      dense_backward(store_.at(prefix_ + "head" + std::to_string(k) + ".w"),
                     store_.at(prefix_ + "head" + std::to_string(k) + ".b"),
                     c.h_out.data(), dlogits[k].data(), dh.data());
    }
    if (dvalues[k] != 0.0) {
      const double dv = dvalues[k];
      dense_backward(store_.at(prefix_ + "value" + std::to_string(k) + ".w"),
                     store_.at(prefix_ + "value" + std::to_string(k) + ".b"),
                     c.h_out.data(), &dv, dh.data());
    }
  }

  GruParams gp;
  gp.w_ih = &store_.at(prefix_ + "gru.w_ih");
  gp.w_hh = &store_.at(prefix_ + "gru.w_hh");
  gp.b_ih = &store_.at(prefix_ + "gru.b_ih");
  gp.b_hh = &store_.at(prefix_ + "gru.b_hh");
  gp.input = fused_dim_;
  gp.hidden = h;
  std::vector<double> dfused(fused_dim_, 0.0);
  gru_backward(gp, c.gru, dh.data(), dfused.data(), dh_prev);

  std::vector<double> dv2(cfg_.visual_hidden, 0.0), da2(cfg_.audio_hidden, 0.0);
  if (cfg_.fusion == Fusion::Concatenate) {
    std::copy(dfused.begin(), dfused.begin() + cfg_.visual_hidden, dv2.begin());
    std::copy(dfused.begin() + cfg_.visual_hidden, dfused.end(), da2.begin());
  } else {
    for (int i = 0; i < fused_dim_; ++i) {
      dv2[i] = dfused[i] * c.a2[i];
      da2[i] = dfused[i] * c.v2[i];
    }
  }

  // tanh backward at the branch outputs, then the two dense layers each.
  auto branch_backward = [&](const std::string& l1, const std::string& l2,
                             const std::vector<double>& y1,
                             const std::vector<double>& y2,
                             std::vector<double>& dy2, const double* x0) {
    for (std::size_t i = 0; i < dy2.size(); ++i) dy2[i] *= 1.0 - y2[i] * y2[i];
    std::vector<double> dy1(y1.size(), 0.0);
    dense_backward(store_.at(prefix_ + l2 + ".w"), store_.at(prefix_ + l2 + ".b"),
                   y1.data(), dy2.data(), dy1.data());
    for (std::size_t i = 0; i < dy1.size(); ++i) dy1[i] *= 1.0 - y1[i] * y1[i];
    dense_backward(store_.at(prefix_ + l1 + ".w"), store_.at(prefix_ + l1 + ".b"),
                   x0, dy1.data(), nullptr);
  };
  branch_backward("vis1", "vis2", c.v1, c.v2, dv2, c.obs.data());
  branch_backward("aud1", "aud2", c.a1, c.a2, da2, c.obs.data() + cfg_.visual_dim);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr char kCkptMagic[8] = {'S', 'A', 'V', 'N', 'C', 'K', 'P', 'T'};
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kCkptMagic, sizeof(kCkptMagic));
  write_pod(out, std::uint32_t{1});
  write_pod(out, ckpt.config_digest);
  write_string(out, ckpt.code_version);
  write_pod(out, static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    write_string(out, k);
    write_string(out, v);
  }
  write_pod(out, static_cast<std::uint32_t>(ckpt.stores.size()));
  for (const auto& [name, store] : ckpt.stores) {
    write_string(out, name);
    store.save(out);
  }
  write_pod(out, static_cast<std::uint32_t>(ckpt.rng_states.size()));
  for (const auto& [name, state] : ckpt.rng_states) {
    write_string(out, name);
    write_string(out, state);
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  std::uint32_t version = 0;
  read_pod(in, version);
  if (version != 1) throw std::runtime_error("unsupported checkpoint version");
  Checkpoint ckpt;
  read_pod(in, ckpt.config_digest);
  ckpt.code_version = read_string(in);
  std::uint32_t nmeta = 0;
  read_pod(in, nmeta);
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    const std::string k = read_string(in);
    ckpt.meta[k] = read_string(in);
  }
  std::uint32_t nstores = 0;
  read_pod(in, nstores);
  for (std::uint32_t i = 0; i < nstores; ++i) {
    const std::string name = read_string(in);
    ParameterStore store;
    store.load(in);
    ckpt.stores.emplace_back(name, std::move(store));
  }
  std::uint32_t nrng = 0;
  read_pod(in, nrng);
  for (std::uint32_t i = 0; i < nrng; ++i) {
    const std::string name = read_string(in);
    ckpt.rng_states.emplace_back(name, read_string(in));
  }
  return ckpt;
}

}  // namespace savn::nn

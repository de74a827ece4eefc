#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "savn/rng.hpp"

namespace savn::nn {

// ---------------------------------------------------------------------------
// Tensors and parameter storage
// ---------------------------------------------------------------------------

struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;  // values
  std::vector<double> g;  // gradient, same size

  std::size_t size() const { return v.size(); }
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
};

// Named parameters with per-parameter Adam moments. Iteration is always in
// sorted-name order, so clipping, stepping, and serialization are stable.
class ParameterStore {
 public:
  Tensor& create(const std::string& name, std::vector<int> shape);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  std::vector<std::string> names() const;
  std::size_t parameter_count() const;

  void zero_grad();
  double global_grad_norm() const;
  // Scales all gradients so their global norm is at most max_norm; returns
  // the pre-clip norm. A NaN gradient raises, naming the parameter.
  double clip_global_norm(double max_norm);
  // Multiplies every gradient by factor; used when the clipping norm spans
  // several stores (joint two-player updates).
  void scale_grads(double factor);
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);
  std::int64_t adam_steps() const { return step_; }

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  struct Entry {
    Tensor t;
    std::vector<double> m;  // first moment
    std::vector<double> v;  // second moment
  };
  std::map<std::string, Entry> entries_;
  std::int64_t step_ = 0;
};

// Scaled-uniform (Glorot-style) init over [-a, a], a = sqrt(6/(fan_in+fan_out)).
void scaled_uniform_init(Tensor& w, int fan_in, int fan_out, Rng& rng);

// ---------------------------------------------------------------------------
// Primitive ops (explicit caches, gradients accumulate)
// ---------------------------------------------------------------------------

// y = W x + b with W:[out x in] row-major.
void dense_forward(const Tensor& w, const Tensor& b, const double* x, double* y);
// Accumulates dW, db into .g and (when dx != nullptr) dx += W^T dy.
void dense_backward(Tensor& w, Tensor& b, const double* x, const double* dy,
                    double* dx);

struct GruParams {
  Tensor* w_ih = nullptr;  // [3H x I], gate order r, z, n
  Tensor* w_hh = nullptr;  // [3H x H]
  Tensor* b_ih = nullptr;  // [3H]
  Tensor* b_hh = nullptr;  // [3H]
  int input = 0;
  int hidden = 0;
};

struct GruCache {
  std::vector<double> x, h_prev;
  std::vector<double> r, z, n;
  std::vector<double> q;  // W_hn h + b_hn, needed for the reset-gate gradient
};

// h' = (1-z) n + z h with r,z sigmoid gates and n = tanh(W_in x + b_in + r.(W_hn h + b_hn)).
void gru_forward(const GruParams& p, const double* x, const double* h_prev,
                 double* h_out, GruCache* cache);
// dx/dh_prev accumulate when non-null.
void gru_backward(GruParams& p, const GruCache& c, const double* dh,
                  double* dx, double* dh_prev);

std::vector<double> softmax(const std::vector<double>& logits);
double entropy(const std::vector<double>& probs);   // nats
// Inverse-CDF draw from one uniform variate.
int sample_categorical(const std::vector<double>& probs, Rng& rng);
int argmax(const std::vector<double>& v);

// d loss/d logits for a term c * log p(a): dl_i += c * (1[i==a] - p_i).
void add_logprob_grad(const std::vector<double>& probs, int action, double coeff,
                      std::vector<double>& dlogits);
// d loss/d logits for a term c * H(p): dl_i += -c * p_i (log p_i + H).
void add_entropy_grad(const std::vector<double>& probs, double coeff,
                      std::vector<double>& dlogits);

// ---------------------------------------------------------------------------
// Fixed architectures: branch encoders -> fusion -> GRU -> categorical heads
// ---------------------------------------------------------------------------

enum class Fusion { Concatenate, ElementwiseMultiply };

struct EncoderConfig {
  int visual_dim = 0;      // leading slice of the flattened observation
  int audio_dim = 0;       // trailing slice
  int visual_hidden = 64;
  int audio_hidden = 64;
  Fusion fusion = Fusion::Concatenate;
  int gru_hidden = 64;
};

struct StepCache {
  std::vector<double> obs;
  std::vector<double> v1, v2, a1, a2, fused;
  GruCache gru;
  std::vector<double> h_out;
  std::vector<std::vector<double>> logits;
  std::vector<std::vector<double>> probs;
  std::vector<double> values;
};

struct StepOutput {
  std::vector<std::vector<double>> logits;  // one vector per head
  std::vector<std::vector<double>> probs;
  std::vector<double> values;               // one per critic head
};

// One actor-critic tower. The agent uses head_sizes {4} with one critic;
// the attacker uses {3, 11, K} with three critics (position, volume,
// category) plus a weighted total critic for logging.
class PolicyNetwork {
 public:
  PolicyNetwork(ParameterStore& store, std::string prefix, EncoderConfig cfg,
                std::vector<int> head_sizes, Rng& init_rng);

  // h_prev/h_out have gru_hidden entries; callers mask h_prev at episode
  // boundaries. cache may be null for inference.
  StepOutput forward(const double* obs, const double* h_prev, double* h_out,
                     StepCache* cache) const;

  // Backward through one cached step. dlogits/dvalues mirror the forward
  // output; dh_next is the BPTT gradient flowing in from the following step
  // (may be null); dh_prev accumulates the gradient for the preceding step.
  void backward(const StepCache& c, const std::vector<std::vector<double>>& dlogits,
                const std::vector<double>& dvalues, const double* dh_next,
                double* dh_prev);

  const EncoderConfig& config() const { return cfg_; }
  int gru_hidden() const { return cfg_.gru_hidden; }
  int n_heads() const { return static_cast<int>(head_sizes_.size()); }
  const std::vector<int>& head_sizes() const { return head_sizes_; }
  // Parameter count implied by the configuration (asserted in tests).
  static std::size_t expected_parameter_count(const EncoderConfig& cfg,
                                              const std::vector<int>& head_sizes);

 private:
  ParameterStore& store_;
  std::string prefix_;
  EncoderConfig cfg_;
  std::vector<int> head_sizes_;
  int fused_dim_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct Checkpoint {
  std::uint64_t config_digest = 0;
  std::string code_version;
  std::map<std::string, std::string> meta;        // iteration, env_steps, ...
  std::vector<std::pair<std::string, ParameterStore>> stores;
  std::vector<std::pair<std::string, std::string>> rng_states;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace savn::nn

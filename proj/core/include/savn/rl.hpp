#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "savn/config.hpp"
#include "savn/nn.hpp"
#include "savn/rng.hpp"
#include "savn/sensors.hpp"
#include "savn/world.hpp"

namespace savn::rl {

// ---------------------------------------------------------------------------
// Runtime assembly shared by training and evaluation: the scene pool, the
// sound bank and the sensor configuration, all derived from one RunConfig.
// ---------------------------------------------------------------------------

struct EnvSetup {
  std::vector<world::Scene> scenes;
  audio::SoundBank bank;
  world::EnvConfig env;
  sensors::VisualConfig visual;
  sensors::AudioConfig audio;
  world::AttackerSpec attacker;
  double resolution = 1.0;    // metres per cell, for path-length metrics
  int train_categories = 0;   // category pool the attacker/target train on
};

EnvSetup build_setup(const config::RunConfig& cfg);

// Pieces of build_setup that evaluation reuses when rebuilding a network
// from the configuration embedded in a checkpoint.
sensors::VisualConfig visual_config(const config::RunConfig& cfg);
sensors::AudioConfig audio_config(const config::RunConfig& cfg);
int train_categories(const config::RunConfig& cfg);

world::AttackerMode parse_attacker_mode(const std::string& s);
nn::Fusion parse_fusion(const std::string& s);

// Sub-stream tags for per-episode derived RNGs; shared by training and
// evaluation so an episode seed means the same draws everywhere.
inline constexpr std::uint64_t kStreamNoise = 3;
inline constexpr std::uint64_t kStreamSample = 5;
inline constexpr std::uint64_t kPurposeNoise = 0x5E17;
inline constexpr std::uint64_t kPurposeAgentSample = 0xAC10;
inline constexpr std::uint64_t kPurposeAttackerSample = 0xAC77;

// ---------------------------------------------------------------------------
// PPO data plumbing
// ---------------------------------------------------------------------------

struct PpoParams {
  double clip = 0.1;
  int epochs = 4;
  double value_coef = 0.5;
  double entropy_coef = 0.02;
  double lr = 2.5e-4;
  double gamma = 0.99;
  double tau = 0.95;
  int num_steps = 150;
  double max_grad_norm = 0.5;
  bool vanilla_pg = false;
  bool normalize_advantages = true;
};

PpoParams ppo_from_config(const config::RunConfig& cfg);

// One player's slice of an update window. Actions/log-probs are per head;
// each head owns a critic, so values/advantages/returns are per head too.
// Flat indexing is [env * num_steps + t]; values span t = 0..num_steps.
struct PlayerBatch {
  std::vector<std::vector<int>> actions;
  std::vector<std::vector<double>> logprobs;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<double>> advantages;
  std::vector<std::vector<double>> returns;
  std::vector<double> h0;      // [n_envs * gru_hidden] at window start
  double reward_sign = 1.0;    // -1 for the attacker (zero-sum mirror)
};

struct TrajectoryBatch {
  int n_envs = 0;
  int num_steps = 0;
  int obs_dim = 0;
  std::vector<double> observations;  // [(e*T + t) * obs_dim]
  std::vector<double> rewards;       // [e*T + t], agent-side sign
  std::vector<double> masks;         // [e*(T+1) + t]; 0 iff s_t is a reset
  PlayerBatch agent;
  PlayerBatch attacker;              // empty unless the attacker learns
};

// Generalized advantage estimation over the masked window. rewards is
// [n_envs*T], values/masks are [n_envs*(T+1)]; returns_out = advantage + V.
void compute_gae(const std::vector<double>& rewards,
                 const std::vector<double>& values,
                 const std::vector<double>& masks, int n_envs, int num_steps,
                 double gamma, double tau, std::vector<double>& advantages_out,
                 std::vector<double>& returns_out);

// In-place (x - mean) / (sample std + 1e-8) over the whole batch.
void normalize_advantages(std::vector<double>& adv);

struct BranchLossStats {
  double total = 0.0;    // value_coef*value + policy - entropy_coef*entropy
  double policy = 0.0;   // -mean(min(ratio*A, clip(ratio)*A))
  double value = 0.0;    // mean(0.5*(V - R)^2), before value_coef
  double entropy = 0.0;  // mean policy entropy, nats
};

// Recomputes one player's forward pass over the stored window at the current
// parameters and reports each branch's loss. When accumulate_grads is set,
// parameter gradients of sum_j head_weights[j] * L_j are accumulated into the
// network's store (full-batch, backprop-through-time across the window).
// max_ratio_dev, when given, receives max |ratio - 1| over all elements.
std::vector<BranchLossStats> replay_update(
    nn::PolicyNetwork& net, const TrajectoryBatch& batch,
    const PlayerBatch& player, const PpoParams& ppo,
    const std::vector<double>& head_weights, bool accumulate_grads,
    double* max_ratio_dev = nullptr);

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

// Stores sit behind stable pointers because each network keeps a reference
// to its store; the set stays movable without dangling those references.
struct PolicySet {
  std::unique_ptr<nn::ParameterStore> agent_store =
      std::make_unique<nn::ParameterStore>();
  std::unique_ptr<nn::ParameterStore> attacker_store =
      std::make_unique<nn::ParameterStore>();
  std::unique_ptr<nn::PolicyNetwork> agent;
  std::unique_ptr<nn::PolicyNetwork> attacker;  // null unless mode=learned
  // Logging-only mixture of the attacker's three critics.
  std::vector<double> total_critic_weights{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
};

nn::EncoderConfig encoder_from_config(const config::RunConfig& cfg);
PolicySet build_policies(const config::RunConfig& cfg);

// ---------------------------------------------------------------------------
// Vectorized environment
// ---------------------------------------------------------------------------

struct EpisodeStats {
  bool success = false;
  double reward = 0.0;          // agent-side return
  int length = 0;
  double start_geodesic = 0.0;  // length units
  double final_geodesic = 0.0;
  int position_changes = 0;     // moves that changed the agent's cell
};

// Success-weighted path-length term for one episode: S * l / max(p, l).
double spl_term(const EpisodeStats& ep, double resolution);

class VectorEnv {
 public:
  // Slot seeds derive from (master_seed, stream_base + slot, episode counter)
  // so every episode is reproducible in isolation.
  VectorEnv(const EnvSetup* setup, int n_envs, std::uint64_t master_seed,
            std::uint64_t stream_base = 0);

  int n_envs() const { return static_cast<int>(slots_.size()); }
  int obs_dim() const { return obs_dim_; }
  const world::Scene& scene(int slot) const;
  const world::EpisodeState& state(int slot) const;
  const std::vector<double>& observation(int slot) const;
  bool fresh(int slot) const;  // current observation is an episode start

  // Whether step() must be given an attacker action (learned mode).
  bool policy_driven_attacker() const;

  // Advances one slot. attacker_action is required in learned mode and
  // ignored otherwise (fixed/random/absent slots drive themselves). Finished
  // episodes report stats through on_episode_end, then reset in place.
  world::RewardPair step(int slot, world::AgentAction agent_action,
                         const std::optional<world::AttackerAction>& attacker_action);

  Rng& agent_action_rng(int slot);
  Rng& attacker_action_rng(int slot);

  std::function<void(int slot, const EpisodeStats&)> on_episode_end;

 private:
  struct Slot {
    int scene_index = 0;
    world::EpisodeState state;
    world::AttackerDriver driver;
    Rng noise_rng;
    Rng agent_rng;
    Rng attacker_rng;
    std::vector<double> obs;
    bool fresh = true;
    std::uint64_t episodes_started = 0;
    EpisodeStats stats;
  };

  void reset_slot(int slot);
  void observe(int slot);

  const EnvSetup* setup_ = nullptr;
  std::uint64_t master_seed_ = 0;
  std::uint64_t stream_base_ = 0;
  int obs_dim_ = 0;
  std::vector<Slot> slots_;
  std::vector<sensors::RirCache> rir_caches_;  // one per scene in the pool
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

// Joint: both players update from one shared rollout, gradients clipped
// together. AgentOnly: no adversary term. Alternating: each iteration runs
// one agent-only phase then one attacker-only phase on fresh rollouts.
enum class TrainScheme { Joint, AgentOnly, Alternating };

TrainScheme parse_scheme(const std::string& mode);

struct IterationStats {
  std::int64_t iteration = 0;
  std::int64_t env_steps = 0;
  double mean_episode_reward_agent = 0.0;
  double mean_episode_reward_attacker = 0.0;
  double spl_online = 0.0;
  double entropy_agent = 0.0;
  double entropy_pos = 0.0;
  double entropy_vol = 0.0;
  double entropy_cat = 0.0;
  double loss_agent = 0.0;
  double loss_pos = 0.0;
  double loss_vol = 0.0;
  double loss_cat = 0.0;
  double max_ratio_dev_epoch0 = 0.0;  // |ratio-1| before the first step
  int episodes_completed = 0;
};

std::string learning_curve_header();
std::string learning_curve_row(const IterationStats& s);

class Trainer {
 public:
  explicit Trainer(const config::RunConfig& cfg);

  // Full budget: iterates until train.env_steps, appending to
  // <out>/learning_curve.csv and writing checkpoints under <out>/.
  void run();

  // One update window (two in the alternating scheme); exposed for tests.
  IterationStats run_iteration();

  PolicySet& policies() { return policies_; }
  const EnvSetup& setup() const { return setup_; }
  VectorEnv& env() { return *env_; }
  std::int64_t env_steps() const { return env_steps_; }
  std::int64_t iterations() const { return iteration_; }

  nn::Checkpoint make_checkpoint() const;
  void save_checkpoint_file(const std::string& path) const;

 private:
  void rollout(TrajectoryBatch& batch, IterationStats& stats);
  void update(const TrajectoryBatch& batch, bool update_agent,
              bool update_attacker, IterationStats& stats);

  config::RunConfig cfg_;
  EnvSetup setup_;
  PpoParams ppo_;
  TrainScheme scheme_;
  PolicySet policies_;
  std::unique_ptr<VectorEnv> env_;
  std::vector<double> h_agent_;     // persistent recurrent state, [N*H]
  std::vector<double> h_attacker_;
  std::int64_t env_steps_ = 0;
  std::int64_t iteration_ = 0;
  // episode aggregates for the current iteration's report
  double ep_reward_sum_ = 0.0;
  double ep_spl_sum_ = 0.0;
  int ep_count_ = 0;
  double last_mean_reward_ = 0.0;
  double last_spl_ = 0.0;
};

}  // namespace savn::rl

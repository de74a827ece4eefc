#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace savn::config {

inline constexpr const char* kCodeVersion = "savn 0.1.0";

// Flat, typed run configuration. Every key is reachable from a config file
// line `section.key=value` or a `--override section.key=value` flag; unknown
// keys are rejected so typos never silently fall back to defaults.
struct RunConfig {
  std::string mode = "train-saavn";
  std::uint64_t seed = 1;
  std::string out = "out";

  // scene
  int scene_width = 10;
  int scene_height = 10;
  double scene_density = 0.25;
  int scene_pool = 8;          // training/eval scene pool size
  double scene_resolution = 1.0;

  // env (game rules)
  int env_max_steps = 500;
  double env_success_reward = 10.0;
  double env_slack_reward = -0.01;
  double env_shaping_scale = 1.0;
  std::string env_shaping_metric = "geodesic";  // geodesic | manhattan
  std::string env_volume_mode = "skipping";     // skipping | sliding

  // audio
  int audio_sample_rate = 8000;
  int audio_chunk_samples = 4000;
  int audio_window = 64;
  int audio_hop = 16;
  int audio_downsample = 4;
  std::string audio_rir_mode = "geometric";     // geometric | unit-impulse
  bool audio_reflection = false;
  double audio_wall_attenuation = 0.3;
  double audio_speed_of_sound = 343.0;
  double audio_reflection_gain = 0.5;

  // sound bank
  int bank_categories = 8;
  int bank_train_categories = 0;  // 0 = all; otherwise [0,n) train, rest held out
  double bank_energy_cap = 1.0;
  int bank_samples = 4000;
  std::uint64_t bank_seed = 777;

  // visual sensor
  int visual_rays = 16;
  double visual_max_range = 10.0;
  double visual_noise_std = 0.0;
  bool visual_blind = false;

  // networks
  int nn_visual_hidden = 64;
  int nn_audio_hidden = 64;
  int nn_gru_hidden = 64;
  std::string nn_fusion = "concat";  // concat | multiply

  // ppo
  double ppo_clip = 0.1;
  int ppo_epochs = 4;
  int ppo_minibatches = 1;
  double ppo_value_coef = 0.5;
  double ppo_entropy_coef = 0.02;
  double ppo_lr = 2.5e-4;
  double ppo_gamma = 0.99;
  double ppo_tau = 0.95;
  int ppo_num_steps = 150;
  double ppo_max_grad_norm = 0.5;
  double ppo_w_cat = 1.0 / 6.0;
  double ppo_w_vol = 1.0 / 6.0;
  double ppo_w_pos = 1.0 / 6.0;
  double ppo_w_agent = 0.5;
  bool ppo_vanilla_pg = false;
  bool ppo_normalize_advantages = true;

  // training
  std::int64_t train_env_steps = 500000;
  int train_n_envs = 4;
  int train_checkpoint_every = 0;  // iterations; 0 = final checkpoint only

  // attacker (non-learned driver settings; also eval-time attacker)
  std::string attacker_mode = "absent";  // learned | fixed | random | absent
  int attacker_volume_index = 1;
  int attacker_category = 0;

  // evaluation
  int eval_episodes = 100;
  int eval_runs = 5;
  std::string eval_checkpoint;
  std::string eval_attacker_checkpoint;  // learned attacker source for eval
  bool eval_greedy = true;
  int eval_min_start_distance = 0;  // episode-set curation; 0 = any start
  int eval_dump_trajectories = 0;

  // transfer
  std::string transfer_checkpoints;  // comma-separated paths
  std::string transfer_envs;         // comma-separated tokens

  // sweep
  std::string sweep_kind = "attack_strength";

  // theory verification
  int theory_trials = 1000;
  double theory_tol = 1e-9;
  std::string theory_rir = "unit-impulse";  // unit-impulse | geometric

  // replay
  std::string replay_file;
};

// FNV-1a over arbitrary bytes; the project-wide content hash.
std::uint64_t fnv1a64(const std::string& bytes);

// All known keys in sorted order (the canonical serialization order).
std::vector<std::string> known_keys();

// Set one dotted key from its text value. Unknown key or bad value throws.
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_key(const RunConfig& cfg, const std::string& key);

// Parse `key=value` lines ('#' comments, blank lines allowed).
RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Canonical text: every key, sorted, one per line. Digest-stable.
std::string canonical_text(const RunConfig& cfg);
std::uint64_t digest(const RunConfig& cfg);

// Post-parse consistency checks (mode token, enum values, ranges).
void validate(const RunConfig& cfg);

}  // namespace savn::config

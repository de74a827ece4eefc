#include "savn/rl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace savn::rl {

namespace {

constexpr std::uint64_t kPurposeSceneSeed = 0x5CE7;
constexpr std::uint64_t kPurposeAgentInit = 0x11A6;
constexpr std::uint64_t kPurposeAttackerInit = 0x11A7;

}  // namespace

// ---------------------------------------------------------------------------
// Setup
// ---------------------------------------------------------------------------

world::AttackerMode parse_attacker_mode(const std::string& s) {
  if (s == "learned") return world::AttackerMode::Learned;
  if (s == "fixed") return world::AttackerMode::Fixed;
  if (s == "random") return world::AttackerMode::Random;
  if (s == "absent") return world::AttackerMode::Absent;
  throw std::invalid_argument("unknown attacker mode: " + s);
}

nn::Fusion parse_fusion(const std::string& s) {
  if (s == "concat") return nn::Fusion::Concatenate;
  if (s == "multiply") return nn::Fusion::ElementwiseMultiply;
  throw std::invalid_argument("unknown fusion kind: " + s);
}

sensors::VisualConfig visual_config(const config::RunConfig& cfg) {
  sensors::VisualConfig v;
  v.n_rays = cfg.visual_rays;
  v.max_range = cfg.visual_max_range;
  v.noise_std = cfg.visual_noise_std;
  v.blind = cfg.visual_blind;
  return v;
}

sensors::AudioConfig audio_config(const config::RunConfig& cfg) {
  sensors::AudioConfig a;
  a.stft.window = cfg.audio_window;
  a.stft.hop = cfg.audio_hop;
  a.downsample = cfg.audio_downsample;
  a.log_compress = true;
  a.chunk_samples = cfg.audio_chunk_samples;
  a.rir.speed_of_sound = cfg.audio_speed_of_sound;
  a.rir.wall_attenuation = cfg.audio_wall_attenuation;
  a.rir.add_reflection = cfg.audio_reflection;
  a.rir.reflection_gain = cfg.audio_reflection_gain;
  a.rir_mode = cfg.audio_rir_mode == "unit-impulse" ? audio::RirMode::UnitImpulse
                                                    : audio::RirMode::Geometric;
  return a;
}

int train_categories(const config::RunConfig& cfg) {
  return cfg.bank_train_categories > 0 ? cfg.bank_train_categories
                                       : cfg.bank_categories;
}

EnvSetup build_setup(const config::RunConfig& cfg) {
  EnvSetup s;
  s.resolution = cfg.scene_resolution;
  s.scenes.reserve(cfg.scene_pool);
  for (int i = 0; i < cfg.scene_pool; ++i) {
    s.scenes.push_back(world::generate_scene(
        Rng::mix(cfg.seed, static_cast<std::uint64_t>(i), kPurposeSceneSeed),
        cfg.scene_width, cfg.scene_height, cfg.scene_density,
        cfg.scene_resolution));
  }
  s.bank = audio::build_sound_bank(cfg.bank_seed, cfg.bank_categories,
                                   cfg.bank_energy_cap, cfg.audio_sample_rate,
                                   cfg.bank_samples);
  s.train_categories = train_categories(cfg);

  s.env.max_steps = cfg.env_max_steps;
  s.env.success_reward = cfg.env_success_reward;
  s.env.slack_reward = cfg.env_slack_reward;
  s.env.shaping_scale = cfg.env_shaping_scale;
  s.env.shaping_metric = cfg.env_shaping_metric == "manhattan"
                             ? world::EnvConfig::ShapingMetric::Manhattan
                             : world::EnvConfig::ShapingMetric::Geodesic;
  s.env.volume_mode = cfg.env_volume_mode == "sliding" ? world::VolumeMode::Sliding
                                                       : world::VolumeMode::Skipping;
  s.env.num_categories = cfg.bank_categories;
  s.env.target_categories = s.train_categories;

  s.visual = visual_config(cfg);
  s.audio = audio_config(cfg);

  s.attacker.mode = parse_attacker_mode(cfg.attacker_mode);
  s.attacker.fixed_volume_index = cfg.attacker_volume_index;
  s.attacker.fixed_category = cfg.attacker_category;
  if (s.train_categories < cfg.bank_categories &&
      s.attacker.mode != world::AttackerMode::Absent) {
    s.attacker.allowed_categories.resize(s.train_categories);
    std::iota(s.attacker.allowed_categories.begin(),
              s.attacker.allowed_categories.end(), 0);
  }
  return s;
}

PpoParams ppo_from_config(const config::RunConfig& cfg) {
  PpoParams p;
  p.clip = cfg.ppo_clip;
  p.epochs = cfg.ppo_epochs;
  p.value_coef = cfg.ppo_value_coef;
  p.entropy_coef = cfg.ppo_entropy_coef;
  p.lr = cfg.ppo_lr;
  p.gamma = cfg.ppo_gamma;
  p.tau = cfg.ppo_tau;
  p.num_steps = cfg.ppo_num_steps;
  p.max_grad_norm = cfg.ppo_max_grad_norm;
  p.vanilla_pg = cfg.ppo_vanilla_pg;
  p.normalize_advantages = cfg.ppo_normalize_advantages;
  return p;
}

// ---------------------------------------------------------------------------
// GAE
// ---------------------------------------------------------------------------

void compute_gae(const std::vector<double>& rewards,
                 const std::vector<double>& values,
                 const std::vector<double>& masks, int n_envs, int num_steps,
                 double gamma, double tau, std::vector<double>& advantages_out,
                 std::vector<double>& returns_out) {
  const std::size_t nt = static_cast<std::size_t>(n_envs) * num_steps;
  const std::size_t nv = static_cast<std::size_t>(n_envs) * (num_steps + 1);
  if (rewards.size() != nt || values.size() != nv || masks.size() != nv) {
    throw std::invalid_argument("advantage estimation buffer sizes disagree");
  }
  advantages_out.assign(nt, 0.0);
  returns_out.assign(nt, 0.0);
  for (int e = 0; e < n_envs; ++e) {
    double acc = 0.0;
    for (int t = num_steps - 1; t >= 0; --t) {
      const std::size_t bt = static_cast<std::size_t>(e) * num_steps + t;
      const std::size_t vt = static_cast<std::size_t>(e) * (num_steps + 1) + t;
      const double mask_next = masks[vt + 1];
      const double delta =
          rewards[bt] + gamma * values[vt + 1] * mask_next - values[vt];
      acc = delta + gamma * tau * mask_next * acc;
      advantages_out[bt] = acc;
      returns_out[bt] = acc + values[vt];
    }
  }
}

void normalize_advantages(std::vector<double>& adv) {
  const std::size_t n = adv.size();
  if (n < 2) return;
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double a : adv) ss += (a - mean) * (a - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  for (double& a : adv) a = (a - mean) / (sd + 1e-8);
}

// ---------------------------------------------------------------------------
// Full-batch replay (forward recompute + optional BPTT)
// ---------------------------------------------------------------------------

std::vector<BranchLossStats> replay_update(
    nn::PolicyNetwork& net, const TrajectoryBatch& batch,
    const PlayerBatch& player, const PpoParams& ppo,
    const std::vector<double>& head_weights, bool accumulate_grads,
    double* max_ratio_dev) {
  const int n_heads = net.n_heads();
  const int N = batch.n_envs;
  const int T = batch.num_steps;
  const int H = net.gru_hidden();
  if (static_cast<int>(head_weights.size()) != n_heads ||
      static_cast<int>(player.actions.size()) != n_heads) {
    throw std::invalid_argument("replay head bookkeeping disagrees with the network");
  }
  const std::size_t nt = static_cast<std::size_t>(N) * T;
  const double inv_b = 1.0 / static_cast<double>(nt);

  std::vector<nn::StepCache> caches(nt);
  std::vector<std::vector<double>> new_lp(n_heads, std::vector<double>(nt));
  std::vector<std::vector<double>> ratios(n_heads, std::vector<double>(nt));
  std::vector<std::vector<double>> ents(n_heads, std::vector<double>(nt));
  std::vector<std::vector<double>> vals(n_heads, std::vector<double>(nt));

  std::vector<double> h(H), h_in(H), h_out(H);
  for (int e = 0; e < N; ++e) {
    std::copy(player.h0.begin() + static_cast<std::size_t>(e) * H,
              player.h0.begin() + static_cast<std::size_t>(e + 1) * H, h.begin());
    for (int t = 0; t < T; ++t) {
      const std::size_t b = static_cast<std::size_t>(e) * T + t;
      const double m = batch.masks[static_cast<std::size_t>(e) * (T + 1) + t];
      for (int i = 0; i < H; ++i) h_in[i] = h[i] * m;
      const nn::StepOutput out =
          net.forward(&batch.observations[b * batch.obs_dim], h_in.data(),
                      h_out.data(), &caches[b]);
      std::copy(h_out.begin(), h_out.end(), h.begin());
      for (int j = 0; j < n_heads; ++j) {
        const int a = player.actions[j][b];
        new_lp[j][b] = std::log(out.probs[j][a]);
        ratios[j][b] = std::exp(new_lp[j][b] - player.logprobs[j][b]);
        ents[j][b] = nn::entropy(out.probs[j]);
        vals[j][b] = out.values[j];
      }
    }
  }

  double dev = 0.0;
  std::vector<BranchLossStats> stats(n_heads);
  for (int j = 0; j < n_heads; ++j) {
    double psum = 0.0, vsum = 0.0, esum = 0.0;
    for (std::size_t b = 0; b < nt; ++b) {
      const double adv = player.advantages[j][b];
      const double ratio = ratios[j][b];
      dev = std::max(dev, std::abs(ratio - 1.0));
      if (ppo.vanilla_pg) {
        psum += -new_lp[j][b] * adv;
      } else {
        const double t1 = ratio * adv;
        const double t2 =
            std::clamp(ratio, 1.0 - ppo.clip, 1.0 + ppo.clip) * adv;
        psum += -std::min(t1, t2);
      }
      const double dv = vals[j][b] - player.returns[j][b];
      vsum += 0.5 * dv * dv;
      esum += ents[j][b];
    }
    stats[j].policy = psum * inv_b;
    stats[j].value = vsum * inv_b;
    stats[j].entropy = esum * inv_b;
    stats[j].total = ppo.value_coef * stats[j].value + stats[j].policy -
                     ppo.entropy_coef * stats[j].entropy;
  }
  if (max_ratio_dev) *max_ratio_dev = dev;

  if (accumulate_grads) {
    std::vector<std::vector<double>> dlogits(n_heads);
    std::vector<double> dvalues(static_cast<std::size_t>(n_heads), 0.0);
    std::vector<double> carry(H, 0.0), dh_prev(H, 0.0);
    for (int e = 0; e < N; ++e) {
      std::fill(carry.begin(), carry.end(), 0.0);
      for (int t = T - 1; t >= 0; --t) {
        const std::size_t b = static_cast<std::size_t>(e) * T + t;
        for (int j = 0; j < n_heads; ++j) {
          const double w = head_weights[j];
          dlogits[j].assign(net.head_sizes()[j], 0.0);
          const double adv = player.advantages[j][b];
          double pg_coeff = 0.0;
          if (ppo.vanilla_pg) {
            pg_coeff = -w * inv_b * adv;
          } else {
            const double ratio = ratios[j][b];
            const double t1 = ratio * adv;
            const double t2 =
                std::clamp(ratio, 1.0 - ppo.clip, 1.0 + ppo.clip) * adv;
            // The clipped branch is constant in the parameters wherever it
            // wins, so gradient flows only through the unclipped term.
            pg_coeff = t1 <= t2 ? -w * inv_b * ratio * adv : 0.0;
          }
          nn::add_logprob_grad(caches[b].probs[j], player.actions[j][b],
                               pg_coeff, dlogits[j]);
          nn::add_entropy_grad(caches[b].probs[j],
                               -w * ppo.entropy_coef * inv_b, dlogits[j]);
          dvalues[j] =
              w * ppo.value_coef * (vals[j][b] - player.returns[j][b]) * inv_b;
        }
        std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
        net.backward(caches[b], dlogits, dvalues, carry.data(), dh_prev.data());
        const double m = batch.masks[static_cast<std::size_t>(e) * (T + 1) + t];
        for (int i = 0; i < H; ++i) carry[i] = dh_prev[i] * m;
      }
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

nn::EncoderConfig encoder_from_config(const config::RunConfig& cfg) {
  nn::EncoderConfig enc;
  enc.visual_dim = cfg.visual_rays;
  enc.audio_dim = sensors::observation_width(visual_config(cfg),
                                             audio_config(cfg)) -
                  cfg.visual_rays;
  enc.visual_hidden = cfg.nn_visual_hidden;
  enc.audio_hidden = cfg.nn_audio_hidden;
  enc.gru_hidden = cfg.nn_gru_hidden;
  enc.fusion = parse_fusion(cfg.nn_fusion);
  return enc;
}

PolicySet build_policies(const config::RunConfig& cfg) {
  PolicySet p;
  const nn::EncoderConfig enc = encoder_from_config(cfg);
  Rng agent_init = Rng::derive(cfg.seed, 0, kPurposeAgentInit);
  p.agent = std::make_unique<nn::PolicyNetwork>(
      *p.agent_store, "agent", enc,
      std::vector<int>{world::kAgentActionCount}, agent_init);
  if (parse_attacker_mode(cfg.attacker_mode) == world::AttackerMode::Learned) {
    Rng attacker_init = Rng::derive(cfg.seed, 0, kPurposeAttackerInit);
    p.attacker = std::make_unique<nn::PolicyNetwork>(
        *p.attacker_store, "attacker", enc,
        std::vector<int>{world::kAttackerMoveCount, world::kVolumeLevels,
                         train_categories(cfg)},
        attacker_init);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Vectorized environment
// ---------------------------------------------------------------------------

double spl_term(const EpisodeStats& ep, double resolution) {
  if (!ep.success) return 0.0;
  const double l = ep.start_geodesic;
  const double p = resolution * ep.position_changes;
  const double denom = std::max(p, l);
  if (denom <= 0.0) return 0.0;
  return l / denom;
}

VectorEnv::VectorEnv(const EnvSetup* setup, int n_envs,
                     std::uint64_t master_seed, std::uint64_t stream_base)
    : setup_(setup), master_seed_(master_seed), stream_base_(stream_base) {
  if (setup_ == nullptr || setup_->scenes.empty()) {
    throw std::invalid_argument("environment setup needs at least one scene");
  }
  if (n_envs < 1) {
    throw std::invalid_argument("need at least one environment slot");
  }
  obs_dim_ = sensors::observation_width(setup_->visual, setup_->audio);
  rir_caches_.resize(setup_->scenes.size());
  slots_.resize(n_envs);
  for (int e = 0; e < n_envs; ++e) reset_slot(e);
}

const world::Scene& VectorEnv::scene(int slot) const {
  return setup_->scenes[slots_.at(slot).scene_index];
}

const world::EpisodeState& VectorEnv::state(int slot) const {
  return slots_.at(slot).state;
}

const std::vector<double>& VectorEnv::observation(int slot) const {
  return slots_.at(slot).obs;
}

bool VectorEnv::fresh(int slot) const { return slots_.at(slot).fresh; }

bool VectorEnv::policy_driven_attacker() const {
  return setup_->attacker.mode == world::AttackerMode::Learned;
}

Rng& VectorEnv::agent_action_rng(int slot) { return slots_.at(slot).agent_rng; }

Rng& VectorEnv::attacker_action_rng(int slot) {
  return slots_.at(slot).attacker_rng;
}

void VectorEnv::reset_slot(int slot) {
  Slot& s = slots_[slot];
  const std::uint64_t episode_seed =
      Rng::mix(master_seed_, stream_base_ + static_cast<std::uint64_t>(slot),
               s.episodes_started);
  ++s.episodes_started;
  s.scene_index = static_cast<int>(episode_seed % setup_->scenes.size());
  const world::Scene& sc = setup_->scenes[s.scene_index];
  s.state = world::reset_episode(sc, episode_seed, setup_->attacker, setup_->env);
  s.driver = world::AttackerDriver(setup_->attacker, setup_->env, episode_seed);
  s.noise_rng = Rng::derive(episode_seed, 3, kPurposeNoise);
  s.agent_rng = Rng::derive(episode_seed, 5, kPurposeAgentSample);
  s.attacker_rng = Rng::derive(episode_seed, 5, kPurposeAttackerSample);
  s.fresh = true;
  s.stats = EpisodeStats{};
  s.stats.start_geodesic = sc.distance_to_goal(s.state.agent.node);
  observe(slot);
}

void VectorEnv::observe(int slot) {
  Slot& s = slots_[slot];
  const world::Scene& sc = setup_->scenes[s.scene_index];
  const sensors::Observation obs =
      sensors::make_observation(sc, s.state, setup_->bank, setup_->visual,
                                setup_->audio, s.noise_rng,
                                &rir_caches_[s.scene_index]);
  s.obs = sensors::flatten(obs);
}

world::RewardPair VectorEnv::step(
    int slot, world::AgentAction agent_action,
    const std::optional<world::AttackerAction>& attacker_action) {
  Slot& s = slots_.at(slot);
  const world::Scene& sc = setup_->scenes[s.scene_index];
  world::AttackerAction act;
  if (s.driver.policy_driven()) {
    if (!attacker_action) {
      throw std::invalid_argument(
          "learned attacker slots need an explicit attacker action");
    }
    act = *attacker_action;
  } else {
    act = s.driver.next_action();
  }
  const world::Cell before = s.state.agent.node;
  const world::StepResult res =
      world::step(sc, s.state, agent_action, act, setup_->env);
  s.stats.reward += res.reward.agent;
  s.stats.length += 1;
  if (!(s.state.agent.node == before)) s.stats.position_changes += 1;
  s.fresh = false;
  if (res.done) {
    s.stats.success = s.state.success;
    s.stats.final_geodesic = sc.distance_to_goal(s.state.agent.node);
    if (on_episode_end) on_episode_end(slot, s.stats);
    reset_slot(slot);
  } else {
    observe(slot);
  }
  return res.reward;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

TrainScheme parse_scheme(const std::string& mode) {
  if (mode == "train-saavn") return TrainScheme::Joint;
  if (mode == "train-avn") return TrainScheme::AgentOnly;
  if (mode == "train-idl") return TrainScheme::Alternating;
  throw std::invalid_argument("not a training mode: " + mode);
}

std::string learning_curve_header() {
  return "iteration,env_steps,mean_episode_reward_agent,"
         "mean_episode_reward_attacker,spl_online,entropy_agent,entropy_pos,"
         "entropy_vol,entropy_cat,loss_agent,loss_pos,loss_vol,loss_cat";
}

std::string learning_curve_row(const IterationStats& s) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%lld,%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                "%.17g,%.17g,%.17g",
                static_cast<long long>(s.iteration),
                static_cast<long long>(s.env_steps),
                s.mean_episode_reward_agent, s.mean_episode_reward_attacker,
                s.spl_online, s.entropy_agent, s.entropy_pos, s.entropy_vol,
                s.entropy_cat, s.loss_agent, s.loss_pos, s.loss_vol,
                s.loss_cat);
  return buf;
}

Trainer::Trainer(const config::RunConfig& cfg)
    : cfg_(cfg),
      setup_(build_setup(cfg)),
      ppo_(ppo_from_config(cfg)),
      scheme_(parse_scheme(cfg.mode)),
      policies_(build_policies(cfg)) {
  const bool learned = setup_.attacker.mode == world::AttackerMode::Learned;
  if (scheme_ == TrainScheme::AgentOnly && learned) {
    throw std::invalid_argument("agent-only training cannot drive a learned attacker");
  }
  if (scheme_ != TrainScheme::AgentOnly && !learned) {
    throw std::invalid_argument("adversarial training requires attacker.mode=learned");
  }
  env_ = std::make_unique<VectorEnv>(&setup_, cfg.train_n_envs, cfg.seed);
  const std::size_t hsize =
      static_cast<std::size_t>(cfg.train_n_envs) * cfg.nn_gru_hidden;
  h_agent_.assign(hsize, 0.0);
  h_attacker_.assign(learned ? hsize : 0, 0.0);
  env_->on_episode_end = [this](int, const EpisodeStats& ep) {
    ep_reward_sum_ += ep.reward;
    ep_spl_sum_ += spl_term(ep, setup_.resolution);
    ep_count_ += 1;
  };
}

void Trainer::rollout(TrajectoryBatch& batch, IterationStats& stats) {
  (void)stats;
  const int N = env_->n_envs();
  const int T = ppo_.num_steps;
  const int obs_dim = env_->obs_dim();
  const int H = policies_.agent->gru_hidden();
  const bool learned = static_cast<bool>(policies_.attacker);
  const std::size_t nt = static_cast<std::size_t>(N) * T;
  const std::size_t nv = static_cast<std::size_t>(N) * (T + 1);

  batch.n_envs = N;
  batch.num_steps = T;
  batch.obs_dim = obs_dim;
  batch.observations.assign(nt * obs_dim, 0.0);
  batch.rewards.assign(nt, 0.0);
  batch.masks.assign(nv, 0.0);

  auto init_player = [&](PlayerBatch& pb, int n_heads, double sign,
                         const std::vector<double>& h0) {
    pb.actions.assign(n_heads, std::vector<int>(nt, 0));
    pb.logprobs.assign(n_heads, std::vector<double>(nt, 0.0));
    pb.values.assign(n_heads, std::vector<double>(nv, 0.0));
    pb.advantages.assign(n_heads, {});
    pb.returns.assign(n_heads, {});
    pb.h0 = h0;
    pb.reward_sign = sign;
  };
  init_player(batch.agent, 1, 1.0, h_agent_);
  if (learned) init_player(batch.attacker, 3, -1.0, h_attacker_);

  std::vector<double> h_in(H), h_out(H);
  for (int t = 0; t < T; ++t) {
    for (int e = 0; e < N; ++e) {
      const std::size_t b = static_cast<std::size_t>(e) * T + t;
      const std::size_t vt = static_cast<std::size_t>(e) * (T + 1) + t;
      const double m = env_->fresh(e) ? 0.0 : 1.0;
      batch.masks[vt] = m;
      const std::vector<double>& obs = env_->observation(e);
      std::copy(obs.begin(), obs.end(),
                batch.observations.begin() + b * obs_dim);

      for (int i = 0; i < H; ++i) {
        h_in[i] = h_agent_[static_cast<std::size_t>(e) * H + i] * m;
      }
      const nn::StepOutput out = policies_.agent->forward(
          obs.data(), h_in.data(), h_out.data(), nullptr);
      std::copy(h_out.begin(), h_out.end(),
                h_agent_.begin() + static_cast<std::size_t>(e) * H);
      const int a =
          nn::sample_categorical(out.probs[0], env_->agent_action_rng(e));
      batch.agent.actions[0][b] = a;
      batch.agent.logprobs[0][b] = std::log(out.probs[0][a]);
      batch.agent.values[0][vt] = out.values[0];

      std::optional<world::AttackerAction> att;
      if (learned) {
        for (int i = 0; i < H; ++i) {
          h_in[i] = h_attacker_[static_cast<std::size_t>(e) * H + i] * m;
        }
        const nn::StepOutput aout = policies_.attacker->forward(
            obs.data(), h_in.data(), h_out.data(), nullptr);
        std::copy(h_out.begin(), h_out.end(),
                  h_attacker_.begin() + static_cast<std::size_t>(e) * H);
        world::AttackerAction action;
        Rng& arng = env_->attacker_action_rng(e);
        for (int j = 0; j < 3; ++j) {
          const int aj = nn::sample_categorical(aout.probs[j], arng);
          batch.attacker.actions[j][b] = aj;
          batch.attacker.logprobs[j][b] = std::log(aout.probs[j][aj]);
          batch.attacker.values[j][vt] = aout.values[j];
          if (j == 0) action.move = static_cast<world::AttackerMove>(aj);
          if (j == 1) action.volume_index = aj;
          if (j == 2) action.category_index = aj;
        }
        att = action;
      }
      const world::RewardPair r =
          env_->step(e, static_cast<world::AgentAction>(a), att);
      batch.rewards[b] = r.agent;
    }
  }

  // Bootstrap values at the window's final observation (not part of the
  // training graph; hidden states are left untouched).
  for (int e = 0; e < N; ++e) {
    const std::size_t vt = static_cast<std::size_t>(e) * (T + 1) + T;
    const double m = env_->fresh(e) ? 0.0 : 1.0;
    batch.masks[vt] = m;
    const std::vector<double>& obs = env_->observation(e);
    for (int i = 0; i < H; ++i) {
      h_in[i] = h_agent_[static_cast<std::size_t>(e) * H + i] * m;
    }
    const nn::StepOutput out =
        policies_.agent->forward(obs.data(), h_in.data(), h_out.data(), nullptr);
    batch.agent.values[0][vt] = out.values[0];
    if (learned) {
      for (int i = 0; i < H; ++i) {
        h_in[i] = h_attacker_[static_cast<std::size_t>(e) * H + i] * m;
      }
      const nn::StepOutput aout = policies_.attacker->forward(
          obs.data(), h_in.data(), h_out.data(), nullptr);
      for (int j = 0; j < 3; ++j) batch.attacker.values[j][vt] = aout.values[j];
    }
  }
  env_steps_ += static_cast<std::int64_t>(N) * T;

  compute_gae(batch.rewards, batch.agent.values[0], batch.masks, N, T,
              ppo_.gamma, ppo_.tau, batch.agent.advantages[0],
              batch.agent.returns[0]);
  if (ppo_.normalize_advantages) normalize_advantages(batch.agent.advantages[0]);
  if (learned) {
    std::vector<double> mirrored(batch.rewards.size());
    for (std::size_t i = 0; i < mirrored.size(); ++i) {
      mirrored[i] = -batch.rewards[i];
    }
    for (int j = 0; j < 3; ++j) {
      compute_gae(mirrored, batch.attacker.values[j], batch.masks, N, T,
                  ppo_.gamma, ppo_.tau, batch.attacker.advantages[j],
                  batch.attacker.returns[j]);
      if (ppo_.normalize_advantages) {
        normalize_advantages(batch.attacker.advantages[j]);
      }
    }
  }
}

void Trainer::update(const TrajectoryBatch& batch, bool update_agent,
                     bool update_attacker, IterationStats& stats) {
  const std::vector<double> agent_w{cfg_.ppo_w_agent};
  const std::vector<double> attacker_w{cfg_.ppo_w_pos, cfg_.ppo_w_vol,
                                       cfg_.ppo_w_cat};
  for (int epoch = 0; epoch < ppo_.epochs; ++epoch) {
    if (update_agent) policies_.agent_store->zero_grad();
    if (update_attacker) policies_.attacker_store->zero_grad();
    double dev_agent = 0.0, dev_attacker = 0.0;
    std::vector<BranchLossStats> sa, sb;
    if (update_agent) {
      sa = replay_update(*policies_.agent, batch, batch.agent, ppo_, agent_w,
                         true, &dev_agent);
    }
    if (update_attacker) {
      sb = replay_update(*policies_.attacker, batch, batch.attacker, ppo_,
                         attacker_w, true, &dev_attacker);
    }
    if (epoch == 0) {
      stats.max_ratio_dev_epoch0 =
          std::max({stats.max_ratio_dev_epoch0, dev_agent, dev_attacker});
      if (update_agent) {
        stats.loss_agent = sa[0].total;
        stats.entropy_agent = sa[0].entropy;
      }
      if (update_attacker) {
        stats.loss_pos = sb[0].total;
        stats.loss_vol = sb[1].total;
        stats.loss_cat = sb[2].total;
        stats.entropy_pos = sb[0].entropy;
        stats.entropy_vol = sb[1].entropy;
        stats.entropy_cat = sb[2].entropy;
      }
    }
    if (update_agent && update_attacker) {
      // One clipping norm across both players, then a step on each store.
      const double na = policies_.agent_store->global_grad_norm();
      const double nb = policies_.attacker_store->global_grad_norm();
      const double joint = std::sqrt(na * na + nb * nb);
      if (!std::isfinite(joint)) {
        throw std::runtime_error("non-finite gradient norm in joint update");
      }
      if (joint > ppo_.max_grad_norm && joint > 0.0) {
        const double f = ppo_.max_grad_norm / joint;
        policies_.agent_store->scale_grads(f);
        policies_.attacker_store->scale_grads(f);
      }
      policies_.agent_store->adam_step(ppo_.lr);
      policies_.attacker_store->adam_step(ppo_.lr);
    } else if (update_agent) {
      policies_.agent_store->clip_global_norm(ppo_.max_grad_norm);
      policies_.agent_store->adam_step(ppo_.lr);
    } else if (update_attacker) {
      policies_.attacker_store->clip_global_norm(ppo_.max_grad_norm);
      policies_.attacker_store->adam_step(ppo_.lr);
    }
  }
}

IterationStats Trainer::run_iteration() {
  IterationStats stats;
  ep_reward_sum_ = 0.0;
  ep_spl_sum_ = 0.0;
  ep_count_ = 0;
  TrajectoryBatch batch;
  switch (scheme_) {
    case TrainScheme::Joint:
      rollout(batch, stats);
      update(batch, true, true, stats);
      break;
    case TrainScheme::AgentOnly:
      rollout(batch, stats);
      update(batch, true, false, stats);
      break;
    case TrainScheme::Alternating: {
      rollout(batch, stats);
      update(batch, true, false, stats);
      TrajectoryBatch attacker_batch;
      rollout(attacker_batch, stats);
      update(attacker_batch, false, true, stats);
      break;
    }
  }
  ++iteration_;
  stats.iteration = iteration_;
  stats.env_steps = env_steps_;
  stats.episodes_completed = ep_count_;
  if (ep_count_ > 0) {
    last_mean_reward_ = ep_reward_sum_ / ep_count_;
    last_spl_ = ep_spl_sum_ / ep_count_;
  }
  stats.mean_episode_reward_agent = last_mean_reward_;
  stats.mean_episode_reward_attacker =
      setup_.attacker.mode == world::AttackerMode::Absent ? 0.0
                                                          : -last_mean_reward_;
  stats.spl_online = last_spl_;
  return stats;
}

void Trainer::run() {
  std::filesystem::create_directories(cfg_.out);
  const std::string csv_path = cfg_.out + "/learning_curve.csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  csv << learning_curve_header() << '\n';
  while (env_steps_ < cfg_.train_env_steps) {
    const IterationStats s = run_iteration();
    csv << learning_curve_row(s) << '\n';
    csv.flush();
    if (cfg_.train_checkpoint_every > 0 &&
        iteration_ % cfg_.train_checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_%06lld.ckpt",
                    static_cast<long long>(iteration_));
      save_checkpoint_file(cfg_.out + "/" + name);
    }
  }
  save_checkpoint_file(cfg_.out + "/checkpoint_final.ckpt");
}

nn::Checkpoint Trainer::make_checkpoint() const {
  nn::Checkpoint c;
  c.config_digest = config::digest(cfg_);
  c.code_version = config::kCodeVersion;
  c.meta["config"] = config::canonical_text(cfg_);
  c.meta["mode"] = cfg_.mode;
  c.meta["iteration"] = std::to_string(iteration_);
  c.meta["env_steps"] = std::to_string(env_steps_);
  c.stores.emplace_back("agent", *policies_.agent_store);
  if (policies_.attacker) {
    c.stores.emplace_back("attacker", *policies_.attacker_store);
  }
  return c;
}

void Trainer::save_checkpoint_file(const std::string& path) const {
  nn::save_checkpoint(make_checkpoint(), path);
}

}  // namespace savn::rl

#include "savn/config.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace savn::config {

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("bad numeric value for " + key + ": " + v);
  }
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("bad integer value for " + key + ": " + v);
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("bad unsigned value for " + key + ": " + v);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("bad boolean value for " + key + ": " + v);
}

const std::map<std::string, Field>& registry() {
  static const std::map<std::string, Field> reg = [] {
    std::map<std::string, Field> r;
    auto add_str = [&r](const std::string& k, std::string RunConfig::* m) {
      r[k] = Field{[m](const RunConfig& c) { return c.*m; },
                   [m](RunConfig& c, const std::string& v) { c.*m = v; }};
    };
    auto add_int = [&r](const std::string& k, int RunConfig::* m) {
      r[k] = Field{[m](const RunConfig& c) { return std::to_string(c.*m); },
                   [m, k](RunConfig& c, const std::string& v) {
                     c.*m = static_cast<int>(parse_int(k, v));
                   }};
    };
    auto add_i64 = [&r](const std::string& k, std::int64_t RunConfig::* m) {
      r[k] = Field{[m](const RunConfig& c) { return std::to_string(c.*m); },
                   [m, k](RunConfig& c, const std::string& v) {
                     c.*m = parse_int(k, v);
                   }};
    };
    auto add_u64 = [&r](const std::string& k, std::uint64_t RunConfig::* m) {
      r[k] = Field{[m](const RunConfig& c) { return std::to_string(c.*m); },
                   [m, k](RunConfig& c, const std::string& v) {
                     c.*m = parse_uint(k, v);
                   }};
    };
    auto add_dbl = [&r](const std::string& k, double RunConfig::* m) {
      r[k] = Field{[m](const RunConfig& c) { return format_double(c.*m); },
                   [m, k](RunConfig& c, const std::string& v) {
                     c.*m = parse_double(k, v);
                   }};
    };
    auto add_bool = [&r](const std::string& k, bool RunConfig::* m) {
      r[k] = Field{[m](const RunConfig& c) { return c.*m ? "true" : "false"; },
                   [m, k](RunConfig& c, const std::string& v) {
                     c.*m = parse_bool(k, v);
                   }};
    };

    add_str("mode", &RunConfig::mode);
    add_u64("seed", &RunConfig::seed);
    add_str("out", &RunConfig::out);

    add_int("scene.width", &RunConfig::scene_width);
    add_int("scene.height", &RunConfig::scene_height);
    add_dbl("scene.density", &RunConfig::scene_density);
    add_int("scene.pool", &RunConfig::scene_pool);
    add_dbl("scene.resolution", &RunConfig::scene_resolution);

    add_int("env.max_steps", &RunConfig::env_max_steps);
    add_dbl("env.success_reward", &RunConfig::env_success_reward);
    add_dbl("env.slack_reward", &RunConfig::env_slack_reward);
    add_dbl("env.shaping_scale", &RunConfig::env_shaping_scale);
    add_str("env.shaping_metric", &RunConfig::env_shaping_metric);
    add_str("env.volume_mode", &RunConfig::env_volume_mode);

    add_int("audio.sample_rate", &RunConfig::audio_sample_rate);
    add_int("audio.chunk_samples", &RunConfig::audio_chunk_samples);
    add_int("audio.window", &RunConfig::audio_window);
    add_int("audio.hop", &RunConfig::audio_hop);
    add_int("audio.downsample", &RunConfig::audio_downsample);
    add_str("audio.rir_mode", &RunConfig::audio_rir_mode);
    add_bool("audio.reflection", &RunConfig::audio_reflection);
    add_dbl("audio.wall_attenuation", &RunConfig::audio_wall_attenuation);
    add_dbl("audio.speed_of_sound", &RunConfig::audio_speed_of_sound);
    add_dbl("audio.reflection_gain", &RunConfig::audio_reflection_gain);

    add_int("bank.categories", &RunConfig::bank_categories);
    add_int("bank.train_categories", &RunConfig::bank_train_categories);
    add_dbl("bank.energy_cap", &RunConfig::bank_energy_cap);
    add_int("bank.samples", &RunConfig::bank_samples);
    add_u64("bank.seed", &RunConfig::bank_seed);

    add_int("visual.rays", &RunConfig::visual_rays);
    add_dbl("visual.max_range", &RunConfig::visual_max_range);
    add_dbl("visual.noise_std", &RunConfig::visual_noise_std);
    add_bool("visual.blind", &RunConfig::visual_blind);

    add_int("nn.visual_hidden", &RunConfig::nn_visual_hidden);
    add_int("nn.audio_hidden", &RunConfig::nn_audio_hidden);
    add_int("nn.gru_hidden", &RunConfig::nn_gru_hidden);
    add_str("nn.fusion", &RunConfig::nn_fusion);

    add_dbl("ppo.clip", &RunConfig::ppo_clip);
    add_int("ppo.epochs", &RunConfig::ppo_epochs);
    add_int("ppo.minibatches", &RunConfig::ppo_minibatches);
    add_dbl("ppo.value_coef", &RunConfig::ppo_value_coef);
    add_dbl("ppo.entropy_coef", &RunConfig::ppo_entropy_coef);
    add_dbl("ppo.lr", &RunConfig::ppo_lr);
    add_dbl("ppo.gamma", &RunConfig::ppo_gamma);
    add_dbl("ppo.tau", &RunConfig::ppo_tau);
    add_int("ppo.num_steps", &RunConfig::ppo_num_steps);
    add_dbl("ppo.max_grad_norm", &RunConfig::ppo_max_grad_norm);
    add_dbl("ppo.w_cat", &RunConfig::ppo_w_cat);
    add_dbl("ppo.w_vol", &RunConfig::ppo_w_vol);
    add_dbl("ppo.w_pos", &RunConfig::ppo_w_pos);
    add_dbl("ppo.w_agent", &RunConfig::ppo_w_agent);
    add_bool("ppo.vanilla_pg", &RunConfig::ppo_vanilla_pg);
    add_bool("ppo.normalize_advantages", &RunConfig::ppo_normalize_advantages);

    add_i64("train.env_steps", &RunConfig::train_env_steps);
    add_int("train.n_envs", &RunConfig::train_n_envs);
    add_int("train.checkpoint_every", &RunConfig::train_checkpoint_every);

    add_str("attacker.mode", &RunConfig::attacker_mode);
    add_int("attacker.volume_index", &RunConfig::attacker_volume_index);
    add_int("attacker.category", &RunConfig::attacker_category);

    add_int("eval.episodes", &RunConfig::eval_episodes);
    add_int("eval.runs", &RunConfig::eval_runs);
    add_str("eval.checkpoint", &RunConfig::eval_checkpoint);
    add_str("eval.attacker_checkpoint", &RunConfig::eval_attacker_checkpoint);
    add_bool("eval.greedy", &RunConfig::eval_greedy);
    add_int("eval.min_start_distance", &RunConfig::eval_min_start_distance);
    add_int("eval.dump_trajectories", &RunConfig::eval_dump_trajectories);

    add_str("transfer.checkpoints", &RunConfig::transfer_checkpoints);
    add_str("transfer.envs", &RunConfig::transfer_envs);

    add_str("sweep.kind", &RunConfig::sweep_kind);

    add_int("theory.trials", &RunConfig::theory_trials);
    add_dbl("theory.tol", &RunConfig::theory_tol);
    add_str("theory.rir", &RunConfig::theory_rir);

    add_str("replay.file", &RunConfig::replay_file);
    return r;
  }();
  return reg;
}

void check_token(const std::string& key, const std::string& value,
                 std::initializer_list<const char*> allowed) {
  for (const char* a : allowed) {
    if (value == a) return;
  }
  std::string msg = "invalid value for " + key + ": '" + value + "' (allowed:";
  for (const char* a : allowed) msg += std::string(" ") + a;
  msg += ")";
  throw std::invalid_argument(msg);
}

}  // namespace

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : registry()) out.push_back(k);
  return out;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto it = registry().find(key);
  if (it == registry().end()) {
    throw std::invalid_argument("unknown config key: " + key);
  }
  it->second.set(cfg, value);
}

std::string get_key(const RunConfig& cfg, const std::string& key) {
  auto it = registry().find(key);
  if (it == registry().end()) {
    throw std::invalid_argument("unknown config key: " + key);
  }
  return it->second.get(cfg);
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  " is not key=value: " + line);
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto b2 = s.find_first_not_of(" \t");
      const auto e2 = s.find_last_not_of(" \t");
      s = b2 == std::string::npos ? "" : s.substr(b2, e2 - b2 + 1);
    };
    trim(key);
    trim(value);
    set_key(cfg, key, value);
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string canonical_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : registry()) {
    out += key;
    out += '=';
    out += field.get(cfg);
    out += '\n';
  }
  return out;
}

std::uint64_t digest(const RunConfig& cfg) { return fnv1a64(canonical_text(cfg)); }

void validate(const RunConfig& cfg) {
  check_token("mode", cfg.mode,
              {"train-saavn", "train-avn", "train-idl", "eval", "transfer",
               "sweep", "verify-theory", "replay"});
  check_token("env.shaping_metric", cfg.env_shaping_metric,
              {"geodesic", "manhattan"});
  check_token("env.volume_mode", cfg.env_volume_mode, {"skipping", "sliding"});
  check_token("audio.rir_mode", cfg.audio_rir_mode, {"geometric", "unit-impulse"});
  check_token("nn.fusion", cfg.nn_fusion, {"concat", "multiply"});
  check_token("attacker.mode", cfg.attacker_mode,
              {"learned", "fixed", "random", "absent"});
  check_token("sweep.kind", cfg.sweep_kind,
              {"attack_strength", "volume_ablation", "env_complexity",
               "unseen_categories", "visual_noise", "blindness"});
  check_token("theory.rir", cfg.theory_rir, {"unit-impulse", "geometric"});

  if (cfg.scene_width < 4 || cfg.scene_height < 4) {
    throw std::invalid_argument("scene dimensions must be at least 4x4");
  }
  if (cfg.scene_density < 0.0 || cfg.scene_density > 0.4) {
    throw std::invalid_argument("scene.density must lie in [0, 0.4]");
  }
  if (cfg.scene_pool < 1) throw std::invalid_argument("scene.pool must be >= 1");
  if (cfg.bank_categories < 2) {
    throw std::invalid_argument("bank.categories must be >= 2");
  }
  if (cfg.bank_train_categories < 0 ||
      cfg.bank_train_categories > cfg.bank_categories) {
    throw std::invalid_argument("bank.train_categories out of range");
  }
  if (cfg.attacker_volume_index < 0 || cfg.attacker_volume_index > 10) {
    throw std::invalid_argument("attacker.volume_index must lie in [0, 10]");
  }
  const double wsum =
      cfg.ppo_w_cat + cfg.ppo_w_vol + cfg.ppo_w_pos + cfg.ppo_w_agent;
  if (std::abs(wsum - 1.0) > 1e-9) {
    throw std::invalid_argument("ppo branch weights must sum to 1");
  }
  if (cfg.ppo_gamma < 0.0 || cfg.ppo_gamma > 1.0 || cfg.ppo_tau < 0.0 ||
      cfg.ppo_tau > 1.0) {
    throw std::invalid_argument("ppo.gamma and ppo.tau must lie in [0, 1]");
  }
  if (cfg.ppo_num_steps < 1 || cfg.ppo_epochs < 1 || cfg.ppo_minibatches != 1) {
    throw std::invalid_argument(
        "ppo.num_steps/epochs must be positive; minibatches must be 1 "
        "(full-batch updates)");
  }
  if ((cfg.mode == "train-saavn" || cfg.mode == "train-idl") &&
      cfg.attacker_mode != "learned") {
    throw std::invalid_argument("adversarial training requires attacker.mode=learned");
  }
  if (cfg.mode == "train-avn" && cfg.attacker_mode == "learned") {
    throw std::invalid_argument(
        "agent-only training cannot drive a learned attacker");
  }
  if (cfg.audio_window < 2 || cfg.audio_hop < 1 ||
      cfg.audio_chunk_samples < cfg.audio_window) {
    throw std::invalid_argument("audio chunk must cover at least one window");
  }
  if (cfg.nn_fusion == "multiply" && cfg.nn_visual_hidden != cfg.nn_audio_hidden) {
    throw std::invalid_argument(
        "elementwise fusion requires equal branch widths");
  }
  if (cfg.eval_runs < 1 || cfg.eval_episodes < 1) {
    throw std::invalid_argument("eval runs/episodes must be positive");
  }
}

}  // namespace savn::config

#include "savn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "savn/sensors.hpp"

namespace savn::eval {

namespace {

constexpr std::uint64_t kPurposeEvalEpisode = 0xE7A1;

std::string hex_digest(std::uint64_t d) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(d));
  return std::string(buf);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

void require_records(const std::vector<EpisodeRecord>& records,
                     const char* what) {
  if (records.empty()) {
    throw std::invalid_argument(std::string(what) +
                                " needs at least one episode record");
  }
}

double spl_term(const EpisodeRecord& r) {
  if (!r.success) return 0.0;
  const double denom = std::max(r.executed_path, r.shortest_path);
  if (denom <= 0.0) return 0.0;
  return r.shortest_path / denom;
}

}  // namespace

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

double spl(const std::vector<EpisodeRecord>& records) {
  require_records(records, "spl");
  double total = 0.0;
  for (const auto& r : records) total += spl_term(r);
  return total / static_cast<double>(records.size());
}

double soft_spl(const std::vector<EpisodeRecord>& records) {
  require_records(records, "soft_spl");
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& r : records) {
    if (r.start_distance <= 0.0) continue;  // soft success divides by it
    const double denom = std::max(r.executed_path, r.shortest_path);
    const double path_eff = denom > 0.0 ? r.shortest_path / denom : 0.0;
    const double soft =
        std::max(0.0, 1.0 - r.final_distance / r.start_distance);
    total += soft * path_eff;
    ++counted;
  }
  if (counted < records.size()) {
    std::cerr << "warning: soft_spl excluded "
              << (records.size() - counted)
              << " episode(s) that started on the goal\n";
  }
  if (counted == 0) return 0.0;
  return total / static_cast<double>(counted);
}

double success_rate(const std::vector<EpisodeRecord>& records) {
  require_records(records, "success_rate");
  double total = 0.0;
  for (const auto& r : records) total += r.success ? 1.0 : 0.0;
  return total / static_cast<double>(records.size());
}

double dtg(const std::vector<EpisodeRecord>& records) {
  require_records(records, "dtg");
  double total = 0.0;
  for (const auto& r : records) total += r.final_distance;
  return total / static_cast<double>(records.size());
}

double ndtg(const std::vector<EpisodeRecord>& records) {
  require_records(records, "ndtg");
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& r : records) {
    if (r.start_distance <= 0.0) continue;
    total += r.final_distance / r.start_distance;
    ++counted;
  }
  if (counted < records.size()) {
    std::cerr << "warning: ndtg excluded " << (records.size() - counted)
              << " episode(s) that started on the goal\n";
  }
  if (counted == 0) return 0.0;
  return total / static_cast<double>(counted);
}

double reward_mean(const std::vector<EpisodeRecord>& records) {
  require_records(records, "reward_mean");
  double total = 0.0;
  for (const auto& r : records) total += r.reward;
  return total / static_cast<double>(records.size());
}

RunMetrics summarize(const std::vector<EpisodeRecord>& records) {
  RunMetrics m;
  m.success_rate = success_rate(records);
  m.spl = spl(records);
  m.soft_spl = soft_spl(records);
  m.dtg = dtg(records);
  m.ndtg = ndtg(records);
  m.reward = reward_mean(records);
  return m;
}

MetricsReport aggregate_runs(const std::vector<RunMetrics>& runs,
                             int episodes_per_run) {
  if (runs.empty()) {
    throw std::invalid_argument("aggregate_runs needs at least one run");
  }
  MetricsReport report;
  report.runs = static_cast<int>(runs.size());
  report.episodes_per_run = episodes_per_run;
  report.per_run = runs;
  auto fill = [&](MetricValue& out, double RunMetrics::* field) {
    std::vector<double> vals;
    vals.reserve(runs.size());
    for (const auto& r : runs) vals.push_back(r.*field);
    out.mean = mean_of(vals);
    out.std = sample_std(vals, out.mean);
  };
  fill(report.success_rate, &RunMetrics::success_rate);
  fill(report.spl, &RunMetrics::spl);
  fill(report.soft_spl, &RunMetrics::soft_spl);
  fill(report.dtg, &RunMetrics::dtg);
  fill(report.ndtg, &RunMetrics::ndtg);
  fill(report.reward, &RunMetrics::reward);
  return report;
}

std::string report_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["code_version"] = config::kCodeVersion;
  j["config_digest"] = hex_digest(report.config_digest);
  j["seed"] = std::to_string(report.seed);
  j["runs"] = report.runs;
  j["episodes_per_run"] = report.episodes_per_run;
  auto value = [](const MetricValue& v) {
    nlohmann::ordered_json o;
    o["mean"] = v.mean;
    o["std"] = v.std;
    return o;
  };
  nlohmann::ordered_json metrics;
  metrics["success_rate"] = value(report.success_rate);
  metrics["spl"] = value(report.spl);
  metrics["soft_spl"] = value(report.soft_spl);
  metrics["dtg"] = value(report.dtg);
  metrics["ndtg"] = value(report.ndtg);
  metrics["reward_mean"] = value(report.reward);
  j["metrics"] = metrics;
  nlohmann::ordered_json per_run = nlohmann::ordered_json::array();
  for (const auto& r : report.per_run) {
    nlohmann::ordered_json o;
    o["success_rate"] = r.success_rate;
    o["spl"] = r.spl;
    o["soft_spl"] = r.soft_spl;
    o["dtg"] = r.dtg;
    o["ndtg"] = r.ndtg;
    o["reward_mean"] = r.reward;
    per_run.push_back(o);
  }
  j["per_run"] = per_run;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

namespace {

class RandomAgent final : public AgentPolicy {
 public:
  void begin_episode() override {}
  world::AgentAction act(const std::vector<double>&,
                         const world::EpisodeState& state,
                         const world::Scene& scene, Rng& rng) override {
    if (state.agent.node == scene.goal()) return world::AgentAction::Stop;
    return static_cast<world::AgentAction>(rng.uniform_index(3));
  }
};

class NetworkAgent final : public AgentPolicy {
 public:
  NetworkAgent(const nn::PolicyNetwork* net, bool greedy)
      : net_(net), greedy_(greedy), h_(net->gru_hidden(), 0.0),
        h_next_(net->gru_hidden(), 0.0) {
    if (net_->n_heads() != 1 || net_->head_sizes()[0] != world::kAgentActionCount) {
      throw std::invalid_argument("network agent needs a single 4-way head");
    }
  }

  void begin_episode() override { std::fill(h_.begin(), h_.end(), 0.0); }

  world::AgentAction act(const std::vector<double>& obs,
                         const world::EpisodeState&, const world::Scene&,
                         Rng& rng) override {
    nn::StepOutput out =
        net_->forward(obs.data(), h_.data(), h_next_.data(), nullptr);
    std::swap(h_, h_next_);
    const int a = greedy_ ? nn::argmax(out.probs[0])
                          : nn::sample_categorical(out.probs[0], rng);
    return static_cast<world::AgentAction>(a);
  }

 private:
  const nn::PolicyNetwork* net_;
  bool greedy_;
  std::vector<double> h_, h_next_;
};

// Recurrent state + head decoding for a learned attacker during evaluation.
class AttackerRunner {
 public:
  AttackerRunner(const nn::PolicyNetwork* net, bool greedy)
      : net_(net), greedy_(greedy), h_(net->gru_hidden(), 0.0),
        h_next_(net->gru_hidden(), 0.0) {
    if (net_->n_heads() != 3) {
      throw std::invalid_argument(
          "learned attacker needs position/volume/category heads");
    }
  }

  void begin_episode() { std::fill(h_.begin(), h_.end(), 0.0); }

  world::AttackerAction act(const std::vector<double>& obs, Rng& rng) {
    nn::StepOutput out =
        net_->forward(obs.data(), h_.data(), h_next_.data(), nullptr);
    std::swap(h_, h_next_);
    auto pick = [&](const std::vector<double>& probs) {
      return greedy_ ? nn::argmax(probs) : nn::sample_categorical(probs, rng);
    };
    world::AttackerAction a;
    a.move = static_cast<world::AttackerMove>(pick(out.probs[0]));
    a.volume_index = pick(out.probs[1]);
    a.category_index = pick(out.probs[2]);
    return a;
  }

 private:
  const nn::PolicyNetwork* net_;
  bool greedy_;
  std::vector<double> h_, h_next_;
};

nlohmann::ordered_json pose_json(const world::Pose& p) {
  return nlohmann::ordered_json::array(
      {p.node.x, p.node.y, static_cast<int>(p.heading)});
}

}  // namespace

std::unique_ptr<AgentPolicy> make_random_agent() {
  return std::make_unique<RandomAgent>();
}

std::unique_ptr<AgentPolicy> make_network_agent(const nn::PolicyNetwork* net,
                                                bool greedy) {
  return std::make_unique<NetworkAgent>(net, greedy);
}

LoadedPolicy load_policy(const std::string& path) {
  nn::Checkpoint ckpt = nn::load_checkpoint(path);
  auto it = ckpt.meta.find("config");
  if (it == ckpt.meta.end()) {
    throw std::runtime_error("checkpoint lacks an embedded config: " + path);
  }
  LoadedPolicy loaded;
  loaded.train_cfg = config::parse_config_text(it->second);
  loaded.meta = ckpt.meta;
  loaded.policies = rl::build_policies(loaded.train_cfg);

  auto assign = [&](nn::ParameterStore& dst, const nn::ParameterStore& src,
                    const std::string& name) {
    if (dst.names() != src.names() ||
        dst.parameter_count() != src.parameter_count()) {
      throw std::runtime_error("checkpoint store '" + name +
                               "' does not match its embedded config: " + path);
    }
    dst = src;
  };

  bool have_agent = false;
  for (const auto& [name, store] : ckpt.stores) {
    if (name == "agent") {
      assign(*loaded.policies.agent_store, store, name);
      have_agent = true;
    } else if (name == "attacker") {
      if (!loaded.policies.attacker) {
        throw std::runtime_error(
            "checkpoint carries an attacker store but its config trains none: " +
            path);
      }
      assign(*loaded.policies.attacker_store, store, name);
    } else {
      throw std::runtime_error("checkpoint has an unknown store '" + name +
                               "': " + path);
    }
  }
  if (!have_agent) {
    throw std::runtime_error("checkpoint is missing the agent store: " + path);
  }
  return loaded;
}

// ---------------------------------------------------------------------------
// Evaluation loop
// ---------------------------------------------------------------------------

MetricsReport evaluate(const EvalRequest& req) {
  if (req.setup == nullptr || req.agent == nullptr) {
    throw std::invalid_argument("evaluate needs an environment and an agent");
  }
  const rl::EnvSetup& setup = *req.setup;
  if (setup.attacker.mode == world::AttackerMode::Learned &&
      req.attacker_net == nullptr) {
    throw std::invalid_argument(
        "a learned attacker environment needs an attacker network");
  }
  if (req.runs < 1 || req.episodes < 1) {
    throw std::invalid_argument("evaluation needs at least one run/episode");
  }

  std::vector<sensors::RirCache> caches(setup.scenes.size());
  std::unique_ptr<AttackerRunner> attacker;
  if (req.attacker_net != nullptr) {
    attacker = std::make_unique<AttackerRunner>(req.attacker_net, req.greedy);
  }

  const double min_start =
      static_cast<double>(req.min_start_distance) * setup.resolution;
  const std::uint64_t max_attempts =
      static_cast<std::uint64_t>(req.episodes) * 1000ull;

  std::vector<RunMetrics> run_metrics;
  run_metrics.reserve(static_cast<std::size_t>(req.runs));

  for (int run = 0; run < req.runs; ++run) {
    std::vector<EpisodeRecord> records;
    records.reserve(static_cast<std::size_t>(req.episodes));
    std::uint64_t attempt = 0;
    int dumped = 0;

    while (static_cast<int>(records.size()) < req.episodes) {
      if (attempt >= max_attempts) {
        throw std::runtime_error(
            "episode curation exhausted its seed budget; lower "
            "eval.min_start_distance or the scene density");
      }
      const std::uint64_t episode_seed = Rng::mix(
          req.seed, kPurposeEvalEpisode + static_cast<std::uint64_t>(run),
          attempt++);
      const std::size_t scene_index =
          static_cast<std::size_t>(episode_seed % setup.scenes.size());
      const world::Scene& scene = setup.scenes[scene_index];

      world::EpisodeState state =
          world::reset_episode(scene, episode_seed, setup.attacker, setup.env);
      const double start_geo = scene.distance_to_goal(state.agent.node);
      // Curation never consults the attacker, so the accepted episode set is
      // identical across attacker variants under the same seed.
      if (start_geo < min_start - 1e-9) continue;

      world::AttackerDriver driver(setup.attacker, setup.env, episode_seed);
      Rng noise_rng = Rng::derive(episode_seed, rl::kStreamNoise,
                                  rl::kPurposeNoise);
      Rng agent_rng = Rng::derive(episode_seed, rl::kStreamSample,
                                  rl::kPurposeAgentSample);
      Rng attacker_rng = Rng::derive(episode_seed, rl::kStreamSample,
                                     rl::kPurposeAttackerSample);

      req.agent->begin_episode();
      if (attacker) attacker->begin_episode();

      const bool dump = run == 0 && !req.dump_dir.empty() &&
                        dumped < req.dump_count;
      std::ostringstream traj;
      if (dump) {
        nlohmann::ordered_json header;
        header["type"] = "header";
        header["version"] = 1;
        header["code_version"] = config::kCodeVersion;
        header["config_digest"] = hex_digest(req.config_digest);
        header["episode_seed"] = std::to_string(episode_seed);
        header["target_category"] = state.target_category;
        header["scene"] = nlohmann::ordered_json::parse(scene.to_json());
        header["agent"] = pose_json(state.agent);
        header["attacker"] = pose_json(state.attacker);
        header["alpha"] = state.alpha();
        header["category"] = state.attacker_category;
        traj << header.dump() << '\n';
      }

      std::vector<double> obs = sensors::flatten(sensors::make_observation(
          scene, state, setup.bank, setup.visual, setup.audio, noise_rng,
          &caches[scene_index]));

      EpisodeRecord rec;
      rec.shortest_path = start_geo;
      rec.start_distance = start_geo;
      int position_changes = 0;
      int step_index = 0;
      bool done = false;
      while (!done) {
        const world::AgentAction action =
            req.agent->act(obs, state, scene, agent_rng);
        world::AttackerAction attacker_action;
        if (attacker) {
          attacker_action = attacker->act(obs, attacker_rng);
        } else {
          attacker_action = driver.next_action();
        }
        const world::Cell before = state.agent.node;
        const world::StepResult res =
            world::step(scene, state, action, attacker_action, setup.env);
        if (!(state.agent.node == before)) ++position_changes;
        rec.reward += res.reward.agent;
        done = res.done;
        ++step_index;
        if (dump) {
          nlohmann::ordered_json sj;
          sj["type"] = "step";
          sj["step"] = step_index;
          sj["agent"] = pose_json(state.agent);
          sj["attacker"] = pose_json(state.attacker);
          sj["alpha"] = state.alpha();
          sj["category"] = state.attacker_category;
          sj["reward"] = res.reward.agent;
          sj["done"] = res.done;
          sj["success"] = state.success;
          traj << sj.dump() << '\n';
        }
        if (!done) {
          obs = sensors::flatten(sensors::make_observation(
              scene, state, setup.bank, setup.visual, setup.audio, noise_rng,
              &caches[scene_index]));
        }
      }

      rec.success = state.success;
      rec.final_distance = scene.distance_to_goal(state.agent.node);
      rec.executed_path = setup.resolution * static_cast<double>(position_changes);
      records.push_back(rec);

      if (dump) {
        std::filesystem::create_directories(req.dump_dir);
        char name[32];
        std::snprintf(name, sizeof(name), "trajectory_%03d.jsonl", dumped);
        std::ofstream out(std::filesystem::path(req.dump_dir) / name,
                          std::ios::binary);
        if (!out) {
          throw std::runtime_error("cannot write trajectory dump in " +
                                   req.dump_dir);
        }
        out << traj.str();
        ++dumped;
      }
    }
    run_metrics.push_back(summarize(records));
  }

  MetricsReport report = aggregate_runs(run_metrics, req.episodes);
  report.seed = req.seed;
  report.config_digest = req.config_digest;
  return report;
}

// ---------------------------------------------------------------------------
// Drivers
// ---------------------------------------------------------------------------

namespace {

// Holds a loaded checkpoint (or the "random" token) for reuse across matrix
// cells; load errors are remembered and surface per cell.
struct PolicyCache {
  std::map<std::string, LoadedPolicy> loaded;
  std::map<std::string, std::string> errors;

  const LoadedPolicy* get(const std::string& path, std::string* error) {
    if (auto it = errors.find(path); it != errors.end()) {
      *error = it->second;
      return nullptr;
    }
    if (auto it = loaded.find(path); it != loaded.end()) return &it->second;
    try {
      loaded.emplace(path, load_policy(path));
      return &loaded.at(path);
    } catch (const std::exception& e) {
      errors.emplace(path, e.what());
      *error = e.what();
      return nullptr;
    }
  }
};

void check_observation_contract(const config::RunConfig& train_cfg,
                                const config::RunConfig& eval_cfg,
                                const std::string& path) {
  const int trained = sensors::observation_width(rl::visual_config(train_cfg),
                                                 rl::audio_config(train_cfg));
  const int here = sensors::observation_width(rl::visual_config(eval_cfg),
                                              rl::audio_config(eval_cfg));
  if (trained != here) {
    throw std::invalid_argument(
        "checkpoint " + path + " was trained on " + std::to_string(trained) +
        "-wide observations but this environment produces " +
        std::to_string(here));
  }
}

const nn::PolicyNetwork* require_attacker(const LoadedPolicy& loaded,
                                          const std::string& path) {
  if (!loaded.policies.attacker) {
    throw std::invalid_argument("checkpoint has no attacker policy: " + path);
  }
  return loaded.policies.attacker.get();
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string token;
  std::istringstream in(text);
  while (std::getline(in, token, ',')) {
    // trim surrounding whitespace
    const auto b = token.find_first_not_of(" \t");
    const auto e = token.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(token.substr(b, e - b + 1));
  }
  return out;
}

struct ResolvedAgent {
  std::unique_ptr<AgentPolicy> policy;
  const LoadedPolicy* loaded = nullptr;  // null for the random baseline
};

ResolvedAgent resolve_agent(const std::string& token,
                            const config::RunConfig& eval_cfg,
                            PolicyCache& cache) {
  ResolvedAgent out;
  if (token == "random") {
    out.policy = make_random_agent();
    return out;
  }
  std::string error;
  const LoadedPolicy* loaded = cache.get(token, &error);
  if (loaded == nullptr) throw std::runtime_error(error);
  check_observation_contract(loaded->train_cfg, eval_cfg, token);
  out.loaded = loaded;
  out.policy = make_network_agent(loaded->policies.agent.get(),
                                  eval_cfg.eval_greedy);
  return out;
}

MetricsReport evaluate_with(const config::RunConfig& cfg,
                            const rl::EnvSetup& setup, AgentPolicy* agent,
                            const nn::PolicyNetwork* attacker_net,
                            const std::string& dump_dir) {
  EvalRequest req;
  req.setup = &setup;
  req.agent = agent;
  req.attacker_net = attacker_net;
  req.seed = cfg.seed;
  req.runs = cfg.eval_runs;
  req.episodes = cfg.eval_episodes;
  req.greedy = cfg.eval_greedy;
  req.min_start_distance = cfg.eval_min_start_distance;
  req.config_digest = config::digest(cfg);
  req.dump_dir = dump_dir;
  req.dump_count = cfg.eval_dump_trajectories;
  return evaluate(req);
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << text;
}

nlohmann::ordered_json report_json_value(const MetricsReport& report) {
  return nlohmann::ordered_json::parse(report_to_json(report));
}

std::string format_cell(const MetricsReport& report) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g/%.6g", report.spl.mean,
                report.reward.mean);
  return std::string(buf);
}

}  // namespace

MetricsReport run_eval(const config::RunConfig& cfg) {
  if (cfg.eval_checkpoint.empty()) {
    throw std::invalid_argument(
        "eval needs eval.checkpoint (a path or \"random\")");
  }
  rl::EnvSetup setup = rl::build_setup(cfg);
  PolicyCache cache;
  ResolvedAgent agent = resolve_agent(cfg.eval_checkpoint, cfg, cache);

  const nn::PolicyNetwork* attacker_net = nullptr;
  const LoadedPolicy* attacker_loaded = nullptr;
  if (setup.attacker.mode == world::AttackerMode::Learned) {
    if (!cfg.eval_attacker_checkpoint.empty()) {
      std::string error;
      attacker_loaded = cache.get(cfg.eval_attacker_checkpoint, &error);
      if (attacker_loaded == nullptr) throw std::runtime_error(error);
      check_observation_contract(attacker_loaded->train_cfg, cfg,
                                 cfg.eval_attacker_checkpoint);
      attacker_net =
          require_attacker(*attacker_loaded, cfg.eval_attacker_checkpoint);
    } else if (agent.loaded != nullptr && agent.loaded->policies.attacker) {
      attacker_net = agent.loaded->policies.attacker.get();
    } else {
      throw std::invalid_argument(
          "attacker.mode=learned needs eval.attacker_checkpoint or a "
          "checkpoint that bundles an attacker");
    }
    const int categories = attacker_net->head_sizes().at(2);
    if (categories > setup.env.num_categories) {
      throw std::invalid_argument(
          "attacker emits " + std::to_string(categories) +
          " categories but the sound bank only has " +
          std::to_string(setup.env.num_categories));
    }
  }

  std::string dump_dir;
  if (cfg.eval_dump_trajectories > 0) {
    dump_dir = (std::filesystem::path(cfg.out) / "trajectories").string();
  }
  MetricsReport report =
      evaluate_with(cfg, setup, agent.policy.get(), attacker_net, dump_dir);
  write_text_file(std::filesystem::path(cfg.out) / "metrics.json",
                  report_to_json(report));
  return report;
}

// ---------------------------------------------------------------------------
// Transfer matrix
// ---------------------------------------------------------------------------

namespace {

struct ColumnEnv {
  std::string token;
  config::RunConfig cfg;          // eval config with the column's attacker
  rl::EnvSetup setup;
  const nn::PolicyNetwork* attacker_net = nullptr;  // null => per-row (pvc)
  bool own_attacker = false;                        // pvc column
};

ColumnEnv build_column(const std::string& token, const config::RunConfig& base,
                       PolicyCache& cache) {
  ColumnEnv col;
  col.token = token;
  col.cfg = base;
  if (token == "clean") {
    col.cfg.attacker_mode = "absent";
  } else if (token == "fixed") {
    col.cfg.attacker_mode = "fixed";
  } else if (token == "random") {
    col.cfg.attacker_mode = "random";
  } else if (token == "pvc") {
    col.cfg.attacker_mode = "learned";
    col.own_attacker = true;
  } else if (token.rfind("learned:", 0) == 0) {
    col.cfg.attacker_mode = "learned";
    const std::string path = token.substr(8);
    std::string error;
    const LoadedPolicy* loaded = cache.get(path, &error);
    if (loaded == nullptr) throw std::runtime_error(error);
    check_observation_contract(loaded->train_cfg, col.cfg, path);
    col.attacker_net = require_attacker(*loaded, path);
  } else {
    throw std::invalid_argument(
        "unknown transfer environment '" + token +
        "' (expected clean | fixed | random | pvc | learned:<path>)");
  }
  col.setup = rl::build_setup(col.cfg);
  return col;
}

}  // namespace

TransferResult transfer_matrix(const config::RunConfig& cfg) {
  TransferResult result;
  result.rows = split_tokens(cfg.transfer_checkpoints);
  result.cols = split_tokens(cfg.transfer_envs);
  if (result.rows.empty()) {
    throw std::invalid_argument("transfer needs at least one checkpoint");
  }
  if (result.cols.empty()) {
    throw std::invalid_argument("transfer needs at least one environment");
  }

  PolicyCache cache;
  std::vector<ColumnEnv> columns;
  std::vector<std::string> column_errors(result.cols.size());
  columns.reserve(result.cols.size());
  for (std::size_t c = 0; c < result.cols.size(); ++c) {
    try {
      columns.push_back(build_column(result.cols[c], cfg, cache));
    } catch (const std::exception& e) {
      columns.emplace_back();  // placeholder; error recorded per cell
      column_errors[c] = e.what();
    }
  }

  for (const auto& row : result.rows) {
    std::vector<TransferCell> cells(result.cols.size());
    for (std::size_t c = 0; c < result.cols.size(); ++c) {
      TransferCell& cell = cells[c];
      if (!column_errors[c].empty()) {
        cell.error = column_errors[c];
        continue;
      }
      const ColumnEnv& col = columns[c];
      try {
        ResolvedAgent agent = resolve_agent(row, col.cfg, cache);
        const nn::PolicyNetwork* attacker_net = col.attacker_net;
        if (col.own_attacker) {
          if (agent.loaded == nullptr) {
            throw std::invalid_argument(
                "the random baseline bundles no attacker for the pvc column");
          }
          attacker_net = require_attacker(*agent.loaded, row);
        }
        cell.report =
            evaluate_with(col.cfg, col.setup, agent.policy.get(), attacker_net,
                          /*dump_dir=*/"");
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
    result.cells.push_back(std::move(cells));
  }
  return result;
}

std::string transfer_to_csv(const TransferResult& result) {
  std::ostringstream out;
  out << "agent";
  for (const auto& col : result.cols) out << ',' << col;
  out << '\n';
  for (std::size_t r = 0; r < result.rows.size(); ++r) {
    out << result.rows[r];
    for (const auto& cell : result.cells[r]) {
      out << ',' << (cell.ok ? format_cell(cell.report) : "error");
    }
    out << '\n';
  }
  return out.str();
}

std::string transfer_to_json(const TransferResult& result) {
  nlohmann::ordered_json j;
  j["rows"] = result.rows;
  j["cols"] = result.cols;
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& row : result.cells) {
    nlohmann::ordered_json row_json = nlohmann::ordered_json::array();
    for (const auto& cell : row) {
      nlohmann::ordered_json o;
      o["ok"] = cell.ok;
      if (cell.ok) {
        o["report"] = report_json_value(cell.report);
      } else {
        o["error"] = cell.error;
      }
      row_json.push_back(o);
    }
    cells.push_back(row_json);
  }
  j["cells"] = cells;
  return j.dump(2) + "\n";
}

void run_transfer(const config::RunConfig& cfg) {
  TransferResult result = transfer_matrix(cfg);
  const std::filesystem::path out(cfg.out);
  write_text_file(out / "transfer.csv", transfer_to_csv(result));
  write_text_file(out / "transfer.json", transfer_to_json(result));
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

namespace {

struct SweepSpec {
  std::string label;
  config::RunConfig cfg;
  // Post-build adjustment (e.g. the unseen-category split).
  std::vector<int> allowed_categories;  // empty = leave the setup alone
};

std::vector<SweepSpec> sweep_points(const config::RunConfig& cfg) {
  std::vector<SweepSpec> points;
  auto add = [&](const std::string& label, config::RunConfig c) {
    points.push_back({label, std::move(c), {}});
  };
  char label[64];
  if (cfg.sweep_kind == "attack_strength") {
    for (double alpha : {0.0, 0.1, 0.3, 0.5, 0.7, 0.9}) {
      config::RunConfig c = cfg;
      c.attacker_mode = alpha == 0.0 ? "absent" : "fixed";
      c.attacker_volume_index = static_cast<int>(std::lround(alpha * 10.0));
      std::snprintf(label, sizeof(label), "alpha=%.1f", alpha);
      add(label, c);
    }
  } else if (cfg.sweep_kind == "volume_ablation") {
    for (int v = 0; v < world::kVolumeLevels; ++v) {
      config::RunConfig c = cfg;
      c.attacker_mode = "fixed";
      c.attacker_volume_index = v;
      std::snprintf(label, sizeof(label), "alpha=%.1f",
                    world::volume_value(v));
      add(label, c);
    }
  } else if (cfg.sweep_kind == "env_complexity") {
    for (double density : {0.0, 0.1, 0.2, 0.3, 0.4}) {
      config::RunConfig c = cfg;
      c.scene_density = density;
      std::snprintf(label, sizeof(label), "density=%.1f", density);
      add(label, c);
    }
  } else if (cfg.sweep_kind == "unseen_categories") {
    const int total = cfg.bank_categories;
    const int train = rl::train_categories(cfg);
    if (train <= 0 || train >= total) {
      throw std::invalid_argument(
          "the unseen-category sweep needs bank.train_categories strictly "
          "between 0 and bank.categories");
    }
    config::RunConfig c = cfg;
    c.attacker_mode = "random";
    SweepSpec seen{"categories=train", c, {}};
    for (int k = 0; k < train; ++k) seen.allowed_categories.push_back(k);
    SweepSpec unseen{"categories=unseen", c, {}};
    for (int k = train; k < total; ++k) unseen.allowed_categories.push_back(k);
    points.push_back(std::move(seen));
    points.push_back(std::move(unseen));
  } else if (cfg.sweep_kind == "visual_noise") {
    for (double std_dev : {0.0, 0.01, 0.05}) {
      config::RunConfig c = cfg;
      c.visual_noise_std = std_dev;
      std::snprintf(label, sizeof(label), "noise=%g", std_dev);
      add(label, c);
    }
  } else if (cfg.sweep_kind == "blindness") {
    for (bool blind : {false, true}) {
      config::RunConfig c = cfg;
      c.visual_blind = blind;
      add(blind ? "blind" : "sighted", c);
    }
  } else {
    throw std::invalid_argument("unknown sweep.kind: " + cfg.sweep_kind);
  }
  return points;
}

}  // namespace

SweepResult sweep_grid(const config::RunConfig& cfg) {
  if (cfg.eval_checkpoint.empty()) {
    throw std::invalid_argument(
        "sweep needs eval.checkpoint (a path or \"random\")");
  }
  SweepResult result;
  result.kind = cfg.sweep_kind;
  PolicyCache cache;
  for (SweepSpec& spec : sweep_points(cfg)) {
    SweepPoint point;
    point.label = spec.label;
    try {
      config::validate(spec.cfg);
      rl::EnvSetup setup = rl::build_setup(spec.cfg);
      if (!spec.allowed_categories.empty()) {
        setup.attacker.allowed_categories = spec.allowed_categories;
      }
      ResolvedAgent agent = resolve_agent(spec.cfg.eval_checkpoint, spec.cfg,
                                          cache);
      const nn::PolicyNetwork* attacker_net = nullptr;
      if (setup.attacker.mode == world::AttackerMode::Learned) {
        if (!spec.cfg.eval_attacker_checkpoint.empty()) {
          std::string error;
          const LoadedPolicy* loaded =
              cache.get(spec.cfg.eval_attacker_checkpoint, &error);
          if (loaded == nullptr) throw std::runtime_error(error);
          attacker_net =
              require_attacker(*loaded, spec.cfg.eval_attacker_checkpoint);
        } else if (agent.loaded != nullptr && agent.loaded->policies.attacker) {
          attacker_net = agent.loaded->policies.attacker.get();
        } else {
          throw std::invalid_argument(
              "attacker.mode=learned needs eval.attacker_checkpoint or a "
              "checkpoint that bundles an attacker");
        }
      }
      point.report = evaluate_with(spec.cfg, setup, agent.policy.get(),
                                   attacker_net, /*dump_dir=*/"");
      point.ok = true;
    } catch (const std::exception& e) {
      point.error = e.what();
    }
    result.points.push_back(std::move(point));
  }
  return result;
}

std::string sweep_to_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "label,success_rate_mean,success_rate_std,spl_mean,spl_std,"
         "soft_spl_mean,soft_spl_std,dtg_mean,dtg_std,ndtg_mean,ndtg_std,"
         "reward_mean,reward_std,error\n";
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ',' << buf;
  };
  for (const auto& p : result.points) {
    out << p.label;
    if (p.ok) {
      num(p.report.success_rate.mean);
      num(p.report.success_rate.std);
      num(p.report.spl.mean);
      num(p.report.spl.std);
      num(p.report.soft_spl.mean);
      num(p.report.soft_spl.std);
      num(p.report.dtg.mean);
      num(p.report.dtg.std);
      num(p.report.ndtg.mean);
      num(p.report.ndtg.std);
      num(p.report.reward.mean);
      num(p.report.reward.std);
      out << ",\n";
    } else {
      std::string quoted = p.error;
      for (std::size_t pos = 0; (pos = quoted.find('"', pos)) != std::string::npos;
           pos += 2) {
        quoted.insert(pos, 1, '"');
      }
      out << ",,,,,,,,,,,,,\"" << quoted << "\"\n";
    }
  }
  return out.str();
}

std::string sweep_to_json(const SweepResult& result) {
  nlohmann::ordered_json j;
  j["kind"] = result.kind;
  nlohmann::ordered_json points = nlohmann::ordered_json::array();
  for (const auto& p : result.points) {
    nlohmann::ordered_json o;
    o["label"] = p.label;
    o["ok"] = p.ok;
    if (p.ok) {
      o["report"] = report_json_value(p.report);
    } else {
      o["error"] = p.error;
    }
    points.push_back(o);
  }
  j["points"] = points;
  return j.dump(2) + "\n";
}

void run_sweep(const config::RunConfig& cfg) {
  SweepResult result = sweep_grid(cfg);
  const std::filesystem::path out(cfg.out);
  write_text_file(out / ("sweep_" + result.kind + ".csv"),
                  sweep_to_csv(result));
  write_text_file(out / ("sweep_" + result.kind + ".json"),
                  sweep_to_json(result));
}

}  // namespace savn::eval

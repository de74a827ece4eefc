#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "savn/config.hpp"
#include "savn/nn.hpp"
#include "savn/rl.hpp"
#include "savn/rng.hpp"
#include "savn/world.hpp"

namespace savn::eval {

// ---------------------------------------------------------------------------
// Episode records and metrics (pure functions over records)
// ---------------------------------------------------------------------------

struct EpisodeRecord {
  bool success = false;
  double shortest_path = 0.0;   // l: start-to-goal geodesic, length units
  double executed_path = 0.0;   // p: distance actually walked (turns cost 0)
  double start_distance = 0.0;  // d: equals l here, kept as its own field
  double final_distance = 0.0;  // d^a: geodesic to goal at episode end
  double reward = 0.0;          // episode return, agent side
};

// All six metrics; empty record sets are an error. Records with a zero start
// distance are excluded (with a warning) from the soft-success and normalized
// distance averages, whose formulas divide by it.
double spl(const std::vector<EpisodeRecord>& records);
double soft_spl(const std::vector<EpisodeRecord>& records);
double success_rate(const std::vector<EpisodeRecord>& records);
double dtg(const std::vector<EpisodeRecord>& records);
double ndtg(const std::vector<EpisodeRecord>& records);
double reward_mean(const std::vector<EpisodeRecord>& records);

struct RunMetrics {
  double success_rate = 0.0;
  double spl = 0.0;
  double soft_spl = 0.0;
  double dtg = 0.0;
  double ndtg = 0.0;
  double reward = 0.0;
};

RunMetrics summarize(const std::vector<EpisodeRecord>& records);

struct MetricValue {
  double mean = 0.0;
  double std = 0.0;  // sample std over runs; 0 for a single run
};

struct MetricsReport {
  int runs = 0;
  int episodes_per_run = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_digest = 0;
  std::vector<RunMetrics> per_run;
  MetricValue success_rate, spl, soft_spl, dtg, ndtg, reward;
};

MetricsReport aggregate_runs(const std::vector<RunMetrics>& runs,
                             int episodes_per_run);
std::string report_to_json(const MetricsReport& report);

// ---------------------------------------------------------------------------
// Policies under evaluation
// ---------------------------------------------------------------------------

class AgentPolicy {
 public:
  virtual ~AgentPolicy() = default;
  virtual void begin_episode() = 0;
  virtual world::AgentAction act(const std::vector<double>& obs,
                                 const world::EpisodeState& state,
                                 const world::Scene& scene, Rng& rng) = 0;
};

// Uniform over {MoveForward, TurnLeft, TurnRight}, with perfect stopping:
// standing on the goal always issues Stop without drawing.
std::unique_ptr<AgentPolicy> make_random_agent();
// Recurrent network policy; greedy takes the argmax action, otherwise the
// action is sampled from the policy distribution.
std::unique_ptr<AgentPolicy> make_network_agent(const nn::PolicyNetwork* net,
                                                bool greedy);

// A checkpoint rebuilt into live networks from its embedded configuration.
struct LoadedPolicy {
  config::RunConfig train_cfg;
  rl::PolicySet policies;
  std::map<std::string, std::string> meta;
};

LoadedPolicy load_policy(const std::string& path);

// ---------------------------------------------------------------------------
// Evaluation protocol: fresh episode set per run, mean +- std across runs
// ---------------------------------------------------------------------------

struct EvalRequest {
  const rl::EnvSetup* setup = nullptr;
  AgentPolicy* agent = nullptr;
  // Required when setup->attacker.mode is Learned; drives all three heads.
  const nn::PolicyNetwork* attacker_net = nullptr;
  std::uint64_t seed = 1;
  int runs = 5;
  int episodes = 100;
  bool greedy = true;
  // Episode curation: only starts at least this many cells (geodesic) from
  // the goal enter the evaluation set.
  int min_start_distance = 0;
  std::uint64_t config_digest = 0;
  std::string dump_dir;  // when set, run 0 episodes dump JSONL trajectories
  int dump_count = 0;
};

MetricsReport evaluate(const EvalRequest& req);

// ---------------------------------------------------------------------------
// CLI drivers (artifact writers)
// ---------------------------------------------------------------------------

// Evaluates cfg.eval_checkpoint ("random" = the random baseline) in the
// configured environment; writes <out>/metrics.json.
MetricsReport run_eval(const config::RunConfig& cfg);

struct TransferCell {
  bool ok = false;
  std::string error;
  MetricsReport report;
};

struct TransferResult {
  std::vector<std::string> rows;  // checkpoint tokens
  std::vector<std::string> cols;  // environment tokens
  std::vector<std::vector<TransferCell>> cells;
};

// Rows: comma-separated checkpoint paths or "random". Columns: environment
// tokens clean | fixed | random | learned:<path> | pvc (pvc = the row's own
// bundled attacker). Cell errors are markers, never aborts.
TransferResult transfer_matrix(const config::RunConfig& cfg);
std::string transfer_to_csv(const TransferResult& result);
std::string transfer_to_json(const TransferResult& result);
void run_transfer(const config::RunConfig& cfg);  // writes transfer.{csv,json}

struct SweepPoint {
  std::string label;
  bool ok = false;
  std::string error;
  MetricsReport report;
};

struct SweepResult {
  std::string kind;
  std::vector<SweepPoint> points;
};

SweepResult sweep_grid(const config::RunConfig& cfg);
std::string sweep_to_csv(const SweepResult& result);
std::string sweep_to_json(const SweepResult& result);
void run_sweep(const config::RunConfig& cfg);  // writes sweep_<kind>.{csv,json}

}  // namespace savn::eval

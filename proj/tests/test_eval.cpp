#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "savn/eval.hpp"
#include "savn/replay.hpp"
#include "oracles.hpp"

using namespace savn;

namespace {

eval::EpisodeRecord record(bool success, double l, double p, double final_d,
                           double reward) {
  eval::EpisodeRecord r;
  r.success = success;
  r.shortest_path = l;
  r.executed_path = p;
  r.start_distance = l;
  r.final_distance = final_d;
  r.reward = reward;
  return r;
}

config::RunConfig tiny_eval_config(std::uint64_t seed) {
  config::RunConfig cfg;
  cfg.mode = "eval";
  cfg.seed = seed;
  cfg.out = (std::filesystem::temp_directory_path() / "savn_eval_test").string();
  cfg.scene_width = 6;
  cfg.scene_height = 6;
  cfg.scene_density = 0.1;
  cfg.scene_pool = 2;
  cfg.env_max_steps = 15;
  cfg.audio_chunk_samples = 500;
  cfg.audio_window = 64;
  cfg.audio_hop = 32;
  cfg.bank_categories = 3;
  cfg.bank_samples = 500;
  cfg.visual_rays = 4;
  cfg.visual_max_range = 6.0;
  cfg.nn_visual_hidden = 8;
  cfg.nn_audio_hidden = 8;
  cfg.nn_gru_hidden = 8;
  cfg.attacker_mode = "random";
  cfg.eval_runs = 2;
  cfg.eval_episodes = 4;
  cfg.eval_checkpoint = "random";
  return cfg;
}

}  // namespace

TEST_CASE("metrics: single-record identities") {
  // A success along the exact shortest path scores a perfect 1.
  CHECK(eval::spl({record(true, 4.0, 4.0, 0.0, 9.9)}) == 1.0);
  // Twice the necessary path halves it; a failure contributes zero.
  const std::vector<eval::EpisodeRecord> pair = {
      record(true, 4.0, 8.0, 0.0, 9.0), record(false, 5.0, 2.0, 5.0, -1.0)};
  CHECK(eval::spl(pair) == doctest::Approx(0.25).epsilon(1e-12));
  // Soft credit: standing still earns nothing, halfway earns half.
  CHECK(eval::soft_spl({record(false, 4.0, 4.0, 4.0, 0.0)}) == 0.0);
  CHECK(eval::soft_spl({record(false, 4.0, 8.0, 2.0, 0.0)}) ==
        doctest::Approx(0.25).epsilon(1e-12));
  // Perfect runs: full success, no residual distance.
  const std::vector<eval::EpisodeRecord> wins = {
      record(true, 3.0, 3.0, 0.0, 10.0), record(true, 6.0, 6.0, 0.0, 9.0)};
  CHECK(eval::success_rate(wins) == 1.0);
  CHECK(eval::dtg(wins) == 0.0);
  CHECK(eval::ndtg(wins) == 0.0);
  CHECK(eval::reward_mean(wins) == doctest::Approx(9.5).epsilon(1e-12));
}

TEST_CASE("metrics: three-record fixture, every metric pinned") {
  const std::vector<eval::EpisodeRecord> records = {
      record(true, 4.0, 4.0, 0.0, 9.95),
      record(false, 6.0, 10.0, 3.0, -1.2),
      record(true, 5.0, 10.0, 0.0, 7.5),
  };
  CHECK(eval::spl(records) ==
        doctest::Approx((1.0 + 0.0 + 0.5) / 3.0).epsilon(1e-12));
  CHECK(eval::soft_spl(records) ==
        doctest::Approx((1.0 + 0.5 * 0.6 + 0.5) / 3.0).epsilon(1e-12));
  CHECK(eval::success_rate(records) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(eval::dtg(records) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(eval::ndtg(records) == doctest::Approx(0.5 / 3.0).epsilon(1e-12));
  CHECK(eval::reward_mean(records) ==
        doctest::Approx((9.95 - 1.2 + 7.5) / 3.0).epsilon(1e-12));

  const auto run = eval::summarize(records);
  CHECK(run.spl == eval::spl(records));
  CHECK(run.soft_spl == eval::soft_spl(records));
  CHECK(run.success_rate == eval::success_rate(records));
  CHECK(run.dtg == eval::dtg(records));
  CHECK(run.ndtg == eval::ndtg(records));
  CHECK(run.reward == eval::reward_mean(records));
}

TEST_CASE("metrics: zero start distances drop out of the normalized averages") {
  const std::vector<eval::EpisodeRecord> records = {
      record(false, 4.0, 8.0, 2.0, 0.0),   // soft term 0.25, ndtg term 0.5
      record(false, 0.0, 1.0, 0.0, 0.0),   // excluded from both
  };
  CHECK(eval::soft_spl(records) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(eval::ndtg(records) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("metrics: empty record sets are rejected") {
  CHECK_THROWS_AS(eval::spl({}), std::invalid_argument);
  CHECK_THROWS_AS(eval::success_rate({}), std::invalid_argument);
  CHECK_THROWS_AS(eval::reward_mean({}), std::invalid_argument);
}

TEST_CASE("metrics: fuzzed invariants hold over ten thousand sets") {
  Rng rng(71);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<eval::EpisodeRecord> records;
    const int n = 1 + static_cast<int>(rng.uniform_index(50));
    for (int i = 0; i < n; ++i) {
      const bool success = rng.uniform() < 0.5;
      const double l = rng.uniform(0.5, 10.0);
      const double p = rng.uniform(0.0, 20.0);
      const double final_d = success ? 0.0 : rng.uniform(0.0, 12.0);
      records.push_back(record(success, l, p, final_d, rng.uniform(-5.0, 15.0)));
    }
    const double sr = eval::success_rate(records);
    const double spl_v = eval::spl(records);
    const double soft = eval::soft_spl(records);
    CHECK(spl_v <= sr + 1e-12);
    CHECK(spl_v >= 0.0);
    CHECK(spl_v <= 1.0 + 1e-12);
    CHECK(soft >= 0.0);
    CHECK(soft <= 1.0 + 1e-12);
    CHECK(sr >= 0.0);
    CHECK(sr <= 1.0);
    CHECK(eval::dtg(records) >= 0.0);
    CHECK(eval::ndtg(records) >= 0.0);
    // Soft-SPL generalizes SPL: it never scores below it.
    CHECK(soft >= spl_v - 1e-12);
  }
}

TEST_CASE("aggregation: mean and sample standard deviation across runs") {
  eval::RunMetrics a, b;
  a.success_rate = 0.4;
  b.success_rate = 0.6;
  a.reward = 1.0;
  b.reward = 3.0;
  const auto report = eval::aggregate_runs({a, b}, 100);
  CHECK(report.runs == 2);
  CHECK(report.episodes_per_run == 100);
  CHECK(report.success_rate.mean == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(report.success_rate.std ==
        doctest::Approx(0.1 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(report.reward.mean == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(report.reward.std == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

  const auto single = eval::aggregate_runs({a}, 100);
  CHECK(single.success_rate.std == 0.0);
}

TEST_CASE("report json carries every metric with mean and std") {
  eval::RunMetrics a;
  a.success_rate = 0.75;
  a.spl = 0.5;
  a.soft_spl = 0.6;
  a.dtg = 1.25;
  a.ndtg = 0.2;
  a.reward = 4.5;
  auto report = eval::aggregate_runs({a, a}, 10);
  report.seed = 99;
  report.config_digest = 0x1234;
  const auto text = eval::report_to_json(report);
  const auto j = nlohmann::json::parse(text);
  CHECK(j.at("runs").get<int>() == 2);
  CHECK(j.at("episodes_per_run").get<int>() == 10);
  CHECK(j.at("metrics").at("success_rate").at("mean").get<double>() == 0.75);
  CHECK(j.at("metrics").at("success_rate").at("std").get<double>() == 0.0);
  CHECK(j.at("metrics").at("spl").at("mean").get<double>() == 0.5);
  CHECK(j.at("metrics").at("soft_spl").at("mean").get<double>() == 0.6);
  CHECK(j.at("metrics").at("dtg").at("mean").get<double>() == 1.25);
  CHECK(j.at("metrics").at("ndtg").at("mean").get<double>() == 0.2);
  CHECK(j.at("metrics").at("reward_mean").at("mean").get<double>() == 4.5);
  CHECK(j.at("per_run").at(0).at("reward_mean").get<double>() == 4.5);
  CHECK(j.at("per_run").size() == 2);
}

TEST_CASE("random agent: perfect stopping on the goal, never stopping off it") {
  const auto agent = eval::make_random_agent();
  agent->begin_episode();
  const auto scene = world::generate_scene(2, 6, 6, 0.0);
  world::EpisodeState on_goal;
  on_goal.agent = {scene.goal(), world::Heading::North};
  Rng rng(1);
  std::vector<double> obs;
  for (int i = 0; i < 20; ++i) {
    CHECK(agent->act(obs, on_goal, scene, rng) == world::AgentAction::Stop);
  }
  world::EpisodeState away;
  away.agent = {{scene.goal().x > 2 ? 0 : 5, 3}, world::Heading::North};
  for (int i = 0; i < 100; ++i) {
    CHECK(agent->act(obs, away, scene, rng) != world::AgentAction::Stop);
  }
}

TEST_CASE("evaluate: deterministic and shaped by the request") {
  auto cfg = tiny_eval_config(7);
  const auto setup = rl::build_setup(cfg);
  const auto agent = eval::make_random_agent();
  eval::EvalRequest req;
  req.setup = &setup;
  req.agent = agent.get();
  req.seed = 7;
  req.runs = 2;
  req.episodes = 4;
  const auto a = eval::evaluate(req);
  const auto b = eval::evaluate(req);
  CHECK(eval::report_to_json(a) == eval::report_to_json(b));
  CHECK(a.runs == 2);
  CHECK(a.episodes_per_run == 4);
  REQUIRE(a.per_run.size() == 2);
}

TEST_CASE("evaluate: start curation respects the minimum distance") {
  auto cfg = tiny_eval_config(11);
  const auto setup = rl::build_setup(cfg);
  const auto agent = eval::make_random_agent();
  const auto dir = std::filesystem::temp_directory_path() / "savn_eval_dump";
  std::filesystem::remove_all(dir);

  eval::EvalRequest req;
  req.setup = &setup;
  req.agent = agent.get();
  req.seed = 11;
  req.runs = 1;
  req.episodes = 6;
  req.min_start_distance = 4;
  req.dump_dir = dir.string();
  req.dump_count = 6;
  eval::evaluate(req);

  int checked = 0;
  for (int i = 0; i < 6; ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "trajectory_%03d.jsonl", i);
    const auto path = dir / name;
    REQUIRE(std::filesystem::exists(path));
    const auto traj = replay::load_trajectory(path.string());
    const double start = traj.scene.distance_to_goal(traj.agent_start.node);
    CHECK(start >= 4.0 * traj.scene.resolution() - 1e-9);
    ++checked;
  }
  CHECK(checked == 6);
  std::filesystem::remove_all(dir);
}

TEST_CASE("evaluate: a muted attacker is indistinguishable from none") {
  auto cfg = tiny_eval_config(13);
  auto absent_cfg = cfg;
  absent_cfg.attacker_mode = "absent";
  auto muted_cfg = cfg;
  muted_cfg.attacker_mode = "fixed";
  muted_cfg.attacker_volume_index = 0;

  const auto absent_setup = rl::build_setup(absent_cfg);
  const auto muted_setup = rl::build_setup(muted_cfg);
  const auto agent = eval::make_random_agent();

  eval::EvalRequest req;
  req.agent = agent.get();
  req.seed = 13;
  req.runs = 2;
  req.episodes = 4;

  req.setup = &absent_setup;
  const auto absent_report = eval::evaluate(req);
  req.setup = &muted_setup;
  const auto muted_report = eval::evaluate(req);
  CHECK(eval::report_to_json(absent_report) == eval::report_to_json(muted_report));
}

TEST_CASE("sweep: attack strength grid starts at a clean-equivalent point") {
  auto cfg = tiny_eval_config(17);
  cfg.eval_runs = 1;
  cfg.eval_episodes = 3;
  cfg.sweep_kind = "attack_strength";
  const auto sweep = eval::sweep_grid(cfg);
  CHECK(sweep.kind == "attack_strength");
  REQUIRE(sweep.points.size() == 6);
  for (const auto& p : sweep.points) {
    INFO(p.label, ": ", p.error);
    CHECK(p.ok);
  }
  CHECK(sweep.points[0].label == "alpha=0.0");

  // The zero-volume point must coincide with an explicitly clean evaluation.
  auto clean_cfg = cfg;
  clean_cfg.attacker_mode = "absent";
  const auto setup = rl::build_setup(clean_cfg);
  const auto agent = eval::make_random_agent();
  eval::EvalRequest req;
  req.setup = &setup;
  req.agent = agent.get();
  req.seed = cfg.seed;
  req.runs = 1;
  req.episodes = 3;
  const auto clean = eval::evaluate(req);
  CHECK(sweep.points[0].report.spl.mean == clean.spl.mean);
  CHECK(sweep.points[0].report.success_rate.mean == clean.success_rate.mean);
  CHECK(sweep.points[0].report.reward.mean == clean.reward.mean);
  CHECK(sweep.points[0].report.dtg.mean == clean.dtg.mean);
}

TEST_CASE("sweep: unseen-category split needs a real holdout") {
  auto cfg = tiny_eval_config(19);
  cfg.eval_runs = 1;
  cfg.eval_episodes = 2;
  cfg.sweep_kind = "unseen_categories";
  cfg.bank_categories = 3;
  cfg.bank_train_categories = 2;
  const auto sweep = eval::sweep_grid(cfg);
  REQUIRE(sweep.points.size() == 2);
  CHECK(sweep.points[0].label == "categories=train");
  CHECK(sweep.points[1].label == "categories=unseen");
  CHECK(sweep.points[0].ok);
  CHECK(sweep.points[1].ok);

  // Without a holdout the sweep is undefined.
  auto bad = cfg;
  bad.bank_train_categories = 0;
  CHECK_THROWS_AS(eval::sweep_grid(bad), std::invalid_argument);
}

TEST_CASE("sweep csv: one row per point plus a header") {
  eval::SweepResult result;
  result.kind = "volume_ablation";
  eval::SweepPoint good;
  good.label = "0.5";
  good.ok = true;
  good.report = eval::aggregate_runs({eval::RunMetrics{}}, 3);
  eval::SweepPoint bad;
  bad.label = "0.7";
  bad.error = "nope, \"quoted\"";
  result.points = {good, bad};
  const auto csv = eval::sweep_to_csv(result);
  const auto first_newline = csv.find('\n');
  CHECK(csv.substr(0, 5) == "label");
  CHECK(csv.find("\n0.5,") != std::string::npos);
  CHECK(csv.find("\"nope, \"\"quoted\"\"\"") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  (void)first_newline;
}

TEST_CASE("transfer csv: matrix layout with error markers") {
  eval::TransferResult result;
  result.rows = {"random", "ckpt_a"};
  result.cols = {"clean", "fixed"};
  eval::TransferCell good;
  good.ok = true;
  eval::RunMetrics m;
  m.spl = 0.5;
  m.reward = 2.0;
  good.report = eval::aggregate_runs({m}, 5);
  eval::TransferCell broken;
  broken.error = "missing file";
  result.cells = {{good, good}, {good, broken}};
  const auto csv = eval::transfer_to_csv(result);
  CHECK(csv.rfind("agent,clean,fixed\n", 0) == 0);
  CHECK(csv.find("\nrandom,") != std::string::npos);
  CHECK(csv.find("0.5/2") != std::string::npos);
  CHECK(csv.find(",error\n") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  const auto j = nlohmann::json::parse(eval::transfer_to_json(result));
  CHECK(j.at("rows").size() == 2);
  CHECK(j.at("cells")[1][1].at("ok").get<bool>() == false);
  CHECK(j.at("cells")[1][1].at("error").get<std::string>() == "missing file");
}

TEST_CASE("transfer: random baseline row under clean and fixed columns") {
  auto cfg = tiny_eval_config(23);
  cfg.eval_runs = 1;
  cfg.eval_episodes = 2;
  cfg.transfer_checkpoints = "random";
  cfg.transfer_envs = "clean,fixed";
  const auto result = eval::transfer_matrix(cfg);
  REQUIRE(result.rows.size() == 1);
  REQUIRE(result.cols.size() == 2);
  CHECK(result.cells[0][0].ok);
  CHECK(result.cells[0][1].ok);

  // The pvc token has no meaning for the random baseline: marked, not fatal.
  auto pvc_cfg = cfg;
  pvc_cfg.transfer_envs = "clean,pvc";
  const auto pvc = eval::transfer_matrix(pvc_cfg);
  CHECK(pvc.cells[0][0].ok);
  CHECK(!pvc.cells[0][1].ok);
  CHECK(!pvc.cells[0][1].error.empty());
}

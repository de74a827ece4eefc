#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "savn/world.hpp"
#include "oracles.hpp"

using namespace savn;

namespace {

// Hand-built scene: grid rows are strings ('#' wall, '.' free), row y=0 first.
world::Scene make_scene(int width, int height, world::Cell goal,
                        const std::vector<std::string>& rows,
                        double resolution = 1.0) {
  std::string json = "{\"version\":1,\"width\":" + std::to_string(width) +
                     ",\"height\":" + std::to_string(height) +
                     ",\"resolution\":" + std::to_string(resolution) +
                     ",\"goal\":[" + std::to_string(goal.x) + "," +
                     std::to_string(goal.y) + "],\"grid\":[";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0) json += ',';
    json += '"' + rows[i] + '"';
  }
  json += "]}";
  return world::Scene::from_json(json);
}

world::Scene open_room(int n, world::Cell goal, double resolution = 1.0) {
  return make_scene(n, n, goal,
                    std::vector<std::string>(static_cast<std::size_t>(n),
                                             std::string(static_cast<std::size_t>(n), '.')),
                    resolution);
}

world::EnvConfig base_env() {
  world::EnvConfig cfg;
  cfg.max_steps = 100;
  cfg.num_categories = 4;
  return cfg;
}

}  // namespace

TEST_CASE("scene generation: density zero gives a fully open room") {
  const auto s = world::generate_scene(3, 10, 10, 0.0);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) {
      CHECK(s.is_free({x, y}));
    }
  }
}

TEST_CASE("scene generation: same seed twice is bit-identical") {
  const auto a = world::generate_scene(7, 10, 10, 0.25);
  const auto b = world::generate_scene(7, 10, 10, 0.25);
  CHECK(a.to_json() == b.to_json());
}

TEST_CASE("scene generation: seed 7 at density 0.2 is connected (flood fill)") {
  const auto s = world::generate_scene(7, 10, 10, 0.2);
  CHECK(oracle::connected(s));
}

TEST_CASE("scene generation: a spread of seeds stays connected") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto s = world::generate_scene(seed, 10, 10, 0.35);
    CHECK(oracle::connected(s));
    CHECK(s.is_free(s.goal()));
  }
}

TEST_CASE("scene generation: density outside [0, 0.4] is rejected") {
  CHECK_THROWS_AS(world::generate_scene(1, 10, 10, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(world::generate_scene(1, 10, 10, -0.1), std::invalid_argument);
}

TEST_CASE("geodesic distance: goal is zero, neighbours one resolution away") {
  const auto s = open_room(6, {2, 2});
  CHECK(s.distance_to_goal({2, 2}) == 0.0);
  CHECK(s.distance_to_goal({3, 2}) == 1.0);
  const auto half = open_room(6, {2, 2}, 0.5);
  CHECK(half.distance_to_goal({3, 2}) == 0.5);
}

TEST_CASE("geodesic distance matches an independent Dijkstra around a slab") {
  // Vertical wall through the middle with one gap at the bottom.
  const auto s = make_scene(10, 10, {8, 1},
                            {
                                "....#.....",
                                "....#.....",
                                "....#.....",
                                "....#.....",
                                "....#.....",
                                "....#.....",
                                "....#.....",
                                "....#.....",
                                "..........",
                                "..........",
                            });
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) {
      if (!s.is_free({x, y})) continue;
      const int hops = oracle::dijkstra_cells(s, {x, y}, {8, 1});
      REQUIRE(hops >= 0);
      CHECK(s.distance_to_goal({x, y}) == doctest::Approx(hops).epsilon(1e-12));
    }
  }
}

TEST_CASE("geodesic distance: walls and unreachable cells are errors") {
  const auto s = make_scene(4, 4, {0, 0},
                            {
                                "..#.",
                                "..#.",
                                "..#.",
                                "..#.",
                            });
  CHECK_THROWS(s.distance_to_goal({2, 0}));  // wall cell
  CHECK_THROWS(s.distance_to_goal({3, 1}));  // disconnected region
}

TEST_CASE("volume transition: skipping jumps, sliding clamps to neighbours") {
  CHECK(world::volume_transition(5, 0, world::VolumeMode::Skipping) == 0);
  CHECK(world::volume_transition(5, 0, world::VolumeMode::Sliding) == 4);
  CHECK(world::volume_transition(0, 0, world::VolumeMode::Sliding) == 0);
  CHECK(world::volume_transition(5, 9, world::VolumeMode::Sliding) == 6);
  CHECK(world::volume_transition(10, 10, world::VolumeMode::Sliding) == 10);
  CHECK(world::volume_transition(5, 5, world::VolumeMode::Sliding) == 5);
}

TEST_CASE("rewards: the two players' rewards mirror bit-exactly") {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const double r = rng.uniform(-20.0, 20.0);
    const auto pair = world::make_reward(r);
    CHECK(pair.agent == r);
    CHECK(pair.attacker == -r);
    CHECK(pair.agent + pair.attacker == 0.0);
  }
}

TEST_CASE("step: Stop on the goal pays success plus slack") {
  const auto s = open_room(6, {2, 2});
  auto env = base_env();
  world::EpisodeState st;
  st.agent = {{2, 2}, world::Heading::North};
  st.attacker = {{4, 4}, world::Heading::North};
  st.prev_geodesic = 0.0;
  const auto res = world::step(s, st, world::AgentAction::Stop, {}, env);
  CHECK(res.done);
  CHECK(st.success);
  CHECK(res.reward.agent == 10.0 - 0.01);
  CHECK(res.reward.attacker == -(10.0 - 0.01));
}

TEST_CASE("step: moving one cell closer pays shaping plus slack") {
  const auto s = open_room(6, {0, 0});
  auto env = base_env();
  world::EpisodeState st;
  st.agent = {{2, 0}, world::Heading::West};
  st.attacker = {{4, 4}, world::Heading::North};
  st.prev_geodesic = s.distance_to_goal({2, 0});
  const auto res = world::step(s, st, world::AgentAction::MoveForward, {}, env);
  CHECK(st.agent.node == world::Cell{1, 0});
  CHECK(res.reward.agent == 1.0 - 0.01);
}

TEST_CASE("step: turning in place pays exactly the slack penalty") {
  const auto s = open_room(6, {0, 0});
  auto env = base_env();
  world::EpisodeState st;
  st.agent = {{2, 0}, world::Heading::West};
  st.attacker = {{4, 4}, world::Heading::North};
  st.prev_geodesic = s.distance_to_goal({2, 0});
  const auto res = world::step(s, st, world::AgentAction::TurnLeft, {}, env);
  CHECK(st.agent.heading == world::Heading::South);
  CHECK(res.reward.agent == -0.01);
}

TEST_CASE("step: Stop away from the goal ends the episode without success") {
  const auto s = open_room(6, {0, 0});
  auto env = base_env();
  world::EpisodeState st;
  st.agent = {{3, 3}, world::Heading::North};
  st.attacker = {{4, 4}, world::Heading::North};
  st.prev_geodesic = s.distance_to_goal({3, 3});
  const auto res = world::step(s, st, world::AgentAction::Stop, {}, env);
  CHECK(res.done);
  CHECK_FALSE(st.success);
}

TEST_CASE("step: bumping a wall leaves the agent in place") {
  const auto s = make_scene(4, 4, {0, 0},
                            {
                                "....",
                                ".#..",
                                "....",
                                "....",
                            });
  auto env = base_env();
  world::EpisodeState st;
  st.agent = {{1, 0}, world::Heading::South};
  st.attacker = {{3, 3}, world::Heading::North};
  st.prev_geodesic = s.distance_to_goal({1, 0});
  world::step(s, st, world::AgentAction::MoveForward, {}, env);
  CHECK(st.agent.node == world::Cell{1, 0});
}

TEST_CASE("step: the timeout ends the episode via max_steps") {
  const auto s = open_room(6, {0, 0});
  auto env = base_env();
  env.max_steps = 3;
  world::AttackerSpec spec;
  spec.mode = world::AttackerMode::Absent;
  auto st = world::reset_episode(s, 5, spec, env);
  bool done = false;
  int steps = 0;
  while (!done) {
    done = world::step(s, st, world::AgentAction::TurnLeft, {}, env).done;
    ++steps;
  }
  CHECK(steps == 3);
  CHECK_FALSE(st.success);
  CHECK_THROWS(world::step(s, st, world::AgentAction::TurnLeft, {}, env));
}

TEST_CASE("reset: absent attacker keeps alpha at zero for the whole episode") {
  const auto s = open_room(8, {1, 1});
  auto env = base_env();
  world::AttackerSpec spec;
  spec.mode = world::AttackerMode::Absent;
  auto st = world::reset_episode(s, 42, spec, env);
  world::AttackerDriver driver(spec, env, 42);
  CHECK(st.alpha() == 0.0);
  for (int i = 0; i < 50 && !st.done; ++i) {
    world::step(s, st, world::AgentAction::TurnRight, driver.next_action(), env);
    CHECK(st.alpha() == 0.0);
  }
}

TEST_CASE("reset: fixed attacker holds the configured volume every step") {
  const auto s = open_room(8, {1, 1});
  auto env = base_env();
  world::AttackerSpec spec;
  spec.mode = world::AttackerMode::Fixed;
  spec.fixed_volume_index = 1;  // alpha 0.1
  spec.fixed_category = 2;
  auto st = world::reset_episode(s, 42, spec, env);
  world::AttackerDriver driver(spec, env, 42);
  CHECK(st.alpha() == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(st.attacker_category == 2);
  for (int i = 0; i < 50 && !st.done; ++i) {
    world::step(s, st, world::AgentAction::TurnRight, driver.next_action(), env);
    CHECK(st.alpha() == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(st.attacker_category == 2);
  }
}

TEST_CASE("reset: same seed reproduces the exact same start state") {
  const auto s = world::generate_scene(9, 10, 10, 0.25);
  auto env = base_env();
  world::AttackerSpec spec;
  spec.mode = world::AttackerMode::Random;
  const auto a = world::reset_episode(s, 1234, spec, env);
  const auto b = world::reset_episode(s, 1234, spec, env);
  CHECK(a.agent == b.agent);
  CHECK(a.attacker == b.attacker);
  CHECK(a.volume_index == b.volume_index);
  CHECK(a.attacker_category == b.attacker_category);
  CHECK(a.target_category == b.target_category);
}

TEST_CASE("reset: agent never starts on the goal") {
  const auto s = world::generate_scene(2, 10, 10, 0.3);
  auto env = base_env();
  world::AttackerSpec spec;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto st = world::reset_episode(s, seed, spec, env);
    CHECK_FALSE(st.agent.node == s.goal());
  }
}

TEST_CASE("reset: toggling the attacker never perturbs the agent draws") {
  const auto s = world::generate_scene(9, 10, 10, 0.25);
  auto env = base_env();
  world::AttackerSpec absent;
  absent.mode = world::AttackerMode::Absent;
  world::AttackerSpec random_spec;
  random_spec.mode = world::AttackerMode::Random;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto a = world::reset_episode(s, seed, absent, env);
    const auto b = world::reset_episode(s, seed, random_spec, env);
    CHECK(a.agent == b.agent);
    CHECK(a.target_category == b.target_category);
  }
}

TEST_CASE("attacker driver: random volume histogram is uniform (chi-square)") {
  const auto env = base_env();
  world::AttackerSpec spec;
  spec.mode = world::AttackerMode::Random;
  world::AttackerDriver driver(spec, env, 77);
  std::vector<std::int64_t> counts(world::kVolumeLevels, 0);
  for (int i = 0; i < 10000; ++i) {
    ++counts[static_cast<std::size_t>(driver.next_action().volume_index)];
  }
  CHECK(oracle::chi_square_uniform(counts) <
        oracle::chi_square_q999(world::kVolumeLevels - 1));
}

TEST_CASE("attacker driver: random respects the allowed category split") {
  auto env = base_env();
  env.num_categories = 8;
  world::AttackerSpec spec;
  spec.mode = world::AttackerMode::Random;
  spec.allowed_categories = {6, 7};
  world::AttackerDriver driver(spec, env, 3);
  for (int i = 0; i < 1000; ++i) {
    const int c = driver.next_action().category_index;
    CHECK((c == 6 || c == 7));
  }
}

TEST_CASE("attacker driver: fixed mode locks its episode-start move") {
  const auto env = base_env();
  world::AttackerSpec spec;
  spec.mode = world::AttackerMode::Fixed;
  spec.fixed_volume_index = 3;
  spec.fixed_category = 1;
  world::AttackerDriver driver(spec, env, 21);
  const auto first = driver.next_action();
  for (int i = 0; i < 100; ++i) {
    const auto a = driver.next_action();
    CHECK(a.move == first.move);
    CHECK(a.volume_index == 3);
    CHECK(a.category_index == 1);
  }
}

TEST_CASE("episode specs: JSONL round trip preserves every field") {
  std::vector<world::EpisodeSpec> specs(3);
  specs[0].scene_seed = 7;
  specs[0].episode_seed = 99;
  specs[0].attacker_mode = "random";
  specs[1].scene_width = 12;
  specs[1].obstacle_density = 0.4;
  specs[2].scene_height = 16;
  const auto text = world::episode_specs_to_jsonl(specs);
  const auto parsed = world::episode_specs_from_jsonl(text);
  REQUIRE(parsed.size() == 3);
  CHECK(parsed[0].scene_seed == 7);
  CHECK(parsed[0].episode_seed == 99);
  CHECK(parsed[0].attacker_mode == "random");
  CHECK(parsed[1].scene_width == 12);
  CHECK(parsed[1].obstacle_density == 0.4);
  CHECK(parsed[2].scene_height == 16);
}

TEST_CASE("scene JSON round trip is exact") {
  const auto s = world::generate_scene(13, 10, 8, 0.3, 0.5);
  const auto t = world::Scene::from_json(s.to_json());
  CHECK(t.to_json() == s.to_json());
  CHECK(t.width() == 10);
  CHECK(t.height() == 8);
  CHECK(t.resolution() == 0.5);
}

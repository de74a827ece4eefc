#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "savn/sensors.hpp"
#include "oracles.hpp"

using namespace savn;

namespace {

world::Scene wall_ahead_scene() {
  // Open 5x5 room with a single wall cell directly east of (2,2).
  return world::Scene::from_json(
      "{\"version\":1,\"width\":5,\"height\":5,\"resolution\":1.0,"
      "\"goal\":[0,0],\"grid\":[\".....\",\".....\",\"...#.\",\".....\",\".....\"]}");
}

world::EpisodeState state_at(world::Cell agent, world::Cell attacker,
                             int volume_index, int target_cat, int attacker_cat) {
  world::EpisodeState st;
  st.agent = {agent, world::Heading::East};
  st.attacker = {attacker, world::Heading::North};
  st.volume_index = volume_index;
  st.target_category = target_cat;
  st.attacker_category = attacker_cat;
  return st;
}

double energy(const audio::Binaural& b) {
  double acc = 0.0;
  for (double s : b.left.samples) acc += s * s;
  for (double s : b.right.samples) acc += s * s;
  return acc;
}

}  // namespace

TEST_CASE("visual: the center ray reads an adjacent wall at one cell") {
  const auto scene = wall_ahead_scene();
  sensors::VisualConfig cfg;
  cfg.n_rays = 5;
  cfg.max_range = 10.0;
  Rng rng(1);
  const auto rays =
      sensors::render_visual(scene, {{2, 2}, world::Heading::East}, cfg, rng);
  REQUIRE(rays.size() == 5);
  CHECK(rays[2] == doctest::Approx(1.0 / 10.0).epsilon(1e-12));
}

TEST_CASE("visual: open space saturates every ray at max range") {
  const auto scene = world::generate_scene(1, 21, 21, 0.0);
  sensors::VisualConfig cfg;
  cfg.n_rays = 9;
  cfg.max_range = 5.0;
  Rng rng(1);
  const auto rays =
      sensors::render_visual(scene, {{10, 10}, world::Heading::North}, cfg, rng);
  for (double r : rays) CHECK(r == 1.0);
}

TEST_CASE("visual: blind mode returns zeros and consumes no randomness") {
  const auto scene = wall_ahead_scene();
  sensors::VisualConfig cfg;
  cfg.blind = true;
  cfg.noise_std = 0.5;
  Rng used(99), untouched(99);
  const auto rays =
      sensors::render_visual(scene, {{2, 2}, world::Heading::East}, cfg, used);
  for (double r : rays) CHECK(r == 0.0);
  CHECK(used.next_u64() == untouched.next_u64());
}

TEST_CASE("visual: additive noise has the configured gaussian scale") {
  const auto scene = world::generate_scene(1, 21, 21, 0.0);
  sensors::VisualConfig cfg;
  cfg.n_rays = 10;
  cfg.max_range = 5.0;  // every clean ray is exactly 1.0 at the room center
  cfg.noise_std = 0.01;
  Rng rng(7);
  double abs_dev = 0.0;
  const int rounds = 1000;
  for (int i = 0; i < rounds; ++i) {
    const auto rays =
        sensors::render_visual(scene, {{10, 10}, world::Heading::North}, cfg, rng);
    for (double r : rays) abs_dev += std::abs(r - 1.0);
  }
  const double mad = abs_dev / (rounds * cfg.n_rays);
  CHECK(mad == doctest::Approx(oracle::gaussian_mad(0.01)).epsilon(0.1));
}

TEST_CASE("audio render: zero volume equals the clean target bit-for-bit") {
  const auto scene = world::generate_scene(3, 8, 8, 0.1);
  const auto bank = audio::build_sound_bank(5, 4, 1.0, 8000, 2000);
  sensors::AudioConfig cfg;
  cfg.chunk_samples = 2000;

  auto muted = state_at({1, 1}, {5, 5}, 0, 2, 3);
  const auto with_attacker = sensors::render_audio(scene, muted, bank, cfg);

  const auto rir = audio::synth_rir(scene, scene.goal(), muted.agent, cfg.rir,
                                    bank.sample_rate);
  const auto clean = audio::fit_length(audio::render(bank.entries[2], rir), 2000);
  CHECK(with_attacker.left.samples == clean.left.samples);
  CHECK(with_attacker.right.samples == clean.right.samples);
}

TEST_CASE("audio render: the goal cell is the loudest place in the room") {
  const auto scene = world::generate_scene(4, 7, 7, 0.15);
  const auto bank = audio::build_sound_bank(5, 2, 1.0, 8000, 1500);
  sensors::AudioConfig cfg;
  cfg.chunk_samples = 1500;

  auto at_goal = state_at(scene.goal(), scene.goal(), 0, 0, 0);
  const double goal_energy = energy(sensors::render_audio(scene, at_goal, bank, cfg));

  for (int y = 0; y < scene.height(); ++y) {
    for (int x = 0; x < scene.width(); ++x) {
      const world::Cell c{x, y};
      if (!scene.is_free(c) || c == scene.goal()) continue;
      auto st = state_at(c, scene.goal(), 0, 0, 0);
      const double e = energy(sensors::render_audio(scene, st, bank, cfg));
      CHECK(e <= goal_energy + 1e-12);
      if (std::hypot(c.x - scene.goal().x, c.y - scene.goal().y) > 1.0) {
        CHECK(e < goal_energy);
      }
    }
  }
}

TEST_CASE("audio render: a co-located same-category attacker doubles the wave") {
  const auto scene = world::generate_scene(3, 8, 8, 0.0);
  const auto bank = audio::build_sound_bank(5, 3, 1.0, 8000, 1000);
  sensors::AudioConfig cfg;
  cfg.chunk_samples = 1000;

  auto quiet = state_at({2, 3}, scene.goal(), 0, 1, 1);
  auto loud = state_at({2, 3}, scene.goal(), 10, 1, 1);  // volume index 10 = alpha 1
  REQUIRE(loud.alpha() == 1.0);
  const auto clean = sensors::render_audio(scene, quiet, bank, cfg);
  const auto mixed = sensors::render_audio(scene, loud, bank, cfg);
  for (std::size_t i = 0; i < clean.left.samples.size(); ++i) {
    CHECK(mixed.left.samples[i] ==
          doctest::Approx(2.0 * clean.left.samples[i]).epsilon(1e-12));
  }
  CHECK(energy(mixed) == doctest::Approx(4.0 * energy(clean)).epsilon(1e-12));
}

TEST_CASE("observation: deterministic given the same inputs and seed") {
  const auto scene = world::generate_scene(6, 8, 8, 0.0);
  const auto bank = audio::build_sound_bank(5, 4, 1.0, 8000, 1000);
  sensors::VisualConfig vcfg;
  vcfg.noise_std = 0.05;
  sensors::AudioConfig acfg;
  acfg.chunk_samples = 1000;
  auto st = state_at({1, 1}, {4, 4}, 3, 0, 2);

  Rng rng_a(11), rng_b(11);
  const auto a = sensors::make_observation(scene, st, bank, vcfg, acfg, rng_a);
  const auto b = sensors::make_observation(scene, st, bank, vcfg, acfg, rng_b);
  CHECK(a.visual == b.visual);
  CHECK(a.audio.values == b.audio.values);
}

TEST_CASE("observation: attacker volume does not leak into the visual channel") {
  const auto scene = world::generate_scene(6, 8, 8, 0.0);
  const auto bank = audio::build_sound_bank(5, 4, 1.0, 8000, 1000);
  sensors::VisualConfig vcfg;  // noise off
  sensors::AudioConfig acfg;
  acfg.chunk_samples = 1000;

  auto muted = state_at({1, 1}, {4, 4}, 0, 0, 2);
  auto blaring = state_at({1, 1}, {4, 4}, 10, 0, 2);
  Rng rng_a(3), rng_b(3);
  const auto a = sensors::make_observation(scene, muted, bank, vcfg, acfg, rng_a);
  const auto b = sensors::make_observation(scene, blaring, bank, vcfg, acfg, rng_b);
  CHECK(a.visual == b.visual);
  CHECK(a.audio.values != b.audio.values);
}

TEST_CASE("observation width matches the flattened layout") {
  sensors::VisualConfig vcfg;  // 16 rays
  sensors::AudioConfig acfg;   // 4000 samples, 64/16, pool 4 -> 9 x 62 x 2
  CHECK(sensors::observation_width(vcfg, acfg) == 16 + 9 * 62 * 2);

  const auto scene = world::generate_scene(2, 6, 6, 0.0);
  const auto bank = audio::build_sound_bank(5, 2, 1.0, 8000, 4000);
  auto st = state_at({1, 1}, {3, 3}, 5, 0, 1);
  Rng rng(1);
  const auto obs = sensors::make_observation(scene, st, bank, vcfg, acfg, rng);
  const auto flat = sensors::flatten(obs);
  CHECK(static_cast<int>(flat.size()) == sensors::observation_width(vcfg, acfg));
  for (int i = 0; i < vcfg.n_rays; ++i) {
    CHECK(flat[static_cast<std::size_t>(i)] == obs.visual[static_cast<std::size_t>(i)]);
  }
  CHECK(flat[16] == obs.audio.values[0]);
}

TEST_CASE("rir cache: one entry per (source, listener pose) pair") {
  const auto scene = world::generate_scene(2, 6, 6, 0.0);
  sensors::RirCache cache;
  const audio::RirConfig rcfg;
  const auto& a = cache.get(scene, {0, 0}, {{3, 3}, world::Heading::North}, rcfg,
                            8000, audio::RirMode::Geometric);
  const auto& b = cache.get(scene, {0, 0}, {{3, 3}, world::Heading::North}, rcfg,
                            8000, audio::RirMode::Geometric);
  CHECK(&a == &b);
  CHECK(cache.size() == 1);
  cache.get(scene, {0, 0}, {{3, 3}, world::Heading::East}, rcfg, 8000,
            audio::RirMode::Geometric);
  CHECK(cache.size() == 2);
}

TEST_CASE("observation dumps: save and load round trip bit-exactly") {
  const auto scene = world::generate_scene(6, 8, 8, 0.0);
  const auto bank = audio::build_sound_bank(5, 4, 1.0, 8000, 1000);
  sensors::VisualConfig vcfg;
  vcfg.noise_std = 0.02;
  sensors::AudioConfig acfg;
  acfg.chunk_samples = 1000;
  Rng rng(13);

  std::vector<sensors::Observation> steps;
  for (int i = 0; i < 3; ++i) {
    auto st = state_at({1 + i, 2}, {4, 4}, i, 0, 2);
    steps.push_back(sensors::make_observation(scene, st, bank, vcfg, acfg, rng));
  }
  const auto path =
      (std::filesystem::temp_directory_path() / "savn_test_obs.bin").string();
  sensors::save_observations(steps, path);
  const auto loaded = sensors::load_observations(path);
  std::filesystem::remove(path);
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].visual == steps[i].visual);
    CHECK(loaded[i].audio.values == steps[i].audio.values);
    CHECK(loaded[i].audio.bins == steps[i].audio.bins);
    CHECK(loaded[i].audio.frames == steps[i].audio.frames);
    CHECK(loaded[i].audio.channels == steps[i].audio.channels);
  }
}

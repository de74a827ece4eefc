#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "savn/rng.hpp"

namespace savn::world {

// ---------------------------------------------------------------------------
// Static scene: occupancy grid plus navigability derived from it.
// ---------------------------------------------------------------------------

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

enum class Heading : int { North = 0, East = 1, South = 2, West = 3 };

Heading turn_left(Heading h);
Heading turn_right(Heading h);
Cell heading_delta(Heading h);
double heading_angle(Heading h);  // radians, East = 0, counter-clockwise

struct Pose {
  Cell node;
  Heading heading = Heading::North;
  bool operator==(const Pose&) const = default;
};

class Scene {
 public:
  Scene() = default;
  Scene(int width, int height, std::vector<std::uint8_t> walls, Cell goal,
        double spatial_resolution = 1.0);

  int width() const { return width_; }
  int height() const { return height_; }
  double resolution() const { return resolution_; }
  Cell goal() const { return goal_; }

  bool in_bounds(Cell c) const {
    return c.x >= 0 && c.x < width_ && c.y >= 0 && c.y < height_;
  }
  bool is_wall(Cell c) const { return !in_bounds(c) || walls_[index(c)] != 0; }
  bool is_free(Cell c) const { return in_bounds(c) && walls_[index(c)] == 0; }

  const std::vector<Cell>& nodes() const { return nodes_; }

  // Geodesic distance from `c` to the goal in length units, precomputed by
  // breadth-first search over the navigability graph.
  double distance_to_goal(Cell c) const;

  std::string to_json() const;
  static Scene from_json(const std::string& text);

 private:
  std::size_t index(Cell c) const {
    return static_cast<std::size_t>(c.y) * width_ + c.x;
  }
  void build_derived();

  int width_ = 0;
  int height_ = 0;
  double resolution_ = 1.0;
  std::vector<std::uint8_t> walls_;
  Cell goal_{};
  std::vector<Cell> nodes_;
  std::vector<int> goal_dist_;  // in cells, -1 for walls
};

// Deterministic in `seed`. Obstacle layouts are resampled until the free
// cells form a single connected component; the goal is placed uniformly.
Scene generate_scene(std::uint64_t seed, int width, int height,
                     double obstacle_density, double spatial_resolution = 1.0);

// BFS shortest-path length between two free cells, in length units.
double geodesic_distance(const Scene& scene, Cell from, Cell to);

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

enum class AgentAction : int { MoveForward = 0, TurnLeft = 1, TurnRight = 2, Stop = 3 };
enum class AttackerMove : int { MoveForward = 0, TurnLeft = 1, TurnRight = 2 };

inline constexpr int kAgentActionCount = 4;
inline constexpr int kAttackerMoveCount = 3;
inline constexpr int kVolumeLevels = 11;  // {0.0, 0.1, ..., 1.0}

double volume_value(int volume_index);

enum class VolumeMode { Skipping, Sliding };

// In sliding mode the proposed level is projected onto the nearest member of
// {current-1, current, current+1} clamped to [0, 10]; skipping passes it
// through unchanged.
int volume_transition(int current_index, int proposed_index, VolumeMode mode);

struct AttackerAction {
  AttackerMove move = AttackerMove::MoveForward;
  int volume_index = 0;
  int category_index = 0;
};

// How the non-target source behaves when the learned attacker policy is not
// driving it.
enum class AttackerMode { Learned, Fixed, Random, Absent };

struct AttackerSpec {
  AttackerMode mode = AttackerMode::Absent;
  int fixed_volume_index = 1;
  int fixed_category = 0;
  // Categories the driver may emit (empty = all bank categories). Used by the
  // unseen-category protocol.
  std::vector<int> allowed_categories;
};

// ---------------------------------------------------------------------------
// Episode state and transitions
// ---------------------------------------------------------------------------

struct RewardPair {
  double agent = 0.0;
  double attacker = 0.0;  // always exactly -agent
};

inline RewardPair make_reward(double r) { return RewardPair{r, -r}; }

struct EpisodeState {
  Pose agent;
  Pose attacker;
  int volume_index = 0;      // current attacker volume level
  int attacker_category = 0;
  int target_category = 0;
  int step = 0;
  double prev_geodesic = 0.0;  // agent distance to goal before next step
  bool done = false;
  bool success = false;

  double alpha() const { return volume_value(volume_index); }
};

struct EnvConfig {
  int max_steps = 500;
  double success_reward = 10.0;
  double slack_reward = -0.01;
  double shaping_scale = 1.0;
  enum class ShapingMetric { Geodesic, Manhattan } shaping_metric =
      ShapingMetric::Geodesic;
  VolumeMode volume_mode = VolumeMode::Skipping;
  int num_categories = 1;    // size of the sound bank in play
  int target_categories = 0;  // target draws from [0, n); 0 means all
};

// Start state: agent start != goal; attacker pose drawn from its own RNG
// sub-stream so that toggling the attacker never perturbs agent draws.
EpisodeState reset_episode(const Scene& scene, std::uint64_t episode_seed,
                           const AttackerSpec& attacker,
                           const EnvConfig& cfg);

struct StepResult {
  RewardPair reward;
  bool done = false;
};

// Joint transition. The attacker is non-physical: both players may occupy
// the same cell and never block each other. Stepping a finished episode is
// an error.
StepResult step(const Scene& scene, EpisodeState& state, AgentAction a_agent,
                const AttackerAction& a_attacker, const EnvConfig& cfg);

// Per-step attacker action source for fixed/random modes. Fixed mode locks
// the position action chosen at episode start and the configured volume and
// category; random mode samples every head uniformly each step.
class AttackerDriver {
 public:
  AttackerDriver() = default;
  AttackerDriver(const AttackerSpec& spec, const EnvConfig& cfg,
                 std::uint64_t episode_seed);

  // Initial (volume, category) for reset; also fixes the fixed-mode move.
  int initial_volume_index() const { return initial_volume_; }
  int initial_category() const { return initial_category_; }

  bool policy_driven() const { return spec_.mode == AttackerMode::Learned; }
  bool absent() const { return spec_.mode == AttackerMode::Absent; }

  AttackerAction next_action();

 private:
  int pick_category(Rng& rng) const;

  AttackerSpec spec_;
  EnvConfig cfg_;
  Rng rng_;
  AttackerMove fixed_move_ = AttackerMove::MoveForward;
  int initial_volume_ = 0;
  int initial_category_ = 0;
};

// ---------------------------------------------------------------------------
// Episode specs (JSON lines, one episode per line)
// ---------------------------------------------------------------------------

struct EpisodeSpec {
  std::uint64_t scene_seed = 1;
  int scene_width = 10;
  int scene_height = 10;
  double obstacle_density = 0.25;
  std::uint64_t episode_seed = 0;
  std::string attacker_mode = "absent";
};

std::string episode_specs_to_jsonl(const std::vector<EpisodeSpec>& specs);
std::vector<EpisodeSpec> episode_specs_from_jsonl(const std::string& text);

}  // namespace savn::world

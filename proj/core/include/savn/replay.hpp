#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "savn/world.hpp"

namespace savn::replay {

struct TrajectoryStep {
  int step = 0;
  world::Pose agent;
  world::Pose attacker;
  double alpha = 0.0;
  int category = 0;
  double reward = 0.0;
  bool done = false;
  bool success = false;
};

struct Trajectory {
  std::string config_digest;
  std::string code_version;
  std::uint64_t episode_seed = 0;
  int target_category = 0;
  world::Scene scene;
  world::Pose agent_start;
  world::Pose attacker_start;
  double alpha_start = 0.0;
  int category_start = 0;
  std::vector<TrajectoryStep> steps;
};

// Parses an episode trajectory dump (one JSON object per line: a header line
// followed by step lines). Malformed input raises an error naming the
// offending line number.
Trajectory parse_trajectory(const std::string& text);
Trajectory load_trajectory(const std::string& path);

// ASCII rendering; frame 0 is the initial state, frame i the state after
// step i. Walls '#', free '.', goal 'G', attacker 'x', agent '^>v<' by
// heading (the agent glyph wins when markers coincide).
std::string render_frame(const Trajectory& traj, int frame);
int frame_count(const Trajectory& traj);
std::string render_trajectory(const Trajectory& traj);

}  // namespace savn::replay

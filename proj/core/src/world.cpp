#include "savn/world.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace savn::world {

namespace {
constexpr std::array<Cell, 4> kHeadingDeltas = {{
    {0, -1},  // North
    {1, 0},   // East
    {0, 1},   // South
    {-1, 0},  // West
}};
}  // namespace

Heading turn_left(Heading h) {
  return static_cast<Heading>((static_cast<int>(h) + 3) % 4);
}

Heading turn_right(Heading h) {
  return static_cast<Heading>((static_cast<int>(h) + 1) % 4);
}

Cell heading_delta(Heading h) { return kHeadingDeltas[static_cast<int>(h)]; }

double heading_angle(Heading h) {
  // Grid y grows southward, so North points along +pi/2 in math convention.
  switch (h) {
    case Heading::North: return M_PI / 2.0;
    case Heading::East: return 0.0;
    case Heading::South: return -M_PI / 2.0;
    case Heading::West: return M_PI;
  }
  throw std::logic_error("invalid heading");
}

// ---------------------------------------------------------------------------
// Scene
// ---------------------------------------------------------------------------

Scene::Scene(int width, int height, std::vector<std::uint8_t> walls, Cell goal,
             double spatial_resolution)
    : width_(width),
      height_(height),
      resolution_(spatial_resolution),
      walls_(std::move(walls)),
      goal_(goal) {
  if (width_ <= 0 || height_ <= 0) {
    throw std::invalid_argument("scene dimensions must be positive");
  }
  if (walls_.size() != static_cast<std::size_t>(width_) * height_) {
    throw std::invalid_argument("wall mask size does not match dimensions");
  }
  if (resolution_ <= 0.0) {
    throw std::invalid_argument("spatial resolution must be positive");
  }
  if (!is_free(goal_)) {
    throw std::invalid_argument("goal must be a free cell");
  }
  build_derived();
}

void Scene::build_derived() {
  nodes_.clear();
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (walls_[static_cast<std::size_t>(y) * width_ + x] == 0) {
        nodes_.push_back({x, y});
      }
    }
  }
  // BFS from the goal over 4-connected free cells.
  goal_dist_.assign(walls_.size(), -1);
  std::deque<Cell> frontier;
  goal_dist_[index(goal_)] = 0;
  frontier.push_back(goal_);
  while (!frontier.empty()) {
    Cell c = frontier.front();
    frontier.pop_front();
    int d = goal_dist_[index(c)];
    for (const Cell& delta : kHeadingDeltas) {
      Cell n{c.x + delta.x, c.y + delta.y};
      if (is_free(n) && goal_dist_[index(n)] < 0) {
        goal_dist_[index(n)] = d + 1;
        frontier.push_back(n);
      }
    }
  }
}

double Scene::distance_to_goal(Cell c) const {
  if (!is_free(c)) throw std::invalid_argument("cell is not free");
  int d = goal_dist_[index(c)];
  if (d < 0) throw std::invalid_argument("cell is unreachable from the goal");
  return d * resolution_;
}

std::string Scene::to_json() const {
  nlohmann::json j;
  j["version"] = 1;
  j["width"] = width_;
  j["height"] = height_;
  j["resolution"] = resolution_;
  j["goal"] = {goal_.x, goal_.y};
  std::vector<std::string> rows;
  rows.reserve(height_);
  for (int y = 0; y < height_; ++y) {
    std::string row(width_, '.');
    for (int x = 0; x < width_; ++x) {
      if (walls_[static_cast<std::size_t>(y) * width_ + x]) row[x] = '#';
    }
    rows.push_back(std::move(row));
  }
  j["grid"] = rows;
  return j.dump();
}

Scene Scene::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("version").get<int>() != 1) {
    throw std::runtime_error("unsupported scene version");
  }
  int width = j.at("width").get<int>();
  int height = j.at("height").get<int>();
  double resolution = j.value("resolution", 1.0);
  auto goal_arr = j.at("goal");
  Cell goal{goal_arr.at(0).get<int>(), goal_arr.at(1).get<int>()};
  auto rows = j.at("grid").get<std::vector<std::string>>();
  if (static_cast<int>(rows.size()) != height) {
    throw std::runtime_error("grid row count does not match height");
  }
  std::vector<std::uint8_t> walls(static_cast<std::size_t>(width) * height, 0);
  for (int y = 0; y < height; ++y) {
    if (static_cast<int>(rows[y].size()) != width) {
      throw std::runtime_error("grid row width mismatch");
    }
    for (int x = 0; x < width; ++x) {
      char c = rows[y][x];
      if (c == '#') {
        walls[static_cast<std::size_t>(y) * width + x] = 1;
      } else if (c != '.') {
        throw std::runtime_error("grid cells must be '.' or '#'");
      }
    }
  }
  return Scene(width, height, std::move(walls), goal, resolution);
}

namespace {

// Free cells form one connected component?
bool connected(int width, int height, const std::vector<std::uint8_t>& walls) {
  std::size_t total = walls.size();
  std::size_t free_count = 0;
  std::size_t start = total;
  for (std::size_t i = 0; i < total; ++i) {
    if (walls[i] == 0) {
      ++free_count;
      if (start == total) start = i;
    }
  }
  if (free_count == 0) return false;
  std::vector<std::uint8_t> seen(total, 0);
  std::deque<std::size_t> frontier{start};
  seen[start] = 1;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    std::size_t i = frontier.front();
    frontier.pop_front();
    int x = static_cast<int>(i % width);
    int y = static_cast<int>(i / width);
    for (const Cell& delta : kHeadingDeltas) {
      int nx = x + delta.x;
      int ny = y + delta.y;
      if (nx < 0 || nx >= width || ny < 0 || ny >= height) continue;
      std::size_t ni = static_cast<std::size_t>(ny) * width + nx;
      if (walls[ni] == 0 && !seen[ni]) {
        seen[ni] = 1;
        ++reached;
        frontier.push_back(ni);
      }
    }
  }
  return reached == free_count;
}

}  // namespace

Scene generate_scene(std::uint64_t seed, int width, int height,
                     double obstacle_density, double spatial_resolution) {
  if (obstacle_density < 0.0 || obstacle_density > 0.4) {
    throw std::invalid_argument("obstacle density must lie in [0, 0.4]");
  }
  Rng rng = Rng::derive(seed, 0, /*purpose=*/0x5C31);
  constexpr int kMaxAttempts = 10000;
  std::size_t total = static_cast<std::size_t>(width) * height;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<std::uint8_t> walls(total, 0);
    for (std::size_t i = 0; i < total; ++i) {
      walls[i] = rng.uniform() < obstacle_density ? 1 : 0;
    }
    if (!connected(width, height, walls)) continue;
    std::vector<std::size_t> free_cells;
    for (std::size_t i = 0; i < total; ++i) {
      if (walls[i] == 0) free_cells.push_back(i);
    }
    if (free_cells.size() < 2) continue;  // need room for start != goal
    std::size_t gi = free_cells[rng.uniform_index(free_cells.size())];
    Cell goal{static_cast<int>(gi % width), static_cast<int>(gi / width)};
    return Scene(width, height, std::move(walls), goal, spatial_resolution);
  }
  throw std::runtime_error("scene generation exhausted its retry budget");
}

double geodesic_distance(const Scene& scene, Cell from, Cell to) {
  if (!scene.is_free(from) || !scene.is_free(to)) {
    throw std::invalid_argument("endpoints must be free cells");
  }
  std::vector<int> dist(static_cast<std::size_t>(scene.width()) * scene.height(), -1);
  auto idx = [&](Cell c) {
    return static_cast<std::size_t>(c.y) * scene.width() + c.x;
  };
  std::deque<Cell> frontier{from};
  dist[idx(from)] = 0;
  while (!frontier.empty()) {
    Cell c = frontier.front();
    frontier.pop_front();
    if (c == to) return dist[idx(c)] * scene.resolution();
    for (const Cell& delta : kHeadingDeltas) {
      Cell n{c.x + delta.x, c.y + delta.y};
      if (scene.is_free(n) && dist[idx(n)] < 0) {
        dist[idx(n)] = dist[idx(c)] + 1;
        frontier.push_back(n);
      }
    }
  }
  throw std::invalid_argument("no path between the given cells");
}

// ---------------------------------------------------------------------------
// Volume handling
// ---------------------------------------------------------------------------

double volume_value(int volume_index) {
  if (volume_index < 0 || volume_index >= kVolumeLevels) {
    throw std::out_of_range("volume index out of range");
  }
  return volume_index * 0.1;
}

int volume_transition(int current_index, int proposed_index, VolumeMode mode) {
  if (proposed_index < 0 || proposed_index >= kVolumeLevels) {
    throw std::out_of_range("proposed volume index out of range");
  }
  if (mode == VolumeMode::Skipping) return proposed_index;
  int lo = std::max(0, current_index - 1);
  int hi = std::min(kVolumeLevels - 1, current_index + 1);
  return std::clamp(proposed_index, lo, hi);
}

// ---------------------------------------------------------------------------
// Episode lifecycle
// ---------------------------------------------------------------------------

namespace {

// Purpose tags for per-role RNG sub-streams derived from the episode seed.
// Keeping roles on disjoint streams means changing attacker settings cannot
// shift the draws that place the agent (and vice versa).
constexpr std::uint64_t kPurposeAgent = 0xA6E7;
constexpr std::uint64_t kPurposeAttacker = 0xA77C;
constexpr std::uint64_t kPurposeTarget = 0x7A46;

Pose random_pose(const Scene& scene, Rng& rng,
                 std::optional<Cell> exclude = std::nullopt) {
  const auto& nodes = scene.nodes();
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Cell c = nodes[rng.uniform_index(nodes.size())];
    if (exclude && c == *exclude) continue;
    Heading h = static_cast<Heading>(rng.uniform_index(4));
    return Pose{c, h};
  }
  throw std::runtime_error("could not draw a start pose distinct from the goal");
}

}  // namespace

AttackerDriver::AttackerDriver(const AttackerSpec& spec, const EnvConfig& cfg,
                               std::uint64_t episode_seed)
    : spec_(spec),
      cfg_(cfg),
      rng_(Rng::derive(episode_seed, 1, kPurposeAttacker)) {
  switch (spec_.mode) {
    case AttackerMode::Absent:
      initial_volume_ = 0;
      initial_category_ = spec_.fixed_category;
      break;
    case AttackerMode::Fixed:
      initial_volume_ = spec_.fixed_volume_index;
      initial_category_ = spec_.fixed_category;
      fixed_move_ = static_cast<AttackerMove>(rng_.uniform_index(kAttackerMoveCount));
      break;
    case AttackerMode::Random:
    case AttackerMode::Learned:
      initial_volume_ = static_cast<int>(rng_.uniform_index(kVolumeLevels));
      initial_category_ = pick_category(rng_);
      break;
  }
  if (initial_volume_ < 0 || initial_volume_ >= kVolumeLevels) {
    throw std::invalid_argument("fixed attacker volume index out of range");
  }
  if (initial_category_ < 0 || initial_category_ >= cfg_.num_categories) {
    throw std::invalid_argument("attacker category out of range");
  }
}

int AttackerDriver::pick_category(Rng& rng) const {
  if (spec_.allowed_categories.empty()) {
    return static_cast<int>(rng.uniform_index(cfg_.num_categories));
  }
  return spec_.allowed_categories[rng.uniform_index(spec_.allowed_categories.size())];
}

AttackerAction AttackerDriver::next_action() {
  switch (spec_.mode) {
    case AttackerMode::Absent:
      return AttackerAction{AttackerMove::MoveForward, 0, initial_category_};
    case AttackerMode::Fixed:
      return AttackerAction{fixed_move_, spec_.fixed_volume_index,
                            spec_.fixed_category};
    case AttackerMode::Random:
      return AttackerAction{
          static_cast<AttackerMove>(rng_.uniform_index(kAttackerMoveCount)),
          static_cast<int>(rng_.uniform_index(kVolumeLevels)),
          pick_category(rng_)};
    case AttackerMode::Learned:
      throw std::logic_error("learned attacker actions come from the policy");
  }
  throw std::logic_error("invalid attacker mode");
}

namespace {

double shaping_distance(const Scene& scene, const EnvConfig& cfg, Cell c) {
  if (cfg.shaping_metric == EnvConfig::ShapingMetric::Manhattan) {
    return (std::abs(c.x - scene.goal().x) + std::abs(c.y - scene.goal().y)) *
           scene.resolution();
  }
  return scene.distance_to_goal(c);
}

}  // namespace

EpisodeState reset_episode(const Scene& scene, std::uint64_t episode_seed,
                           const AttackerSpec& attacker, const EnvConfig& cfg) {
  if (cfg.num_categories <= 0) {
    throw std::invalid_argument("episode needs at least one sound category");
  }
  const int target_pool =
      cfg.target_categories > 0 ? cfg.target_categories : cfg.num_categories;
  if (target_pool > cfg.num_categories) {
    throw std::invalid_argument("target category pool exceeds the sound bank");
  }
  Rng agent_rng = Rng::derive(episode_seed, 1, kPurposeAgent);
  Rng target_rng = Rng::derive(episode_seed, 1, kPurposeTarget);

  EpisodeState st;
  st.agent = random_pose(scene, agent_rng, scene.goal());
  st.target_category = static_cast<int>(target_rng.uniform_index(target_pool));

  AttackerDriver driver(attacker, cfg, episode_seed);
  Rng attacker_rng = Rng::derive(episode_seed, 2, kPurposeAttacker);
  st.attacker = random_pose(scene, attacker_rng);
  st.volume_index = driver.initial_volume_index();
  st.attacker_category = driver.initial_category();
  st.prev_geodesic = shaping_distance(scene, cfg, st.agent.node);
  return st;
}

namespace {

void apply_move(const Scene& scene, Pose& pose, int move) {
  switch (move) {
    case 0: {  // forward; walls and bounds silently block
      Cell d = heading_delta(pose.heading);
      Cell next{pose.node.x + d.x, pose.node.y + d.y};
      if (scene.is_free(next)) pose.node = next;
      break;
    }
    case 1:
      pose.heading = turn_left(pose.heading);
      break;
    case 2:
      pose.heading = turn_right(pose.heading);
      break;
    default:
      throw std::invalid_argument("invalid move");
  }
}

}  // namespace

StepResult step(const Scene& scene, EpisodeState& state, AgentAction a_agent,
                const AttackerAction& a_attacker, const EnvConfig& cfg) {
  if (state.done) throw std::logic_error("cannot step a finished episode");
  if (a_attacker.category_index < 0 ||
      a_attacker.category_index >= cfg.num_categories) {
    throw std::invalid_argument("attacker category out of range");
  }

  // Attacker first: non-physical, so ordering never affects the agent.
  apply_move(scene, state.attacker, static_cast<int>(a_attacker.move));
  state.volume_index = volume_transition(state.volume_index,
                                         a_attacker.volume_index,
                                         cfg.volume_mode);
  state.attacker_category = a_attacker.category_index;

  double reward = cfg.slack_reward;
  bool done = false;
  if (a_agent == AgentAction::Stop) {
    done = true;
    state.success = state.agent.node == scene.goal();
    if (state.success) reward += cfg.success_reward;
  } else {
    apply_move(scene, state.agent, static_cast<int>(a_agent));
    double d_new = shaping_distance(scene, cfg, state.agent.node);
    reward += cfg.shaping_scale * (state.prev_geodesic - d_new);
    state.prev_geodesic = d_new;
  }

  ++state.step;
  if (!done && state.step >= cfg.max_steps) {
    done = true;  // timeout counts as failure
    state.success = false;
  }
  state.done = done;
  return StepResult{make_reward(reward), done};
}

// ---------------------------------------------------------------------------
// Episode specs
// ---------------------------------------------------------------------------

std::string episode_specs_to_jsonl(const std::vector<EpisodeSpec>& specs) {
  std::ostringstream out;
  for (const auto& s : specs) {
    nlohmann::json j;
    j["scene_seed"] = s.scene_seed;
    j["scene_width"] = s.scene_width;
    j["scene_height"] = s.scene_height;
    j["obstacle_density"] = s.obstacle_density;
    j["episode_seed"] = s.episode_seed;
    j["attacker_mode"] = s.attacker_mode;
    out << j.dump() << '\n';
  }
  return out.str();
}

std::vector<EpisodeSpec> episode_specs_from_jsonl(const std::string& text) {
  std::vector<EpisodeSpec> specs;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    EpisodeSpec s;
    s.scene_seed = j.at("scene_seed").get<std::uint64_t>();
    s.scene_width = j.at("scene_width").get<int>();
    s.scene_height = j.at("scene_height").get<int>();
    s.obstacle_density = j.at("obstacle_density").get<double>();
    s.episode_seed = j.at("episode_seed").get<std::uint64_t>();
    s.attacker_mode = j.at("attacker_mode").get<std::string>();
    specs.push_back(std::move(s));
  }
  return specs;
}

}  // namespace savn::world

#include "savn/replay.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace savn::replay {

namespace {

[[noreturn]] void fail_line(int lineno, const std::string& why) {
  throw std::invalid_argument("trajectory line " + std::to_string(lineno) + ": " +
                           why);
}

world::Pose parse_pose(const nlohmann::json& j, int lineno) {
  if (!j.is_array() || j.size() != 3) {
    fail_line(lineno, "a pose must be [x, y, heading]");
  }
  world::Pose p;
  p.node.x = j.at(0).get<int>();
  p.node.y = j.at(1).get<int>();
  const int h = j.at(2).get<int>();
  if (h < 0 || h > 3) fail_line(lineno, "heading out of range");
  p.heading = static_cast<world::Heading>(h);
  return p;
}

char heading_glyph(world::Heading h) {
  switch (h) {
    case world::Heading::North: return '^';
    case world::Heading::East: return '>';
    case world::Heading::South: return 'v';
    case world::Heading::West: return '<';
  }
  return '?';
}

}  // namespace

Trajectory parse_trajectory(const std::string& text) {
  Trajectory traj;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail_line(lineno, std::string("invalid JSON: ") + e.what());
    }
    try {
      const std::string type = j.at("type").get<std::string>();
      if (type == "header") {
        if (have_header) fail_line(lineno, "duplicate header");
        if (j.at("version").get<int>() != 1) {
          fail_line(lineno, "unsupported trajectory version");
        }
        traj.config_digest = j.value("config_digest", "");
        traj.code_version = j.value("code_version", "");
        traj.episode_seed =
            std::stoull(j.at("episode_seed").get<std::string>());
        traj.target_category = j.at("target_category").get<int>();
        traj.scene = world::Scene::from_json(j.at("scene").dump());
        traj.agent_start = parse_pose(j.at("agent"), lineno);
        traj.attacker_start = parse_pose(j.at("attacker"), lineno);
        traj.alpha_start = j.at("alpha").get<double>();
        traj.category_start = j.at("category").get<int>();
        have_header = true;
      } else if (type == "step") {
        if (!have_header) fail_line(lineno, "step before the header");
        TrajectoryStep s;
        s.step = j.at("step").get<int>();
        s.agent = parse_pose(j.at("agent"), lineno);
        s.attacker = parse_pose(j.at("attacker"), lineno);
        s.alpha = j.at("alpha").get<double>();
        s.category = j.at("category").get<int>();
        s.reward = j.at("reward").get<double>();
        s.done = j.at("done").get<bool>();
        s.success = j.at("success").get<bool>();
        traj.steps.push_back(s);
      } else {
        fail_line(lineno, "unknown record type '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      fail_line(lineno, std::string("missing or mistyped field: ") + e.what());
    }
  }
  if (!have_header) {
    throw std::invalid_argument("trajectory has no header line");
  }
  return traj;
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::invalid_argument("cannot open trajectory file: " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_trajectory(buf.str());
}

int frame_count(const Trajectory& traj) {
  return static_cast<int>(traj.steps.size()) + 1;
}

std::string render_frame(const Trajectory& traj, int frame) {
  if (frame < 0 || frame >= frame_count(traj)) {
    throw std::out_of_range("frame index out of range");
  }
  world::Pose agent = traj.agent_start;
  world::Pose attacker = traj.attacker_start;
  double alpha = traj.alpha_start;
  int category = traj.category_start;
  std::string status = "start";
  if (frame > 0) {
    const TrajectoryStep& s = traj.steps[static_cast<std::size_t>(frame - 1)];
    agent = s.agent;
    attacker = s.attacker;
    alpha = s.alpha;
    category = s.category;
    char buf[48];
    std::snprintf(buf, sizeof(buf), "reward %+.3f", s.reward);
    status = buf;
    if (s.done) status += s.success ? "  success" : "  timeout";
  }

  std::ostringstream out;
  {
    char head[96];
    std::snprintf(head, sizeof(head), "step %d  alpha %.2f  category %d  ",
                  frame, alpha, category);
    out << head << status << '\n';
  }
  const world::Scene& scene = traj.scene;
  for (int y = 0; y < scene.height(); ++y) {
    for (int x = 0; x < scene.width(); ++x) {
      const world::Cell c{x, y};
      char glyph = scene.is_free(c) ? '.' : '#';
      if (c == scene.goal()) glyph = 'G';
      if (c == attacker.node) glyph = 'x';
      if (c == agent.node) glyph = heading_glyph(agent.heading);
      if (x > 0) out << ' ';
      out << glyph;
    }
    out << '\n';
  }
  return out.str();
}

std::string render_trajectory(const Trajectory& traj) {
  std::ostringstream out;
  for (int f = 0; f < frame_count(traj); ++f) {
    if (f > 0) out << '\n';
    out << render_frame(traj, f);
  }
  return out.str();
}

}  // namespace savn::replay

#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mapfil {

// Cell coordinate, row 0 at the top. Candidate positions produced by
// apply_action may be negative or past the map edge.
struct Position {
  int row = 0;
  int col = 0;

  friend constexpr auto operator<=>(const Position&, const Position&) = default;
};

std::string to_string(const Position& p);

enum class Action : std::uint8_t { Stay = 0, Up = 1, Down = 2, Left = 3, Right = 4 };

inline constexpr int kNumActions = 5;
inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::Stay, Action::Up, Action::Down, Action::Left, Action::Right};

constexpr int index_of(Action a) { return static_cast<int>(a); }
Action action_from_index(int index);
std::string_view to_string(Action a);

constexpr Position apply_action(Position p, Action a) {
  switch (a) {
    case Action::Up: return {p.row - 1, p.col};
    case Action::Down: return {p.row + 1, p.col};
    case Action::Left: return {p.row, p.col - 1};
    case Action::Right: return {p.row, p.col + 1};
    case Action::Stay: break;
  }
  return p;
}

// Inverse of apply_action; nullopt when the cells are not identical or 4-adjacent.
std::optional<Action> action_between(Position from, Position to);

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

// Immutable rectangular obstacle grid, row-major.
class GridMap {
 public:
  GridMap(int width, int height, std::vector<bool> obstacles);

  int width() const { return width_; }
  int height() const { return height_; }
  int cell_count() const { return width_ * height_; }

  bool in_bounds(Position p) const {
    return p.row >= 0 && p.col >= 0 && p.row < height_ && p.col < width_;
  }
  bool is_obstacle(Position p) const { return obstacles_[index(p)]; }
  // In bounds and not an obstacle.
  bool passable(Position p) const { return in_bounds(p) && !obstacles_[index(p)]; }

  int index(Position p) const { return p.row * width_ + p.col; }
  Position position(int index) const { return {index / width_, index % width_}; }

  int obstacle_count() const;
  std::vector<Position> free_cells() const;

  friend bool operator==(const GridMap&, const GridMap&) = default;

 private:
  int width_;
  int height_;
  std::vector<bool> obstacles_;
};

GridMap parse_map(std::string_view text);
std::string emit_map(const GridMap& map);
GridMap load_map(const std::string& path);

// Exactly round(density * width * height) obstacles, placed uniformly without
// replacement.
GridMap generate_random_map(int width, int height, double density, std::uint64_t seed);

// 4-connected component label per cell, -1 on obstacles.
std::vector<int> component_labels(const GridMap& map);

// BFS step distance from every cell to `target`, -1 when unreachable.
std::vector<int> distance_map(const GridMap& map, Position target);

struct AgentTask {
  Position start;
  Position goal;
  friend bool operator==(const AgentTask&, const AgentTask&) = default;
};

struct Scenario {
  std::vector<AgentTask> tasks;

  std::size_t size() const { return tasks.size(); }
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

class ScenarioError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Throws ScenarioError if starts/goals collide, sit on obstacles or are disconnected.
void check_scenario(const GridMap& map, const Scenario& scenario);

// Starts and goals are drawn from disjoint, previously unused free cells; each
// goal lies in its start's connected component.
Scenario generate_scenario(const GridMap& map, int n_agents, std::uint64_t seed);

// One line of a MovingAI .scen file.
struct ScenarioEntry {
  int bucket = 0;
  std::string map_name;
  int map_width = 0;
  int map_height = 0;
  Position start;
  Position goal;
  double optimal_length = 0.0;
  friend bool operator==(const ScenarioEntry&, const ScenarioEntry&) = default;
};

std::vector<ScenarioEntry> parse_scen(std::string_view text);
std::string emit_scen(const std::vector<ScenarioEntry>& entries);

Scenario scenario_from_entries(const std::vector<ScenarioEntry>& entries);
// Fills optimal_length with the single-agent BFS distance.
std::vector<ScenarioEntry> entries_from_scenario(const GridMap& map, const Scenario& scenario,
                                                 const std::string& map_name);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace mapfil

template <>
struct std::hash<mapfil::Position> {
  std::size_t operator()(const mapfil::Position& p) const noexcept {
    return std::hash<std::uint64_t>{}((std::uint64_t(std::uint32_t(p.row)) << 32) |
                                      std::uint32_t(p.col));
  }
};

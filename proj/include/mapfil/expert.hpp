#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mapfil/grid.hpp"
#include "mapfil/world.hpp"

namespace mapfil {

// Forbids one agent from occupying `to` at `time` (Vertex), or from moving
// from -> to arriving at `time` (Edge, time >= 1).
struct Constraint {
  enum class Kind { Vertex, Edge };

  int agent = 0;
  Kind kind = Kind::Vertex;
  Position from;
  Position to;
  int time = 0;

  static Constraint vertex(int agent, Position cell, int time) { return {agent, Kind::Vertex, cell, cell, time}; }
  static Constraint edge(int agent, Position from, Position to, int time) {
    return {agent, Kind::Edge, from, to, time};
  }
  friend bool operator==(const Constraint&, const Constraint&) = default;
};

// cells[t] is the agent's location at time t. After the last entry the
// agent stays on its final cell.
using Path = std::vector<Position>;

inline Position position_at(const Path& path, int t) {
  return t < int(path.size()) ? path[t] : path.back();
}

struct Solution {
  std::vector<Path> paths;
  int sum_of_costs = 0;
  int makespan = 0;
  friend bool operator==(const Solution&, const Solution&) = default;
};

// Drops trailing repeats of each path's final cell and computes costs.
Solution make_solution(std::vector<Path> paths);

inline int default_horizon(const GridMap& map) { return 4 * (map.width() + map.height()); }

struct SolverLimits {
  int horizon = 0;  // 0 selects default_horizon(map)
  std::size_t max_high_level_nodes = 20000;
};

// Minimal completion-time path under the constraints that bind `agent`.
// Constraints for other agents are ignored.
std::optional<Path> spacetime_astar(const GridMap& map, Position start, Position goal,
                                    std::span<const Constraint> constraints, int horizon,
                                    int agent = 0);

// Optimal sum-of-costs conflict-based search.
std::optional<Solution> cbs_solve(const GridMap& map, const Scenario& scenario, SolverLimits limits = {});

// Bounded-suboptimal focal search on both levels: sum_of_costs <= w * optimal.
std::optional<Solution> ecbs_solve(const GridMap& map, const Scenario& scenario, double w,
                                   SolverLimits limits = {});

// Exhaustive joint-state search; refuses instances beyond 3 agents or 8x8 cells.
std::optional<int> joint_state_oracle(const GridMap& map, const Scenario& scenario, int horizon);

class MalformedSolution : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Conflicts between goal-padded paths plus obstacle/out-of-bound cells.
// Structural problems (wrong agent count, wrong endpoints, jumps) throw
// MalformedSolution.
std::vector<Conflict> validate_solution(const GridMap& map, const Scenario& scenario,
                                        const Solution& solution);

// Vertex and swap conflicts between goal-padded paths ordered by (time, agent pair).
std::vector<Conflict> path_conflicts(std::span<const Path* const> paths);

}  // namespace mapfil

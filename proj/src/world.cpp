#include "mapfil/world.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mapfil {

bool VisitHistory::contains(Position p) const {
  return std::find(cells_.begin(), cells_.end(), p) != cells_.end();
}

WorldState initial_state(const Scenario& scenario, std::size_t history_capacity) {
  WorldState state;
  state.agents.reserve(scenario.size());
  for (const auto& task : scenario.tasks)
    state.agents.push_back({task.start, task.goal, task.start == task.goal, VisitHistory(history_capacity)});
  return state;
}

const char* to_string(ConflictKind kind) {
  switch (kind) {
    case ConflictKind::Vertex: return "vertex";
    case ConflictKind::Swap: return "swap";
    case ConflictKind::Obstacle: return "obstacle";
    case ConflictKind::OutOfBound: return "out_of_bound";
  }
  return "?";
}

std::vector<Conflict> check_conflicts(const WorldState& state, const GridMap& map,
                                      std::span<const Action> proposed) {
  const std::size_t n = state.agents.size();
  if (proposed.size() != n)
    throw ContractViolation("joint action has " + std::to_string(proposed.size()) + " entries for " +
                            std::to_string(n) + " agents");
  const int t = state.time + 1;
  std::vector<Position> target(n);
  std::vector<bool> valid(n, true);
  std::vector<Conflict> conflicts;
  for (std::size_t i = 0; i < n; ++i) {
    target[i] = apply_action(state.agents[i].position, proposed[i]);
    if (!map.in_bounds(target[i])) {
      conflicts.push_back({ConflictKind::OutOfBound, {int(i)}, {target[i]}, t});
      valid[i] = false;
    } else if (map.is_obstacle(target[i])) {
      conflicts.push_back({ConflictKind::Obstacle, {int(i)}, {target[i]}, t});
      valid[i] = false;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    const Position from_i = state.agents[i].position;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!valid[j]) continue;
      const Position from_j = state.agents[j].position;
      if (target[i] == target[j]) {
        conflicts.push_back({ConflictKind::Vertex, {int(i), int(j)}, {target[i]}, t});
      } else if (proposed[i] != Action::Stay && target[i] == from_j && target[j] == from_i) {
        conflicts.push_back({ConflictKind::Swap, {int(i), int(j)}, {from_i, from_j}, t});
      }
    }
  }
  return conflicts;
}

WorldState step(const WorldState& state, const GridMap& map, std::span<const Action> proposed) {
  const auto conflicts = check_conflicts(state, map, proposed);
  if (!conflicts.empty())
    throw ContractViolation(std::string("joint action has a ") + to_string(conflicts.front().kind) +
                            " conflict at t=" + std::to_string(conflicts.front().time));
  WorldState next = state;
  next.time = state.time + 1;
  for (std::size_t i = 0; i < next.agents.size(); ++i) {
    AgentState& agent = next.agents[i];
    agent.history.push(agent.position);
    agent.position = apply_action(agent.position, proposed[i]);
    agent.done = agent.position == agent.goal;
  }
  return next;
}

namespace {

bool fov_offset(Position center, Position cell, int& row, int& col) {
  row = cell.row - center.row + kFovRadius;
  col = cell.col - center.col + kFovRadius;
  return row >= 0 && row < kFov && col >= 0 && col < kFov;
}

}  // namespace

Observation encode_observation(const WorldState& state, const GridMap& map, int agent, bool tcao,
                               GoalProjection projection) {
  if (agent < 0 || std::size_t(agent) >= state.agents.size())
    throw std::out_of_range("agent index " + std::to_string(agent) + " out of range");
  const AgentState& self = state.agents[agent];
  const Position center = self.position;
  Observation obs;
  auto set = [&obs](int ch, int row, int col) { obs.channels[ch * kFovCells + row * kFov + col] = 1.0; };

  for (int r = 0; r < kFov; ++r) {
    for (int c = 0; c < kFov; ++c) {
      const Position cell{center.row + r - kFovRadius, center.col + c - kFovRadius};
      if (!map.in_bounds(cell) || map.is_obstacle(cell)) set(channel::kObstacles, r, c);
    }
  }

  int r = 0, c = 0;
  for (std::size_t j = 0; j < state.agents.size(); ++j) {
    if (int(j) == agent) continue;
    const AgentState& other = state.agents[j];
    if (fov_offset(center, other.position, r, c))
      set(tcao && other.done ? channel::kObstacles : channel::kAgents, r, c);
    if (fov_offset(center, other.goal, r, c)) set(channel::kOtherGoals, r, c);
  }

  if (fov_offset(center, self.goal, r, c)) {
    set(channel::kOwnGoal, r, c);
  } else if (projection == GoalProjection::Boundary) {
    set(channel::kOwnGoal, std::clamp(r, 0, kFov - 1), std::clamp(c, 0, kFov - 1));
  }

  const double dx = self.goal.col - center.col;
  const double dy = self.goal.row - center.row;
  const double norm = std::hypot(dx, dy);
  if (norm > 0.0) {
    const double d_max = map.width() + map.height();
    obs.goal_vector = {dx / norm, dy / norm, std::min(norm, d_max) / d_max};
  }
  return obs;
}

}  // namespace mapfil

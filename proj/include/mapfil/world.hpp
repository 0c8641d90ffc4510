#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <span>
#include <stdexcept>
#include <vector>

#include "mapfil/grid.hpp"

namespace mapfil {

// Raised when a caller breaks an operation's precondition.
class ContractViolation : public std::logic_error {
  using std::logic_error::logic_error;
};

// Most recent visited cells, oldest first, bounded by capacity.
class VisitHistory {
 public:
  explicit VisitHistory(std::size_t capacity = 0) : capacity_(capacity) {}

  void push(Position p) {
    if (capacity_ == 0) return;
    if (cells_.size() == capacity_) cells_.pop_front();
    cells_.push_back(p);
  }
  bool contains(Position p) const;
  std::size_t size() const { return cells_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<Position>& cells() const { return cells_; }

  friend bool operator==(const VisitHistory&, const VisitHistory&) = default;

 private:
  std::size_t capacity_;
  std::deque<Position> cells_;
};

struct AgentState {
  Position position;
  Position goal;
  bool done = false;
  VisitHistory history;
  friend bool operator==(const AgentState&, const AgentState&) = default;
};

struct WorldState {
  int time = 0;
  std::vector<AgentState> agents;
  friend bool operator==(const WorldState&, const WorldState&) = default;
};

// Agents placed on their starts at time 0 with empty histories of the given capacity.
WorldState initial_state(const Scenario& scenario, std::size_t history_capacity);

enum class ConflictKind { Vertex, Swap, Obstacle, OutOfBound };
const char* to_string(ConflictKind kind);

struct Conflict {
  ConflictKind kind;
  std::vector<int> agents;      // two for Vertex/Swap, one otherwise
  std::vector<Position> cells;  // contested cell, or the two exchanged cells for Swap
  int time = 0;                 // arrival time of the offending move
  friend bool operator==(const Conflict&, const Conflict&) = default;
};

std::vector<Conflict> check_conflicts(const WorldState& state, const GridMap& map,
                                      std::span<const Action> proposed);

// Advances one step. The joint action must be conflict-free.
WorldState step(const WorldState& state, const GridMap& map, std::span<const Action> proposed);

inline constexpr int kFov = 9;
inline constexpr int kFovRadius = kFov / 2;
inline constexpr int kChannels = 4;
inline constexpr int kFovCells = kFov * kFov;
inline constexpr int kObsSize = kChannels * kFovCells;
inline constexpr int kGoalVecSize = 3;

// How an own goal outside the field of view appears in the goal channel.
enum class GoalProjection { Boundary, Absent };

struct Observation {
  // channel-major, then row, then column
  std::array<double, kObsSize> channels{};
  std::array<double, kGoalVecSize> goal_vector{};

  double at(int channel, int row, int col) const { return channels[channel * kFovCells + row * kFov + col]; }
  friend bool operator==(const Observation&, const Observation&) = default;
};

namespace channel {
inline constexpr int kObstacles = 0;
inline constexpr int kAgents = 1;
inline constexpr int kOwnGoal = 2;
inline constexpr int kOtherGoals = 3;
}  // namespace channel

Observation encode_observation(const WorldState& state, const GridMap& map, int agent, bool tcao,
                               GoalProjection projection = GoalProjection::Boundary);

}  // namespace mapfil

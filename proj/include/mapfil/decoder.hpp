#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "mapfil/grid.hpp"
#include "mapfil/policy.hpp"
#include "mapfil/rng.hpp"
#include "mapfil/world.hpp"

namespace mapfil {

enum class DecodeMode { Sample, Greedy };

struct DecoderConfig {
  double tau = 2.0;
  int history = 5;
  bool tcao = true;
  bool history_enabled = true;
  std::uint64_t seed = 0;
  DecodeMode mode = DecodeMode::Sample;
  GoalProjection projection = GoalProjection::Boundary;
};

// Throws std::invalid_argument on tau <= 0 or negative history.
void validate_config(const DecoderConfig& config);

// true = action allowed.
using ActionMask = std::array<bool, kNumActions>;

// Bans moves off the map or into obstacles, and into finished agents when
// tcao is on. Stay is always allowed.
ActionMask legality_mask(const WorldState& state, const GridMap& map, int agent, bool tcao);

// Bans moves into any of the agent's last `history` recorded cells. Stay is
// never banned.
ActionMask history_mask(const AgentState& agent, int history, bool enabled = true);

// Samples (or takes the argmax of) the distribution restricted to the allowed
// actions. Falls back to the legality mask alone, then to Stay, when nothing
// allowed has probability mass.
Action propose_action(const ActionDistribution& dist, const ActionMask& legal, const ActionMask& history,
                      DecodeMode mode, Rng& rng);

// Reverts actions to Stay until the joint action has no conflicts: swaps revert
// both agents, agents that stay keep their cell, and among several movers into
// one free cell the lowest index wins.
std::vector<Action> resolve_conflicts(const WorldState& state, const GridMap& map, std::span<const Action> proposed);

struct DecodedStep {
  std::vector<Action> actions;
  WorldState next;
};

DecodedStep decode_step(const WorldState& state, const GridMap& map, const Weights& weights,
                        const DecoderConfig& config, Rng& rng);

struct EpisodeResult {
  std::vector<bool> reached;
  std::vector<int> completion_time;  // -1 when the agent never finished
  int steps = 0;
  std::vector<std::vector<Action>> trace;  // joint actions, filled when requested

  std::size_t agents_reached() const;
  double success_rate() const;
};

EpisodeResult run_episode(const GridMap& map, const Scenario& scenario, const Weights& weights,
                          const DecoderConfig& config, int max_steps, bool record_trace = false);

// Replays joint actions from the scenario's start and returns conflicts of the
// first step that has any (empty when the whole trace is clean). A trace that
// moves a finished agent counts as a contract violation.
std::vector<Conflict> audit_trace(const GridMap& map, const Scenario& scenario,
                                  std::span<const std::vector<Action>> trace, int history = 5);

}  // namespace mapfil

#include "mapfil/decoder.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace mapfil {

void validate_config(const DecoderConfig& config) {
  if (!(config.tau > 0.0)) throw std::invalid_argument("decoder temperature must be positive");
  if (config.history < 0) throw std::invalid_argument("history size must be non-negative");
}

ActionMask legality_mask(const WorldState& state, const GridMap& map, int agent, bool tcao) {
  ActionMask mask{};
  const Position here = state.agents.at(std::size_t(agent)).position;
  for (Action a : kAllActions) {
    const Position to = apply_action(here, a);
    bool ok = a == Action::Stay || map.passable(to);
    if (ok && tcao && a != Action::Stay)
      for (std::size_t j = 0; j < state.agents.size(); ++j)
        if (int(j) != agent && state.agents[j].done && state.agents[j].position == to) ok = false;
    mask[index_of(a)] = ok;
  }
  return mask;
}

ActionMask history_mask(const AgentState& agent, int history, bool enabled) {
  ActionMask mask;
  mask.fill(true);
  if (!enabled || history <= 0) return mask;
  const auto& cells = agent.history.cells();
  const std::size_t keep = std::min(cells.size(), std::size_t(history));
  for (Action a : kAllActions) {
    if (a == Action::Stay) continue;
    const Position to = apply_action(agent.position, a);
    if (std::find(cells.end() - std::ptrdiff_t(keep), cells.end(), to) != cells.end()) mask[index_of(a)] = false;
  }
  return mask;
}

namespace {

bool pick(const ActionDistribution& dist, const ActionMask& allowed, DecodeMode mode, Rng& rng, Action& out) {
  double total = 0.0;
  for (int k = 0; k < kNumActions; ++k)
    if (allowed[k]) total += dist[k];
  if (!(total > 0.0)) return false;
  if (mode == DecodeMode::Greedy) {
    int best = -1;
    for (int k = 0; k < kNumActions; ++k)
      if (allowed[k] && dist[k] > 0.0 && (best < 0 || dist[k] > dist[best])) best = k;
    out = action_from_index(best);
    return true;
  }
  const double u = rng.uniform() * total;
  double acc = 0.0;
  int last = -1;
  for (int k = 0; k < kNumActions; ++k) {
    if (!allowed[k] || dist[k] <= 0.0) continue;
    last = k;
    acc += dist[k];
    if (u < acc) {
      out = action_from_index(k);
      return true;
    }
  }
  out = action_from_index(last);  // u rounded up to the total
  return true;
}

}  // namespace

Action propose_action(const ActionDistribution& dist, const ActionMask& legal, const ActionMask& history,
                      DecodeMode mode, Rng& rng) {
  ActionMask both;
  for (int k = 0; k < kNumActions; ++k) both[k] = legal[k] && history[k];
  Action a = Action::Stay;
  if (pick(dist, both, mode, rng, a)) return a;
  if (pick(dist, legal, mode, rng, a)) return a;
  return Action::Stay;
}

std::vector<Action> resolve_conflicts(const WorldState& state, const GridMap& map, std::span<const Action> proposed) {
  const std::size_t n = state.agents.size();
  if (proposed.size() != n)
    throw ContractViolation("joint action has " + std::to_string(proposed.size()) + " entries for " +
                            std::to_string(n) + " agents");
  std::vector<Action> actions(proposed.begin(), proposed.end());
  std::vector<Position> from(n), to(n);
  for (std::size_t i = 0; i < n; ++i) {
    from[i] = state.agents[i].position;
    to[i] = apply_action(from[i], actions[i]);
    // Static violations are excluded by the legality mask; revert them anyway.
    if (!map.passable(to[i])) {
      actions[i] = Action::Stay;
      to[i] = from[i];
    }
  }
  auto revert = [&](std::size_t i) {
    actions[i] = Action::Stay;
    to[i] = from[i];
  };

  std::unordered_map<Position, std::size_t> occupant;
  for (std::size_t i = 0; i < n; ++i) occupant.emplace(from[i], i);
  std::unordered_map<Position, std::vector<std::size_t>> arrivals;
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (actions[i] == Action::Stay) continue;
      const auto it = occupant.find(to[i]);
      if (it == occupant.end()) continue;
      const std::size_t j = it->second;
      if (actions[j] != Action::Stay && to[j] == from[i]) {
        revert(i);
        revert(j);
        changed = true;
      }
    }
    arrivals.clear();
    for (std::size_t i = 0; i < n; ++i) arrivals[to[i]].push_back(i);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& here = arrivals[to[i]];
      if (here.size() < 2 || actions[i] == Action::Stay) continue;
      // Someone staying already holds the cell; otherwise the lowest-index mover does.
      bool lose = false;
      for (std::size_t j : here)
        if (j != i && (actions[j] == Action::Stay || j < i)) lose = true;
      if (lose) {
        revert(i);
        changed = true;
      }
    }
  }
  return actions;
}

DecodedStep decode_step(const WorldState& state, const GridMap& map, const Weights& weights,
                        const DecoderConfig& config, Rng& rng) {
  validate_config(config);
  const std::size_t n = state.agents.size();
  std::vector<int> active;
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < n; ++i) {
    if (state.agents[i].done) continue;
    active.push_back(int(i));
    obs.push_back(encode_observation(state, map, int(i), config.tcao, config.projection));
  }
  const auto logits = forward_batch(weights, obs);

  std::vector<Action> proposed(n, Action::Stay);
  for (std::size_t k = 0; k < active.size(); ++k) {
    const int i = active[k];
    const ActionDistribution dist = softmax_with_temperature(logits[k], config.tau);
    proposed[std::size_t(i)] =
        propose_action(dist, legality_mask(state, map, i, config.tcao),
                       history_mask(state.agents[std::size_t(i)], config.history, config.history_enabled), config.mode,
                       rng);
  }
  DecodedStep out;
  out.actions = resolve_conflicts(state, map, proposed);
  if (!check_conflicts(state, map, out.actions).empty())
    throw ContractViolation("conflict resolution left a conflict at t=" + std::to_string(state.time + 1));
  out.next = step(state, map, out.actions);
  return out;
}

std::size_t EpisodeResult::agents_reached() const { return std::size_t(std::count(reached.begin(), reached.end(), true)); }

double EpisodeResult::success_rate() const {
  return reached.empty() ? 1.0 : double(agents_reached()) / double(reached.size());
}

EpisodeResult run_episode(const GridMap& map, const Scenario& scenario, const Weights& weights,
                          const DecoderConfig& config, int max_steps, bool record_trace) {
  if (max_steps < 1) throw std::invalid_argument("max_steps must be at least 1");
  validate_config(config);
  check_scenario(map, scenario);
  Rng rng(config.seed);
  WorldState state = initial_state(scenario, std::size_t(config.history));
  EpisodeResult result;
  const std::size_t n = scenario.size();
  result.reached.assign(n, false);
  result.completion_time.assign(n, -1);
  auto record = [&] {
    for (std::size_t i = 0; i < n; ++i)
      if (state.agents[i].done && !result.reached[i]) {
        result.reached[i] = true;
        result.completion_time[i] = state.time;
      }
  };
  record();
  while (state.time < max_steps && result.agents_reached() < n) {
    DecodedStep s = decode_step(state, map, weights, config, rng);
    if (record_trace) result.trace.push_back(std::move(s.actions));
    state = std::move(s.next);
    record();
  }
  result.steps = state.time;
  return result;
}

std::vector<Conflict> audit_trace(const GridMap& map, const Scenario& scenario,
                                  std::span<const std::vector<Action>> trace, int history) {
  check_scenario(map, scenario);
  WorldState state = initial_state(scenario, std::size_t(std::max(history, 0)));
  for (const auto& joint : trace) {
    auto conflicts = check_conflicts(state, map, joint);
    if (!conflicts.empty()) return conflicts;
    for (std::size_t i = 0; i < joint.size(); ++i)
      if (state.agents[i].done && joint[i] != Action::Stay)
        throw ContractViolation("agent " + std::to_string(i) + " leaves its goal at t=" + std::to_string(state.time));
    state = step(state, map, joint);
  }
  return {};
}

}  // namespace mapfil

#include <array>
#include <cstdint>
#include <queue>
#include <tuple>
#include <unordered_map>

#include "mapfil/expert.hpp"

namespace mapfil {

namespace {

constexpr int kMaxAgents = 3;
constexpr int kMaxSide = 8;

// Joint state: cell of every agent plus a bit per agent that has committed to
// staying on its goal for good. An agent pays one unit per step until it
// commits, so the total paid is the sum of completion times.
struct JointState {
  std::array<int, kMaxAgents> cells{};
  unsigned finished = 0;
};

std::uint32_t encode(const JointState& s, int n) {
  std::uint32_t key = s.finished;
  for (int i = 0; i < n; ++i) key |= std::uint32_t(s.cells[i]) << (kMaxAgents + 6 * i);
  return key;
}

JointState decode(std::uint32_t key, int n) {
  JointState s;
  s.finished = key & ((1u << kMaxAgents) - 1);
  for (int i = 0; i < n; ++i) s.cells[i] = int((key >> (kMaxAgents + 6 * i)) & 63u);
  return s;
}

}  // namespace

std::optional<int> joint_state_oracle(const GridMap& map, const Scenario& scenario, int horizon) {
  const int n = int(scenario.size());
  if (n > kMaxAgents || map.width() > kMaxSide || map.height() > kMaxSide)
    throw std::invalid_argument("joint-state oracle accepts at most 3 agents on an 8x8 map");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  check_scenario(map, scenario);
  if (n == 0) return 0;

  std::vector<std::vector<int>> dist;
  std::array<int, kMaxAgents> goal{};
  JointState start;
  for (int i = 0; i < n; ++i) {
    dist.push_back(distance_map(map, scenario.tasks[i].goal));
    goal[i] = map.index(scenario.tasks[i].goal);
    start.cells[i] = map.index(scenario.tasks[i].start);
  }
  const unsigned all_finished = (1u << n) - 1;
  // Any solution that respects the horizon costs at most n * horizon.
  const int cost_limit = n * horizon;

  auto heuristic = [&](const JointState& s) {
    int h = 0;
    for (int i = 0; i < n; ++i)
      if (!(s.finished & (1u << i))) h += dist[i][s.cells[i]];
    return h;
  };

  using Item = std::tuple<int, int, std::uint32_t>;  // f, g, key
  std::priority_queue<Item, std::vector<Item>, std::greater<>> frontier;
  std::unordered_map<std::uint32_t, int> best;
  auto push = [&](const JointState& s, int g) {
    if (g > cost_limit) return;
    const std::uint32_t key = encode(s, n);
    auto [it, inserted] = best.try_emplace(key, g);
    if (!inserted) {
      if (g >= it->second) return;
      it->second = g;
    }
    frontier.emplace(g + heuristic(s), g, key);
  };
  push(start, 0);

  std::array<int, kMaxAgents> next_cells{};
  while (!frontier.empty()) {
    auto [f, g, key] = frontier.top();
    frontier.pop();
    if (best[key] != g) continue;
    const JointState s = decode(key, n);
    if (s.finished == all_finished) return g;

    // Committing to the goal is free.
    for (int i = 0; i < n; ++i) {
      if (!(s.finished & (1u << i)) && s.cells[i] == goal[i]) {
        JointState c = s;
        c.finished |= 1u << i;
        push(c, g);
      }
    }

    int active = 0;
    for (int i = 0; i < n; ++i) active += !(s.finished & (1u << i));

    // Enumerate joint moves agent by agent, pruning vertex and swap conflicts early.
    auto expand = [&](auto&& self, int i) -> void {
      if (i == n) {
        JointState c = s;
        c.cells = next_cells;
        push(c, g + active);
        return;
      }
      const Position here = map.position(s.cells[i]);
      for (Action a : kAllActions) {
        if ((s.finished & (1u << i)) && a != Action::Stay) continue;
        const Position to = apply_action(here, a);
        if (!map.passable(to)) continue;
        const int cell = map.index(to);
        bool ok = true;
        for (int j = 0; j < i && ok; ++j) {
          if (next_cells[j] == cell) ok = false;
          if (next_cells[j] == s.cells[i] && s.cells[j] == cell && cell != s.cells[i]) ok = false;
        }
        if (!ok) continue;
        next_cells[i] = cell;
        self(self, i + 1);
      }
    };
    expand(expand, 0);
  }
  return std::nullopt;
}

}  // namespace mapfil

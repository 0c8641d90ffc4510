#include "mapfil/expert.hpp"

#include <algorithm>
#include <cstdint>
#include <memory>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace mapfil {

Solution make_solution(std::vector<Path> paths) {
  Solution s;
  for (auto& path : paths) {
    if (path.empty()) throw MalformedSolution("empty path");
    while (path.size() >= 2 && path[path.size() - 1] == path[path.size() - 2]) path.pop_back();
    const int cost = int(path.size()) - 1;
    s.sum_of_costs += cost;
    s.makespan = std::max(s.makespan, cost);
  }
  s.paths = std::move(paths);
  return s;
}

std::vector<Conflict> path_conflicts(std::span<const Path* const> paths) {
  std::vector<Conflict> conflicts;
  int last = 0;
  for (const Path* p : paths) last = std::max(last, int(p->size()) - 1);

  using Entry = std::pair<Position, int>;
  std::vector<Entry> prev, cur;
  for (int t = 0; t <= last; ++t) {
    cur.clear();
    for (std::size_t i = 0; i < paths.size(); ++i) cur.emplace_back(position_at(*paths[i], t), int(i));
    std::sort(cur.begin(), cur.end());
    for (std::size_t a = 0; a < cur.size();) {
      std::size_t b = a + 1;
      while (b < cur.size() && cur[b].first == cur[a].first) ++b;
      for (std::size_t x = a; x < b; ++x)
        for (std::size_t y = x + 1; y < b; ++y)
          conflicts.push_back({ConflictKind::Vertex, {cur[x].second, cur[y].second}, {cur[a].first}, t});
      a = b;
    }
    if (t > 0) {
      for (std::size_t i = 0; i < paths.size(); ++i) {
        const Position u = position_at(*paths[i], t - 1);
        const Position v = position_at(*paths[i], t);
        if (u == v) continue;
        auto range = std::equal_range(prev.begin(), prev.end(), Entry{v, -1},
                                      [](const Entry& l, const Entry& r) { return l.first < r.first; });
        for (auto it = range.first; it != range.second; ++it) {
          const int j = it->second;
          if (j <= int(i) || position_at(*paths[j], t) != u) continue;
          conflicts.push_back({ConflictKind::Swap, {int(i), j}, {u, v}, t});
        }
      }
    }
    std::swap(prev, cur);
  }
  std::stable_sort(conflicts.begin(), conflicts.end(), [](const Conflict& l, const Conflict& r) {
    if (l.time != r.time) return l.time < r.time;
    return l.agents < r.agents;
  });
  return conflicts;
}

std::vector<Conflict> validate_solution(const GridMap& map, const Scenario& scenario,
                                        const Solution& solution) {
  if (solution.paths.size() != scenario.size())
    throw MalformedSolution("solution has " + std::to_string(solution.paths.size()) + " paths for " +
                            std::to_string(scenario.size()) + " agents");
  std::vector<Conflict> conflicts;
  std::vector<const Path*> ptrs;
  for (std::size_t i = 0; i < scenario.size(); ++i) {
    const Path& path = solution.paths[i];
    const std::string who = "agent " + std::to_string(i);
    if (path.empty()) throw MalformedSolution(who + ": empty path");
    if (path.front() != scenario.tasks[i].start) throw MalformedSolution(who + ": path does not begin at start");
    if (path.back() != scenario.tasks[i].goal) throw MalformedSolution(who + ": path does not end at goal");
    for (std::size_t t = 0; t < path.size(); ++t) {
      if (t > 0 && !action_between(path[t - 1], path[t]))
        throw MalformedSolution(who + ": non-adjacent move at t=" + std::to_string(t));
      if (!map.in_bounds(path[t]))
        conflicts.push_back({ConflictKind::OutOfBound, {int(i)}, {path[t]}, int(t)});
      else if (map.is_obstacle(path[t]))
        conflicts.push_back({ConflictKind::Obstacle, {int(i)}, {path[t]}, int(t)});
    }
    ptrs.push_back(&path);
  }
  auto between = path_conflicts(ptrs);
  conflicts.insert(conflicts.end(), between.begin(), between.end());
  return conflicts;
}

namespace {

std::uint64_t vertex_key(int cell, int t) { return (std::uint64_t(t) << 32) | std::uint32_t(cell); }

std::uint64_t edge_key(int from, int to, int t, int cells) {
  return (std::uint64_t(t) << 32) | std::uint32_t(from * cells + to);
}

class ConstraintTable {
 public:
  ConstraintTable(const GridMap& map, std::span<const Constraint> constraints, int agent, Position goal)
      : cells_(map.cell_count()) {
    for (const auto& c : constraints) {
      if (c.agent != agent) continue;
      max_time_ = std::max(max_time_, c.time);
      if (c.kind == Constraint::Kind::Vertex) {
        if (!map.in_bounds(c.to)) continue;
        vertices_.insert(vertex_key(map.index(c.to), c.time));
        if (c.to == goal) last_goal_time_ = std::max(last_goal_time_, c.time);
      } else {
        if (!map.in_bounds(c.from) || !map.in_bounds(c.to)) continue;
        edges_.insert(edge_key(map.index(c.from), map.index(c.to), c.time, cells_));
      }
    }
  }

  bool vertex_blocked(int cell, int t) const { return vertices_.contains(vertex_key(cell, t)); }
  bool edge_blocked(int from, int to, int t) const { return edges_.contains(edge_key(from, to, t, cells_)); }
  int max_time() const { return max_time_; }
  int last_goal_time() const { return last_goal_time_; }

 private:
  int cells_;
  int max_time_ = 0;
  int last_goal_time_ = -1;
  std::unordered_set<std::uint64_t> vertices_;
  std::unordered_set<std::uint64_t> edges_;
};

// Counts how often a move would collide with the other agents' current paths.
class ConflictAvoidance {
 public:
  ConflictAvoidance(const GridMap& map, std::span<const Path* const> others) : cells_(map.cell_count()) {
    for (const Path* p : others)
      if (p) last_ = std::max(last_, int(p->size()) - 1);
    occupancy_.assign(std::size_t(last_ + 1) * cells_, 0);
    for (const Path* p : others) {
      if (!p) continue;
      for (int t = 0; t <= last_; ++t) ++occupancy_[std::size_t(t) * cells_ + map.index(position_at(*p, t))];
      for (std::size_t t = 1; t < p->size(); ++t)
        if ((*p)[t - 1] != (*p)[t])
          ++moves_[edge_key(map.index((*p)[t - 1]), map.index((*p)[t]), int(t), cells_)];
    }
  }

  int vertex(int cell, int t) const { return occupancy_[std::size_t(std::min(t, last_)) * cells_ + cell]; }
  int swap(int from, int to, int t) const {
    auto it = moves_.find(edge_key(to, from, t, cells_));
    return it == moves_.end() ? 0 : it->second;
  }
  int last_time() const { return last_; }

 private:
  int cells_;
  int last_ = 0;
  std::vector<std::uint16_t> occupancy_;
  std::unordered_map<std::uint64_t, int> moves_;
};

struct LowLevelResult {
  Path path;
  int lower_bound = 0;
};

// Focal space-time A*. OPEN is ordered by (f, h, insertion); FOCAL holds the
// OPEN nodes with f <= w * f_min, ordered by conflicts with `avoid` first.
// With w = 1 and no avoidance table this is plain A*.
std::optional<LowLevelResult> focal_search(const GridMap& map, Position start, Position goal,
                                           const std::vector<int>& dist, const ConstraintTable& table,
                                           const ConflictAvoidance* avoid, double w, int horizon) {
  const int cells = map.cell_count();
  const int start_cell = map.index(start);
  const int goal_cell = map.index(goal);
  if (dist[start_cell] < 0 || table.vertex_blocked(start_cell, 0)) return std::nullopt;

  // Past this time neither constraints nor other paths change, so states merge.
  const int t_stable = std::max(table.max_time(), avoid ? avoid->last_time() : 0) + 1;
  const int last_goal_time = table.last_goal_time();

  struct Node {
    int cell, g, h, conflicts, parent;
    std::uint64_t seq;
    bool open;
    int f() const { return g + h; }
  };
  std::vector<Node> nodes;
  std::unordered_map<std::uint64_t, int> lookup;

  auto open_less = [&nodes](int a, int b) {
    const Node &x = nodes[a], &y = nodes[b];
    if (x.f() != y.f()) return x.f() < y.f();
    if (x.h != y.h) return x.h < y.h;
    return x.seq < y.seq;
  };
  auto focal_less = [&nodes](int a, int b) {
    const Node &x = nodes[a], &y = nodes[b];
    if (x.conflicts != y.conflicts) return x.conflicts < y.conflicts;
    if (x.f() != y.f()) return x.f() < y.f();
    if (x.h != y.h) return x.h < y.h;
    return x.seq < y.seq;
  };
  std::set<int, decltype(open_less)> open(open_less);
  std::set<int, decltype(focal_less)> focal(focal_less);
  std::uint64_t seq = 0;
  double bound = 0.0;

  auto heuristic = [&](int cell, int g) { return std::max(dist[cell], last_goal_time + 1 - g); };
  auto enqueue = [&](int id) {
    nodes[id].open = true;
    open.insert(id);
    if (nodes[id].f() <= bound + 1e-9) focal.insert(id);
  };
  auto relax = [&](int cell, int g, int conflicts, int parent) {
    const std::uint64_t key = std::uint64_t(std::min(g, t_stable)) * cells + cell;
    auto [it, inserted] = lookup.try_emplace(key, int(nodes.size()));
    if (inserted) {
      nodes.push_back({cell, g, heuristic(cell, g), conflicts, parent, seq++, false});
      enqueue(it->second);
      return;
    }
    Node& old = nodes[it->second];
    if (g > old.g || (g == old.g && conflicts >= old.conflicts)) return;
    if (old.open) {
      open.erase(it->second);
      focal.erase(it->second);
    }
    old.g = g;
    old.h = heuristic(cell, g);
    old.conflicts = conflicts;
    old.parent = parent;
    old.seq = seq++;
    enqueue(it->second);
  };

  bound = w * heuristic(start_cell, 0);
  relax(start_cell, 0, avoid ? avoid->vertex(start_cell, 0) : 0, -1);

  while (!open.empty()) {
    const int f_min = nodes[*open.begin()].f();
    const int id = *focal.begin();
    focal.erase(focal.begin());
    open.erase(id);
    nodes[id].open = false;
    const Node current = nodes[id];

    if (current.cell == goal_cell && current.g > last_goal_time) {
      LowLevelResult result;
      result.lower_bound = f_min;
      result.path.resize(current.g + 1);
      for (int at = id; at != -1; at = nodes[at].parent) result.path[nodes[at].g] = map.position(nodes[at].cell);
      return result;
    }

    const int g = current.g + 1;
    if (g <= horizon) {
      const Position here = map.position(current.cell);
      for (Action a : kAllActions) {
        const Position next = apply_action(here, a);
        if (!map.passable(next)) continue;
        const int cell = map.index(next);
        if (dist[cell] < 0 || table.vertex_blocked(cell, g)) continue;
        if (a != Action::Stay && table.edge_blocked(current.cell, cell, g)) continue;
        int conflicts = current.conflicts;
        if (avoid) {
          conflicts += avoid->vertex(cell, g);
          if (a != Action::Stay) conflicts += avoid->swap(current.cell, cell, g);
        }
        relax(cell, g, conflicts, id);
      }
    }

    if (!open.empty()) {
      const int new_min = nodes[*open.begin()].f();
      if (new_min > f_min) {
        bound = w * new_min;
        for (int n : open) {
          if (nodes[n].f() > bound + 1e-9) break;
          focal.insert(n);
        }
      }
    }
  }
  return std::nullopt;
}

struct HighLevelNode {
  int parent = -1;
  std::optional<Constraint> constraint;
  std::vector<std::shared_ptr<const Path>> paths;
  std::vector<int> lower_bounds;
  int cost = 0;
  int lower_bound = 0;
  int conflict_count = 0;
  std::optional<Conflict> first_conflict;
};

class ConflictSearch {
 public:
  ConflictSearch(const GridMap& map, const Scenario& scenario, double w, bool avoidance, SolverLimits limits)
      : map_(map), scenario_(scenario), w_(w), avoidance_(avoidance), limits_(limits) {
    if (!(w >= 1.0)) throw std::invalid_argument("suboptimality factor must be >= 1");
    check_scenario(map, scenario);
    if (std::size_t(map.cell_count()) * map.cell_count() >= (std::uint64_t(1) << 32))
      throw std::invalid_argument("map too large for the solver's edge keys");
    if (limits_.horizon <= 0) limits_.horizon = default_horizon(map);
    for (const auto& task : scenario.tasks) dists_.push_back(distance_map(map, task.goal));
  }

  std::optional<Solution> run() {
    const std::size_t n = scenario_.size();
    HighLevelNode root;
    root.paths.resize(n);
    root.lower_bounds.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<const Path*> others(n, nullptr);
      for (std::size_t j = 0; j < i; ++j) others[j] = root.paths[j].get();
      if (!plan(root, int(i), {}, others)) return std::nullopt;
    }
    evaluate(root, 0);
    nodes_.push_back(std::move(root));

    auto open_less = [this](int a, int b) {
      if (nodes_[a].lower_bound != nodes_[b].lower_bound) return nodes_[a].lower_bound < nodes_[b].lower_bound;
      return a < b;
    };
    auto focal_less = [this](int a, int b) {
      const auto &x = nodes_[a], &y = nodes_[b];
      if (x.conflict_count != y.conflict_count) return x.conflict_count < y.conflict_count;
      if (x.cost != y.cost) return x.cost < y.cost;
      return a < b;
    };
    std::set<int, decltype(open_less)> open(open_less);
    std::set<int, decltype(focal_less)> focal(focal_less);
    double bound = w_ * nodes_[0].lower_bound;
    auto enqueue = [&](int id) {
      open.insert(id);
      if (nodes_[id].cost <= bound + 1e-9) focal.insert(id);
    };
    enqueue(0);

    std::size_t expanded = 0;
    while (!focal.empty()) {
      const int id = *focal.begin();
      focal.erase(focal.begin());
      open.erase(id);
      if (nodes_[id].conflict_count == 0) return extract(nodes_[id]);
      if (++expanded > limits_.max_high_level_nodes) return std::nullopt;

      const Conflict conflict = *nodes_[id].first_conflict;
      for (int side = 0; side < 2; ++side) {
        const int agent = conflict.agents[side];
        Constraint c = conflict.kind == ConflictKind::Vertex
                           ? Constraint::vertex(agent, conflict.cells[0], conflict.time)
                           : Constraint::edge(agent, conflict.cells[side], conflict.cells[1 - side], conflict.time);
        HighLevelNode child;
        child.parent = id;
        child.constraint = c;
        child.paths = nodes_[id].paths;
        child.lower_bounds = nodes_[id].lower_bounds;
        std::vector<const Path*> others(n, nullptr);
        if (avoidance_)
          for (std::size_t j = 0; j < n; ++j)
            if (int(j) != agent) others[j] = child.paths[j].get();
        auto constraints = collect_constraints(id, agent);
        constraints.push_back(c);
        if (!plan(child, agent, constraints, others)) continue;
        evaluate(child, nodes_[id].lower_bound);
        nodes_.push_back(std::move(child));
        enqueue(int(nodes_.size()) - 1);
      }

      if (!open.empty()) {
        const double new_bound = w_ * nodes_[*open.begin()].lower_bound;
        if (new_bound > bound) {
          bound = new_bound;
          for (int n_id : open) {
            if (nodes_[n_id].lower_bound > bound + 1e-9) break;
            if (nodes_[n_id].cost <= bound + 1e-9) focal.insert(n_id);
          }
        }
      }
    }
    return std::nullopt;
  }

 private:
  bool plan(HighLevelNode& node, int agent, std::span<const Constraint> constraints,
            std::span<const Path* const> others) {
    const auto& task = scenario_.tasks[agent];
    ConstraintTable table(map_, constraints, agent, task.goal);
    std::optional<ConflictAvoidance> avoid;
    if (avoidance_) avoid.emplace(map_, others);
    auto result = focal_search(map_, task.start, task.goal, dists_[agent], table, avoid ? &*avoid : nullptr, w_,
                               limits_.horizon);
    if (!result) return false;
    node.paths[agent] = std::make_shared<const Path>(std::move(result->path));
    node.lower_bounds[agent] = result->lower_bound;
    return true;
  }

  void evaluate(HighLevelNode& node, int parent_lower_bound) {
    node.cost = 0;
    node.lower_bound = 0;
    std::vector<const Path*> ptrs;
    for (std::size_t i = 0; i < node.paths.size(); ++i) {
      node.cost += int(node.paths[i]->size()) - 1;
      node.lower_bound += node.lower_bounds[i];
      ptrs.push_back(node.paths[i].get());
    }
    node.lower_bound = std::max(node.lower_bound, parent_lower_bound);
    auto conflicts = path_conflicts(ptrs);
    node.conflict_count = int(conflicts.size());
    if (!conflicts.empty()) node.first_conflict = conflicts.front();
  }

  std::vector<Constraint> collect_constraints(int id, int agent) const {
    std::vector<Constraint> out;
    for (int at = id; at != -1; at = nodes_[at].parent)
      if (nodes_[at].constraint && nodes_[at].constraint->agent == agent) out.push_back(*nodes_[at].constraint);
    return out;
  }

  static Solution extract(const HighLevelNode& node) {
    std::vector<Path> paths;
    for (const auto& p : node.paths) paths.push_back(*p);
    return make_solution(std::move(paths));
  }

  const GridMap& map_;
  const Scenario& scenario_;
  double w_;
  bool avoidance_;
  SolverLimits limits_;
  std::vector<std::vector<int>> dists_;
  std::vector<HighLevelNode> nodes_;
};

}  // namespace

std::optional<Path> spacetime_astar(const GridMap& map, Position start, Position goal,
                                    std::span<const Constraint> constraints, int horizon, int agent) {
  if (!map.passable(start) || !map.passable(goal)) throw std::invalid_argument("start and goal must be free cells");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  ConstraintTable table(map, constraints, agent, goal);
  auto result = focal_search(map, start, goal, distance_map(map, goal), table, nullptr, 1.0, horizon);
  if (!result) return std::nullopt;
  return std::move(result->path);
}

std::optional<Solution> cbs_solve(const GridMap& map, const Scenario& scenario, SolverLimits limits) {
  return ConflictSearch(map, scenario, 1.0, false, limits).run();
}

std::optional<Solution> ecbs_solve(const GridMap& map, const Scenario& scenario, double w, SolverLimits limits) {
  return ConflictSearch(map, scenario, w, true, limits).run();
}

}  // namespace mapfil

#include <doctest.h>

#include <set>

#include "mapfil/expert.hpp"
#include "mapfil/rng.hpp"

using namespace mapfil;

namespace {

GridMap rows(const std::vector<std::string>& r) {
  std::string text = "type octile\nheight " + std::to_string(r.size()) + "\nwidth " +
                     std::to_string(r.front().size()) + "\nmap\n";
  for (const auto& s : r) text += s + "\n";
  return parse_map(text);
}

GridMap free_map(int w, int h) { return GridMap(w, h, std::vector<bool>(std::size_t(w) * h, false)); }

// Layered breadth-first search over (cell, time): independent of the A*
// implementation, used as the single-agent oracle.
std::optional<int> time_expanded_bfs(const GridMap& map, Position start, Position goal,
                                     const std::vector<Constraint>& cs, int horizon) {
  auto vertex_blocked = [&](Position p, int t) {
    for (const auto& c : cs)
      if (c.kind == Constraint::Kind::Vertex && c.to == p && c.time == t) return true;
    return false;
  };
  auto edge_blocked = [&](Position a, Position b, int t) {
    for (const auto& c : cs)
      if (c.kind == Constraint::Kind::Edge && c.from == a && c.to == b && c.time == t) return true;
    return false;
  };
  int last_goal = -1;
  for (const auto& c : cs)
    if (c.kind == Constraint::Kind::Vertex && c.to == goal) last_goal = std::max(last_goal, c.time);
  if (vertex_blocked(start, 0)) return std::nullopt;
  std::set<Position> layer{start};
  for (int t = 0; t <= horizon; ++t) {
    if (layer.contains(goal) && t > last_goal) return t;
    std::set<Position> next;
    for (Position p : layer)
      for (Action a : kAllActions) {
        const Position q = apply_action(p, a);
        if (!map.passable(q) || vertex_blocked(q, t + 1)) continue;
        if (a != Action::Stay && edge_blocked(p, q, t + 1)) continue;
        next.insert(q);
      }
    layer = std::move(next);
  }
  return std::nullopt;
}

void check_path_shape(const GridMap& map, const Path& p, Position s, Position g) {
  REQUIRE_FALSE(p.empty());
  CHECK(p.front() == s);
  CHECK(p.back() == g);
  for (std::size_t t = 0; t < p.size(); ++t) {
    CHECK(map.passable(p[t]));
    if (t > 0) CHECK(action_between(p[t - 1], p[t]).has_value());
  }
}

bool satisfies(const Path& p, const std::vector<Constraint>& cs) {
  for (const auto& c : cs) {
    if (c.kind == Constraint::Kind::Vertex) {
      if (position_at(p, c.time) == c.to) return false;
    } else if (position_at(p, c.time - 1) == c.from && position_at(p, c.time) == c.to) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("spacetime_astar on the reference examples") {
  const GridMap map = free_map(5, 5);
  auto p = spacetime_astar(map, {0, 0}, {0, 3}, {}, 20);
  REQUIRE(p);
  CHECK(p->size() == 4);
  check_path_shape(map, *p, {0, 0}, {0, 3});

  p = spacetime_astar(map, {2, 2}, {2, 2}, {}, 20);
  REQUIRE(p);
  CHECK(p->size() == 1);

  const std::vector<Constraint> blocked{Constraint::vertex(0, {0, 1}, 1)};
  CHECK(time_expanded_bfs(map, {0, 0}, {0, 3}, blocked, 20) == 4);
  p = spacetime_astar(map, {0, 0}, {0, 3}, blocked, 20);
  REQUIRE(p);
  CHECK(int(p->size()) - 1 == 4);
  CHECK(satisfies(*p, blocked));

  // The goal is forbidden at t=6, so the agent must still be able to arrive afterwards.
  const std::vector<Constraint> late{Constraint::vertex(0, {0, 3}, 6)};
  CHECK(time_expanded_bfs(map, {0, 0}, {0, 3}, late, 20) == 7);
  p = spacetime_astar(map, {0, 0}, {0, 3}, late, 20);
  REQUIRE(p);
  CHECK(int(p->size()) - 1 == 7);
  CHECK(satisfies(*p, late));

  CHECK_FALSE(spacetime_astar(map, {0, 0}, {4, 4}, {}, 7).has_value());
  CHECK(spacetime_astar(map, {0, 0}, {4, 4}, {}, 8).has_value());
  CHECK_THROWS(spacetime_astar(rows({".@"}), {0, 0}, {0, 1}, {}, 5));
}

TEST_CASE("spacetime_astar matches the time-expanded oracle under random constraints") {
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    Rng rng(seed);
    const GridMap map = generate_random_map(7, 6, 0.2, seed);
    const Scenario s = generate_scenario(map, 1, seed);
    const auto free = map.free_cells();
    std::vector<Constraint> cs;
    const int k = int(rng.below(12));
    for (int i = 0; i < k; ++i) {
      const Position c = free[rng.below(free.size())];
      const int t = 1 + int(rng.below(10));
      if (rng.below(2) == 0) {
        cs.push_back(Constraint::vertex(0, c, t));
      } else {
        const Action a = action_from_index(1 + int(rng.below(4)));
        cs.push_back(Constraint::edge(0, c, apply_action(c, a), t));
      }
    }
    // Constraints for another agent must have no effect.
    cs.push_back(Constraint::vertex(1, s.tasks[0].goal, 3));
    std::vector<Constraint> own(cs.begin(), cs.end() - 1);
    const auto expected = time_expanded_bfs(map, s.tasks[0].start, s.tasks[0].goal, own, 30);
    const auto p = spacetime_astar(map, s.tasks[0].start, s.tasks[0].goal, cs, 30);
    REQUIRE(p.has_value() == expected.has_value());
    if (!p) continue;
    CHECK(int(p->size()) - 1 == *expected);
    CHECK(satisfies(*p, own));
    check_path_shape(map, *p, s.tasks[0].start, s.tasks[0].goal);
  }
}

TEST_CASE("unconstrained spacetime_astar equals the BFS distance") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const GridMap map = generate_random_map(15, 12, 0.3, seed);
    const Scenario s = generate_scenario(map, 1, seed);
    const auto p = spacetime_astar(map, s.tasks[0].start, s.tasks[0].goal, {}, default_horizon(map));
    REQUIRE(p);
    CHECK(int(p->size()) - 1 == distance_map(map, s.tasks[0].goal)[map.index(s.tasks[0].start)]);
  }
}

TEST_CASE("joint_state_oracle reference instances") {
  const GridMap open = free_map(5, 5);
  CHECK(joint_state_oracle(open, {{{{0, 0}, {3, 4}}}}, 20) == 7);
  // Head-on corridor with a pocket below the second cell: one agent ducks in
  // and out (+2), the other passes without delay: 3 + 5.
  const GridMap corridor = rows({"....", "@.@@"});
  const Scenario head_on{{{{0, 0}, {0, 3}}, {{0, 3}, {0, 0}}}};
  CHECK(joint_state_oracle(corridor, head_on, 20) == 8);
  // With the pocket at the corridor's end the agents can never pass.
  const GridMap dead_end = rows({"....", ".@@@"});
  CHECK_FALSE(joint_state_oracle(dead_end, head_on, 20).has_value());
  CHECK_THROWS(joint_state_oracle(free_map(9, 9), {{{{0, 0}, {1, 1}}}}, 20));
  CHECK_THROWS(joint_state_oracle(open, {{{{0, 0}, {1, 1}}, {{0, 1}, {1, 2}}, {{0, 2}, {1, 3}}, {{0, 3}, {1, 4}}}}, 20));
}

TEST_CASE("cbs_solve reference instances") {
  const GridMap open = free_map(5, 5);
  {
    const Scenario one{{{{1, 1}, {4, 3}}}};
    const auto sol = cbs_solve(open, one);
    REQUIRE(sol);
    CHECK(sol->paths[0] == *spacetime_astar(open, {1, 1}, {4, 3}, {}, default_horizon(open)));
    CHECK(sol->sum_of_costs == 5);
  }
  {
    const GridMap plus = rows({"@.@", "...", "@.@"});
    const Scenario cross{{{{1, 0}, {1, 2}}, {{0, 1}, {2, 1}}}};
    const auto oracle = joint_state_oracle(plus, cross, 20);
    REQUIRE(oracle);
    CHECK(*oracle == 5);
    const auto sol = cbs_solve(plus, cross);
    REQUIRE(sol);
    CHECK(sol->sum_of_costs == *oracle);
    CHECK(validate_solution(plus, cross, *sol).empty());
  }
  {
    const GridMap lanes = rows({"....", "@@@@", "...."});
    const Scenario s{{{{0, 0}, {0, 3}}, {{2, 3}, {2, 0}}}};
    const auto sol = cbs_solve(lanes, s);
    REQUIRE(sol);
    CHECK(sol->sum_of_costs == 6);
    CHECK(sol->makespan == 3);
  }
  {
    const GridMap corridor = rows({"....", "@.@@"});
    const Scenario s{{{{0, 0}, {0, 3}}, {{0, 3}, {0, 0}}}};
    const auto sol = cbs_solve(corridor, s);
    REQUIRE(sol);
    CHECK(sol->sum_of_costs == 8);
  }
  {
    const GridMap dead_end = rows({"....", ".@@@"});
    const Scenario s{{{{0, 0}, {0, 3}}, {{0, 3}, {0, 0}}}};
    CHECK_FALSE(cbs_solve(dead_end, s, {12, 5000}).has_value());
  }
}

TEST_CASE("cbs agrees with the joint-state oracle on random small instances") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    const int side = 5 + int(rng.below(3));
    const GridMap map = generate_random_map(side, side, 0.2, seed);
    const int n = 2 + int(rng.below(2));
    const Scenario s = generate_scenario(map, n, seed * 31 + 1);
    const int horizon = default_horizon(map);
    const auto oracle = joint_state_oracle(map, s, horizon);
    const auto sol = cbs_solve(map, s, {horizon, 200000});
    REQUIRE(oracle.has_value() == sol.has_value());
    if (!sol) continue;
    CHECK(sol->sum_of_costs == *oracle);
    CHECK(validate_solution(map, s, *sol).empty());
  }
}

TEST_CASE("ecbs respects the suboptimality bound") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const GridMap map = generate_random_map(8, 8, 0.2, seed + 1000);
    const Scenario s = generate_scenario(map, 3, seed);
    const auto opt = cbs_solve(map, s);
    const auto one = ecbs_solve(map, s, 1.0);
    const auto bounded = ecbs_solve(map, s, 1.2);
    REQUIRE(opt.has_value() == bounded.has_value());
    if (!opt) continue;
    REQUIRE(one);
    CHECK(one->sum_of_costs == opt->sum_of_costs);
    CHECK(bounded->sum_of_costs * 5 <= opt->sum_of_costs * 6);
    CHECK(validate_solution(map, s, *bounded).empty());
    CHECK(validate_solution(map, s, *one).empty());
  }
}

TEST_CASE("ecbs scales to corpus-sized instances deterministically") {
  const GridMap map = generate_random_map(40, 40, 0.3, 5);
  const Scenario s = generate_scenario(map, 32, 6);
  const auto a = ecbs_solve(map, s, 1.2);
  REQUIRE(a);
  CHECK(validate_solution(map, s, *a).empty());
  int lower = 0;
  for (const auto& t : s.tasks) lower += distance_map(map, t.goal)[map.index(t.start)];
  CHECK(a->sum_of_costs >= lower);
  CHECK(ecbs_solve(map, s, 1.2) == a);
}

TEST_CASE("validate_solution") {
  const GridMap map = free_map(4, 4);
  {
    const Scenario twins{{{{0, 0}, {0, 2}}, {{0, 0}, {0, 2}}}};
    const Solution same = make_solution({{{0, 0}, {0, 1}, {0, 2}}, {{0, 0}, {0, 1}, {0, 2}}});
    const auto c = validate_solution(map, twins, same);
    REQUIRE(c.size() == 3);
    for (int t = 0; t < 3; ++t) {
      CHECK(c[t].kind == ConflictKind::Vertex);
      CHECK(c[t].time == t);
    }
  }
  {
    const Scenario s{{{{0, 0}, {0, 2}}, {{0, 1}, {1, 0}}}};
    const Solution swap = make_solution({{{0, 0}, {0, 1}, {0, 2}}, {{0, 1}, {0, 0}, {1, 0}}});
    const auto c = validate_solution(map, s, swap);
    REQUIRE(c.size() == 1);
    CHECK(c[0].kind == ConflictKind::Swap);
    CHECK(c[0].time == 1);
  }
  {
    const Scenario s{{{{0, 0}, {0, 2}}}};
    CHECK_THROWS_AS(validate_solution(map, s, make_solution({{{0, 0}, {0, 2}}})), MalformedSolution);
    CHECK_THROWS_AS(validate_solution(map, s, make_solution({{{0, 1}, {0, 2}}})), MalformedSolution);
    CHECK_THROWS_AS(validate_solution(map, s, Solution{}), MalformedSolution);
  }
  {
    const GridMap walled = rows({".@.", "..."});
    const Scenario s{{{{0, 0}, {0, 2}}}};
    const auto c = validate_solution(walled, s, make_solution({{{0, 0}, {0, 1}, {0, 2}}}));
    REQUIRE(c.size() == 1);
    CHECK(c[0].kind == ConflictKind::Obstacle);
  }
}

TEST_CASE("make_solution trims goal padding") {
  const Solution s = make_solution({{{0, 0}, {0, 1}, {0, 1}, {0, 1}}, {{2, 2}}});
  CHECK(s.paths[0].size() == 2);
  CHECK(s.sum_of_costs == 1);
  CHECK(s.makespan == 1);
}

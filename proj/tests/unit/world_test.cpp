#include <doctest.h>

#include <cmath>

#include "mapfil/rng.hpp"
#include "mapfil/world.hpp"

using namespace mapfil;

namespace {

GridMap free_map(int w, int h) { return GridMap(w, h, std::vector<bool>(std::size_t(w) * h, false)); }

WorldState state_of(std::vector<std::pair<Position, Position>> agents, std::size_t h = 5) {
  Scenario s;
  for (auto [p, g] : agents) s.tasks.push_back({p, g});
  return initial_state(s, h);
}

}  // namespace

TEST_CASE("check_conflicts detects the four conflict kinds") {
  const GridMap map = free_map(4, 4);
  {
    const auto st = state_of({{{0, 0}, {3, 3}}, {{0, 1}, {3, 2}}});
    const std::vector<Action> joint{Action::Right, Action::Left};
    const auto c = check_conflicts(st, map, joint);
    REQUIRE(c.size() == 1);
    CHECK(c[0].kind == ConflictKind::Swap);
    CHECK(c[0].agents == std::vector<int>{0, 1});
    CHECK(c[0].time == 1);
  }
  {
    const auto st = state_of({{{0, 0}, {3, 3}}, {{0, 2}, {3, 2}}});
    const std::vector<Action> joint{Action::Right, Action::Left};
    const auto c = check_conflicts(st, map, joint);
    REQUIRE(c.size() == 1);
    CHECK(c[0].kind == ConflictKind::Vertex);
    CHECK(c[0].cells == std::vector<Position>{{0, 1}});
  }
  {
    const auto st = state_of({{{0, 0}, {3, 3}}, {{0, 2}, {3, 2}}, {{2, 2}, {1, 1}}});
    const std::vector<Action> joint(3, Action::Stay);
    CHECK(check_conflicts(st, map, joint).empty());
  }
  {
    const GridMap walled = parse_map("type octile\nheight 2\nwidth 2\nmap\n.@\n..\n");
    const auto st = state_of({{{0, 0}, {1, 1}}});
    const std::vector<Action> right{Action::Right}, up{Action::Up};
    CHECK(check_conflicts(st, walled, right).at(0).kind == ConflictKind::Obstacle);
    const auto oob = check_conflicts(st, walled, up);
    REQUIRE(oob.size() == 1);
    CHECK(oob[0].kind == ConflictKind::OutOfBound);
    CHECK(oob[0].agents.size() == 1);
  }
  {
    const auto st = state_of({{{0, 0}, {3, 3}}});
    const std::vector<Action> joint{Action::Stay, Action::Stay};
    CHECK_THROWS_AS(check_conflicts(st, map, joint), ContractViolation);
  }
}

TEST_CASE("step advances time, history and done flags") {
  const GridMap map = free_map(5, 5);
  auto st = state_of({{{2, 2}, {2, 3}}}, 2);
  const std::vector<Action> stay{Action::Stay};
  auto next = step(st, map, stay);
  CHECK(next.time == 1);
  CHECK(next.agents[0].position == Position{2, 2});
  CHECK(next.agents[0].history.cells() == std::deque<Position>{{2, 2}});

  const std::vector<Action> right{Action::Right};
  next = step(next, map, right);
  CHECK(next.agents[0].done);
  CHECK(next.agents[0].position == Position{2, 3});
  next = step(next, map, stay);
  // Capacity 2 keeps only the two most recent cells.
  CHECK(next.agents[0].history.cells() == std::deque<Position>{{2, 2}, {2, 3}});

  const auto clash = state_of({{{0, 0}, {4, 4}}, {{0, 1}, {4, 3}}});
  const std::vector<Action> swap{Action::Right, Action::Left};
  CHECK_THROWS_AS(step(clash, map, swap), ContractViolation);
}

TEST_CASE("rotation around a 2x2 ring is legal") {
  const GridMap map = free_map(2, 2);
  {
    const auto st = state_of({{{0, 0}, {1, 1}}, {{1, 1}, {0, 0}}});
    const std::vector<Action> joint{Action::Right, Action::Left};
    CHECK(check_conflicts(st, map, joint).empty());
    CHECK_NOTHROW(step(st, map, joint));
  }
  {
    // Every cell occupied, each agent moves into the cell its neighbour vacates.
    const auto st = state_of({{{0, 0}, {1, 1}}, {{0, 1}, {1, 0}}, {{1, 1}, {0, 0}}, {{1, 0}, {0, 1}}});
    const std::vector<Action> joint{Action::Right, Action::Down, Action::Left, Action::Up};
    CHECK(check_conflicts(st, map, joint).empty());
    const auto next = step(st, map, joint);
    CHECK(next.agents[0].position == Position{0, 1});
    CHECK(next.agents[3].position == Position{0, 0});
  }
}

TEST_CASE("step succeeds exactly when check_conflicts is empty") {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Rng rng(seed);
    const GridMap map = generate_random_map(6, 6, 0.2, seed);
    const int n = 1 + int(rng.below(6));
    WorldState st = initial_state(generate_scenario(map, n, seed), 3);
    std::vector<Action> joint;
    for (int i = 0; i < n; ++i) joint.push_back(action_from_index(int(rng.below(5))));
    const bool valid = check_conflicts(st, map, joint).empty();
    bool stepped = true;
    try {
      step(st, map, joint);
    } catch (const ContractViolation&) {
      stepped = false;
    }
    CHECK(valid == stepped);
  }
}

TEST_CASE("encode_observation basics") {
  const GridMap map = free_map(20, 20);
  {
    const auto st = state_of({{{5, 5}, {5, 5}}});
    const Observation obs = encode_observation(st, map, 0, true);
    CHECK(obs.goal_vector == std::array<double, 3>{0, 0, 0});
    CHECK(obs.at(channel::kOwnGoal, 4, 4) == 1.0);
  }
  {
    const GridMap nine = free_map(9, 9);
    const auto st = state_of({{{4, 4}, {0, 0}}});
    const Observation obs = encode_observation(st, nine, 0, true);
    for (int r = 0; r < kFov; ++r)
      for (int c = 0; c < kFov; ++c) {
        CHECK(obs.at(channel::kObstacles, r, c) == 0.0);
        CHECK(obs.at(channel::kAgents, r, c) == 0.0);
      }
    CHECK(obs.at(channel::kOwnGoal, 0, 0) == 1.0);
  }
  {
    // Off-map cells appear as obstacles only.
    const auto st = state_of({{{0, 0}, {1, 1}}});
    const Observation obs = encode_observation(st, map, 0, false);
    CHECK(obs.at(channel::kObstacles, 3, 4) == 1.0);
    CHECK(obs.at(channel::kObstacles, 4, 3) == 1.0);
    CHECK(obs.at(channel::kObstacles, 4, 4) == 0.0);
    CHECK(obs.at(channel::kAgents, 3, 4) == 0.0);
    CHECK(obs.at(channel::kOtherGoals, 3, 4) == 0.0);
  }
}

TEST_CASE("tcao moves finished neighbours into the obstacle channel") {
  const GridMap map = free_map(20, 20);
  auto st = state_of({{{10, 10}, {2, 2}}, {{11, 12}, {11, 12}}, {{8, 9}, {18, 18}}});
  REQUIRE(st.agents[1].done);
  const Observation with = encode_observation(st, map, 0, true);
  const Observation without = encode_observation(st, map, 0, false);
  const int r = 11 - 10 + 4, c = 12 - 10 + 4;
  CHECK(with.at(channel::kObstacles, r, c) == 1.0);
  CHECK(with.at(channel::kAgents, r, c) == 0.0);
  CHECK(without.at(channel::kObstacles, r, c) == 0.0);
  CHECK(without.at(channel::kAgents, r, c) == 1.0);
  // Unfinished neighbour stays an agent either way.
  CHECK(with.at(channel::kAgents, 2, 3) == 1.0);
  CHECK(without.at(channel::kAgents, 2, 3) == 1.0);
}

TEST_CASE("own goal outside the field of view") {
  const GridMap map = free_map(30, 30);
  const auto st = state_of({{{10, 10}, {2, 25}}});
  const Observation boundary = encode_observation(st, map, 0, true, GoalProjection::Boundary);
  const Observation absent = encode_observation(st, map, 0, true, GoalProjection::Absent);
  CHECK(boundary.at(channel::kOwnGoal, 0, 8) == 1.0);
  double total = 0;
  for (int i = 0; i < kFovCells; ++i) total += absent.channels[channel::kOwnGoal * kFovCells + i];
  CHECK(total == 0.0);
  CHECK(boundary.goal_vector == absent.goal_vector);
}

TEST_CASE("observation properties over random worlds") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    Rng rng(seed);
    const GridMap map = generate_random_map(16, 16, 0.25, seed);
    WorldState st = initial_state(generate_scenario(map, 8, seed), 5);
    for (int i = 0; i < 8; ++i) st.agents[i].done = rng.below(2) == 0;
    for (int i = 0; i < 8; ++i) {
      const Observation obs = encode_observation(st, map, i, rng.below(2) == 0);
      for (double v : obs.channels) CHECK((v == 0.0 || v == 1.0));
      const double n2 = std::hypot(obs.goal_vector[0], obs.goal_vector[1]);
      CHECK(n2 == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(obs.goal_vector[2] > 0.0);
      CHECK(obs.goal_vector[2] <= 1.0);
    }
  }
}

TEST_CASE("observation channels are translation consistent") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const GridMap base = generate_random_map(12, 12, 0.2, seed);
    const int dr = 1 + int(rng.below(5)), dc = 1 + int(rng.below(5));
    std::vector<bool> shifted(std::size_t(20) * 20, true);
    for (int r = 0; r < 12; ++r)
      for (int c = 0; c < 12; ++c) shifted[std::size_t(r + dr) * 20 + (c + dc)] = base.is_obstacle({r, c});
    const GridMap moved(20, 20, shifted);

    WorldState a = initial_state(generate_scenario(base, 4, seed), 5);
    WorldState b = a;
    for (auto& ag : b.agents) {
      ag.position = {ag.position.row + dr, ag.position.col + dc};
      ag.goal = {ag.goal.row + dr, ag.goal.col + dc};
    }
    for (int i = 0; i < 4; ++i) {
      const Position p = a.agents[i].position;
      // Only compare agents whose whole window stays inside the original map.
      if (p.row < 4 || p.col < 4 || p.row > 7 || p.col > 7) continue;
      CHECK(encode_observation(a, base, i, true).channels == encode_observation(b, moved, i, true).channels);
    }
  }
}

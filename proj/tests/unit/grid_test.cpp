#include <doctest.h>

#include <set>

#include "mapfil/grid.hpp"
#include "mapfil/rng.hpp"

using namespace mapfil;

namespace {

GridMap map_from_rows(const std::vector<std::string>& rows) {
  std::string text = "type octile\nheight " + std::to_string(rows.size()) + "\nwidth " +
                     std::to_string(rows.front().size()) + "\nmap\n";
  for (const auto& r : rows) text += r + "\n";
  return parse_map(text);
}

}  // namespace

TEST_CASE("parse_map maps glyphs to obstacles") {
  const GridMap map = parse_map("type octile\nheight 2\nwidth 2\nmap\n.@\n..\n");
  CHECK(map.width() == 2);
  CHECK(map.height() == 2);
  CHECK(map.obstacle_count() == 1);
  CHECK(map.is_obstacle({0, 1}));
  CHECK_FALSE(map.is_obstacle({0, 0}));
  CHECK(parse_map("type octile\nheight 1\nwidth 2\nmap\nT.\n").is_obstacle({0, 0}));
}

TEST_CASE("parse_map rejects malformed input with a line number") {
  CHECK_THROWS_AS(parse_map("type octile\nheight 0\nwidth 2\nmap\n"), ParseError);
  CHECK_THROWS_AS(parse_map("type octile\nheight 2\nwidth 2\n"), ParseError);
  CHECK_THROWS_AS(parse_map("kind octile\nheight 1\nwidth 1\nmap\n.\n"), ParseError);
  try {
    parse_map("type octile\nheight 2\nwidth 3\nmap\n...\n..\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 6);
  }
  try {
    parse_map("type octile\nheight 1\nwidth 3\nmap\n.x.\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 5);
  }
  CHECK_THROWS_AS(parse_map("type octile\nheight 1\nwidth 1\nmap\n"), ParseError);
}

TEST_CASE("emit_map writes canonical MovingAI text") {
  CHECK(emit_map(GridMap(1, 1, {false})) == "type octile\nheight 1\nwidth 1\nmap\n.\n");
  CHECK(emit_map(parse_map("type octile\nheight 1\nwidth 2\nmap\nT.\n")) ==
        "type octile\nheight 1\nwidth 2\nmap\n@.\n");
}

TEST_CASE("map round trip is the identity") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Rng rng(seed);
    const int w = 1 + int(rng.below(30)), h = 1 + int(rng.below(30));
    const GridMap map = generate_random_map(w, h, rng.uniform() * 0.9, seed);
    const std::string text = emit_map(map);
    CHECK(parse_map(text) == map);
    CHECK(emit_map(parse_map(text)) == text);
  }
}

TEST_CASE("generate_random_map places an exact obstacle count") {
  CHECK(generate_random_map(40, 40, 0.3, 7).obstacle_count() == 480);
  CHECK(generate_random_map(80, 80, 0.3, 7).obstacle_count() == 1920);
  CHECK(generate_random_map(5, 5, 0.0, 7).obstacle_count() == 0);
  CHECK(generate_random_map(40, 40, 0.3, 11) == generate_random_map(40, 40, 0.3, 11));
  CHECK_FALSE(generate_random_map(40, 40, 0.3, 11) == generate_random_map(40, 40, 0.3, 12));
  CHECK_THROWS(generate_random_map(4, 4, 1.0, 0));

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed + 100);
    const int w = 1 + int(rng.below(25)), h = 1 + int(rng.below(25));
    const double d = rng.uniform() * 0.99;
    CHECK(generate_random_map(w, h, d, seed).obstacle_count() == int(std::lround(d * w * h)));
  }
}

TEST_CASE("apply_action follows the row/col convention") {
  CHECK(apply_action({3, 4}, Action::Right) == Position{3, 5});
  CHECK(apply_action({0, 2}, Action::Up) == Position{-1, 2});
  CHECK(apply_action({7, 7}, Action::Stay) == Position{7, 7});
  CHECK(apply_action({7, 7}, Action::Down) == Position{8, 7});
  CHECK(apply_action({7, 7}, Action::Left) == Position{7, 6});
  for (Action a : kAllActions) CHECK(action_between({5, 5}, apply_action({5, 5}, a)) == a);
  CHECK_FALSE(action_between({0, 0}, {1, 1}).has_value());
}

TEST_CASE("distance_map and components") {
  const GridMap map = map_from_rows({"..@..", "..@..", "..@.."});
  const auto labels = component_labels(map);
  CHECK(labels[map.index({0, 0})] == labels[map.index({2, 1})]);
  CHECK(labels[map.index({0, 0})] != labels[map.index({0, 4})]);
  CHECK(labels[map.index({0, 2})] == -1);
  const auto dist = distance_map(map, {0, 0});
  CHECK(dist[map.index({2, 1})] == 3);
  CHECK(dist[map.index({0, 3})] == -1);
}

TEST_CASE("generate_scenario honours the scenario invariants") {
  const GridMap open(10, 10, std::vector<bool>(100, false));
  const Scenario s = generate_scenario(open, 4, 3);
  REQUIRE(s.size() == 4);
  std::set<Position> used;
  for (const auto& t : s.tasks) {
    used.insert(t.start);
    used.insert(t.goal);
  }
  CHECK(used.size() == 8);
  CHECK_NOTHROW(check_scenario(open, s));
  CHECK(generate_scenario(open, 4, 3) == s);

  const GridMap split = map_from_rows({"..@...", "..@...", "..@...", "..@..."});
  const auto labels = component_labels(split);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Scenario sc = generate_scenario(split, 3, seed);
    for (const auto& t : sc.tasks) CHECK(labels[split.index(t.start)] == labels[split.index(t.goal)]);
  }

  CHECK_THROWS_AS(generate_scenario(open, 51, 0), ScenarioError);
  // Ten isolated cells: enough free cells, but no component holds a pair.
  const GridMap pockets = map_from_rows({".@.@.@.@.@", "@@@@@@@@@@", ".@.@.@.@.@"});
  CHECK_THROWS_AS(generate_scenario(pockets, 2, 0), ScenarioError);
}

TEST_CASE("check_scenario rejects invalid scenarios") {
  const GridMap map = map_from_rows({"..@..", "....."});
  CHECK_THROWS_AS(check_scenario(map, {{{{0, 0}, {0, 2}}}}), ScenarioError);
  CHECK_THROWS_AS(check_scenario(map, {{{{0, 0}, {1, 1}}, {{0, 0}, {1, 2}}}}), ScenarioError);
  CHECK_THROWS_AS(check_scenario(map, {{{{0, 0}, {1, 1}}, {{0, 1}, {1, 1}}}}), ScenarioError);
  CHECK_NOTHROW(check_scenario(map, {{{{0, 0}, {0, 4}}}}));
}

TEST_CASE("scen files use column-before-row order and round trip exactly") {
  const std::string text =
      "version 1\n"
      "0\tm.map\t6\t4\t1\t2\t5\t3\t5.00000000\n"
      "3\tm.map\t6\t4\t0\t0\t0\t1\t1.00000000\n";
  const auto entries = parse_scen(text);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].start == Position{2, 1});
  CHECK(entries[0].goal == Position{3, 5});
  CHECK(entries[0].optimal_length == 5.0);
  CHECK(entries[1].bucket == 3);
  CHECK(emit_scen(entries) == text);
  CHECK_THROWS_AS(parse_scen("version 1\n0\tm.map\t6\t4\t1\n"), ParseError);
  CHECK_THROWS_AS(parse_scen("0\tm.map\n"), ParseError);

  const GridMap map = generate_random_map(12, 9, 0.2, 5);
  const Scenario s = generate_scenario(map, 6, 9);
  const auto generated = entries_from_scenario(map, s, "r.map");
  CHECK(scenario_from_entries(parse_scen(emit_scen(generated))) == s);
  CHECK(emit_scen(parse_scen(emit_scen(generated))) == emit_scen(generated));
  for (std::size_t i = 0; i < s.size(); ++i)
    CHECK(generated[i].optimal_length == distance_map(map, s.tasks[i].goal)[map.index(s.tasks[i].start)]);
}

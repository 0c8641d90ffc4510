#include "mapfil/grid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <queue>
#include <sstream>

#include "mapfil/rng.hpp"

namespace mapfil {

std::string to_string(const Position& p) {
  return "(" + std::to_string(p.row) + "," + std::to_string(p.col) + ")";
}

Action action_from_index(int index) {
  if (index < 0 || index >= kNumActions)
    throw std::out_of_range("action index out of range: " + std::to_string(index));
  return static_cast<Action>(index);
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::Stay: return "stay";
    case Action::Up: return "up";
    case Action::Down: return "down";
    case Action::Left: return "left";
    case Action::Right: return "right";
  }
  return "?";
}

std::optional<Action> action_between(Position from, Position to) {
  for (Action a : kAllActions)
    if (apply_action(from, a) == to) return a;
  return std::nullopt;
}

ParseError::ParseError(int line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

GridMap::GridMap(int width, int height, std::vector<bool> obstacles)
    : width_(width), height_(height), obstacles_(std::move(obstacles)) {
  if (width < 1 || height < 1) throw std::invalid_argument("map dimensions must be >= 1");
  if (obstacles_.size() != std::size_t(width) * std::size_t(height))
    throw std::invalid_argument("obstacle grid size does not match dimensions");
}

int GridMap::obstacle_count() const {
  return int(std::count(obstacles_.begin(), obstacles_.end(), true));
}

std::vector<Position> GridMap::free_cells() const {
  std::vector<Position> cells;
  for (int i = 0; i < cell_count(); ++i)
    if (!obstacles_[i]) cells.push_back(position(i));
  return cells;
}

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t begin = 0;
  while (begin < text.size()) {
    std::size_t end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(begin, end - begin);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    begin = end + 1;
  }
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view token, T& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

int header_value(std::string_view line, std::string_view key, int line_no) {
  auto fields = split_fields(line);
  int value = 0;
  if (fields.size() != 2 || fields[0] != key || !parse_number(fields[1], value))
    throw ParseError(line_no, "expected '" + std::string(key) + " <int>'");
  if (value < 1) throw ParseError(line_no, std::string(key) + " must be >= 1");
  return value;
}

}  // namespace

GridMap parse_map(std::string_view text) {
  auto lines = split_lines(text);
  if (lines.size() < 4) throw ParseError(int(lines.size()) + 1, "truncated header");
  {
    auto fields = split_fields(lines[0]);
    if (fields.size() != 2 || fields[0] != "type") throw ParseError(1, "expected 'type <name>'");
  }
  const int height = header_value(lines[1], "height", 2);
  const int width = header_value(lines[2], "width", 3);
  if (lines[3] != "map") throw ParseError(4, "expected 'map'");

  std::vector<bool> obstacles;
  obstacles.reserve(std::size_t(width) * height);
  for (int r = 0; r < height; ++r) {
    const int line_no = 5 + r;
    if (std::size_t(4 + r) >= lines.size()) throw ParseError(line_no, "missing map row");
    std::string_view row = lines[4 + r];
    if (int(row.size()) != width)
      throw ParseError(line_no, "row has " + std::to_string(row.size()) + " cells, expected " +
                                    std::to_string(width));
    for (char glyph : row) {
      switch (glyph) {
        case '.': obstacles.push_back(false); break;
        case '@':
        case 'T': obstacles.push_back(true); break;
        default: throw ParseError(line_no, std::string("unknown cell glyph '") + glyph + "'");
      }
    }
  }
  for (std::size_t i = 4 + height; i < lines.size(); ++i)
    if (!lines[i].empty()) throw ParseError(int(i) + 1, "unexpected content after map body");
  return GridMap(width, height, std::move(obstacles));
}

std::string emit_map(const GridMap& map) {
  std::string out = "type octile\nheight " + std::to_string(map.height()) + "\nwidth " +
                    std::to_string(map.width()) + "\nmap\n";
  out.reserve(out.size() + std::size_t(map.cell_count() + map.height()));
  for (int r = 0; r < map.height(); ++r) {
    for (int c = 0; c < map.width(); ++c) out.push_back(map.is_obstacle({r, c}) ? '@' : '.');
    out.push_back('\n');
  }
  return out;
}

GridMap load_map(const std::string& path) { return parse_map(read_file(path)); }

GridMap generate_random_map(int width, int height, double density, std::uint64_t seed) {
  if (!(density >= 0.0 && density < 1.0)) throw std::invalid_argument("density must be in [0,1)");
  if (width < 1 || height < 1) throw std::invalid_argument("map dimensions must be >= 1");
  const int cells = width * height;
  const int count = int(std::lround(density * cells));
  std::vector<int> order(cells);
  for (int i = 0; i < cells; ++i) order[i] = i;
  Rng rng(seed);
  std::vector<bool> obstacles(cells, false);
  for (int i = 0; i < count; ++i) {
    const int j = i + int(rng.below(std::uint64_t(cells - i)));
    std::swap(order[i], order[j]);
    obstacles[order[i]] = true;
  }
  return GridMap(width, height, std::move(obstacles));
}

std::vector<int> component_labels(const GridMap& map) {
  std::vector<int> label(map.cell_count(), -1);
  int next = 0;
  std::vector<int> stack;
  for (int i = 0; i < map.cell_count(); ++i) {
    if (label[i] != -1 || map.is_obstacle(map.position(i))) continue;
    label[i] = next;
    stack.push_back(i);
    while (!stack.empty()) {
      const Position p = map.position(stack.back());
      stack.pop_back();
      for (Action a : kAllActions) {
        if (a == Action::Stay) continue;
        const Position q = apply_action(p, a);
        if (!map.passable(q) || label[map.index(q)] != -1) continue;
        label[map.index(q)] = next;
        stack.push_back(map.index(q));
      }
    }
    ++next;
  }
  return label;
}

std::vector<int> distance_map(const GridMap& map, Position target) {
  std::vector<int> dist(map.cell_count(), -1);
  if (!map.passable(target)) return dist;
  std::queue<Position> frontier;
  dist[map.index(target)] = 0;
  frontier.push(target);
  while (!frontier.empty()) {
    const Position p = frontier.front();
    frontier.pop();
    for (Action a : kAllActions) {
      if (a == Action::Stay) continue;
      const Position q = apply_action(p, a);
      if (!map.passable(q) || dist[map.index(q)] != -1) continue;
      dist[map.index(q)] = dist[map.index(p)] + 1;
      frontier.push(q);
    }
  }
  return dist;
}

void check_scenario(const GridMap& map, const Scenario& scenario) {
  const auto labels = component_labels(map);
  std::vector<bool> start_used(map.cell_count(), false), goal_used(map.cell_count(), false);
  for (std::size_t i = 0; i < scenario.size(); ++i) {
    const auto& [start, goal] = scenario.tasks[i];
    const std::string who = "agent " + std::to_string(i);
    if (!map.passable(start)) throw ScenarioError(who + ": start " + to_string(start) + " is not free");
    if (!map.passable(goal)) throw ScenarioError(who + ": goal " + to_string(goal) + " is not free");
    if (start_used[map.index(start)]) throw ScenarioError(who + ": duplicate start " + to_string(start));
    if (goal_used[map.index(goal)]) throw ScenarioError(who + ": duplicate goal " + to_string(goal));
    start_used[map.index(start)] = goal_used[map.index(goal)] = true;
    if (labels[map.index(start)] != labels[map.index(goal)])
      throw ScenarioError(who + ": start and goal are not connected");
  }
}

Scenario generate_scenario(const GridMap& map, int n_agents, std::uint64_t seed) {
  constexpr int kRetriesPerPair = 100;
  if (n_agents < 0) throw std::invalid_argument("negative agent count");
  std::vector<int> unused;
  for (int i = 0; i < map.cell_count(); ++i)
    if (!map.is_obstacle(map.position(i))) unused.push_back(i);
  if (int(unused.size()) < 2 * n_agents)
    throw ScenarioError("map has " + std::to_string(unused.size()) + " free cells, need " +
                        std::to_string(2 * n_agents));

  const auto labels = component_labels(map);
  Rng rng(seed);
  Scenario scenario;
  std::vector<int> candidates;
  for (int agent = 0; agent < n_agents; ++agent) {
    bool placed = false;
    for (int attempt = 0; attempt < kRetriesPerPair && !placed; ++attempt) {
      const std::size_t si = rng.below(unused.size());
      const int start = unused[si];
      candidates.clear();
      for (std::size_t k = 0; k < unused.size(); ++k)
        if (k != si && labels[unused[k]] == labels[start]) candidates.push_back(unused[k]);
      if (candidates.empty()) continue;
      const int goal = candidates[rng.below(candidates.size())];
      scenario.tasks.push_back({map.position(start), map.position(goal)});
      std::erase(unused, start);
      std::erase(unused, goal);
      placed = true;
    }
    if (!placed)
      throw ScenarioError("could not place agent " + std::to_string(agent) + " after " +
                          std::to_string(kRetriesPerPair) + " attempts");
  }
  return scenario;
}

std::vector<ScenarioEntry> parse_scen(std::string_view text) {
  auto lines = split_lines(text);
  if (lines.empty()) throw ParseError(1, "missing version line");
  {
    auto fields = split_fields(lines[0]);
    if (fields.size() != 2 || fields[0] != "version") throw ParseError(1, "expected 'version <n>'");
  }
  std::vector<ScenarioEntry> entries;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const int line_no = int(i) + 1;
    if (lines[i].empty()) continue;
    auto f = split_fields(lines[i]);
    if (f.size() != 9) throw ParseError(line_no, "expected 9 fields, got " + std::to_string(f.size()));
    ScenarioEntry e;
    e.map_name = std::string(f[1]);
    bool ok = parse_number(f[0], e.bucket) && parse_number(f[2], e.map_width) &&
              parse_number(f[3], e.map_height) && parse_number(f[4], e.start.col) &&
              parse_number(f[5], e.start.row) && parse_number(f[6], e.goal.col) &&
              parse_number(f[7], e.goal.row) && parse_number(f[8], e.optimal_length);
    if (!ok) throw ParseError(line_no, "malformed numeric field");
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string emit_scen(const std::vector<ScenarioEntry>& entries) {
  std::string out = "version 1\n";
  char length[64];
  for (const auto& e : entries) {
    std::snprintf(length, sizeof length, "%.8f", e.optimal_length);
    out += std::to_string(e.bucket) + '\t' + e.map_name + '\t' + std::to_string(e.map_width) + '\t' +
           std::to_string(e.map_height) + '\t' + std::to_string(e.start.col) + '\t' +
           std::to_string(e.start.row) + '\t' + std::to_string(e.goal.col) + '\t' +
           std::to_string(e.goal.row) + '\t' + length + '\n';
  }
  return out;
}

Scenario scenario_from_entries(const std::vector<ScenarioEntry>& entries) {
  Scenario s;
  for (const auto& e : entries) s.tasks.push_back({e.start, e.goal});
  return s;
}

std::vector<ScenarioEntry> entries_from_scenario(const GridMap& map, const Scenario& scenario,
                                                 const std::string& map_name) {
  std::vector<ScenarioEntry> entries;
  for (const auto& task : scenario.tasks) {
    const int d = distance_map(map, task.goal)[map.index(task.start)];
    entries.push_back({0, map_name, map.width(), map.height(), task.start, task.goal,
                       d < 0 ? 0.0 : double(d)});
  }
  return entries;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(contents.data(), std::streamsize(contents.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace mapfil

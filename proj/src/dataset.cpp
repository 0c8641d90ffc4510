#include "mapfil/dataset.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mapfil/parallel.hpp"
#include "mapfil/rng.hpp"

namespace mapfil {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<Action> actions_from_path(const Path& path) {
  std::vector<Action> actions;
  for (std::size_t t = 1; t < path.size(); ++t) {
    auto a = action_between(path[t - 1], path[t]);
    if (!a)
      throw MalformedPath("cells " + to_string(path[t - 1]) + " and " + to_string(path[t]) + " at t=" +
                          std::to_string(t) + " are not adjacent");
    actions.push_back(*a);
  }
  return actions;
}

namespace {

// First time after which the path never leaves its final cell.
int completion_time(const Path& path) {
  int t = int(path.size()) - 1;
  while (t > 0 && path[t - 1] == path.back()) --t;
  return t;
}

}  // namespace

std::vector<Sample> build_samples(const GridMap& map, const Scenario& scenario, const Solution& solution,
                                  bool tcao) {
  try {
    if (!validate_solution(map, scenario, solution).empty())
      throw CorruptSolution("solution is not conflict-free");
  } catch (const MalformedSolution& e) {
    throw CorruptSolution(e.what());
  }
  const std::size_t n = scenario.size();
  std::vector<int> completion(n);
  int horizon = 0;
  for (std::size_t i = 0; i < n; ++i) {
    completion[i] = completion_time(solution.paths[i]);
    horizon = std::max(horizon, completion[i]);
  }

  std::vector<Sample> samples;
  WorldState state = initial_state(scenario, 0);
  std::vector<Action> joint(n);
  for (int t = 0; t < horizon; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = action_between(position_at(solution.paths[i], t), position_at(solution.paths[i], t + 1));
      if (!a) throw CorruptSolution("non-adjacent move for agent " + std::to_string(i));
      joint[i] = *a;
      if (t < completion[i]) samples.push_back({encode_observation(state, map, int(i), tcao), *a});
    }
    if (!check_conflicts(state, map, joint).empty())
      throw CorruptSolution("replay conflict at t=" + std::to_string(t + 1));
    state = step(state, map, joint);
  }
  return samples;
}

void write_samples(std::ostream& out, std::span<const Sample> samples) {
  for (const auto& s : samples) {
    std::vector<int> obs(s.observation.channels.begin(), s.observation.channels.end());
    json record = {{"obs", obs}, {"goal_vec", s.observation.goal_vector}, {"action", index_of(s.expert_action)}};
    out << record.dump() << '\n';
  }
}

std::vector<Sample> read_samples(std::istream& in) {
  std::vector<Sample> samples;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "sample line " + std::to_string(line_no);
    if (in.eof()) throw SampleFormatError(where + ": truncated record (missing newline)");
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SampleFormatError(where + ": " + e.what());
    }
    if (!record.is_object() || !record.contains("obs") || !record.contains("goal_vec") || !record.contains("action"))
      throw SampleFormatError(where + ": missing keys");
    const auto& obs = record["obs"];
    const auto& goal = record["goal_vec"];
    const auto& action = record["action"];
    if (!obs.is_array() || obs.size() != std::size_t(kObsSize))
      throw SampleFormatError(where + ": obs must hold " + std::to_string(kObsSize) + " numbers");
    if (!goal.is_array() || goal.size() != std::size_t(kGoalVecSize))
      throw SampleFormatError(where + ": goal_vec must hold 3 numbers");
    if (!action.is_number_integer() || action.get<int>() < 0 || action.get<int>() >= kNumActions)
      throw SampleFormatError(where + ": action must be an integer in [0,4]");
    Sample s;
    for (int k = 0; k < kObsSize; ++k) {
      if (!obs[k].is_number()) throw SampleFormatError(where + ": non-numeric obs entry");
      const double v = obs[k].get<double>();
      if (v != 0.0 && v != 1.0) throw SampleFormatError(where + ": obs entries must be 0 or 1");
      s.observation.channels[k] = v;
    }
    for (int k = 0; k < kGoalVecSize; ++k) {
      if (!goal[k].is_number()) throw SampleFormatError(where + ": non-numeric goal_vec entry");
      s.observation.goal_vector[k] = goal[k].get<double>();
    }
    s.expert_action = action_from_index(action.get<int>());
    samples.push_back(s);
  }
  return samples;
}

void save_samples(const fs::path& path, std::span<const Sample> samples) {
  std::ostringstream out;
  write_samples(out, samples);
  write_file(path.string(), out.str());
}

std::vector<Sample> load_samples(const fs::path& path) {
  std::istringstream in(read_file(path.string()));
  return read_samples(in);
}

std::string export_paths(const Solution& solution) {
  std::string out;
  for (std::size_t i = 0; i < solution.paths.size(); ++i) {
    out += "agent " + std::to_string(i) + ": ";
    for (std::size_t t = 0; t < solution.paths[i].size(); ++t) {
      if (t > 0) out += "->";
      out += to_string(solution.paths[i][t]);
    }
    out += '\n';
  }
  return out;
}

namespace {

class PathFileParser {
 public:
  PathFileParser(std::string_view line, int line_no) : s_(line), line_no_(line_no) {}

  void skip_space() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
  }
  bool eat(std::string_view token) {
    skip_space();
    if (s_.substr(i_, token.size()) != token) return false;
    i_ += token.size();
    return true;
  }
  bool eat_keyword_ci(std::string_view word) {
    skip_space();
    if (s_.size() - i_ < word.size()) return false;
    for (std::size_t k = 0; k < word.size(); ++k)
      if (std::tolower(static_cast<unsigned char>(s_[i_ + k])) != word[k]) return false;
    i_ += word.size();
    return true;
  }
  int integer() {
    skip_space();
    int value = 0;
    auto [ptr, ec] = std::from_chars(s_.data() + i_, s_.data() + s_.size(), value);
    if (ec != std::errc()) fail("expected an integer");
    i_ = std::size_t(ptr - s_.data());
    return value;
  }
  bool done() {
    skip_space();
    return i_ == s_.size();
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw RejectedSolution("path file line " + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::string_view s_;
  std::size_t i_ = 0;
  int line_no_;
};

}  // namespace

Solution import_external_paths(std::string_view text, const GridMap& map, const Scenario& scenario) {
  std::vector<Path> paths;
  int line_no = 0;
  std::size_t begin = 0;
  while (begin < text.size()) {
    std::size_t end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(begin, end - begin);
    begin = end + 1;
    ++line_no;
    PathFileParser p(line, line_no);
    if (p.done()) continue;
    if (!p.eat_keyword_ci("agent")) p.fail("expected 'agent <k>:'");
    const int k = p.integer();
    if (k != int(paths.size())) p.fail("expected agent " + std::to_string(paths.size()));
    if (!p.eat(":")) p.fail("expected ':'");
    Path path;
    while (!p.done()) {
      if (!p.eat("(")) p.fail("expected '('");
      const int r = p.integer();
      if (!p.eat(",")) p.fail("expected ','");
      const int c = p.integer();
      if (!p.eat(")")) p.fail("expected ')'");
      path.push_back({r, c});
      if (!p.eat("->")) {
        if (!p.done()) p.fail("expected '->'");
      }
    }
    if (path.empty()) p.fail("empty path");
    paths.push_back(std::move(path));
  }
  Solution solution = make_solution(std::move(paths));
  std::vector<Conflict> conflicts;
  try {
    conflicts = validate_solution(map, scenario, solution);
  } catch (const MalformedSolution& e) {
    throw RejectedSolution(e.what());
  }
  if (!conflicts.empty())
    throw RejectedSolution("imported solution has " + std::to_string(conflicts.size()) + " conflicts",
                           std::move(conflicts));
  return solution;
}

void to_json(json& j, const CorpusConfig& c) {
  j = json{{"map_sizes", c.map_sizes},
           {"maps_per_size", c.maps_per_size},
           {"density", c.density},
           {"agent_counts", c.agent_counts},
           {"w", c.w},
           {"master_seed", c.master_seed},
           {"tcao", c.tcao},
           {"max_attempts", c.max_attempts},
           {"max_high_level_nodes", c.max_high_level_nodes}};
}

void from_json(const json& j, CorpusConfig& c) {
  c.map_sizes = j.value("map_sizes", c.map_sizes);
  c.maps_per_size = j.value("maps_per_size", c.maps_per_size);
  c.density = j.value("density", c.density);
  c.agent_counts = j.value("agent_counts", c.agent_counts);
  c.w = j.value("w", c.w);
  c.master_seed = j.value("master_seed", c.master_seed);
  c.tcao = j.value("tcao", c.tcao);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  c.max_high_level_nodes = j.value("max_high_level_nodes", c.max_high_level_nodes);
}

namespace {

void check_config(const CorpusConfig& c) {
  if (!(c.density >= 0.0 && c.density < 1.0)) throw std::invalid_argument("density must be in [0,1)");
  if (c.maps_per_size < 1 || c.map_sizes.empty() || c.agent_counts.empty() || c.max_attempts < 1)
    throw std::invalid_argument("corpus counts must be >= 1");
  for (int s : c.map_sizes)
    if (s < 1) throw std::invalid_argument("map sizes must be >= 1");
  for (int n : c.agent_counts)
    if (n < 1) throw std::invalid_argument("agent counts must be >= 1");
  if (!(c.w >= 1.0)) throw std::invalid_argument("suboptimality factor must be >= 1");
}

}  // namespace

std::string map_stem(int size, int index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "random-%d-%03d", size, index);
  return buf;
}

std::uint64_t corpus_map_seed(std::uint64_t master_seed, int size, int index) {
  return derive_seed(master_seed, {1, std::uint64_t(size), std::uint64_t(index)});
}

std::size_t corpus_scenario_count(const CorpusConfig& config) {
  return config.map_sizes.size() * std::size_t(config.maps_per_size) * config.agent_counts.size();
}

json generate_corpus(const CorpusConfig& config, const fs::path& out, unsigned threads) {
  check_config(config);
  for (const char* sub : {"maps", "scenarios", "solutions", "samples"}) fs::create_directories(out / sub);

  struct MapJob {
    int size, index;
  };
  std::vector<MapJob> jobs;
  for (int size : config.map_sizes)
    for (int m = 0; m < config.maps_per_size; ++m) jobs.push_back({size, m});
  std::vector<std::vector<json>> records(jobs.size());

  parallel_for(jobs.size(), [&](std::size_t k) {
    const auto [size, m] = jobs[k];
    const std::uint64_t map_seed = corpus_map_seed(config.master_seed, size, m);
    const GridMap map = generate_random_map(size, size, config.density, map_seed);
    const std::string stem = map_stem(size, m);
    write_file((out / "maps" / (stem + ".map")).string(), emit_map(map));

    for (int n : config.agent_counts) {
      const std::string name = stem + "-" + std::to_string(n);
      std::optional<Solution> solution;
      Scenario scenario;
      std::uint64_t scen_seed = 0;
      int attempts = 0;
      while (!solution && attempts < config.max_attempts) {
        scen_seed = derive_seed(config.master_seed,
                                {2, std::uint64_t(size), std::uint64_t(m), std::uint64_t(n), std::uint64_t(attempts)});
        ++attempts;
        scenario = generate_scenario(map, n, scen_seed);
        solution = ecbs_solve(map, scenario, config.w, {default_horizon(map), config.max_high_level_nodes});
      }
      if (!solution)
        throw std::runtime_error("no expert solution for " + name + " after " + std::to_string(attempts) +
                                 " scenario attempts");
      const auto samples = build_samples(map, scenario, *solution, config.tcao);
      write_file((out / "scenarios" / (name + ".scen")).string(),
                 emit_scen(entries_from_scenario(map, scenario, stem + ".map")));
      write_file((out / "solutions" / (name + ".paths")).string(), export_paths(*solution));
      save_samples(out / "samples" / (name + ".jsonl"), samples);
      records[k].push_back({{"map", "maps/" + stem + ".map"},
                            {"scenario", "scenarios/" + name + ".scen"},
                            {"solution", "solutions/" + name + ".paths"},
                            {"samples", "samples/" + name + ".jsonl"},
                            {"map_size", size},
                            {"map_index", m},
                            {"map_seed", map_seed},
                            {"n_agents", n},
                            {"scenario_seed", scen_seed},
                            {"attempts", attempts},
                            {"sum_of_costs", solution->sum_of_costs},
                            {"makespan", solution->makespan},
                            {"sample_count", samples.size()}});
    }
  }, threads);

  json manifest;
  manifest["config"] = config;
  manifest["instances"] = json::array();
  std::size_t total = 0;
  for (const auto& per_map : records)
    for (const auto& r : per_map) {
      total += r["sample_count"].get<std::size_t>();
      manifest["instances"].push_back(r);
    }
  manifest["scenario_files"] = manifest["instances"].size();
  manifest["total_samples"] = total;
  write_file((out / "manifest.json").string(), manifest.dump(2) + "\n");
  return manifest;
}

std::vector<Sample> load_corpus_samples(const fs::path& corpus_dir) {
  const json manifest = json::parse(read_file((corpus_dir / "manifest.json").string()));
  std::vector<Sample> all;
  for (const auto& inst : manifest.at("instances")) {
    auto part = load_samples(corpus_dir / inst.at("samples").get<std::string>());
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

}  // namespace mapfil

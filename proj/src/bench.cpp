#include "mapfil/bench.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>

#include "mapfil/parallel.hpp"

namespace mapfil {

using nlohmann::json;

double success_rate(std::span<const EpisodeResult> results) {
  if (results.empty()) throw std::invalid_argument("success rate of no episodes");
  std::size_t reached = 0, total = 0;
  for (const auto& r : results) {
    reached += r.agents_reached();
    total += r.reached.size();
  }
  return total == 0 ? 1.0 : double(reached) / double(total);
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoHistory: return "no_history";
    case Variant::NoTcao: return "no_tcao";
    case Variant::Baseline: return "baseline";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view name) {
  for (Variant v : kAllVariants)
    if (name == to_string(v)) return v;
  return std::nullopt;
}

DecoderConfig variant_config(Variant v, const DecoderConfig& base) {
  DecoderConfig c = base;
  c.history_enabled = v == Variant::Full || v == Variant::NoTcao;
  c.tcao = v == Variant::Full || v == Variant::NoHistory;
  return c;
}

int default_max_steps(int map_size) {
  if (map_size < 1) throw std::invalid_argument("map size must be positive");
  return int(std::lround(256.0 + (map_size - 40) * (386.0 - 256.0) / 40.0));
}

void to_json(json& j, const SuiteConfig& c) {
  std::vector<std::string> variants;
  for (Variant v : c.variants) variants.push_back(to_string(v));
  j = json{{"map_size", c.map_size},
           {"density", c.density},
           {"agent_counts", c.agent_counts},
           {"maps", c.maps},
           {"max_steps", c.max_steps},
           {"variants", variants},
           {"seed", c.seed},
           {"tau", c.decoder.tau},
           {"history", c.decoder.history},
           {"mode", c.decoder.mode == DecodeMode::Greedy ? "greedy" : "sample"},
           {"goal_projection", c.decoder.projection == GoalProjection::Absent ? "absent" : "boundary"}};
}

void from_json(const json& j, SuiteConfig& c) {
  SuiteConfig d;
  d.map_size = j.value("map_size", d.map_size);
  d.density = j.value("density", d.density);
  d.agent_counts = j.value("agent_counts", d.agent_counts);
  d.maps = j.value("maps", d.maps);
  d.max_steps = j.value("max_steps", d.max_steps);
  if (j.contains("variants")) {
    d.variants.clear();
    for (const auto& name : j.at("variants")) {
      auto v = parse_variant(name.get<std::string>());
      if (!v) throw std::invalid_argument("unknown variant '" + name.get<std::string>() + "'");
      d.variants.push_back(*v);
    }
  }
  d.seed = j.value("seed", d.seed);
  d.decoder.tau = j.value("tau", d.decoder.tau);
  d.decoder.history = j.value("history", d.decoder.history);
  const std::string mode = j.value("mode", std::string("sample"));
  if (mode != "sample" && mode != "greedy") throw std::invalid_argument("mode must be 'sample' or 'greedy'");
  d.decoder.mode = mode == "greedy" ? DecodeMode::Greedy : DecodeMode::Sample;
  const std::string projection = j.value("goal_projection", std::string("boundary"));
  if (projection != "boundary" && projection != "absent")
    throw std::invalid_argument("goal_projection must be 'boundary' or 'absent'");
  d.decoder.projection = projection == "absent" ? GoalProjection::Absent : GoalProjection::Boundary;
  c = d;
}

std::uint64_t evaluation_map_seed(std::uint64_t suite_seed, int map_size, int map_index) {
  return derive_seed(suite_seed, {101, std::uint64_t(map_size), std::uint64_t(map_index)});
}

double SuiteResult::mean(Variant v, int n_agents) const {
  for (const auto& row : aggregate)
    if (row.variant == v && row.n_agents == n_agents) return row.success_rate;
  throw std::out_of_range(std::string("no aggregate row for ") + to_string(v) + " with " + std::to_string(n_agents) +
                          " agents");
}

SuiteResult run_suite(const SuiteConfig& suite, const Weights& weights) {
  if (suite.maps < 1) throw std::invalid_argument("suite needs at least one map");
  if (suite.variants.empty() || suite.agent_counts.empty()) throw std::invalid_argument("suite has nothing to run");
  validate_config(suite.decoder);
  check_weights(weights);
  const int max_steps = suite.max_steps > 0 ? suite.max_steps : default_max_steps(suite.map_size);

  // Maps and scenarios are shared by every variant so the comparison is paired.
  std::vector<std::uint64_t> map_seeds;
  std::vector<GridMap> maps;
  for (int m = 0; m < suite.maps; ++m) {
    map_seeds.push_back(evaluation_map_seed(suite.seed, suite.map_size, m));
    maps.push_back(generate_random_map(suite.map_size, suite.map_size, suite.density, map_seeds.back()));
  }
  const std::size_t nv = suite.variants.size(), na = suite.agent_counts.size(), nm = maps.size();
  std::vector<Scenario> scenarios(na * nm);
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t m = 0; m < nm; ++m)
      scenarios[a * nm + m] = generate_scenario(
          maps[m], suite.agent_counts[a],
          derive_seed(suite.seed, {102, std::uint64_t(suite.map_size), m, std::uint64_t(suite.agent_counts[a])}));

  const std::size_t jobs = nv * na * nm;
  std::vector<EpisodeResult> results(jobs);
  std::vector<nlohmann::json> traces(suite.keep_traces ? jobs : 0);
  parallel_for(
      jobs,
      [&](std::size_t job) {
        const std::size_t v = job / (na * nm), a = (job / nm) % na, m = job % nm;
        DecoderConfig config = variant_config(suite.variants[v], suite.decoder);
        config.seed = derive_seed(suite.seed, {103, m, std::uint64_t(suite.variants[v]),
                                               std::uint64_t(suite.agent_counts[a])});
        const Scenario& scenario = scenarios[a * nm + m];
        EpisodeResult r = run_episode(maps[m], scenario, weights, config, max_steps, true);
        const auto conflicts = audit_trace(maps[m], scenario, r.trace, config.history);
        if (!conflicts.empty())
          throw ContractViolation(std::string("audit found a ") + to_string(conflicts[0].kind) +
                                  " conflict in variant " + to_string(suite.variants[v]) + " at t=" +
                                  std::to_string(conflicts[0].time));
        if (suite.keep_traces) traces[job] = trace_to_json(maps[m], scenario, config.history, r.trace);
        r.trace.clear();
        results[job] = std::move(r);
      },
      suite.threads);

  SuiteResult out;
  out.episodes = jobs;
  out.traces = std::move(traces);
  for (std::size_t v = 0; v < nv; ++v)
    for (std::size_t a = 0; a < na; ++a) {
      double sum = 0.0;
      for (std::size_t m = 0; m < nm; ++m) {
        const EpisodeResult& r = results[(v * na + a) * nm + m];
        const double rate = success_rate(std::span(&r, 1));
        out.per_map.push_back({suite.variants[v], suite.map_size, suite.agent_counts[a], map_seeds[m], rate});
        sum += rate;
      }
      out.aggregate.push_back({suite.variants[v], suite.map_size, suite.agent_counts[a], std::nullopt, sum / double(nm)});
    }
  return out;
}

std::string suite_csv(const SuiteResult& result) {
  std::string csv = "variant,map_size,n_agents,map_seed,success_rate\n";
  char buf[160];
  auto emit = [&](const SuiteRow& row) {
    const std::string seed = row.map_seed ? std::to_string(*row.map_seed) : std::string("all");
    std::snprintf(buf, sizeof buf, "%s,%d,%d,%s,%.6f\n", to_string(row.variant), row.map_size, row.n_agents,
                  seed.c_str(), row.success_rate);
    csv += buf;
  };
  for (const auto& row : result.per_map) emit(row);
  for (const auto& row : result.aggregate) emit(row);
  return csv;
}

json trace_to_json(const GridMap& map, const Scenario& scenario, int history, std::span<const std::vector<Action>> trace) {
  json agents = json::array();
  for (const auto& t : scenario.tasks)
    agents.push_back({{"start", {t.start.row, t.start.col}}, {"goal", {t.goal.row, t.goal.col}}});
  json steps = json::array();
  for (const auto& joint : trace) {
    std::vector<int> ids;
    for (Action a : joint) ids.push_back(index_of(a));
    steps.push_back(ids);
  }
  return json{{"map", emit_map(map)}, {"agents", agents}, {"history", history}, {"actions", steps}};
}

TraceAudit audit_trace_json(const json& j) {
  const GridMap map = parse_map(j.at("map").get<std::string>());
  Scenario scenario;
  for (const auto& a : j.at("agents")) {
    const auto s = a.at("start").get<std::array<int, 2>>();
    const auto g = a.at("goal").get<std::array<int, 2>>();
    scenario.tasks.push_back({{s[0], s[1]}, {g[0], g[1]}});
  }
  std::vector<std::vector<Action>> trace;
  for (const auto& step : j.at("actions")) {
    std::vector<Action> joint;
    for (const auto& id : step) {
      const int k = id.get<int>();
      if (k < 0 || k >= kNumActions) throw std::invalid_argument("action index " + std::to_string(k) + " out of range");
      joint.push_back(action_from_index(k));
    }
    trace.push_back(std::move(joint));
  }
  TraceAudit audit;
  audit.steps = trace.size();
  audit.conflicts = audit_trace(map, scenario, trace, j.value("history", 5));
  return audit;
}

}  // namespace mapfil

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mapfil/decoder.hpp"

namespace mapfil {

// Agents reached over agents attempted, pooled across episodes.
double success_rate(std::span<const EpisodeResult> results);

enum class Variant { Full, NoHistory, NoTcao, Baseline };

inline constexpr Variant kAllVariants[] = {Variant::Full, Variant::NoHistory, Variant::NoTcao, Variant::Baseline};

const char* to_string(Variant v);
std::optional<Variant> parse_variant(std::string_view name);

// The base config with the variant's history/tcao switches applied.
DecoderConfig variant_config(Variant v, const DecoderConfig& base);

// 256 steps for 40x40 and 386 for 80x80; other sizes interpolate linearly.
int default_max_steps(int map_size);

struct SuiteConfig {
  int map_size = 40;
  double density = 0.3;
  std::vector<int> agent_counts{32};
  int maps = 20;
  int max_steps = 0;  // 0 = default_max_steps(map_size)
  std::vector<Variant> variants{Variant::Full};
  std::uint64_t seed = 0;
  DecoderConfig decoder;  // tau, history, mode and projection; seed and switches are set per episode
  unsigned threads = 0;
  bool keep_traces = false;  // fill SuiteResult::traces
};

void to_json(nlohmann::json& j, const SuiteConfig& c);
void from_json(const nlohmann::json& j, SuiteConfig& c);

// Evaluation maps use a different seed stream from the training corpus.
std::uint64_t evaluation_map_seed(std::uint64_t suite_seed, int map_size, int map_index);

struct SuiteRow {
  Variant variant = Variant::Full;
  int map_size = 0;
  int n_agents = 0;
  std::optional<std::uint64_t> map_seed;  // empty on aggregate rows
  double success_rate = 0.0;
  friend bool operator==(const SuiteRow&, const SuiteRow&) = default;
};

struct SuiteResult {
  std::vector<SuiteRow> per_map;    // variant, agent count, map order
  std::vector<SuiteRow> aggregate;  // mean over maps per (variant, agent count)
  std::size_t episodes = 0;
  std::vector<nlohmann::json> traces;  // trace_to_json per episode, in per_map order

  double mean(Variant v, int n_agents) const;
};

// Runs every variant x agent count x map episode and audits each trace;
// a conflict found by the audit throws ContractViolation.
SuiteResult run_suite(const SuiteConfig& suite, const Weights& weights);

// Header, per-map rows, then aggregate rows with map_seed "all".
std::string suite_csv(const SuiteResult& result);

// Self-contained episode record for offline auditing.
nlohmann::json trace_to_json(const GridMap& map, const Scenario& scenario, int history,
                             std::span<const std::vector<Action>> trace);

struct TraceAudit {
  std::size_t steps = 0;
  std::vector<Conflict> conflicts;
};

TraceAudit audit_trace_json(const nlohmann::json& j);

}  // namespace mapfil

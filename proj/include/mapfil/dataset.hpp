#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mapfil/expert.hpp"
#include "mapfil/grid.hpp"
#include "mapfil/world.hpp"

namespace mapfil {

// One decision point of an expert path.
struct Sample {
  Observation observation;
  Action expert_action = Action::Stay;
  friend bool operator==(const Sample&, const Sample&) = default;
};

class MalformedPath : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<Action> actions_from_path(const Path& path);

class CorruptSolution : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Replays the solution and emits one sample per agent per step before that
// agent's completion time. Samples are ordered by time, then agent index.
std::vector<Sample> build_samples(const GridMap& map, const Scenario& scenario, const Solution& solution,
                                  bool tcao);

class SampleFormatError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// JSON lines: {"action":k,"goal_vec":[...],"obs":[...]} per sample.
void write_samples(std::ostream& out, std::span<const Sample> samples);
std::vector<Sample> read_samples(std::istream& in);
void save_samples(const std::filesystem::path& path, std::span<const Sample> samples);
std::vector<Sample> load_samples(const std::filesystem::path& path);

// "agent k: (r0,c0)->(r1,c1)->..." per line.
std::string export_paths(const Solution& solution);

class RejectedSolution : public std::runtime_error {
 public:
  RejectedSolution(const std::string& what, std::vector<Conflict> conflicts = {})
      : std::runtime_error(what), conflicts_(std::move(conflicts)) {}
  const std::vector<Conflict>& conflicts() const { return conflicts_; }

 private:
  std::vector<Conflict> conflicts_;
};

// Parses a path file (ours or an external solver's) and validates it.
Solution import_external_paths(std::string_view text, const GridMap& map, const Scenario& scenario);

struct CorpusConfig {
  std::vector<int> map_sizes{40, 80};
  int maps_per_size = 100;
  double density = 0.3;
  std::vector<int> agent_counts{4, 8, 16, 32, 64};
  double w = 1.2;
  std::uint64_t master_seed = 0;
  bool tcao = true;
  int max_attempts = 20;
  std::size_t max_high_level_nodes = 20000;
};

void to_json(nlohmann::json& j, const CorpusConfig& c);
void from_json(const nlohmann::json& j, CorpusConfig& c);

// Number of scenario files (map x agent-count instances) the config describes.
std::size_t corpus_scenario_count(const CorpusConfig& config);

// File stem "random-<size>-<index>" and generator seed of a corpus map.
std::string map_stem(int size, int index);
std::uint64_t corpus_map_seed(std::uint64_t master_seed, int size, int index);

// Writes maps/, scenarios/, solutions/, samples/ and manifest.json under
// `out`; returns the manifest. Output is a pure function of the config.
nlohmann::json generate_corpus(const CorpusConfig& config, const std::filesystem::path& out,
                               unsigned threads = 0);

// Concatenates every sample file listed in a corpus manifest, in manifest order.
std::vector<Sample> load_corpus_samples(const std::filesystem::path& corpus_dir);

}  // namespace mapfil

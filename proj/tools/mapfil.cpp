// Command-line front end: corpus generation, expert solving, training and
// evaluation. Exit codes: 0 ok, 1 failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mapfil/bench.hpp"
#include "mapfil/dataset.hpp"
#include "mapfil/policy.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mapfil;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config_path;
  json config = json::object();

  std::uint64_t seed_or(std::uint64_t fallback) const { return seed.value_or(fallback); }
  json section(const char* name) const { return config.contains(name) ? config.at(name) : json::object(); }
};

class Failure : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  write_file(path, text);
}

int gen_maps(const Globals& g, int size, int count, double density) {
  const fs::path dir = g.out.empty() ? fs::path("maps") : fs::path(g.out);
  fs::create_directories(dir);
  for (int m = 0; m < count; ++m) {
    const GridMap map = generate_random_map(size, size, density, corpus_map_seed(g.seed_or(0), size, m));
    const fs::path file = dir / (map_stem(size, m) + ".map");
    write_file(file.string(), emit_map(map));
    std::cout << file.string() << "\n";
  }
  return 0;
}

int gen_scenarios(const Globals& g, const std::vector<std::string>& map_files, const std::vector<int>& agents,
                  int count) {
  const fs::path dir = g.out.empty() ? fs::path("scenarios") : fs::path(g.out);
  fs::create_directories(dir);
  for (std::size_t f = 0; f < map_files.size(); ++f) {
    const GridMap map = load_map(map_files[f]);
    const std::string stem = fs::path(map_files[f]).stem().string();
    for (int n : agents)
      for (int k = 0; k < count; ++k) {
        const Scenario s =
            generate_scenario(map, n, derive_seed(g.seed_or(0), {2, f, std::uint64_t(n), std::uint64_t(k)}));
        std::string name = stem + "-" + std::to_string(n);
        if (count > 1) name += "-" + std::to_string(k);
        const fs::path file = dir / (name + ".scen");
        write_file(file.string(), emit_scen(entries_from_scenario(map, s, fs::path(map_files[f]).filename().string())));
        std::cout << file.string() << "\n";
      }
  }
  return 0;
}

int solve_expert(const Globals& g, const std::string& map_file, const std::string& scen_file, double w,
                 bool optimal, std::size_t max_nodes) {
  const GridMap map = load_map(map_file);
  const Scenario s = scenario_from_entries(parse_scen(read_file(scen_file)));
  const SolverLimits limits{default_horizon(map), max_nodes};
  const auto sol = optimal ? cbs_solve(map, s, limits) : ecbs_solve(map, s, w, limits);
  if (!sol) throw Failure("no solution found within " + std::to_string(max_nodes) + " high-level nodes");
  write_output(g.out, export_paths(*sol));
  std::cerr << "sum_of_costs " << sol->sum_of_costs << " makespan " << sol->makespan << "\n";
  return 0;
}

int build_dataset(const Globals& g, const std::string& map_file, const std::string& scen_file,
                  const std::string& paths_file, CorpusConfig corpus, bool no_tcao) {
  if (!map_file.empty() || !scen_file.empty() || !paths_file.empty()) {
    if (map_file.empty() || scen_file.empty() || paths_file.empty())
      throw Failure("single-instance mode needs --map, --scen and --paths together");
    const GridMap map = load_map(map_file);
    const Scenario s = scenario_from_entries(parse_scen(read_file(scen_file)));
    const Solution sol = import_external_paths(read_file(paths_file), map, s);
    const auto samples = build_samples(map, s, sol, !no_tcao);
    std::ostringstream buf;
    write_samples(buf, samples);
    write_output(g.out, buf.str());
    std::cerr << samples.size() << " samples\n";
    return 0;
  }
  if (g.seed) corpus.master_seed = *g.seed;
  if (no_tcao) corpus.tcao = false;
  const fs::path dir = g.out.empty() ? fs::path("corpus") : fs::path(g.out);
  const json manifest = generate_corpus(corpus, dir);
  std::cout << dir.string() << ": " << manifest["scenario_files"] << " instances, " << manifest["total_samples"]
            << " samples\n";
  return 0;
}

std::vector<Sample> load_training_data(const std::vector<std::string>& inputs) {
  std::vector<Sample> all;
  for (const auto& in : inputs) {
    const fs::path p(in);
    std::vector<Sample> part;
    if (fs::is_directory(p)) {
      if (!fs::exists(p / "manifest.json")) throw Failure(in + " has no manifest.json");
      part = load_corpus_samples(p);
    } else if (fs::exists(p)) {
      part = load_samples(p);
    } else {
      throw Failure("dataset " + in + " does not exist");
    }
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

int train_cmd(const Globals& g, const std::vector<std::string>& data, PolicyConfig policy, TrainConfig tc,
              const std::string& loss_csv) {
  if (data.empty()) throw Failure("no dataset given (use --data <corpus dir or .jsonl>)");
  const auto samples = load_training_data(data);
  if (samples.empty()) throw Failure("the dataset contains no samples");
  if (g.seed) tc.seed = *g.seed;
  std::cerr << samples.size() << " samples, " << tc.epochs << " epochs\n";
  const auto result = train(samples, policy, tc, [](int epoch, double loss) {
    std::fprintf(stderr, "epoch %d loss %.8f\n", epoch, loss);
  });
  const std::string out = g.out.empty() ? "weights.json" : g.out;
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  save_weights(out, result.weights);
  if (!loss_csv.empty()) {
    std::string csv = "epoch,loss\n";
    char buf[64];
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
      std::snprintf(buf, sizeof buf, "%zu,%.10f\n", e, result.epoch_loss[e]);
      csv += buf;
    }
    write_output(loss_csv, csv);
  }
  std::fprintf(stderr, "training accuracy %.4f, weights written to %s\n", greedy_accuracy(result.weights, samples),
               out.c_str());
  return 0;
}

int evaluate_cmd(const Globals& g, SuiteConfig suite, const std::string& weights_file, const std::string& trace_dir) {
  if (!fs::exists(weights_file)) throw Failure("weights file " + weights_file + " does not exist (train first)");
  const Weights w = load_weights(weights_file);
  if (g.seed) suite.seed = *g.seed;
  suite.keep_traces = !trace_dir.empty();
  const SuiteResult r = run_suite(suite, w);
  write_output(g.out, suite_csv(r));
  if (!trace_dir.empty()) {
    fs::create_directories(trace_dir);
    for (std::size_t i = 0; i < r.traces.size(); ++i) {
      const SuiteRow& row = r.per_map[i];
      const std::string name = std::string(to_string(row.variant)) + "-" + std::to_string(row.n_agents) + "-" +
                               std::to_string(*row.map_seed) + ".json";
      write_file((fs::path(trace_dir) / name).string(), r.traces[i].dump() + "\n");
    }
  }
  for (const auto& row : r.aggregate)
    std::fprintf(stderr, "%-10s n=%-3d success %.4f\n", to_string(row.variant), row.n_agents, row.success_rate);
  std::fprintf(stderr, "%zu episodes audited, no conflicts\n", r.episodes);
  return 0;
}

int audit_cmd(const std::vector<std::string>& files) {
  bool clean = true;
  for (const auto& f : files) {
    const TraceAudit a = audit_trace_json(json::parse(read_file(f)));
    if (a.conflicts.empty()) {
      std::cout << f << ": " << a.steps << " steps, no conflicts\n";
      continue;
    }
    clean = false;
    for (const auto& c : a.conflicts) {
      std::cout << f << ": " << to_string(c.kind) << " conflict at t=" << c.time << " agents";
      for (int i : c.agents) std::cout << " " << i;
      std::cout << "\n";
    }
  }
  return clean ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grid MAPF imitation-learning toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Master seed");
  app.add_option("--out", g.out, "Output file or directory");
  app.add_option("--config", g.config_path, "JSON config with corpus/policy/train/suite sections")
      ->check(CLI::ExistingFile);

  auto* maps_cmd = app.add_subcommand("gen-maps", "Generate random obstacle maps");
  int map_size = 40, map_count = 1;
  double density = 0.3;
  maps_cmd->add_option("--size", map_size, "Map side length")->check(CLI::PositiveNumber);
  maps_cmd->add_option("--count", map_count, "Number of maps")->check(CLI::PositiveNumber);
  maps_cmd->add_option("--density", density, "Obstacle density")->check(CLI::Range(0.0, 1.0));

  auto* scen_cmd = app.add_subcommand("gen-scenarios", "Generate .scen files for maps");
  std::vector<std::string> scen_maps;
  std::vector<int> scen_agents{8};
  int scen_count = 1;
  scen_cmd->add_option("--map", scen_maps, "Map files")->required()->check(CLI::ExistingFile);
  scen_cmd->add_option("--agents", scen_agents, "Agent counts");
  scen_cmd->add_option("--count", scen_count, "Scenarios per map and agent count")->check(CLI::PositiveNumber);

  auto* solve_cmd = app.add_subcommand("solve-expert", "Solve a scenario and write a path file");
  std::string map_file, scen_file, paths_file;
  double w = 1.2;
  bool optimal = false, no_tcao = false;
  std::size_t max_nodes = 20000;
  solve_cmd->add_option("--map", map_file)->required()->check(CLI::ExistingFile);
  solve_cmd->add_option("--scen", scen_file)->required()->check(CLI::ExistingFile);
  solve_cmd->add_option("--w", w, "Suboptimality factor")->check(CLI::Range(1.0, 100.0));
  solve_cmd->add_flag("--optimal", optimal, "Use optimal CBS instead of bounded-suboptimal search");
  solve_cmd->add_option("--max-nodes", max_nodes, "High-level node budget");

  auto* data_cmd = app.add_subcommand("build-dataset", "Build training samples (one instance or a whole corpus)");
  std::vector<int> corpus_sizes, corpus_agents;
  int maps_per_size = 0;
  std::optional<double> corpus_density, corpus_w;
  data_cmd->add_option("--map", map_file)->check(CLI::ExistingFile);
  data_cmd->add_option("--scen", scen_file)->check(CLI::ExistingFile);
  data_cmd->add_option("--paths", paths_file, "Path file from solve-expert or an external solver")
      ->check(CLI::ExistingFile);
  data_cmd->add_option("--sizes", corpus_sizes, "Corpus map sizes");
  data_cmd->add_option("--maps-per-size", maps_per_size, "Corpus maps per size");
  data_cmd->add_option("--agents", corpus_agents, "Corpus agent counts");
  data_cmd->add_option("--density", corpus_density, "Corpus obstacle density");
  data_cmd->add_option("--w", corpus_w, "Corpus suboptimality factor");
  data_cmd->add_flag("--no-tcao", no_tcao, "Encode finished agents as agents, not obstacles");

  auto* train_sub = app.add_subcommand("train", "Train a policy by behavioral cloning");
  std::vector<std::string> data;
  std::optional<int> epochs, batch_size;
  std::optional<double> lr;
  std::string loss_csv;
  train_sub->add_option("--data", data, "Corpus directories or .jsonl sample files");
  train_sub->add_option("--epochs", epochs)->check(CLI::PositiveNumber);
  train_sub->add_option("--lr", lr, "Initial learning rate");
  train_sub->add_option("--batch-size", batch_size)->check(CLI::PositiveNumber);
  train_sub->add_option("--loss-csv", loss_csv, "Write the per-epoch loss curve here");

  std::string weights_file = "weights.json", trace_dir;
  std::optional<int> eval_maps, eval_size, max_steps, history;
  std::optional<double> tau, eval_density;
  std::vector<int> eval_agents;
  std::vector<std::string> variant_names;
  bool greedy = false;
  unsigned threads = 0;
  auto add_eval_options = [&](CLI::App* cmd, bool with_variants) {
    cmd->add_option("--weights", weights_file, "Weight file from train");
    cmd->add_option("--maps", eval_maps, "Evaluation maps")->check(CLI::PositiveNumber);
    cmd->add_option("--size", eval_size, "Map side length")->check(CLI::PositiveNumber);
    cmd->add_option("--agents", eval_agents, "Agent counts");
    cmd->add_option("--density", eval_density, "Obstacle density");
    cmd->add_option("--tau", tau, "Softmax temperature");
    cmd->add_option("--history", history, "History size H");
    cmd->add_option("--max-steps", max_steps, "Step budget (default 256 at 40x40, 386 at 80x80)");
    cmd->add_flag("--greedy", greedy, "Take the argmax action instead of sampling");
    cmd->add_option("--threads", threads, "Worker threads (0 = all cores)");
    cmd->add_option("--trace-dir", trace_dir, "Write one trace file per episode here");
    if (with_variants)
      cmd->add_option("--variant", variant_names, "full, no_history, no_tcao or baseline")
          ->check(CLI::IsMember({"full", "no_history", "no_tcao", "baseline"}));
  };
  auto* eval_cmd = app.add_subcommand("evaluate", "Measure success rates of a trained policy");
  add_eval_options(eval_cmd, true);
  auto* ablate_cmd = app.add_subcommand("ablate", "Evaluate all four decoder variants on shared maps");
  add_eval_options(ablate_cmd, false);

  auto* audit_sub = app.add_subcommand("audit", "Replay episode traces and check for conflicts");
  std::vector<std::string> trace_files;
  audit_sub->add_option("traces", trace_files, "Trace files")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (seed_opt->count() > 0) g.seed = seed;
    if (!g.config_path.empty()) g.config = json::parse(read_file(g.config_path));

    if (*maps_cmd) return gen_maps(g, map_size, map_count, density);
    if (*scen_cmd) return gen_scenarios(g, scen_maps, scen_agents, scen_count);
    if (*solve_cmd) return solve_expert(g, map_file, scen_file, w, optimal, max_nodes);
    if (*data_cmd) {
      CorpusConfig corpus = g.section("corpus").get<CorpusConfig>();
      if (!corpus_sizes.empty()) corpus.map_sizes = corpus_sizes;
      if (maps_per_size > 0) corpus.maps_per_size = maps_per_size;
      if (!corpus_agents.empty()) corpus.agent_counts = corpus_agents;
      if (corpus_density) corpus.density = *corpus_density;
      if (corpus_w) corpus.w = *corpus_w;
      return build_dataset(g, map_file, scen_file, paths_file, corpus, no_tcao);
    }
    if (*train_sub) {
      PolicyConfig policy = g.section("policy").get<PolicyConfig>();
      TrainConfig tc = g.section("train").get<TrainConfig>();
      if (epochs) tc.epochs = *epochs;
      if (lr) tc.initial_lr = *lr;
      if (batch_size) tc.batch_size = *batch_size;
      return train_cmd(g, data, policy, tc, loss_csv);
    }
    if (*eval_cmd || *ablate_cmd) {
      SuiteConfig suite = g.section("suite").get<SuiteConfig>();
      if (eval_maps) suite.maps = *eval_maps;
      if (eval_size) suite.map_size = *eval_size;
      if (!eval_agents.empty()) suite.agent_counts = eval_agents;
      if (eval_density) suite.density = *eval_density;
      if (tau) suite.decoder.tau = *tau;
      if (history) suite.decoder.history = *history;
      if (max_steps) suite.max_steps = *max_steps;
      if (greedy) suite.decoder.mode = DecodeMode::Greedy;
      suite.threads = threads;
      if (*ablate_cmd) {
        suite.variants.assign(std::begin(kAllVariants), std::end(kAllVariants));
      } else if (!variant_names.empty()) {
        suite.variants.clear();
        for (const auto& name : variant_names) suite.variants.push_back(*parse_variant(name));
      }
      return evaluate_cmd(g, suite, weights_file, trace_dir);
    }
    if (*audit_sub) return audit_cmd(trace_files);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

// Command-line front end: experiment runs, result summaries, random-walk
// dumps, and synthetic embedding generation.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtlevy/embeddings.hpp"
#include "mtlevy/harness.hpp"
#include "mtlevy/heavy_tail.hpp"
#include "mtlevy/io.hpp"

namespace {

void replace_all(std::string& s, const std::string& from,
                 const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

// Accepts pareto:alpha=A[,lambda=L], cauchy, gaussian, constant:length=L.
// Greek spellings of the parameter names are normalized first.
mtlevy::StepDistribution parse_step_distribution(std::string spec) {
  replace_all(spec, "α", "alpha");   // α
  replace_all(spec, "λ", "lambda");  // λ
  std::string name = spec;
  std::string params;
  if (const auto colon = spec.find(':'); colon != std::string::npos) {
    name = spec.substr(0, colon);
    params = spec.substr(colon + 1);
  }
  std::map<std::string, double> kv;
  std::size_t start = 0;
  while (start < params.size()) {
    std::size_t end = params.find(',', start);
    if (end == std::string::npos) end = params.size();
    const std::string item = params.substr(start, end - start);
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos)
      throw mtlevy::ConfigError("--dist: expected name=value, got '" + item +
                                "'");
    try {
      kv[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw mtlevy::ConfigError("--dist: bad numeric value in '" + item + "'");
    }
    start = end + 1;
  }
  if (name == "pareto") {
    if (!kv.count("alpha"))
      throw mtlevy::ConfigError("--dist pareto requires alpha=<value>");
    const double lambda = kv.count("lambda") ? kv["lambda"] : 1.0;
    return mtlevy::StepDistribution::pareto_ii(kv["alpha"], lambda);
  }
  if (name == "cauchy") return mtlevy::StepDistribution::unit_cauchy();
  if (name == "gaussian") return mtlevy::StepDistribution::unit_gaussian();
  if (name == "constant") {
    if (!kv.count("length"))
      throw mtlevy::ConfigError("--dist constant requires length=<value>");
    return mtlevy::StepDistribution::constant(kv["length"]);
  }
  throw mtlevy::ConfigError("--dist: unknown distribution '" + name + "'");
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::size_t start = 0;
  while (start <= csv.size()) {
    std::size_t end = csv.find(',', start);
    if (end == std::string::npos) end = csv.size();
    const std::string item = csv.substr(start, end - start);
    if (!item.empty()) {
      try {
        seeds.push_back(std::stoull(item));
      } catch (const std::exception&) {
        throw mtlevy::ConfigError("--seeds: bad seed '" + item + "'");
      }
    }
    start = end + 1;
  }
  if (seeds.empty()) throw mtlevy::ConfigError("--seeds: empty seed list");
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task exploration lab: tabular environments, a "
               "Levy-flight behavior-sharing controller, baselines, and an "
               "experiment harness"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run an experiment config");
  std::string run_config;
  std::string run_seeds;
  std::string run_out;
  int run_workers = 1;
  run->add_option("--config", run_config, "Experiment config (JSON)")
      ->required();
  run->add_option("--seeds", run_seeds,
                  "Comma-separated seed list overriding the config");
  run->add_option("--out", run_out, "Output directory overriding the config");
  run->add_option("--workers", run_workers,
                  "Worker pool size for parallel seeds")
      ->check(CLI::PositiveNumber);

  // summarize
  auto* summarize = app.add_subcommand(
      "summarize", "Aggregate metrics CSVs into a summary JSON");
  std::string sum_in;
  std::string sum_out;
  summarize->add_option("--in", sum_in, "Directory of metrics CSVs")
      ->required();
  summarize->add_option("--out", sum_out, "Summary JSON path")->required();

  // walk
  auto* walk = app.add_subcommand("walk", "Dump a 2D random walk as CSV");
  std::string walk_dist;
  int walk_steps = 0;
  std::uint64_t walk_seed = 0;
  std::string walk_out;
  walk->add_option("--dist", walk_dist,
                   "Step distribution, e.g. pareto:alpha=1, cauchy, gaussian, "
                   "constant:length=2")
      ->required();
  walk->add_option("--steps", walk_steps, "Number of steps")
      ->required()
      ->check(CLI::NonNegativeNumber);
  walk->add_option("--seed", walk_seed, "RNG seed");
  walk->add_option("--out", walk_out, "Output CSV path")->required();

  // gen-embeddings
  auto* gen = app.add_subcommand(
      "gen-embeddings",
      "Write synthetic task embeddings with chain-adjacent neighbors");
  int gen_tasks = 0;
  int gen_dim = 0;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--n-tasks", gen_tasks, "Number of tasks")
      ->required()
      ->check(CLI::PositiveNumber);
  gen->add_option("--dim", gen_dim, "Embedding dimension")
      ->required()
      ->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_option("--out", gen_out, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      mtlevy::ExperimentConfig cfg = mtlevy::ExperimentConfig::load(run_config);
      if (!run_seeds.empty()) cfg.seeds = parse_seed_list(run_seeds);
      if (!run_out.empty()) cfg.output_dir = run_out;
      cfg.validate();
      const auto files = mtlevy::run_experiment(cfg, run_workers);
      for (const auto& f : files) std::cout << f.string() << '\n';
    } else if (*summarize) {
      const auto summary = mtlevy::summarize_dir(sum_in);
      mtlevy::write_text_atomic(sum_out, summary.dump(2) + "\n");
      std::cout << sum_out << '\n';
    } else if (*walk) {
      const auto dist = parse_step_distribution(walk_dist);
      const auto w = mtlevy::random_walk(dist, walk_steps, walk_seed);
      mtlevy::write_walk_csv(w, std::filesystem::path(walk_out));
      std::cout << walk_out << '\n';
    } else if (*gen) {
      const auto vectors =
          mtlevy::synthetic_chain_embeddings(gen_tasks, gen_dim, gen_seed);
      mtlevy::write_embeddings_csv(vectors, gen_out);
      std::cout << gen_out << '\n';
    }
  } catch (const mtlevy::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const mtlevy::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

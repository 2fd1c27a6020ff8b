#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kdeband/analysis.hpp"
#include "kdeband/bench.hpp"
#include "kdeband/engine.hpp"
#include "kdeband/history.hpp"
#include "kdeband/net.hpp"
#include "kdeband/subprocess.hpp"

namespace {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> split_command(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> parts;
  std::string word;
  while (in >> word) parts.push_back(word);
  if (parts.empty()) throw std::runtime_error("empty evaluator command");
  return parts;
}

std::pair<std::string, int> split_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon + 1 == text.size()) {
    throw std::runtime_error("endpoint must look like host:port, got '" + text + "'");
  }
  const std::string host = text.substr(0, colon);
  const int port = std::stoi(text.substr(colon + 1));
  if (port < 0 || port > 65535) throw std::runtime_error("port out of range in " + text);
  return {host.empty() ? std::string("0.0.0.0") : host, port};
}

kdeband::SearchSpace resolve_space(const json& value) {
  if (value.is_object()) return kdeband::parse_space(value.dump());
  const std::string name = value.get<std::string>();
  if (name == "joint" || name == "joint-table3") return kdeband::joint_space();
  if (name == "cell-b5" || name == "cell-B5") return kdeband::cell_space(5);
  return kdeband::parse_space(read_file(name));
}

kdeband::StoppingCondition resolve_stop(const json& value) {
  const std::string kind = value.at("kind").get<std::string>();
  const double limit = value.at("limit").get<double>();
  if (kind == "max_wall_clock") return kdeband::StoppingCondition::max_wall_clock(limit);
  if (kind == "max_total_budget") return kdeband::StoppingCondition::max_total_budget(limit);
  if (kind == "max_full_budget_equivalents") {
    return kdeband::StoppingCondition::max_full_budget_equivalents(limit);
  }
  if (kind == "max_iterations") {
    return kdeband::StoppingCondition::max_iterations(value.at("limit").get<int>());
  }
  throw std::runtime_error("unknown stop kind '" + kind + "'");
}

kdeband::SamplerParams resolve_sampler(const kdeband::SearchSpace& space, const json& config) {
  kdeband::SamplerParams params = kdeband::SamplerParams::defaults_for(space);
  if (!config.contains("sampler")) return params;
  const json& s = config.at("sampler");
  params.gamma = s.value("gamma", params.gamma);
  params.random_fraction = s.value("random_fraction", params.random_fraction);
  params.n_candidates = s.value("n_candidates", params.n_candidates);
  params.min_points_per_model = s.value("min_points_per_model", params.min_points_per_model);
  params.bandwidth_factor = s.value("bandwidth_factor", params.bandwidth_factor);
  params.min_bandwidth = s.value("min_bandwidth", params.min_bandwidth);
  params.cat_smoothing = s.value("cat_smoothing", params.cat_smoothing);
  params.validate();
  return params;
}

int run_command(const std::string& config_path) {
  const json config = json::parse(read_file(config_path));

  const int backends = config.contains("benchmark") + config.contains("command") +
                       config.contains("listen");
  if (backends != 1) {
    throw std::runtime_error("config needs exactly one of benchmark, command, listen");
  }
  const auto seed = config.value("seed", std::uint64_t{1});
  const auto parallelism = config.value("parallelism", std::size_t{1});
  const int max_cycles = config.value("max_cycles", 0);
  const std::string output = config.at("output").get<std::string>();

  std::optional<kdeband::NamedBenchmark> bench;
  if (config.contains("benchmark")) {
    bench = kdeband::bundled_benchmark(config.at("benchmark").get<std::string>());
  }

  kdeband::SearchSpace space;
  if (config.contains("space")) space = resolve_space(config.at("space"));
  else if (bench) space = bench->space;
  else throw std::runtime_error("config needs a space (or a benchmark that provides one)");

  kdeband::BudgetLadder ladder;
  if (config.contains("b_min") || config.contains("b_max")) {
    const double b_min = config.at("b_min").get<double>();
    const double b_max = config.at("b_max").get<double>();
    ladder = kdeband::geometric_budgets(b_min, b_max, config.value("eta", 3.0));
  } else if (bench) {
    ladder = bench->ladder;
  } else {
    throw std::runtime_error("config needs b_min and b_max (or a benchmark ladder)");
  }

  const kdeband::SamplerParams params = resolve_sampler(space, config);
  const kdeband::StoppingCondition stop = resolve_stop(config.at("stop"));

  std::unique_ptr<kdeband::EvaluationBackend> backend;
  kdeband::MasterBackend* master = nullptr;
  if (bench) {
    backend = std::make_unique<kdeband::LocalBackend>(bench->make_eval(seed), parallelism);
  } else if (config.contains("command")) {
    const json& cmd = config.at("command");
    std::vector<std::string> argv = cmd.is_array()
                                        ? cmd.get<std::vector<std::string>>()
                                        : split_command(cmd.get<std::string>());
    backend = std::make_unique<kdeband::SubprocessBackend>(std::move(argv), parallelism);
  } else {
    auto [host, port] = split_endpoint(config.at("listen").get<std::string>());
    auto owned = std::make_unique<kdeband::MasterBackend>(host, port);
    master = owned.get();
    std::cerr << "listening on port " << master->port() << "\n";
    backend = std::move(owned);
  }

  kdeband::Engine engine(space, ladder, params, *backend, stop, seed, max_cycles);
  if (config.contains("meta")) {
    for (const auto& [key, value] : config.at("meta").items()) {
      engine.meta()[key] = value.get<std::string>();
    }
  }

  std::ofstream out(output, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + output);
  engine.set_line_sink([&out](const std::string& line) {
    out << line;
    out.flush();
  });

  try {
    engine.run();
  } catch (...) {
    if (master) master->shutdown_workers();
    throw;
  }
  if (master) master->shutdown_workers();

  const kdeband::RunHistory& history = engine.history();
  const auto trajectory = kdeband::incumbent_trajectory(history);
  if (!trajectory.empty()) {
    std::cerr << "best loss " << trajectory.back().loss << " (trial "
              << trajectory.back().trial_id << ", "
              << kdeband::full_budget_equivalents(history, ladder.max())
              << " full-budget equivalents)\n";
  }
  return 0;
}

int worker_command(const std::string& connect, const std::string& command,
                   const std::string& worker_id, int capacity) {
  const auto [host, port] = split_endpoint(connect);
  std::string id = worker_id;
  if (id.empty()) id = "worker-" + std::to_string(::getpid());
  return kdeband::run_worker(host, port, id, capacity,
                             kdeband::command_evaluator(split_command(command)));
}

void write_report(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << text;
}

int analyze_command(const std::string& history_path, bool correlations,
                    std::optional<double> fanova_budget, bool incumbent,
                    const std::vector<std::string>& marginal_params, int grid_size,
                    bool as_json, const std::string& out_path) {
  const kdeband::RunHistory history = kdeband::RunHistory::load(read_file(history_path));

  if (correlations) {
    const auto table = kdeband::budget_correlation_table(history);
    write_report(as_json ? kdeband::correlation_table_to_json(table).dump(2) + "\n"
                         : kdeband::correlation_table_to_csv(table),
                 out_path);
    return 0;
  }
  if (fanova_budget) {
    const auto forest = kdeband::fit_surrogate(history, *fanova_budget);
    const auto report =
        kdeband::fanova_importance(forest, history.space(), 2, *fanova_budget);
    if (!as_json) std::cerr << "note: " << report.warning << "\n";
    write_report(as_json ? kdeband::importance_to_json(report).dump(2) + "\n"
                         : kdeband::importance_to_csv(report),
                 out_path);
    return 0;
  }
  if (!marginal_params.empty()) {
    const double budget = history.ladder().max();
    const auto forest = kdeband::fit_surrogate(history, budget);
    std::optional<kdeband::Configuration> best;
    if (const auto inc = kdeband::incumbent_at(history, 1e300)) best = inc->first;
    const auto curve = kdeband::marginal_curve(forest, history.space(), marginal_params,
                                               grid_size, std::move(best));
    write_report(kdeband::marginal_to_csv(curve), out_path);
    return 0;
  }
  if (incumbent) {
    write_report(kdeband::trajectory_to_csv(kdeband::incumbent_trajectory(history)), out_path);
    return 0;
  }
  throw std::runtime_error("analyze needs one of --correlations, --fanova, --incumbent, "
                           "--marginal");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-fidelity hyperparameter and architecture search"};
  app.require_subcommand(1);

  std::string config_path;
  CLI::App* run = app.add_subcommand("run", "Run an optimization from a config document");
  run->add_option("config", config_path, "Run configuration (JSON)")->required();

  std::string connect, worker_cmd, worker_id;
  int capacity = 1;
  CLI::App* worker = app.add_subcommand("worker", "Serve evaluations for a remote master");
  worker->add_option("--connect", connect, "Master endpoint host:port")->required();
  worker->add_option("--command", worker_cmd, "Evaluator command line")->required();
  worker->add_option("--id", worker_id, "Worker identifier (default worker-<pid>)");
  worker->add_option("--capacity", capacity, "Concurrent evaluations")
      ->check(CLI::PositiveNumber);

  std::string history_path, out_path;
  bool correlations = false, incumbent = false, as_json = false;
  double fanova_budget = 0.0;
  std::vector<std::string> marginal_params;
  int grid_size = 20;
  CLI::App* analyze = app.add_subcommand("analyze", "Produce reports from a history file");
  analyze->add_option("history", history_path, "Run history file")->required();
  analyze->add_flag("--correlations", correlations, "Budget rank-correlation table");
  CLI::Option* fanova_opt =
      analyze->add_option("--fanova", fanova_budget, "Importance decomposition at budget");
  analyze->add_flag("--incumbent", incumbent, "Incumbent trajectory");
  analyze->add_option("--marginal", marginal_params, "Marginal curve parameter (max twice)")
      ->expected(1, 2);
  analyze->add_option("--grid", grid_size, "Marginal grid size")->check(CLI::PositiveNumber);
  analyze->add_flag("--json", as_json, "Emit JSON instead of CSV");
  analyze->add_option("--out", out_path, "Write the report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(run)) return run_command(config_path);
    if (app.got_subcommand(worker)) return worker_command(connect, worker_cmd, worker_id, capacity);
    std::optional<double> budget;
    if (fanova_opt->count() > 0) budget = fanova_budget;
    return analyze_command(history_path, correlations, budget, incumbent, marginal_params,
                           grid_size, as_json, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

// nashmodes: solve, bench, verify, simulate, export, serve.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <thread>

#include "CLI11.hpp"
#include "nashmodes/bench.hpp"
#include "nashmodes/certificate.hpp"
#include "nashmodes/errors.hpp"
#include "nashmodes/io.hpp"
#include "nashmodes/scenarios.hpp"
#include "server/session_server.hpp"

namespace {

using namespace nashmodes;

constexpr int kExitFailure = 1;
constexpr int kExitCertificate = 3;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

std::string output_path(const std::string& requested, const std::string& name) {
  if (!requested.empty()) return requested;
  const std::filesystem::path dir = default_output_dir(".");
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

GameSpec scenario_game(const std::string& name) { return build_scenario(scenario_preset(name)); }

struct SolveArgs {
  std::string scenario;
  std::uint64_t seed = 0;
  int particles = 50;
  int threads = 1;
  std::string out;
};

int run_solve(const SolveArgs& a) {
  const GameSpec game = scenario_game(a.scenario);
  PipelineConfig cfg;
  cfg.filter.seed = a.seed;
  cfg.filter.particles = a.particles;
  cfg.filter.threads = a.threads;
  cfg.refine_threads = a.threads;
  const EquilibriumSet set = multinash_pf(game, cfg);
  const Json config = to_json(cfg);
  const Provenance prov{a.scenario, a.seed, config_hash(config)};
  const std::string path = output_path(a.out, a.scenario + "_seed" + std::to_string(a.seed) + ".json");
  save_json_file(path, equilibrium_document(game, set, prov, config));

  std::printf("%s seed %llu: %zu modes from %d clusters (%d refiner runs)\n", a.scenario.c_str(),
              static_cast<unsigned long long>(a.seed), set.modes.size(), set.clusters, set.refinements);
  for (std::size_t k = 0; k < set.modes.size(); ++k)
    std::printf("  mode %zu  potential %.6f  violation %.2e\n", k, set.modes[k].potential, set.modes[k].max_violation);
  const auto& t = set.timings;
  std::printf("  seconds: filter %.3f cluster %.3f refine %.3f dedup %.3f total %.3f\n", t.filter, t.cluster, t.refine,
              t.dedup, t.total());
  for (const auto& d : set.diagnostics) std::printf("  note: %s\n", d.c_str());
  std::printf("wrote %s\n", path.c_str());
  return set.modes.empty() ? kExitFailure : 0;
}

struct BenchArgs {
  std::string scenario;
  int runs = 30;
  std::uint64_t first_seed = 0;
  int budget = 100;
  int threads = 1;
  std::string out;
};

void print_aggregate(const MethodAggregate& a) {
  std::printf("  %-13s runs %d failures %d censored %d  invocations %.2f +- %.2f [%g, %g]  seconds %.3f +- %.3f",
              a.method.c_str(), a.runs, a.failures, a.censored, a.invocations.mean, a.invocations.stddev,
              a.invocations.min, a.invocations.max, a.total_seconds.mean, a.total_seconds.stddev);
  if (a.method == kMethodMultiNash)
    std::printf("  filter %.3f +- %.3f  median filter fraction %.3f", a.filter_seconds.mean, a.filter_seconds.stddev,
                a.median_filter_fraction);
  std::printf("\n");
}

int run_bench(const BenchArgs& a) {
  const GameSpec game = scenario_game(a.scenario);
  BenchConfig cfg;
  cfg.runs = a.runs;
  cfg.first_seed = a.first_seed;
  cfg.threads = a.threads;
  cfg.baseline.budget = a.budget;
  cfg.baseline.target_modes = a.scenario == "head_on" ? 2 : 6;
  const BenchReport report = run_benchmark(a.scenario, game, cfg);
  const std::string path = output_path(a.out, a.scenario + "_bench.json");
  save_json_file(path, bench_document(report));
  const std::filesystem::path base = std::filesystem::path(path).replace_extension();
  write_text(base.string() + "_records.csv", write_csv(bench_records_table(report)));
  write_text(base.string() + "_histogram.csv", write_csv(bench_histogram_table(report)));

  std::printf("%s: %d runs from seed %llu\n", a.scenario.c_str(), a.runs, static_cast<unsigned long long>(a.first_seed));
  for (const auto& agg : report.aggregates) print_aggregate(agg);
  for (const auto& r : report.records)
    if (r.failed) std::printf("  failed: %s seed %llu: %s\n", r.method.c_str(), static_cast<unsigned long long>(r.seed), r.error.c_str());
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

struct VerifyArgs {
  std::string file;
  int samples = 200;
  double radius = 0.5;
  std::uint64_t seed = 0;
};

int run_verify(const VerifyArgs& a) {
  const EquilibriumDocument doc = read_equilibrium_document(load_json_file(a.file));
  CertificateConfig cfg;
  cfg.samples = a.samples;
  cfg.radius = a.radius;
  bool all = true;
  for (std::size_t k = 0; k < doc.set.modes.size(); ++k) {
    std::mt19937_64 rng = particle_stream(a.seed, k);
    const GneCertificate cert = check_local_gne(doc.game, doc.set.modes[k], cfg, rng);
    all = all && cert.passed;
    std::printf("mode %zu: %s  violation %.2e", k, cert.passed ? "pass" : "FAIL", cert.max_violation);
    for (std::size_t i = 0; i < cert.agents.size(); ++i)
      std::printf("  agent %zu improvement %.2e stationarity %.2e feasible %d/%d", i + 1, cert.agents[i].worst_improvement,
                  cert.agents[i].stationarity, cert.agents[i].feasible_samples, cert.samples);
    std::printf("\n");
    if (!cert.passed) std::printf("  %s\n", cert.detail.c_str());
  }
  return all ? 0 : kExitCertificate;
}

struct SimulateArgs {
  std::string file;
  std::string partner = "follow";
  int mode = 0;
  double dstar = 1.0;
  std::string out;
};

int run_simulate(const SimulateArgs& a) {
  const EquilibriumDocument doc = read_equilibrium_document(load_json_file(a.file));
  const MpcConfig cfg;
  const auto blocks = agent_blocks(doc.game);
  const AgentBlock& partner = blocks.at(cfg.partner);
  PartnerPolicy policy;
  std::optional<Vec> x0;
  if (a.partner == "follow") {
    if (a.mode < 0 || a.mode >= static_cast<int>(doc.set.modes.size())) throw ConfigError("mode index out of range");
    policy = follow_mode_partner(doc.set.modes[a.mode].trajectory, partner);
  } else if (a.partner == "straight") {
    policy = straight_partner(partner, doc.game.dt);
  } else if (a.partner == "stationary") {
    policy = stationary_partner(partner);
    Vec x = doc.game.x0;
    x.segment(partner.state_offset + 3, 2).setZero();
    x0 = x;
  } else {
    throw ConfigError("partner must be follow, straight, or stationary");
  }
  const ClosedLoopLog log = simulate_closed_loop(doc.game, doc.set, policy, cfg, default_mpc_refiner(), a.dstar, x0);
  const std::string path = output_path(a.out, doc.provenance.scenario + "_closed_loop.json");
  Json config = to_json(cfg);
  config["partner_policy"] = a.partner;
  config["dstar"] = a.dstar;
  save_json_file(path, closed_loop_document(doc.game, log, config));
  std::printf("lock %d at step %d, min distance %.4f, fallbacks %d\nwrote %s\n", log.locked_mode, log.lock_step,
              log.min_distance, log.fallbacks, path.c_str());
  return 0;
}

struct ExportArgs {
  std::string file;
  std::string format = "csv";
  std::string table = "records";
  std::string out;
};

int run_export(const ExportArgs& a) {
  if (a.format != "csv") throw ConfigError("only csv export is supported");
  const Json doc = load_json_file(a.file);
  const std::string kind = document_kind(doc);
  CsvTable table;
  if (kind == "equilibrium_set") {
    table = equilibrium_table(read_equilibrium_document(doc));
  } else if (kind == "closed_loop") {
    table = closed_loop_table(doc);
  } else if (kind == "bench_report") {
    const BenchReport report = read_bench_document(doc);
    if (a.table == "records")
      table = bench_records_table(report);
    else if (a.table == "histogram")
      table = bench_histogram_table(report);
    else
      throw ConfigError("bench tables are records or histogram");
  } else {
    throw ConfigError("cannot export document kind " + kind);
  }
  write_text(a.out, write_csv(table));
  return 0;
}

struct ServeArgs {
  ServerConfig server;
  std::string scenario = "head_on";
};

int run_serve(ServeArgs a) {
  a.server.session.scenario = a.scenario;
  SessionServer server(a.server);
  server.start();
  std::printf("serving %s on ws://%s:%u\n", a.scenario.c_str(), a.server.address.c_str(), server.port());
  std::fflush(stdout);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiple local Nash equilibria of constrained trajectory games"};
  app.require_subcommand(1);
  const auto scenarios = scenario_names();

  SolveArgs solve;
  auto* solve_cmd = app.add_subcommand("solve", "Find the equilibrium modes of a scenario");
  solve_cmd->add_option("scenario", solve.scenario)->required()->check(CLI::IsMember(scenarios));
  solve_cmd->add_option("--seed", solve.seed, "Filter seed");
  solve_cmd->add_option("--particles", solve.particles, "Particle count J")->check(CLI::PositiveNumber);
  solve_cmd->add_option("--threads", solve.threads)->check(CLI::PositiveNumber);
  solve_cmd->add_option("--out", solve.out, "Output file (default: $NASHMODES_OUT_DIR/<scenario>_seed<seed>.json)");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Compare against random solver initialization");
  bench_cmd->add_option("scenario", bench.scenario)->required()->check(CLI::IsMember(scenarios));
  bench_cmd->add_option("--runs", bench.runs)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--first-seed", bench.first_seed);
  bench_cmd->add_option("--budget", bench.budget, "Baseline refiner budget per run")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--threads", bench.threads)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--out", bench.out);

  VerifyArgs verify;
  auto* verify_cmd = app.add_subcommand("verify", "Certify every mode of an equilibrium file");
  verify_cmd->add_option("file", verify.file)->required()->check(CLI::ExistingFile);
  verify_cmd->add_option("--samples", verify.samples)->check(CLI::NonNegativeNumber);
  verify_cmd->add_option("--radius", verify.radius)->check(CLI::PositiveNumber);
  verify_cmd->add_option("--seed", verify.seed);

  SimulateArgs simulate;
  auto* simulate_cmd = app.add_subcommand("simulate", "Closed-loop run against a scripted partner");
  simulate_cmd->add_option("file", simulate.file)->required()->check(CLI::ExistingFile);
  simulate_cmd->add_option("--partner", simulate.partner)->check(CLI::IsMember({"follow", "straight", "stationary"}));
  simulate_cmd->add_option("--mode", simulate.mode);
  simulate_cmd->add_option("--dstar", simulate.dstar)->check(CLI::NonNegativeNumber);
  simulate_cmd->add_option("--out", simulate.out);

  ExportArgs exp;
  auto* export_cmd = app.add_subcommand("export", "Plot-ready tables from a run file");
  export_cmd->add_option("file", exp.file)->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--format", exp.format)->check(CLI::IsMember({"csv"}));
  export_cmd->add_option("--table", exp.table, "Bench table: records or histogram");
  export_cmd->add_option("--out", exp.out, "Output file (default: stdout)");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Host interactive sessions over websocket");
  serve_cmd->add_option("--port", serve.server.port);
  serve_cmd->add_option("--address", serve.server.address);
  serve_cmd->add_option("--scenario", serve.scenario)->check(CLI::IsMember(scenarios));
  serve_cmd->add_option("--threads", serve.server.threads)->check(CLI::PositiveNumber);
  serve_cmd->add_option("--tick-scale", serve.server.tick_scale, "Wall seconds per simulated second")
      ->check(CLI::PositiveNumber);

  if (argc <= 1) {
    std::cerr << app.help();
    return 2;
  }
  CLI11_PARSE(app, argc, argv);

  try {
    if (*solve_cmd) return run_solve(solve);
    if (*bench_cmd) return run_bench(bench);
    if (*verify_cmd) return run_verify(verify);
    if (*simulate_cmd) return run_simulate(simulate);
    if (*export_cmd) return run_export(exp);
    if (*serve_cmd) return run_serve(serve);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return 2;
}

#include <benchmark/benchmark.h>

#include <random>

#include "nashmodes/frechet.hpp"
#include "nashmodes/particle_filter.hpp"
#include "nashmodes/planner.hpp"
#include "nashmodes/refiner.hpp"
#include "nashmodes/scenarios.hpp"
#include "nashmodes/ukf.hpp"

namespace {

using namespace nashmodes;

const GameSpec& head_on() {
  static const GameSpec g = build_scenario(scenario_preset("head_on"));
  return g;
}

std::shared_ptr<const PotentialProblem> head_on_problem() {
  static const auto pp = std::make_shared<const PotentialProblem>(assemble_potential(head_on()));
  return pp;
}

const EquilibriumSet& head_on_modes() {
  static const EquilibriumSet set = multinash_pf(head_on());
  return set;
}

void BM_DiscreteFrechet(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  Polyline a, b;
  for (int k = 0; k < n; ++k) {
    a.push_back((Vec(2) << normal(rng), normal(rng)).finished());
    b.push_back((Vec(2) << normal(rng), normal(rng)).finished());
  }
  for (auto _ : state) benchmark::DoNotOptimize(discrete_frechet(a, b));
  state.SetComplexityN(n);
}
BENCHMARK(BM_DiscreteFrechet)->RangeMultiplier(2)->Range(16, 256)->Complexity(benchmark::oNSquared);

void BM_UkfStep(benchmark::State& state) {
  const auto pp = head_on_problem();
  const VirtualModel vm = build_virtual_model(pp, default_slack_weight(pp->constraint_dim()));
  auto rng = particle_stream(0, 0);
  const Particle p = initial_particle(vm, 0.3, rng);
  const UkfConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(ukf_step(p, vm, vm.targets[1], false, cfg));
}
BENCHMARK(BM_UkfStep);

void BM_RunFilter(benchmark::State& state) {
  const auto pp = head_on_problem();
  const VirtualModel vm = build_virtual_model(pp, default_slack_weight(pp->constraint_dim()));
  FilterConfig cfg;
  cfg.particles = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_filter(vm, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RunFilter)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_SolveConstrained(benchmark::State& state) {
  const auto pp = head_on_problem();
  const JointTrajectory warm = head_on_modes().modes.at(0).trajectory;
  JointTrajectory perturbed = warm;
  for (auto& u : perturbed.controls) u *= 0.9;
  for (auto _ : state) benchmark::DoNotOptimize(solve_constrained(*pp, perturbed));
}
BENCHMARK(BM_SolveConstrained)->Unit(benchmark::kMillisecond);

void BM_MultiNashPf(benchmark::State& state) {
  const GameSpec g = build_scenario(scenario_preset(state.range(0) ? "obstacle_swap" : "head_on"));
  for (auto _ : state) benchmark::DoNotOptimize(multinash_pf(g));
}
BENCHMARK(BM_MultiNashPf)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_MpcStep(benchmark::State& state) {
  const EquilibriumSet& modes = head_on_modes();
  ModeBelief belief;
  belief.distances.assign(modes.modes.size(), 0.0);
  belief.locked = 0;
  const MpcConfig cfg;
  const RefinerConfig refiner = default_mpc_refiner();
  for (auto _ : state)
    benchmark::DoNotOptimize(mpc_step(head_on(), modes, belief, head_on().x0, 0, cfg, refiner));
}
BENCHMARK(BM_MpcStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

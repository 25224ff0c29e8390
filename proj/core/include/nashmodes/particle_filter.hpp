#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nashmodes/game.hpp"
#include "nashmodes/ukf.hpp"
#include "nashmodes/virtual_model.hpp"

namespace nashmodes {

enum class ResamplePolicy { Never, EssThreshold };

struct FilterConfig {
  int particles = 50;
  ResamplePolicy resample = ResamplePolicy::Never;
  double ess_ratio = 0.5;  // resample when ESS < ess_ratio * particles
  std::uint64_t seed = 0;
  UkfConfig ukf;
  double init_spread = 0.3;  // std of the initial control draw
  int threads = 1;
};

void validate(const FilterConfig& cfg);

struct FilterDiagnostics {
  std::vector<double> ess;           // after each step's weight update
  std::vector<double> step_seconds;  // wall time per step
  std::vector<int> resampled_steps;
  bool degenerate = false;
  std::string warning;
};

struct FilterResult {
  std::vector<JointTrajectory> trajectories;
  std::vector<double> log_weights;
  FilterDiagnostics diagnostics;

  std::vector<double> normalized_weights() const;
  int best_index() const;
};

/// Normalizes log-weights into probabilities (max-shifted exponentiation).
std::vector<double> normalize_log_weights(const std::vector<double>& log_weights);

/// 1 / sum(w^2) for normalized weights.
double effective_sample_size(const std::vector<double>& weights);

/// Systematic resampling indices for normalized weights and a uniform offset in [0, 1).
std::vector<int> systematic_resample(const std::vector<double>& weights, double offset);

/// Independent random stream for one particle, derived from (seed, index).
std::mt19937_64 particle_stream(std::uint64_t seed, std::uint64_t index);

/// Initial particle: exact initial state, controls ~ N(0, spread^2 I).
Particle initial_particle(const VirtualModel& vm, double spread, std::mt19937_64& rng);

/// Advances one particle by a step: local Gaussian, implicit sample, weight correction.
void advance_particle(Particle& particle, const VirtualModel& vm, const UkfConfig& cfg, std::mt19937_64& rng);

/// Unscented implicit particle filter over the virtual model; returns complete trajectories.
FilterResult run_filter(const VirtualModel& vm, const FilterConfig& cfg);

/// Splits augmented states back into a joint trajectory.
JointTrajectory split_augmented(const std::vector<Vec>& path, int state_dim);

/// Plain-text diagnostics report (ESS trace, weight histogram, step timing).
std::string diagnostics_report(const FilterResult& result);

}  // namespace nashmodes

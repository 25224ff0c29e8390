#include "nashmodes/particle_filter.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "nashmodes/errors.hpp"
#include "nashmodes/parallel.hpp"

namespace nashmodes {

void validate(const FilterConfig& cfg) {
  if (cfg.particles < 1) throw ConfigError("particle count must be >= 1");
  if (!(cfg.ess_ratio > 0 && cfg.ess_ratio <= 1)) throw ConfigError("ESS ratio must lie in (0, 1]");
  if (!(cfg.init_spread >= 0)) throw ConfigError("initial spread must be non-negative");
  validate(cfg.ukf);
}

std::vector<double> normalize_log_weights(const std::vector<double>& log_weights) {
  if (log_weights.empty()) return {};
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  std::vector<double> w(log_weights.size());
  double total = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    w[j] = std::exp(log_weights[j] - top);
    total += w[j];
  }
  for (auto& v : w) v /= total;
  return w;
}

double effective_sample_size(const std::vector<double>& weights) {
  double sq = 0.0;
  for (double w : weights) sq += w * w;
  return sq > 0 ? 1.0 / sq : 0.0;
}

std::vector<int> systematic_resample(const std::vector<double>& weights, double offset) {
  const int J = static_cast<int>(weights.size());
  std::vector<int> idx(J);
  double cumulative = weights.empty() ? 0.0 : weights[0];
  int k = 0;
  for (int j = 0; j < J; ++j) {
    const double u = (j + offset) / J;
    while (u > cumulative && k < J - 1) cumulative += weights[++k];
    idx[j] = k;
  }
  return idx;
}

std::vector<double> FilterResult::normalized_weights() const { return normalize_log_weights(log_weights); }

int FilterResult::best_index() const {
  return static_cast<int>(std::max_element(log_weights.begin(), log_weights.end()) - log_weights.begin());
}

std::mt19937_64 particle_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

Particle initial_particle(const VirtualModel& vm, double spread, std::mt19937_64& rng) {
  const int n = vm.state_dim();
  const int m = vm.input_dim();
  std::normal_distribution<double> normal(0.0, 1.0);
  Particle p;
  Vec x0(n + m);
  x0.head(n) = vm.problem->x0;
  for (int k = 0; k < m; ++k) x0[n + k] = spread * normal(rng);
  p.mean = Vec::Zero(n + m);
  p.mean.head(n) = vm.problem->x0;
  p.cov = Mat::Zero(n + m, n + m);
  p.cov.topLeftCorner(n, n).diagonal().setConstant(1e-6);
  p.cov.bottomRightCorner(m, m).diagonal().setConstant(std::max(spread * spread, 1e-12));
  p.path.push_back(std::move(x0));
  p.log_weight = 0.0;
  return p;
}

void advance_particle(Particle& particle, const VirtualModel& vm, const UkfConfig& cfg, std::mt19937_64& rng) {
  const int t = particle.step() + 1;
  const bool terminal = t == vm.horizon();
  const auto local = ukf_step(particle, vm, vm.targets[t], terminal, cfg);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec gamma(local.mean.size());
  for (Eigen::Index k = 0; k < gamma.size(); ++k) gamma[k] = normal(rng);
  const Mat& root = local.root;
  Vec sample = local.mean + root * gamma;

  const Mat& meas_root = terminal ? vm.Qbar_tau_chol : vm.Qbar_chol;
  const double log_likelihood = gaussian_log_density_factored(vm.targets[t], vm.measurement(sample), meas_root);
  // The sample is mean + root * gamma, so its whitened residual under the proposal is gamma itself.
  const double log_proposal = -0.5 * (gamma.squaredNorm() + 2.0 * root.diagonal().array().log().sum() +
                                      static_cast<double>(gamma.size()) * std::log(2.0 * std::numbers::pi));
  const double log_prior = gaussian_log_density_factored(sample, local.predicted_mean, local.predicted_root);
  particle.log_weight += log_likelihood + log_prior - log_proposal;
  if (!std::isfinite(particle.log_weight)) throw NumericError("particle log-weight became non-finite", t);

  particle.path.push_back(std::move(sample));
  particle.mean = local.mean;
  particle.cov = local.cov;
  particle.root = local.root;
}

JointTrajectory split_augmented(const std::vector<Vec>& path, int state_dim) {
  JointTrajectory traj;
  traj.states.reserve(path.size());
  traj.controls.reserve(path.size());
  for (const auto& xbar : path) {
    traj.states.push_back(xbar.head(state_dim));
    traj.controls.push_back(xbar.tail(xbar.size() - state_dim));
  }
  return traj;
}

FilterResult run_filter(const VirtualModel& vm, const FilterConfig& cfg) {
  validate(cfg);
  const int J = cfg.particles;
  const int tau = vm.horizon();

  std::vector<std::mt19937_64> streams;
  streams.reserve(J);
  for (int j = 0; j < J; ++j) streams.push_back(particle_stream(cfg.seed, static_cast<std::uint64_t>(j)));
  std::mt19937_64 resample_stream = particle_stream(cfg.seed, static_cast<std::uint64_t>(J) + 0x9e3779b9ULL);

  std::vector<Particle> particles(J);
  for (int j = 0; j < J; ++j) particles[j] = initial_particle(vm, cfg.init_spread, streams[j]);

  FilterResult result;
  auto& diag = result.diagnostics;
  for (int t = 1; t <= tau; ++t) {
    const auto start = std::chrono::steady_clock::now();
    parallel_for(J, cfg.threads, [&](int j) { advance_particle(particles[j], vm, cfg.ukf, streams[j]); });

    std::vector<double> logw(J);
    for (int j = 0; j < J; ++j) logw[j] = particles[j].log_weight;
    const auto w = normalize_log_weights(logw);
    const double ess = effective_sample_size(w);
    diag.ess.push_back(ess);

    if (cfg.resample == ResamplePolicy::EssThreshold && J > 1 && t < tau && ess < cfg.ess_ratio * J) {
      const double offset = std::uniform_real_distribution<double>(0.0, 1.0)(resample_stream);
      const auto idx = systematic_resample(w, offset);
      std::vector<Particle> next(J);
      for (int j = 0; j < J; ++j) {
        next[j] = particles[idx[j]];
        next[j].log_weight = 0.0;
      }
      particles = std::move(next);
      diag.resampled_steps.push_back(t);
    }
    diag.step_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }

  const int n = vm.state_dim();
  for (auto& p : particles) {
    result.trajectories.push_back(split_augmented(p.path, n));
    result.log_weights.push_back(p.log_weight);
  }
  const auto w = result.normalized_weights();
  const double final_ess = effective_sample_size(w);
  const double top = *std::max_element(w.begin(), w.end());
  if (J > 1 && top > 1.0 - 1e-9 && final_ess < 2.0) {
    diag.degenerate = true;
    diag.warning = "particle weights degenerated onto a single trajectory";
  }
  return result;
}

std::string diagnostics_report(const FilterResult& result) {
  std::ostringstream out;
  out << std::setprecision(6);
  const auto& d = result.diagnostics;
  out << "# filter diagnostics\n";
  out << "particles " << result.trajectories.size() << "\n";
  out << "degenerate " << (d.degenerate ? "yes" : "no") << "\n";
  if (!d.warning.empty()) out << "warning " << d.warning << "\n";
  out << "resampled_steps";
  for (int s : d.resampled_steps) out << ' ' << s;
  out << "\n\n# step ess seconds\n";
  for (std::size_t t = 0; t < d.ess.size(); ++t)
    out << t + 1 << ' ' << d.ess[t] << ' ' << (t < d.step_seconds.size() ? d.step_seconds[t] : 0.0) << "\n";

  const auto w = result.normalized_weights();
  constexpr int kBins = 10;
  std::vector<int> hist(kBins, 0);
  for (double v : w) hist[std::min(kBins - 1, static_cast<int>(v * kBins))]++;
  out << "\n# weight_bin_lower weight_bin_upper count\n";
  for (int b = 0; b < kBins; ++b)
    out << static_cast<double>(b) / kBins << ' ' << static_cast<double>(b + 1) / kBins << ' ' << hist[b] << "\n";
  return out.str();
}

}  // namespace nashmodes

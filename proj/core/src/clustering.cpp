#include "nashmodes/clustering.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "nashmodes/errors.hpp"
#include "nashmodes/parallel.hpp"

namespace nashmodes {

std::string to_string(Linkage linkage) {
  switch (linkage) {
    case Linkage::Average: return "average";
    case Linkage::Single: return "single";
    case Linkage::Complete: return "complete";
  }
  return "average";
}

Linkage linkage_from_string(const std::string& name) {
  if (name == "average") return Linkage::Average;
  if (name == "single") return Linkage::Single;
  if (name == "complete") return Linkage::Complete;
  throw ConfigError("unknown linkage '" + name + "'");
}

void validate(const ClusterConfig& cfg) {
  if (!(cfg.cut > 0)) throw ConfigError("cluster cut distance must be positive");
  if (cfg.min_size < 1) throw ConfigError("minimum cluster size must be >= 1");
}

double trajectory_distance(const JointTrajectory& a, const JointTrajectory& b, const std::vector<AgentBlock>& blocks,
                           DistanceBasis basis) {
  if (basis == DistanceBasis::Joint)
    return discrete_frechet(joint_position_polyline(a, blocks), joint_position_polyline(b, blocks));
  double worst = 0.0;
  for (const auto& block : blocks)
    worst = std::max(worst, discrete_frechet(agent_position_polyline(a, block), agent_position_polyline(b, block)));
  return worst;
}

Mat pairwise_distances(const std::vector<JointTrajectory>& trajs, const std::vector<AgentBlock>& blocks,
                       const ClusterConfig& cfg) {
  const int J = static_cast<int>(trajs.size());
  Mat D = Mat::Zero(J, J);
  parallel_for(J, cfg.threads, [&](int i) {
    for (int j = i + 1; j < J; ++j) D(i, j) = trajectory_distance(trajs[i], trajs[j], blocks, cfg.basis);
  });
  for (int i = 0; i < J; ++i)
    for (int j = i + 1; j < J; ++j) D(j, i) = D(i, j);
  return D;
}

std::vector<std::vector<int>> agglomerate(const Mat& distances, Linkage linkage, double cut) {
  const int J = static_cast<int>(distances.rows());
  std::vector<std::vector<int>> groups(J);
  for (int i = 0; i < J; ++i) groups[i] = {i};
  std::vector<bool> alive(J, true);
  Mat D = distances;

  for (int remaining = J; remaining > 1; --remaining) {
    int a = -1, b = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < J; ++i) {
      if (!alive[i]) continue;
      for (int j = i + 1; j < J; ++j) {
        if (alive[j] && D(i, j) < best) {
          best = D(i, j);
          a = i;
          b = j;
        }
      }
    }
    if (a < 0 || best > cut) break;

    // Lance-Williams update for the merged cluster stored at index a.
    const double na = static_cast<double>(groups[a].size());
    const double nb = static_cast<double>(groups[b].size());
    for (int k = 0; k < J; ++k) {
      if (!alive[k] || k == a || k == b) continue;
      double d = 0.0;
      switch (linkage) {
        case Linkage::Average: d = (na * D(a, k) + nb * D(b, k)) / (na + nb); break;
        case Linkage::Single: d = std::min(D(a, k), D(b, k)); break;
        case Linkage::Complete: d = std::max(D(a, k), D(b, k)); break;
      }
      D(a, k) = D(k, a) = d;
    }
    groups[a].insert(groups[a].end(), groups[b].begin(), groups[b].end());
    std::sort(groups[a].begin(), groups[a].end());
    groups[b].clear();
    alive[b] = false;
  }

  std::vector<std::vector<int>> out;
  for (int i = 0; i < J; ++i)
    if (alive[i]) out.push_back(groups[i]);
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.front() < y.front(); });
  return out;
}

JointTrajectory mean_trajectory(const std::vector<JointTrajectory>& trajs, const std::vector<int>& members) {
  if (members.empty()) throw std::invalid_argument("mean_trajectory needs members");
  JointTrajectory mean = trajs[members.front()];
  if (members.size() == 1) return mean;
  const double inv = 1.0 / static_cast<double>(members.size());
  for (std::size_t t = 0; t < mean.states.size(); ++t) {
    Vec xs = Vec::Zero(mean.states[t].size());
    Vec us = Vec::Zero(mean.controls[t].size());
    for (int j : members) {
      xs += trajs[j].states[t];
      us += trajs[j].controls[t];
    }
    mean.states[t] = xs * inv;
    mean.controls[t] = us * inv;
  }
  return mean;
}

ModeSet cluster_modes(const std::vector<JointTrajectory>& trajs, const std::vector<double>& weights,
                      const std::vector<AgentBlock>& blocks, const ClusterConfig& cfg) {
  validate(cfg);
  ModeSet out;
  if (trajs.empty()) return out;
  for (const auto& t : trajs)
    if (t.horizon() != trajs.front().horizon()) throw ConfigError("trajectories must share one horizon");
  if (!weights.empty() && weights.size() != trajs.size()) throw ConfigError("one weight per trajectory expected");

  const Mat D = pairwise_distances(trajs, blocks, cfg);
  for (auto& members : agglomerate(D, cfg.linkage, cfg.cut)) {
    if (static_cast<int>(members.size()) < cfg.min_size) {
      out.outliers.insert(out.outliers.end(), members.begin(), members.end());
      continue;
    }
    Cluster c;
    c.representative = mean_trajectory(trajs, members);
    std::vector<Polyline> lines;
    for (int j : members) {
      lines.push_back(joint_position_polyline(trajs[j], blocks));
      c.weight += weights.empty() ? 1.0 / static_cast<double>(trajs.size()) : weights[j];
    }
    for (std::size_t a = 0; a < lines.size(); ++a)
      for (std::size_t b = a + 1; b < lines.size(); ++b) c.spread = std::max(c.spread, lockstep_distance(lines[a], lines[b]));
    c.members = std::move(members);
    out.clusters.push_back(std::move(c));
  }
  std::sort(out.outliers.begin(), out.outliers.end());
  std::stable_sort(out.clusters.begin(), out.clusters.end(),
                   [](const Cluster& x, const Cluster& y) { return x.weight > y.weight; });
  return out;
}

}  // namespace nashmodes

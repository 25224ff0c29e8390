#pragma once

#include <string>
#include <vector>

#include "nashmodes/frechet.hpp"
#include "nashmodes/game.hpp"

namespace nashmodes {

enum class Linkage { Average, Single, Complete };

/// Joint: one polyline per trajectory with every agent's position per step.
/// PerAgent: the largest of the per-agent Fréchet distances.
enum class DistanceBasis { Joint, PerAgent };

std::string to_string(Linkage linkage);
Linkage linkage_from_string(const std::string& name);

struct ClusterConfig {
  Linkage linkage = Linkage::Average;
  double cut = 5.0;  // dendrogram cut height (m)
  int min_size = 1;
  DistanceBasis basis = DistanceBasis::Joint;
  int threads = 1;
};

void validate(const ClusterConfig& cfg);

struct Cluster {
  std::vector<int> members;  // ascending input indices
  JointTrajectory representative;
  double spread = 0.0;  // largest pairwise lockstep distance among members
  double weight = 0.0;  // total normalized member weight
};

struct ModeSet {
  std::vector<Cluster> clusters;  // descending weight
  std::vector<int> outliers;      // members of clusters smaller than min_size
};

/// Trajectory distance used for clustering under the configured basis.
double trajectory_distance(const JointTrajectory& a, const JointTrajectory& b, const std::vector<AgentBlock>& blocks,
                           DistanceBasis basis = DistanceBasis::Joint);

/// Symmetric matrix of trajectory distances with zero diagonal.
Mat pairwise_distances(const std::vector<JointTrajectory>& trajs, const std::vector<AgentBlock>& blocks,
                       const ClusterConfig& cfg);

/// Agglomerative clustering of a distance matrix, merging while the closest pair of
/// clusters is within `cut`. Groups are sorted by their smallest member.
std::vector<std::vector<int>> agglomerate(const Mat& distances, Linkage linkage, double cut);

/// Pointwise arithmetic mean of the selected trajectories' states and controls.
JointTrajectory mean_trajectory(const std::vector<JointTrajectory>& trajs, const std::vector<int>& members);

ModeSet cluster_modes(const std::vector<JointTrajectory>& trajs, const std::vector<double>& weights,
                      const std::vector<AgentBlock>& blocks, const ClusterConfig& cfg);

}  // namespace nashmodes

#pragma once

#include <vector>

#include "nashmodes/game.hpp"

namespace nashmodes {

/// Sampled polyline; all points share one dimension.
using Polyline = std::vector<Vec>;

/// Discrete Fréchet distance under the Euclidean ground metric, O(|a| |b|) dynamic program.
double discrete_frechet(const Polyline& a, const Polyline& b);

/// Maximum pointwise distance under the identity coupling; requires equal lengths.
/// Upper-bounds discrete_frechet.
double lockstep_distance(const Polyline& a, const Polyline& b);

/// Per time step, the planar positions (first two state entries) of all agents concatenated.
Polyline joint_position_polyline(const JointTrajectory& traj, const std::vector<AgentBlock>& blocks);

/// Planar positions of one agent as a polyline.
Polyline agent_position_polyline(const JointTrajectory& traj, const AgentBlock& block);

}  // namespace nashmodes

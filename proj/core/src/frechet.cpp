#include "nashmodes/frechet.hpp"

#include <algorithm>
#include <stdexcept>

namespace nashmodes {

double discrete_frechet(const Polyline& a, const Polyline& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("discrete_frechet needs nonempty polylines");
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  // Rolling row of the coupling lattice.
  std::vector<double> prev(nb), curr(nb);
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      const double d = (a[i] - b[j]).norm();
      double reach;
      if (i == 0 && j == 0) {
        reach = d;
      } else if (i == 0) {
        reach = std::max(curr[j - 1], d);
      } else if (j == 0) {
        reach = std::max(prev[0], d);
      } else {
        reach = std::max(std::min({prev[j], prev[j - 1], curr[j - 1]}), d);
      }
      curr[j] = reach;
    }
    std::swap(prev, curr);
  }
  return prev[nb - 1];
}

double lockstep_distance(const Polyline& a, const Polyline& b) {
  if (a.size() != b.size()) throw std::invalid_argument("lockstep_distance needs equal lengths");
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) worst = std::max(worst, (a[t] - b[t]).norm());
  return worst;
}

Polyline joint_position_polyline(const JointTrajectory& traj, const std::vector<AgentBlock>& blocks) {
  Polyline out;
  out.reserve(traj.states.size());
  for (const auto& x : traj.states) {
    Vec point(2 * blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const int dims = std::min(2, blocks[i].state_dim);
      point.segment(2 * i, 2).setZero();
      point.segment(2 * i, dims) = x.segment(blocks[i].state_offset, dims);
    }
    out.push_back(std::move(point));
  }
  return out;
}

Polyline agent_position_polyline(const JointTrajectory& traj, const AgentBlock& block) {
  return joint_position_polyline(traj, {block});
}

}  // namespace nashmodes

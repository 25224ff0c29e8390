#pragma once

#include <functional>
#include <random>

#include "nashmodes/game.hpp"
#include "nashmodes/virtual_model.hpp"

namespace nashmodes {

struct UkfConfig {
  double alpha = 0.5;   // sigma-point spread
  double beta = 2.0;    // prior-knowledge parameter (2 is optimal for Gaussians)
  double kappa = 0.0;   // secondary scaling
  double jitter = 1e-10;  // variance floor added to predicted covariances
};

void validate(const UkfConfig& cfg);

struct UnscentedMoments {
  Vec mean;
  Mat cov;    // includes the additive noise covariance
  Mat cross;  // input/output cross covariance
};

/// Lower-triangular square root with escalating diagonal jitter; throws NumericError when
/// the factorization keeps failing.
Mat robust_cholesky(const Mat& cov, double jitter);

/// Unscented transform of N(mean, cov) through map with 2L+1 sigma points.
UnscentedMoments ukf_moments(const Vec& mean, const Mat& cov, const std::function<Vec(const VecView&)>& map,
                             const Mat& noise_cov, const UkfConfig& cfg);
/// Same transform from a lower-triangular factor of the input covariance.
UnscentedMoments ukf_moments_factored(const Vec& mean, const Mat& root,
                                      const std::function<Vec(const VecView&)>& map, const Mat& noise_cov,
                                      const UkfConfig& cfg);

/// A trajectory in progress carrying its local Gaussian approximation.
struct Particle {
  std::vector<Vec> path;  // augmented states [x_t; u_t] for t = 0..current
  Vec mean;               // local posterior mean at the current step
  Mat cov;                // local posterior covariance at the current step
  Mat root;               // lower Cholesky factor of cov, empty until computed
  double log_weight = 0.0;

  int step() const { return static_cast<int>(path.size()) - 1; }
};

/// Local Gaussian for the next step: UKF prediction and measurement update around the
/// particle's latest sample.
struct LocalGaussian {
  Vec mean;
  Mat cov;
  Mat root;  // lower Cholesky factor of cov
  Vec predicted_mean;
  Mat predicted_cov;
  Mat predicted_root;
};

LocalGaussian ukf_step(const Particle& particle, const VirtualModel& vm, const Vec& target, bool terminal,
                       const UkfConfig& cfg);

/// Symmetrizes and raises every eigenvalue to at least floor.
Mat floor_covariance(const Mat& cov, double floor);

/// mean + chol(cov) * gamma.
Vec implicit_map(const Vec& mean, const Mat& cov, const Vec& gamma);

/// Draws gamma ~ N(0, I) and applies implicit_map.
Vec implicit_sample(const Vec& mean, const Mat& cov, std::mt19937_64& rng);

/// log N(x; mean, cov).
double gaussian_log_density(const Vec& x, const Vec& mean, const Mat& cov);

/// log N(x; mean, L L') for a lower-triangular factor L.
double gaussian_log_density_factored(const Vec& x, const Vec& mean, const Mat& L);

}  // namespace nashmodes

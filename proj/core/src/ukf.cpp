#include "nashmodes/ukf.hpp"

#include <cmath>
#include <numbers>

#include "nashmodes/errors.hpp"

namespace nashmodes {

void validate(const UkfConfig& cfg) {
  if (!(cfg.alpha > 0 && cfg.alpha <= 1)) throw ConfigError("UKF alpha must lie in (0, 1]");
  if (!(cfg.jitter >= 0)) throw ConfigError("UKF jitter must be non-negative");
  if (!std::isfinite(cfg.beta) || !std::isfinite(cfg.kappa)) throw ConfigError("UKF parameters must be finite");
}

Mat robust_cholesky(const Mat& cov, double jitter) {
  const Eigen::Index n = cov.rows();
  if (!cov.allFinite()) throw NumericError("covariance has non-finite entries");
  Mat sym = 0.5 * (cov + cov.transpose());
  Eigen::LLT<Mat> llt(sym);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  const double scale = std::max(1.0, sym.diagonal().cwiseAbs().maxCoeff());
  double eps = std::max(jitter, 1e-14) * scale;
  for (int attempt = 0; attempt < 12; ++attempt, eps *= 10) {
    llt.compute(sym + eps * Mat::Identity(n, n));
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericError("covariance square root failed after jitter escalation");
}

UnscentedMoments ukf_moments(const Vec& mean, const Mat& cov, const std::function<Vec(const VecView&)>& map,
                             const Mat& noise_cov, const UkfConfig& cfg) {
  return ukf_moments_factored(mean, robust_cholesky(cov, cfg.jitter), map, noise_cov, cfg);
}

UnscentedMoments ukf_moments_factored(const Vec& mean, const Mat& root,
                                      const std::function<Vec(const VecView&)>& map, const Mat& noise_cov,
                                      const UkfConfig& cfg) {
  const int L = static_cast<int>(mean.size());
  const double lambda = cfg.alpha * cfg.alpha * (L + cfg.kappa) - L;
  const double spread = L + lambda;
  if (!(spread > 0)) throw NumericError("UKF scaling L + lambda must be positive");

  const double wm0 = lambda / spread;
  const double wc0 = wm0 + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
  const double wi = 0.5 / spread;

  const Mat S = root * std::sqrt(spread);

  const int count = 2 * L + 1;
  Mat X(L, count);
  X.col(0) = mean;
  for (int i = 0; i < L; ++i) {
    X.col(1 + i) = mean + S.col(i);
    X.col(1 + L + i) = mean - S.col(i);
  }
  Vec first = map(X.col(0));
  Mat Y(first.size(), count);
  Y.col(0) = std::move(first);
  for (int i = 1; i < count; ++i) Y.col(i) = map(X.col(i));
  if (!Y.allFinite()) throw NumericError("UKF map produced a non-finite sigma image");

  Vec weights = Vec::Constant(count, wi);
  weights[0] = wm0;
  Vec y_mean = Y * weights;

  weights[0] = wc0;
  Y.colwise() -= y_mean;
  X.colwise() -= mean;
  const Mat Yw = Y * weights.asDiagonal();
  Mat y_cov = noise_cov;
  y_cov.noalias() += Yw * Y.transpose();
  Mat cross = X * Yw.transpose();
  return {std::move(y_mean), 0.5 * (y_cov + y_cov.transpose()), std::move(cross)};
}

Mat floor_covariance(const Mat& cov, double floor) {
  Mat sym = 0.5 * (cov + cov.transpose());
  // Cheap test first: a successful factorization of sym - floor I bounds the spectrum from below.
  Mat shifted = sym;
  shifted.diagonal().array() -= floor;
  if (Eigen::LLT<Mat>(shifted).info() == Eigen::Success) return sym;
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  if (es.eigenvalues().minCoeff() >= floor) return sym;
  const Vec ev = es.eigenvalues().cwiseMax(floor);
  Mat out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

LocalGaussian ukf_step(const Particle& particle, const VirtualModel& vm, const Vec& target, bool terminal,
                       const UkfConfig& cfg) {
  const PotentialProblem& pp = *vm.problem;
  const int n = vm.state_dim();
  const int m = vm.input_dim();
  const int c = vm.constraint_dim();
  const int L = n + m;
  const int count = 2 * L + 1;
  const double lambda = cfg.alpha * cfg.alpha * (L + cfg.kappa) - L;
  const double spread = L + lambda;
  if (!(spread > 0)) throw NumericError("UKF scaling L + lambda must be positive");
  Vec wm = Vec::Constant(count, 0.5 / spread);
  Vec wc = wm;
  wm[0] = lambda / spread;
  wc[0] = wm[0] + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);

  auto sigma_points = [&](const Vec& mean, const Mat& root) {
    const Mat S = root * std::sqrt(spread);
    Mat X(L, count);
    X.col(0) = mean;
    for (int i = 0; i < L; ++i) {
      X.col(1 + i) = mean + S.col(i);
      X.col(1 + L + i) = mean - S.col(i);
    }
    return X;
  };

  // Prediction. The control block of the virtual transition is identically zero, so only
  // the state block passes through the sigma points.
  const Mat root = particle.root.size() > 0 ? particle.root : robust_cholesky(particle.cov, cfg.jitter);
  const Mat Xp = sigma_points(particle.path.back(), root);
  Mat Yf(n, count);
  for (int i = 0; i < count; ++i) Yf.col(i) = pp.dynamics->step(Xp.col(i).head(n), Xp.col(i).tail(m), pp.dt);
  if (!Yf.allFinite()) throw NumericError("UKF map produced a non-finite sigma image");
  const Vec mf = Yf * wm;
  Yf.colwise() -= mf;
  Mat predicted = vm.Rbar;
  predicted.topLeftCorner(n, n).noalias() += (Yf * wc.asDiagonal()) * Yf.transpose();
  predicted.topLeftCorner(n, n).diagonal().array() += cfg.jitter;

  LocalGaussian out;
  out.predicted_mean = Vec::Zero(L);
  out.predicted_mean.head(n) = mf;
  out.predicted_cov = floor_covariance(predicted, cfg.jitter);
  out.predicted_root = robust_cholesky(out.predicted_cov, cfg.jitter);

  // Measurement update. The state block of the virtual measurement is the identity, whose
  // unscented moments are exact; only the barrier block needs the sigma points.
  const Mat& P = out.predicted_cov;
  const Mat& noise = terminal ? vm.Qbar_tau : vm.Qbar;
  Mat Smat = noise;
  Smat.topLeftCorner(n, n) += P.topLeftCorner(n, n);
  Mat C(L, n + c);
  C.leftCols(n) = P.leftCols(n);
  Vec y_mean(n + c);
  y_mean.head(n) = out.predicted_mean.head(n);
  if (c > 0) {
    Mat Xm = sigma_points(out.predicted_mean, out.predicted_root);
    Mat Yg(c, count);
    for (int i = 0; i < count; ++i)
      Yg.col(i) = softplus_barrier(pp.constraints->eval(Xm.col(i).head(n), Xm.col(i).tail(m)), vm.barrier.alpha);
    if (!Yg.allFinite()) throw NumericError("UKF map produced a non-finite sigma image");
    const Vec mg = Yg * wm;
    Yg.colwise() -= mg;
    Xm.colwise() -= out.predicted_mean;
    const Mat Ygw = Yg * wc.asDiagonal();
    const Mat cross_g = Xm * Ygw.transpose();
    C.rightCols(c) = cross_g;
    Smat.topRightCorner(n, c) += cross_g.topRows(n);
    Smat.bottomLeftCorner(c, n) += cross_g.topRows(n).transpose();
    Smat.bottomRightCorner(c, c).noalias() += Ygw * Yg.transpose();
    y_mean.tail(c) = mg;
  }

  Eigen::LLT<Mat> s_llt(0.5 * (Smat + Smat.transpose()));
  if (s_llt.info() != Eigen::Success) throw NumericError("innovation covariance is not positive definite");
  // K = C S^-1
  const Mat gain = s_llt.solve(C.transpose()).transpose();

  out.mean = out.predicted_mean + gain * (target - y_mean);
  out.cov = floor_covariance(P - gain * C.transpose(), cfg.jitter);
  out.root = robust_cholesky(out.cov, 0.0);
  return out;
}

Vec implicit_map(const Vec& mean, const Mat& cov, const Vec& gamma) {
  return mean + robust_cholesky(cov, 0.0) * gamma;
}

Vec implicit_sample(const Vec& mean, const Mat& cov, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec gamma(mean.size());
  for (Eigen::Index k = 0; k < gamma.size(); ++k) gamma[k] = normal(rng);
  return implicit_map(mean, cov, gamma);
}

double gaussian_log_density(const Vec& x, const Vec& mean, const Mat& cov) {
  return gaussian_log_density_factored(x, mean, robust_cholesky(cov, 0.0));
}

double gaussian_log_density_factored(const Vec& x, const Vec& mean, const Mat& L) {
  const Vec z = L.triangularView<Eigen::Lower>().solve(x - mean);
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  return -0.5 * (z.squaredNorm() + log_det + static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi));
}

}  // namespace nashmodes

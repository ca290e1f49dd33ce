#pragma once
// Quantile maps, inverses, likelihoods and calibrated confidence sets on top
// of a trained potential network.
//
// Forward:  Q(u; x) = exp_u(-grad_u phi(u; x)).
// Inverse:  Q^{-1}(y; x) starts from the soft barycentric pullback
// exp_y(-grad_y psi(y; x)), psi the soft c-transform of phi over the frozen
// evaluation bank, then solves Q(u) = y by Gauss-Newton so the composition
// is the identity to solver precision.
//
// The density of Y = Q(U), U uniform, follows from the inverse change of
// variables: p(y) = |det dQ^{-1}(y)| / vol(M), with the differential taken
// between tangent frames and estimated by central differences.
//
// Confidence sets are geodesic balls in the quantile domain: C(tau) =
// Q(B(pole, kappa(tau))). kappa(tau) comes from the radius CDF of a uniform
// sample around the pole, tabulated once by Monte Carlo (the manifolds are
// homogeneous, so the table does not depend on the pole).

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mvqr/checkpoint.hpp"
#include "mvqr/error.hpp"
#include "mvqr/manifold.hpp"
#include "mvqr/potential.hpp"
#include "mvqr/rng.hpp"
#include "mvqr/solver.hpp"

namespace mvqr {

struct QuantileModel {
  PotentialNetwork net;
  std::vector<Point> bank;  // frozen conjugation bank
  double gamma_conjugate = 0.1;

  Manifold manifold() const { return net.manifold; }
};

inline QuantileModel make_model(const TrainResult& r) {
  if (r.eval_bank.empty()) throw EmptySampleSet("make_model: empty bank");
  return QuantileModel{r.net, r.eval_bank, r.gamma_conjugate};
}

inline QuantileModel make_model(const Checkpoint& ck) {
  if (ck.eval_bank.empty()) throw EmptySampleSet("make_model: empty bank");
  return QuantileModel{ck.net, ck.eval_bank, ck.gamma_conjugate};
}

inline Point quantile_map(const QuantileModel& m, const Point& u,
                          const Eigen::VectorXd& x) {
  Tangent g = grad_u(m.net, u, x);
  for (double& c : g) c = -c;
  return exp_map(m.net.manifold, u, g);
}

inline Point quantile_map(const QuantileModel& m, const Point& u) {
  return quantile_map(m, u, Eigen::VectorXd());
}

// Inverse map evaluator for one conditioning covariate. Bank potentials are
// precomputed so each inverse costs one cost sweep over the bank.
class InverseEvaluator {
 public:
  InverseEvaluator(const QuantileModel& m, const Eigen::VectorXd& x)
      : model_(&m), x_(x), phi_bank_(m.bank.size()) {
    if (m.bank.empty()) throw EmptySampleSet("InverseEvaluator: empty bank");
    if (x.size() != m.net.covariate_dim)
      throw DimensionMismatch("InverseEvaluator: covariate size mismatch");
    std::vector<double> fw{1.0};
    if (m.net.covariate_dim > 0) {
      GCache gc;
      g_forward(m.net, x, gc);
      feature_weights(m.net, gc, fw);
    }
    parallel_for(m.bank.size(), [&](std::size_t i) {
      PointCache local;
      beta_features(m.net, m.bank[i], local);
      double v = 0.0;
      for (std::size_t f = 0; f < fw.size(); ++f) v += fw[f] * local.feat[f];
      phi_bank_[i] = v;
    });
  }

  explicit InverseEvaluator(const QuantileModel& m)
      : InverseEvaluator(m, Eigen::VectorXd()) {}

  // Q^{-1}(y): soft barycentric pullback through the c-transform gradient,
  // refined by Gauss-Newton on Q(u) = y. The pullback alone carries a bias
  // on the order of the conjugation temperature; the refinement removes it,
  // so forward and inverse compose to the identity wherever the map is
  // locally invertible.
  Point operator()(const Point& y) const {
    const Manifold mf = model_->manifold();
    const std::size_t T = model_->bank.size();
    scratch_.resize(T);
    for (std::size_t i = 0; i < T; ++i)
      scratch_[i] = cost(mf, model_->bank[i], y) - phi_bank_[i];
    softmin_weights(scratch_, model_->gamma_conjugate, weights_);
    Tangent step{0.0, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < T; ++i) {
      if (weights_[i] < kWeightCut) continue;
      Tangent l = log_map(mf, y, model_->bank[i]);
      for (int c = 0; c < 4; ++c) step[static_cast<std::size_t>(c)] += weights_[i] * l[static_cast<std::size_t>(c)];
    }
    Point u = exp_map(mf, y, step);

    // Residual log_y Q(u) in the frame at y; finite-difference Jacobian over
    // the frame at u; backtracked steps, capped at half a radian.
    const int d = intrinsic_dim(mf);
    const std::vector<Tangent> fy = tangent_frame(mf, y);
    auto resid = [&](const Point& z, Eigen::VectorXd& r) {
      Tangent l = log_map(mf, y, quantile_map(*model_, z, x_));
      for (int i = 0; i < d; ++i) {
        double s = 0.0;
        for (int c = 0; c < 4; ++c)
          s += l[static_cast<std::size_t>(c)] *
               fy[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
        r(i) = s;
      }
      return r.norm();
    };
    const double fd = 1e-5;
    Eigen::VectorXd r0(d), rs(d), delta(d);
    Eigen::MatrixXd jac(d, d);
    double rn = resid(u, r0);
    for (int it = 0; it < 12 && rn > 1e-11; ++it) {
      const std::vector<Tangent> fu = tangent_frame(mf, u);
      for (int j = 0; j < d; ++j) {
        Tangent dz{0.0, 0.0, 0.0, 0.0};
        for (int c = 0; c < 4; ++c)
          dz[static_cast<std::size_t>(c)] =
              fd * fu[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
        resid(exp_map(mf, u, dz), rs);
        jac.col(j) = (rs - r0) / fd;
      }
      delta = jac.colPivHouseholderQr().solve(-r0);
      double dn = delta.norm();
      if (!std::isfinite(dn) || dn == 0.0) break;
      if (dn > 0.5) delta *= 0.5 / dn;
      bool moved = false;
      double s = 1.0;
      for (int bt = 0; bt < 5; ++bt, s *= 0.5) {
        Tangent dz{0.0, 0.0, 0.0, 0.0};
        for (int c = 0; c < 4; ++c) {
          double v = 0.0;
          for (int j = 0; j < d; ++j)
            v += delta(j) * fu[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
          dz[static_cast<std::size_t>(c)] = s * v;
        }
        Point cand = exp_map(mf, u, dz);
        double cn = resid(cand, rs);
        // demand a real decrease: accepting rounding-level improvements lets
        // the iteration random-walk on flat residuals
        if (cn + 1e-13 < rn) {
          u = cand;
          r0 = rs;
          rn = cn;
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    return u;
  }

  // psi(y) = softmin_i [ c(u_i, y) - phi_i ]
  double psi(const Point& y) const {
    const Manifold mf = model_->manifold();
    const std::size_t T = model_->bank.size();
    scratch_.resize(T);
    for (std::size_t i = 0; i < T; ++i)
      scratch_[i] = cost(mf, model_->bank[i], y) - phi_bank_[i];
    return softmin(scratch_, model_->gamma_conjugate);
  }

  const std::vector<double>& phi_bank() const { return phi_bank_; }

 private:
  const QuantileModel* model_;
  Eigen::VectorXd x_;
  std::vector<double> phi_bank_;
  mutable std::vector<double> scratch_, weights_;
};

// ---------------------------------------------------------------------------
// Likelihood

constexpr double kJacobianStep = 1e-4;
constexpr double kDetFloor = 1e-12;

// det of the differential of Q^{-1} at y, in tangent frames at y and at
// Q^{-1}(y); central differences with geodesic steps.
inline double inverse_jacobian_det(const QuantileModel& m,
                                   const InverseEvaluator& inv, const Point& y,
                                   double h = kJacobianStep) {
  const Manifold mf = m.manifold();
  const int d = intrinsic_dim(mf);
  Point base = inv(y);
  auto frame_y = tangent_frame(mf, y);
  auto frame_b = tangent_frame(mf, base);
  double J[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  for (int b = 0; b < d; ++b) {
    Tangent step;
    for (int c = 0; c < 4; ++c) step[static_cast<std::size_t>(c)] = h * frame_y[static_cast<std::size_t>(b)][static_cast<std::size_t>(c)];
    Point yp = exp_map(mf, y, step);
    for (int c = 0; c < 4; ++c) step[static_cast<std::size_t>(c)] = -step[static_cast<std::size_t>(c)];
    Point ym = exp_map(mf, y, step);
    Tangent lp = log_map(mf, base, inv(yp));
    Tangent lm = log_map(mf, base, inv(ym));
    for (int a = 0; a < d; ++a) {
      double num = 0.0;
      for (int c = 0; c < 4; ++c)
        num += (lp[static_cast<std::size_t>(c)] - lm[static_cast<std::size_t>(c)]) * frame_b[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)];
      J[a][b] = num / (2.0 * h);
    }
  }
  if (d == 1) return J[0][0];
  return J[0][0] * J[1][1] - J[0][1] * J[1][0];
}

// p(y | x) = |det dQ^{-1}(y)| / vol(M)
inline double density(const QuantileModel& m, const InverseEvaluator& inv,
                      const Point& y) {
  return std::abs(inverse_jacobian_det(m, inv, y)) / volume(m.manifold());
}

inline double log_density(const QuantileModel& m, const InverseEvaluator& inv,
                          const Point& y) {
  double det = std::abs(inverse_jacobian_det(m, inv, y));
  if (det < kDetFloor) throw ZeroDensity("log_density: vanishing jacobian");
  return std::log(det) - std::log(volume(m.manifold()));
}

// ---------------------------------------------------------------------------
// Calibration of geodesic-ball confidence sets

struct Calibration {
  std::vector<double> kappa;     // knots, ascending, kappa[0] = 0
  std::vector<double> coverage;  // radius CDF at the knots, monotone
};

// Maximal geodesic radius from any point (diameter of the manifold).
inline double max_radius(Manifold m) {
  switch (m) {
    case Manifold::S1:
    case Manifold::S2:
      return kPi;
    case Manifold::T2:
      return kPi * std::sqrt(2.0);
  }
  throw Error("max_radius: bad manifold");
}

// Radius CDF of a uniform point around a pole, by Monte Carlo. The manifolds
// are homogeneous, so the result is pole-independent; a pole argument is
// still taken to keep call sites explicit.
inline Calibration calibrate(Manifold m, const Point& pole, int mc_samples,
                             int knots, std::uint64_t seed) {
  if (mc_samples <= 0 || knots < 2) throw DimensionMismatch("calibrate: bad sizes");
  Rng rng(seed, stream::kCalibration);
  std::vector<double> r(static_cast<std::size_t>(mc_samples));
  for (double& v : r) v = distance(m, pole, random_point(m, rng));
  std::sort(r.begin(), r.end());
  Calibration cal;
  double rmax = max_radius(m);
  cal.kappa.resize(static_cast<std::size_t>(knots));
  cal.coverage.resize(static_cast<std::size_t>(knots));
  for (int k = 0; k < knots; ++k) {
    double kap = rmax * static_cast<double>(k) / static_cast<double>(knots - 1);
    // P(r <= kap) by binary search over the sorted sample
    std::size_t cnt = static_cast<std::size_t>(
        std::upper_bound(r.begin(), r.end(), kap) - r.begin());
    cal.kappa[static_cast<std::size_t>(k)] = kap;
    cal.coverage[static_cast<std::size_t>(k)] =
        static_cast<double>(cnt) / static_cast<double>(mc_samples);
  }
  cal.coverage.front() = 0.0;
  cal.coverage.back() = 1.0;
  return cal;
}

// kappa(tau): linear interpolation of the inverse radius CDF.
inline double kappa_for(const Calibration& cal, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0))
    throw RadiusOutOfRange("kappa_for: tau outside [0, 1]");
  const auto& cov = cal.coverage;
  auto it = std::lower_bound(cov.begin(), cov.end(), tau);
  if (it == cov.begin()) return cal.kappa.front();
  if (it == cov.end()) return cal.kappa.back();
  std::size_t hi = static_cast<std::size_t>(it - cov.begin());
  std::size_t lo = hi - 1;
  double c0 = cov[lo], c1 = cov[hi];
  double t = c1 > c0 ? (tau - c0) / (c1 - c0) : 0.0;
  return cal.kappa[lo] + t * (cal.kappa[hi] - cal.kappa[lo]);
}

// y is covered at radius kappa iff its rank point lies in the pole ball.
inline bool covers(const InverseEvaluator& inv, const QuantileModel& m,
                   const Point& y, const Point& pole, double kappa) {
  return distance(m.manifold(), inv(y), pole) <= kappa;
}

// Boundary curve of the confidence set: the image of the pole ball's
// boundary circle. Requires kappa <= pi so all factor geodesics stay
// injective; on S1 the "circle" degenerates to the two ball endpoints.
inline std::vector<Point> contour(const QuantileModel& m,
                                  const Eigen::VectorXd& x, const Point& pole,
                                  double kappa, int segments = 256) {
  if (!(kappa > 0.0) || kappa > kPi)
    throw RadiusOutOfRange("contour: need 0 < kappa <= pi");
  const Manifold mf = m.manifold();
  auto frame = tangent_frame(mf, pole);
  std::vector<Point> out;
  if (intrinsic_dim(mf) == 1) {
    for (double s : {1.0, -1.0}) {
      Tangent t;
      for (int c = 0; c < 4; ++c) t[static_cast<std::size_t>(c)] = s * kappa * frame[0][static_cast<std::size_t>(c)];
      out.push_back(quantile_map(m, exp_map(mf, pole, t), x));
    }
    return out;
  }
  out.reserve(static_cast<std::size_t>(segments));
  for (int s = 0; s < segments; ++s) {
    double th = 2.0 * kPi * static_cast<double>(s) / static_cast<double>(segments);
    Tangent t;
    for (int c = 0; c < 4; ++c)
      t[static_cast<std::size_t>(c)] = kappa * (std::cos(th) * frame[0][static_cast<std::size_t>(c)] +
                                                std::sin(th) * frame[1][static_cast<std::size_t>(c)]);
    out.push_back(quantile_map(m, exp_map(mf, pole, t), x));
  }
  return out;
}

inline std::vector<Point> contour(const QuantileModel& m, const Point& pole,
                                  double kappa, int segments = 256) {
  return contour(m, Eigen::VectorXd(), pole, kappa, segments);
}

// Uniform-rank sampling: y = Q(u), u uniform.
inline std::vector<Point> sample_model(const QuantileModel& m,
                                       const Eigen::VectorXd& x, int n,
                                       std::uint64_t seed) {
  Rng rng(seed, stream::kSample);
  std::vector<Point> out(static_cast<std::size_t>(n));
  for (Point& p : out) p = quantile_map(m, random_point(m.manifold(), rng), x);
  return out;
}

inline std::vector<Point> sample_model(const QuantileModel& m, int n,
                                       std::uint64_t seed) {
  return sample_model(m, Eigen::VectorXd(), n, seed);
}

}  // namespace mvqr

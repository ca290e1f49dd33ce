#pragma once
// Riemannian primitives for the supported manifolds:
//
//   S1  unit circle, embedded in R^2
//   S2  unit sphere, embedded in R^3
//   T2  flat torus S1 x S1, embedded in R^4 as two unit 2-vectors
//
// Points and tangent vectors are fixed 4-slot arrays in ambient coordinates;
// slots beyond ambient_dim() are zero. Tangents are anchored: a Tangent is
// only meaningful together with the point it was computed at.
//
// The torus metric is the product metric, so squared distances add over the
// two circle factors and exp/log act factorwise.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mvqr/error.hpp"
#include "mvqr/rng.hpp"

namespace mvqr {

enum class Manifold { S1, S2, T2 };

using Point = std::array<double, 4>;
using Tangent = std::array<double, 4>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// A tangent norm below this makes exp return the anchor exactly.
inline constexpr double kExpZeroTol = 1e-14;
// Factor distances above pi minus this make log throw AntipodalPoint.
inline constexpr double kAntipodalTol = 1e-8;

constexpr int ambient_dim(Manifold m) {
  return m == Manifold::S1 ? 2 : (m == Manifold::S2 ? 3 : 4);
}

constexpr int intrinsic_dim(Manifold m) { return m == Manifold::S1 ? 1 : 2; }

// Riemannian volume: 2*pi, 4*pi, 4*pi^2.
inline double volume(Manifold m) {
  switch (m) {
    case Manifold::S1: return 2.0 * kPi;
    case Manifold::S2: return 4.0 * kPi;
    default: return 4.0 * kPi * kPi;
  }
}

inline Manifold manifold_from_name(const std::string& name) {
  if (name == "s1") return Manifold::S1;
  if (name == "s2") return Manifold::S2;
  if (name == "t2") return Manifold::T2;
  throw ParseError("unknown manifold name: " + name);
}

inline const char* manifold_name(Manifold m) {
  switch (m) {
    case Manifold::S1: return "s1";
    case Manifold::S2: return "s2";
    default: return "t2";
  }
}

namespace geo_detail {

inline double dot(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const double* a, int n) { return std::sqrt(dot(a, a, n)); }

inline double clamp1(double t) { return t < -1.0 ? -1.0 : (t > 1.0 ? 1.0 : t); }

// Geodesic distance on the unit (n-1)-sphere.
inline double sphere_distance(const double* u, const double* v, int n) {
  return std::acos(clamp1(dot(u, v, n)));
}

// exp_y(v) for tangent v at y; assumes <y, v> ~ 0. Returns y exactly when
// ||v|| < kExpZeroTol; otherwise the result is renormalized.
inline void sphere_exp(const double* y, const double* v, int n, double* out) {
  double nv = norm(v, n);
  if (nv < kExpZeroTol) {
    for (int i = 0; i < n; ++i) out[i] = y[i];
    return;
  }
  double c = std::cos(nv), s = std::sin(nv) / nv;
  for (int i = 0; i < n; ++i) out[i] = c * y[i] + s * v[i];
  double r = norm(out, n);
  for (int i = 0; i < n; ++i) out[i] /= r;
}

// log_y(z); throws AntipodalPoint when d(y, z) > pi - kAntipodalTol.
inline void sphere_log(const double* y, const double* z, int n, double* out) {
  double t = clamp1(dot(y, z, n));
  double d = std::acos(t);
  if (d > kPi - kAntipodalTol)
    throw AntipodalPoint("log map undefined near the antipode");
  if (d < kExpZeroTol) {
    for (int i = 0; i < n; ++i) out[i] = 0.0;
    return;
  }
  double w = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = z[i] - t * y[i];
    w += out[i] * out[i];
  }
  w = std::sqrt(w);
  for (int i = 0; i < n; ++i) out[i] *= d / w;
}

struct Factors {
  int count;
  int dim;  // ambient dim per factor
};

inline Factors factors(Manifold m) {
  switch (m) {
    case Manifold::S1: return {1, 2};
    case Manifold::S2: return {1, 3};
    default: return {2, 2};
  }
}

}  // namespace geo_detail

inline double distance(Manifold m, const Point& u, const Point& v) {
  auto f = geo_detail::factors(m);
  if (f.count == 1) return geo_detail::sphere_distance(u.data(), v.data(), f.dim);
  double s = 0.0;
  for (int k = 0; k < f.count; ++k) {
    double d = geo_detail::sphere_distance(u.data() + k * f.dim, v.data() + k * f.dim, f.dim);
    s += d * d;
  }
  return std::sqrt(s);
}

// Transport cost c(u, v) = d(u, v)^2 / 2.
inline double cost(Manifold m, const Point& u, const Point& v) {
  auto f = geo_detail::factors(m);
  double s = 0.0;
  for (int k = 0; k < f.count; ++k) {
    double d = geo_detail::sphere_distance(u.data() + k * f.dim, v.data() + k * f.dim, f.dim);
    s += d * d;
  }
  return 0.5 * s;
}

inline Point exp_map(Manifold m, const Point& y, const Tangent& v) {
  Point out{0.0, 0.0, 0.0, 0.0};
  auto f = geo_detail::factors(m);
  for (int k = 0; k < f.count; ++k)
    geo_detail::sphere_exp(y.data() + k * f.dim, v.data() + k * f.dim, f.dim, out.data() + k * f.dim);
  return out;
}

inline Tangent log_map(Manifold m, const Point& y, const Point& z) {
  Tangent out{0.0, 0.0, 0.0, 0.0};
  auto f = geo_detail::factors(m);
  for (int k = 0; k < f.count; ++k)
    geo_detail::sphere_log(y.data() + k * f.dim, z.data() + k * f.dim, f.dim, out.data() + k * f.dim);
  return out;
}

// Gradient of u -> c(u, v) at u, a tangent at u: equals -log_u(v).
inline Tangent cost_grad(Manifold m, const Point& u, const Point& v) {
  Tangent g = log_map(m, u, v);
  for (double& x : g) x = -x;
  return g;
}

// Nearest-point projection onto the manifold (factorwise normalization).
inline Point project(Manifold m, const Point& p) {
  Point out{0.0, 0.0, 0.0, 0.0};
  auto f = geo_detail::factors(m);
  for (int k = 0; k < f.count; ++k) {
    double r = geo_detail::norm(p.data() + k * f.dim, f.dim);
    if (r < 1e-12) throw Error("project: factor norm too small");
    for (int i = 0; i < f.dim; ++i) out[k * f.dim + i] = p[k * f.dim + i] / r;
  }
  return out;
}

// Orthonormal tangent frame at y, intrinsic_dim() vectors. The construction
// is deterministic: S1/T2 frames rotate each circle factor a quarter turn;
// the S2 frame seeds Gram-Schmidt with the coordinate axis least aligned
// with y.
inline std::vector<Tangent> tangent_frame(Manifold m, const Point& y) {
  std::vector<Tangent> frame;
  switch (m) {
    case Manifold::S1:
      frame.push_back({-y[1], y[0], 0.0, 0.0});
      break;
    case Manifold::S2: {
      int k = 0;
      for (int i = 1; i < 3; ++i)
        if (std::abs(y[i]) < std::abs(y[k])) k = i;
      Tangent e1{0.0, 0.0, 0.0, 0.0};
      e1[k] = 1.0;
      double t = y[k];
      for (int i = 0; i < 3; ++i) e1[i] -= t * y[i];
      double r = geo_detail::norm(e1.data(), 3);
      for (int i = 0; i < 3; ++i) e1[i] /= r;
      Tangent e2{y[1] * e1[2] - y[2] * e1[1], y[2] * e1[0] - y[0] * e1[2],
                 y[0] * e1[1] - y[1] * e1[0], 0.0};
      frame.push_back(e1);
      frame.push_back(e2);
      break;
    }
    default:
      frame.push_back({-y[1], y[0], 0.0, 0.0});
      frame.push_back({0.0, 0.0, -y[3], y[2]});
      break;
  }
  return frame;
}

// Uniform sample: factorwise normalized Gaussians.
inline Point random_point(Manifold m, Rng& rng) {
  Point p{0.0, 0.0, 0.0, 0.0};
  auto f = geo_detail::factors(m);
  for (int k = 0; k < f.count; ++k) {
    double r = 0.0;
    while (r < 1e-12) {
      for (int i = 0; i < f.dim; ++i) p[k * f.dim + i] = rng.normal();
      r = geo_detail::norm(p.data() + k * f.dim, f.dim);
    }
    for (int i = 0; i < f.dim; ++i) p[k * f.dim + i] /= r;
  }
  return p;
}

// Angle parameterizations. S1 takes one angle; T2 takes two (radians).
inline Point s1_from_angle(double a) { return {std::cos(a), std::sin(a), 0.0, 0.0}; }

inline Point t2_from_angles(double a, double b) {
  return {std::cos(a), std::sin(a), std::cos(b), std::sin(b)};
}

// Spherical parameterization of S2: colatitude theta in [0, pi], azimuth phi.
inline Point s2_from_spherical(double theta, double phi) {
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
          std::cos(theta), 0.0};
}

inline std::array<double, 2> t2_angles(const Point& p) {
  return {std::atan2(p[1], p[0]), std::atan2(p[3], p[2])};
}

inline double s1_angle(const Point& p) { return std::atan2(p[1], p[0]); }

// Frechet mean by Riemannian gradient descent with unit step: the iterate
// moves to exp(mean of logs) until the mean log norm drops below tol.
// Initialized at the projected extrinsic mean (first point if degenerate).
// Spread-out clouds have nearly flat energy, so the gradient decays slowly;
// the iteration cap is sized for them.
inline Point frechet_mean(Manifold m, const std::vector<Point>& pts,
                          int max_iter = 1000, double tol = 1e-10) {
  if (pts.empty()) throw EmptySampleSet("frechet_mean: no points");
  Point est{0.0, 0.0, 0.0, 0.0};
  for (const Point& p : pts)
    for (int i = 0; i < 4; ++i) est[i] += p[i];
  for (int i = 0; i < 4; ++i) est[i] /= static_cast<double>(pts.size());
  try {
    est = project(m, est);
  } catch (const Error&) {
    est = pts.front();
  }
  int d = ambient_dim(m);
  for (int it = 0; it < max_iter; ++it) {
    Tangent g{0.0, 0.0, 0.0, 0.0};
    for (const Point& p : pts) {
      Tangent l = log_map(m, est, p);
      for (int i = 0; i < d; ++i) g[i] += l[i];
    }
    for (int i = 0; i < d; ++i) g[i] /= static_cast<double>(pts.size());
    if (geo_detail::norm(g.data(), d) < tol) return est;
    est = exp_map(m, est, g);
  }
  throw NoConvergence("frechet_mean: no convergence");
}

}  // namespace mvqr

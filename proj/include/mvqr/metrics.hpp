#pragma once
// Evaluation metrics: fixed quadrature grids, kernel density estimates,
// L1 density distance, effective sample size, and a small CSV report writer.

#include <cmath>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mvqr/data.hpp"
#include "mvqr/error.hpp"
#include "mvqr/manifold.hpp"
#include "mvqr/parallel.hpp"

namespace mvqr {

constexpr double kKdeKappa = 50.0;

// Equal-weight quadrature nodes: node_weight * sum f(p) integrates f.
struct EvalGrid {
  std::vector<Point> points;
  double node_weight = 0.0;
};

// S1: uniform angles; S2: Fibonacci lattice; T2: square angle grid.
inline EvalGrid eval_grid(Manifold m, int n) {
  if (n < 4) throw DimensionMismatch("eval_grid: too few nodes");
  EvalGrid g;
  switch (m) {
    case Manifold::S1: {
      g.points.reserve(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i)
        g.points.push_back(s1_from_angle(-kPi + 2.0 * kPi * (i + 0.5) / n));
      break;
    }
    case Manifold::S2: {
      g.points.reserve(static_cast<std::size_t>(n));
      const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
      for (int i = 0; i < n; ++i) {
        double z = 1.0 - 2.0 * (i + 0.5) / n;
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        double th = 2.0 * kPi * static_cast<double>(i) / golden;
        g.points.push_back(Point{r * std::cos(th), r * std::sin(th), z, 0.0});
      }
      break;
    }
    case Manifold::T2: {
      int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
      if (k * k != n) throw DimensionMismatch("eval_grid: torus size must be square");
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b)
          g.points.push_back(t2_from_angles(-kPi + 2.0 * kPi * (a + 0.5) / k,
                                            -kPi + 2.0 * kPi * (b + 0.5) / k));
      break;
    }
  }
  g.node_weight = volume(m) / static_cast<double>(g.points.size());
  return g;
}

// KDE with a fixed concentration: vMF kernels on S2, von Mises on S1,
// product von Mises on T2.
inline double kde_density(Manifold m, std::span<const Point> samples,
                          const Point& y, double kappa = kKdeKappa) {
  if (samples.empty()) throw EmptySampleSet("kde_density: no samples");
  double s = 0.0;
  switch (m) {
    case Manifold::S1: {
      double th = s1_angle(y);
      for (const Point& p : samples) s += vm_angle_density(s1_angle(p), kappa, th);
      break;
    }
    case Manifold::S2: {
      for (const Point& p : samples) s += vmf_s2_density(p, kappa, y);
      break;
    }
    case Manifold::T2: {
      auto a = t2_angles(y);
      for (const Point& p : samples) {
        auto mu = t2_angles(p);
        s += vm_angle_density(mu[0], kappa, a[0]) * vm_angle_density(mu[1], kappa, a[1]);
      }
      break;
    }
  }
  return s / static_cast<double>(samples.size());
}

// integral |kde(samples) - reference| over the grid
inline double kde_l1(Manifold m, std::span<const Point> samples,
                     const std::function<double(const Point&)>& reference,
                     const EvalGrid& grid, double kappa = kKdeKappa) {
  std::vector<double> absdiff(grid.points.size());
  parallel_for(grid.points.size(), [&](std::size_t i) {
    absdiff[i] = std::abs(kde_density(m, samples, grid.points[i], kappa) -
                          reference(grid.points[i]));
  });
  double s = 0.0;
  for (double v : absdiff) s += v;
  return s * grid.node_weight;
}

// L1 distance between the KDEs of two samples on the grid
inline double kde_l1_samples(Manifold m, std::span<const Point> a,
                             std::span<const Point> b, const EvalGrid& grid,
                             double kappa = kKdeKappa) {
  std::vector<double> absdiff(grid.points.size());
  parallel_for(grid.points.size(), [&](std::size_t i) {
    absdiff[i] = std::abs(kde_density(m, a, grid.points[i], kappa) -
                          kde_density(m, b, grid.points[i], kappa));
  });
  double s = 0.0;
  for (double v : absdiff) s += v;
  return s * grid.node_weight;
}

// effective sample size of importance weights, in percent of n
inline double ess_percent(std::span<const double> weights) {
  if (weights.empty()) throw EmptySampleSet("ess_percent: no weights");
  double s = 0.0, s2 = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw Error("ess_percent: weights must be finite and nonnegative");
    s += w;
    s2 += w * w;
  }
  if (s2 == 0.0) return 0.0;
  return 100.0 * s * s / (static_cast<double>(weights.size()) * s2);
}

// ---------------------------------------------------------------------------
// Report rows

struct MetricRow {
  std::string metric;
  std::string conditioning;  // e.g. "x=1.25" or "-"
  double value = 0.0;
  double stderr_ = 0.0;
  std::string params;  // free-form "k=v;k=v"
};

inline void write_metrics_csv(const std::vector<MetricRow>& rows,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out.precision(12);
  out << "metric,conditioning,value,stderr,params\n";
  for (const MetricRow& r : rows)
    out << r.metric << "," << r.conditioning << "," << r.value << ","
        << r.stderr_ << "," << r.params << "\n";
}

}  // namespace mvqr

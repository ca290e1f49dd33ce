#pragma once
// c-concave potential networks.
//
// The building block is a discrete c-concave function
//
//   phi(u) = softmin_m [ c(z_m, u) + alpha_m ],
//
// with trainable support points z_m on the manifold and offsets alpha_m.
// Layered potentials interleave discrete blocks with a clipped convex
// mixture that preserves c-concavity:
//
//   beta_1 = phi_1,   beta_l = (1 - w_l) phi_l + w_l min(0, beta_{l-1}),
//
// where each mixer weight w_l = sigmoid(mix_raw_{l-1}) is stored
// unconstrained. A covariate-dependent potential combines one bias potential
// with stacks of layered potentials contracted against the hidden activations
// of a small ReLU network on the covariate:
//
//   phi(u; x) = beta_0(u) + sum_i beta_i(u)^T h_i,   h_i = relu(W_i h_{i-1} + b_i).
//
// With covariate_dim == 0 the network degenerates to beta_0 alone; the
// unconditional estimator is exactly that code path.
//
// All gradients here are hand-rolled reverse mode. Parameter gradients are
// accumulated into a flat vector whose layout (ParamLayout) is also the
// checkpoint serialization order. Support-point gradients are tangent at
// their own anchors; the optimizer treats ambient coordinates as flat and
// reprojects afterwards.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvqr/error.hpp"
#include "mvqr/manifold.hpp"
#include "mvqr/rng.hpp"

namespace mvqr {

// Softmin weights below this are treated as exact zeros in backward passes.
inline constexpr double kWeightCut = 1e-12;

// softmin_gamma(a) = -gamma * log sum_i exp(-a_i / gamma), evaluated with a
// max shift. Tends to min(a) as gamma -> 0. gamma == 0 gives the hard min.
inline double softmin(std::span<const double> a, double gamma) {
  if (a.empty()) throw EmptyBatch("softmin: empty input");
  double lo = a[0];
  for (double v : a)
    if (v < lo) lo = v;
  if (gamma <= 0.0) return lo;
  double s = 0.0;
  for (double v : a) s += std::exp((lo - v) / gamma);
  return lo - gamma * std::log(s);
}

// Gradient of softmin: softmax of -a / gamma. For gamma == 0 puts mass 1 on
// the first argmin.
inline void softmin_weights(std::span<const double> a, double gamma,
                            std::vector<double>& w) {
  if (a.empty()) throw EmptyBatch("softmin_weights: empty input");
  w.assign(a.size(), 0.0);
  std::size_t lo = 0;
  for (std::size_t i = 1; i < a.size(); ++i)
    if (a[i] < a[lo]) lo = i;
  if (gamma <= 0.0) {
    w[lo] = 1.0;
    return;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    w[i] = std::exp((a[lo] - a[i]) / gamma);
    s += w[i];
  }
  for (double& v : w) v /= s;
}

// ---------------------------------------------------------------------------
// Discrete c-concave block

struct DiscreteCConcave {
  Manifold manifold = Manifold::S2;
  std::vector<Point> support;   // M anchor points
  std::vector<double> values;   // alpha offsets, size M
  double gamma = 0.1;           // softmin temperature, > 0
};

struct DiscreteCache {
  std::vector<double> a;  // c(z_m, u) + alpha_m
};

inline double eval(const DiscreteCConcave& d, const Point& u, DiscreteCache& cache) {
  const std::size_t m = d.support.size();
  if (m == 0) throw EmptyBatch("discrete potential without support points");
  cache.a.resize(m);
  for (std::size_t i = 0; i < m; ++i)
    cache.a[i] = cost(d.manifold, d.support[i], u) + d.values[i];
  return softmin(cache.a, d.gamma);
}

inline double eval(const DiscreteCConcave& d, const Point& u) {
  DiscreteCache c;
  return eval(d, u, c);
}

// ---------------------------------------------------------------------------
// Layered potential

struct LayeredCConcave {
  std::vector<DiscreteCConcave> layers;  // L >= 1 blocks
  std::vector<double> mix_raw;           // L - 1 unconstrained mixer weights
};

struct LayeredCache {
  std::vector<DiscreteCache> layer;
  std::vector<double> phi;   // per-layer discrete values
  std::vector<double> beta;  // mixture recursion values
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double eval(const LayeredCConcave& f, const Point& u, LayeredCache& cache) {
  const std::size_t L = f.layers.size();
  if (L == 0) throw EmptyBatch("layered potential without layers");
  if (f.mix_raw.size() + 1 != L)
    throw DimensionMismatch("layered potential: mixer count must be layers - 1");
  cache.layer.resize(L);
  cache.phi.resize(L);
  cache.beta.resize(L);
  for (std::size_t l = 0; l < L; ++l)
    cache.phi[l] = eval(f.layers[l], u, cache.layer[l]);
  cache.beta[0] = cache.phi[0];
  for (std::size_t l = 1; l < L; ++l) {
    double w = sigmoid(f.mix_raw[l - 1]);
    double clipped = std::min(0.0, cache.beta[l - 1]);
    cache.beta[l] = (1.0 - w) * cache.phi[l] + w * clipped;
  }
  return cache.beta[L - 1];
}

inline double eval(const LayeredCConcave& f, const Point& u) {
  LayeredCache c;
  return eval(f, u, c);
}

// ---------------------------------------------------------------------------
// Covariate network

struct DenseLayer {
  Eigen::MatrixXd w;
  Eigen::VectorXd b;
};

struct PotentialNetwork {
  Manifold manifold = Manifold::S2;
  int covariate_dim = 0;                             // k, 0 = unconditional
  LayeredCConcave beta0;                             // bias potential
  std::vector<std::vector<LayeredCConcave>> stacks;  // stage i: width k_i
  std::vector<DenseLayer> g;                         // W_i: k_i x k_{i-1}

  // 1 + sum of stack widths.
  int feature_count() const {
    int n = 1;
    for (const auto& s : stacks) n += static_cast<int>(s.size());
    return n;
  }
};

struct ModelShape {
  int support_points = 64;        // M per discrete block
  int layers = 1;                 // L per layered potential
  std::vector<int> stack_widths;  // hidden widths k_1..k_n (empty: unconditional)
  double gamma = 0.1;             // potential temperature
};

// Fresh network with uniform random support, zero offsets, neutral mixers and
// Glorot-uniform dense layers. Fully determined by (shape, seed).
inline PotentialNetwork make_network(Manifold m, const ModelShape& shape,
                                     int covariate_dim, Rng& rng) {
  if (shape.support_points <= 0 || shape.layers <= 0)
    throw DimensionMismatch("network shape: need positive sizes");
  if (covariate_dim == 0 && !shape.stack_widths.empty())
    throw DimensionMismatch("stack widths given but covariate_dim is 0");
  if (covariate_dim > 0 && shape.stack_widths.empty())
    throw DimensionMismatch("covariate_dim > 0 needs stack widths");
  PotentialNetwork net;
  net.manifold = m;
  net.covariate_dim = covariate_dim;
  auto make_layered = [&] {
    LayeredCConcave f;
    for (int l = 0; l < shape.layers; ++l) {
      DiscreteCConcave d;
      d.manifold = m;
      d.gamma = shape.gamma;
      for (int i = 0; i < shape.support_points; ++i)
        d.support.push_back(random_point(m, rng));
      d.values.assign(shape.support_points, 0.0);
      f.layers.push_back(std::move(d));
    }
    f.mix_raw.assign(shape.layers - 1, 0.0);
    return f;
  };
  net.beta0 = make_layered();
  int prev = covariate_dim;
  for (int width : shape.stack_widths) {
    if (width <= 0) throw DimensionMismatch("stack width must be positive");
    std::vector<LayeredCConcave> stage;
    for (int c = 0; c < width; ++c) stage.push_back(make_layered());
    net.stacks.push_back(std::move(stage));
    DenseLayer lin;
    lin.w.resize(width, prev);
    lin.b = Eigen::VectorXd::Zero(width);
    double s = std::sqrt(6.0 / static_cast<double>(width + prev));
    for (int r = 0; r < lin.w.rows(); ++r)
      for (int c = 0; c < lin.w.cols(); ++c) lin.w(r, c) = rng.uniform(-s, s);
    net.g.push_back(std::move(lin));
    prev = width;
  }
  return net;
}

// Overwrites every potential value and layer mixer with uniform draws in
// [-scale, scale]. Support points and dense layers keep their construction.
// Produces a deliberately non-c-concave starting network for ablation runs.
inline void randomize_values(PotentialNetwork& net, double scale, Rng& rng) {
  auto scramble = [&](LayeredCConcave& f) {
    for (DiscreteCConcave& d : f.layers)
      for (double& v : d.values) v = rng.uniform(-scale, scale);
    for (double& w : f.mix_raw) w = rng.uniform(-scale, scale);
  };
  scramble(net.beta0);
  for (auto& stage : net.stacks)
    for (LayeredCConcave& f : stage) scramble(f);
}

// ---------------------------------------------------------------------------
// Flat parameter layout (also the checkpoint serialization order):
// beta0 first, then each stack stage in order, each component in order (per
// layered block: layer 0 support row-major, layer 0 alpha, layer 1 support,
// ..., then mixers), then each dense layer (W row-major, then b).

struct ParamBlock {
  std::string name;
  std::size_t offset;
  std::size_t size;
};

struct ParamLayout {
  std::vector<ParamBlock> blocks;
  std::size_t total = 0;

  void add(const std::string& name, std::size_t size) {
    blocks.push_back({name, total, size});
    total += size;
  }
};

namespace pot_detail {

inline void layout_layered(ParamLayout& lay, const LayeredCConcave& f,
                           const std::string& prefix, int ambient) {
  for (std::size_t l = 0; l < f.layers.size(); ++l) {
    std::string base = prefix + ".layer" + std::to_string(l);
    lay.add(base + ".z", f.layers[l].support.size() * static_cast<std::size_t>(ambient));
    lay.add(base + ".alpha", f.layers[l].values.size());
  }
  if (!f.mix_raw.empty()) lay.add(prefix + ".mix", f.mix_raw.size());
}

}  // namespace pot_detail

inline ParamLayout make_layout(const PotentialNetwork& net) {
  ParamLayout lay;
  int ambient = ambient_dim(net.manifold);
  pot_detail::layout_layered(lay, net.beta0, "beta0", ambient);
  for (std::size_t s = 0; s < net.stacks.size(); ++s)
    for (std::size_t c = 0; c < net.stacks[s].size(); ++c)
      pot_detail::layout_layered(
          lay, net.stacks[s][c],
          "stack" + std::to_string(s + 1) + ".f" + std::to_string(c), ambient);
  for (std::size_t i = 0; i < net.g.size(); ++i) {
    lay.add("g" + std::to_string(i + 1) + ".w",
            static_cast<std::size_t>(net.g[i].w.size()));
    lay.add("g" + std::to_string(i + 1) + ".b",
            static_cast<std::size_t>(net.g[i].b.size()));
  }
  return lay;
}

namespace pot_detail {

inline double* pack_layered(const LayeredCConcave& f, int ambient, double* out) {
  for (const DiscreteCConcave& d : f.layers) {
    for (const Point& z : d.support)
      for (int i = 0; i < ambient; ++i) *out++ = z[i];
    for (double a : d.values) *out++ = a;
  }
  for (double m : f.mix_raw) *out++ = m;
  return out;
}

inline const double* unpack_layered(LayeredCConcave& f, int ambient, const double* in) {
  for (DiscreteCConcave& d : f.layers) {
    for (Point& z : d.support) {
      z = {0.0, 0.0, 0.0, 0.0};
      for (int i = 0; i < ambient; ++i) z[i] = *in++;
    }
    for (double& a : d.values) a = *in++;
  }
  for (double& m : f.mix_raw) m = *in++;
  return in;
}

}  // namespace pot_detail

inline void pack_params(const PotentialNetwork& net, std::vector<double>& out) {
  ParamLayout lay = make_layout(net);
  out.resize(lay.total);
  double* p = out.data();
  int ambient = ambient_dim(net.manifold);
  p = pot_detail::pack_layered(net.beta0, ambient, p);
  for (const auto& stage : net.stacks)
    for (const auto& f : stage) p = pot_detail::pack_layered(f, ambient, p);
  for (const DenseLayer& lin : net.g) {
    for (int r = 0; r < lin.w.rows(); ++r)
      for (int c = 0; c < lin.w.cols(); ++c) *p++ = lin.w(r, c);
    for (int i = 0; i < lin.b.size(); ++i) *p++ = lin.b(i);
  }
}

inline void unpack_params(PotentialNetwork& net, std::span<const double> in) {
  ParamLayout lay = make_layout(net);
  if (in.size() != lay.total)
    throw DimensionMismatch("unpack_params: size mismatch");
  const double* p = in.data();
  int ambient = ambient_dim(net.manifold);
  p = pot_detail::unpack_layered(net.beta0, ambient, p);
  for (auto& stage : net.stacks)
    for (auto& f : stage) p = pot_detail::unpack_layered(f, ambient, p);
  for (DenseLayer& lin : net.g) {
    for (int r = 0; r < lin.w.rows(); ++r)
      for (int c = 0; c < lin.w.cols(); ++c) lin.w(r, c) = *p++;
    for (int i = 0; i < lin.b.size(); ++i) lin.b(i) = *p++;
  }
}

// Snap every support point back onto the manifold.
inline void reproject_support(PotentialNetwork& net) {
  auto fix = [&](LayeredCConcave& f) {
    for (DiscreteCConcave& d : f.layers)
      for (Point& z : d.support) z = project(net.manifold, z);
  };
  fix(net.beta0);
  for (auto& stage : net.stacks)
    for (auto& f : stage) fix(f);
}

// ---------------------------------------------------------------------------
// Forward caches for full-network evaluation

// All beta features (bias + stacks, feature_count entries) at one point.
struct PointCache {
  std::vector<LayeredCache> fn;
  std::vector<double> feat;
};

inline void beta_features(const PotentialNetwork& net, const Point& u,
                          PointCache& cache) {
  int n = net.feature_count();
  cache.fn.resize(n);
  cache.feat.resize(n);
  cache.feat[0] = eval(net.beta0, u, cache.fn[0]);
  int idx = 1;
  for (const auto& stage : net.stacks)
    for (const auto& f : stage) {
      cache.feat[idx] = eval(f, u, cache.fn[idx]);
      ++idx;
    }
}

// ReLU network forward; weights(0) is the fixed 1 multiplying beta0.
struct GCache {
  std::vector<Eigen::VectorXd> s;  // pre-activations per stage
  std::vector<Eigen::VectorXd> h;  // h[0] = x, then activations
};

inline void g_forward(const PotentialNetwork& net, const Eigen::VectorXd& x,
                      GCache& cache) {
  if (x.size() != net.covariate_dim)
    throw DimensionMismatch("g_forward: covariate size mismatch");
  cache.h.assign(1, x);
  cache.s.clear();
  for (const DenseLayer& lin : net.g) {
    Eigen::VectorXd s = lin.w * cache.h.back() + lin.b;
    cache.s.push_back(s);
    cache.h.push_back(s.cwiseMax(0.0));
  }
}

// Feature weights (1, h_1, ..., h_n) flattened to feature_count entries.
inline void feature_weights(const PotentialNetwork& net, const GCache& cache,
                            std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(net.feature_count()), 0.0);
  out[0] = 1.0;
  std::size_t idx = 1;
  for (std::size_t i = 1; i < cache.h.size(); ++i)
    for (int c = 0; c < cache.h[i].size(); ++c) out[idx++] = cache.h[i](c);
}

inline double phi(const PotentialNetwork& net, const Point& u,
                  const Eigen::VectorXd& x) {
  if (x.size() != net.covariate_dim)
    throw DimensionMismatch("phi: covariate size mismatch");
  PointCache pc;
  beta_features(net, u, pc);
  if (net.covariate_dim == 0) return pc.feat[0];
  GCache gc;
  g_forward(net, x, gc);
  std::vector<double> fw;
  feature_weights(net, gc, fw);
  double v = 0.0;
  for (std::size_t i = 0; i < fw.size(); ++i) v += fw[i] * pc.feat[i];
  return v;
}

inline double phi(const PotentialNetwork& net, const Point& u) {
  if (net.covariate_dim != 0)
    throw DimensionMismatch("conditional potential needs a covariate");
  PointCache pc;
  beta_features(net, u, pc);
  return pc.feat[0];
}

// ---------------------------------------------------------------------------
// Backward passes

namespace pot_detail {

// d/dz and d/du of c(z, u) restricted to one sphere factor, recomputed from
// the endpoints (caches store only costs, which lose the per-factor split on
// the torus).
inline void accum_cost_grads(Manifold m, const Point& z, const Point& u,
                             double coeff, double* dz, Tangent* du) {
  auto f = geo_detail::factors(m);
  for (int k = 0; k < f.count; ++k) {
    const double* zf = z.data() + k * f.dim;
    const double* uf = u.data() + k * f.dim;
    double t = geo_detail::clamp1(geo_detail::dot(zf, uf, f.dim));
    double d = std::acos(t);
    if (d > kPi - kAntipodalTol)
      throw AntipodalPoint("potential backward: support point antipodal to input");
    if (d < kExpZeroTol) continue;
    // grad_z c = -log_z(u) = -d * (u - t z) / |u - t z|; likewise for u.
    double nz = 0.0, nu = 0.0;
    double pz[3], pu[3];
    for (int i = 0; i < f.dim; ++i) {
      pz[i] = uf[i] - t * zf[i];
      pu[i] = zf[i] - t * uf[i];
      nz += pz[i] * pz[i];
      nu += pu[i] * pu[i];
    }
    nz = std::sqrt(nz);
    nu = std::sqrt(nu);
    if (dz)
      for (int i = 0; i < f.dim; ++i) dz[k * f.dim + i] += coeff * (-d * pz[i] / nz);
    if (du)
      for (int i = 0; i < f.dim; ++i) (*du)[k * f.dim + i] += coeff * (-d * pu[i] / nu);
  }
}

// Backward through one discrete block. grads points at the block's flat
// parameter slice (support coords then alphas) or is null; du accumulates the
// input gradient when non-null.
inline void discrete_backward(const DiscreteCConcave& d, const Point& u,
                              const DiscreteCache& cache, double coeff,
                              double* grads, Tangent* du,
                              std::vector<double>& wbuf) {
  if (coeff == 0.0) return;
  softmin_weights(cache.a, d.gamma, wbuf);
  const int ambient = ambient_dim(d.manifold);
  const std::size_t m = d.support.size();
  for (std::size_t i = 0; i < m; ++i) {
    double w = wbuf[i];
    if (w < kWeightCut) continue;
    double cw = coeff * w;
    double* dz = nullptr;
    if (grads) {
      grads[m * static_cast<std::size_t>(ambient) + i] += cw;  // alpha
      dz = grads + i * static_cast<std::size_t>(ambient);
    }
    if (dz || du) accum_cost_grads(d.manifold, d.support[i], u, cw, dz, du);
  }
}

// Backward through a layered block; grads points at the block's flat slice.
inline void layered_backward(const LayeredCConcave& f, const Point& u,
                             const LayeredCache& cache, double coeff,
                             double* grads, Tangent* du,
                             std::vector<double>& wbuf) {
  const std::size_t L = f.layers.size();
  const int ambient = ambient_dim(f.layers[0].manifold);
  if (L + 1 > 16) throw DimensionMismatch("layered potential too deep");
  // per-layer slice offsets
  std::size_t off[16] = {0};
  for (std::size_t l = 0; l < L; ++l) {
    std::size_t m = f.layers[l].support.size();
    off[l + 1] = off[l] + m * static_cast<std::size_t>(ambient) + m;
  }
  double up = coeff;
  for (std::size_t l = L; l-- > 1;) {
    if (up == 0.0) return;  // nothing below can contribute
    double w = sigmoid(f.mix_raw[l - 1]);
    double clipped = std::min(0.0, cache.beta[l - 1]);
    if (grads) {
      double sp = w * (1.0 - w);
      grads[off[L] + (l - 1)] += up * sp * (clipped - cache.phi[l]);
    }
    discrete_backward(f.layers[l], u, cache.layer[l], up * (1.0 - w),
                      grads ? grads + off[l] : nullptr, du, wbuf);
    up *= w * (cache.beta[l - 1] < 0.0 ? 1.0 : 0.0);
  }
  discrete_backward(f.layers[0], u, cache.layer[0], up,
                    grads ? grads + off[0] : nullptr, du, wbuf);
}

}  // namespace pot_detail

// Scratch holder so hot loops reuse allocations.
struct BackwardScratch {
  std::vector<double> w;
};

// Accumulates coeffs[c] * d(beta_c(u))/d(theta) over all beta features into
// the flat gradient vector (when grads != nullptr), and coeffs[c] *
// grad_u beta_c(u) into *du (when du != nullptr). The cache must come from
// beta_features at the same point with the same parameters.
inline void beta_backward(const PotentialNetwork& net, const Point& u,
                          const PointCache& cache, std::span<const double> coeffs,
                          double* grads, Tangent* du, BackwardScratch& scratch) {
  if (coeffs.size() != static_cast<std::size_t>(net.feature_count()))
    throw DimensionMismatch("beta_backward: coefficient count mismatch");
  int ambient = ambient_dim(net.manifold);
  auto block_size = [&](const LayeredCConcave& f) {
    std::size_t s = 0;
    for (const auto& d : f.layers)
      s += d.support.size() * static_cast<std::size_t>(ambient) + d.values.size();
    return s + f.mix_raw.size();
  };
  std::size_t off = 0;
  int idx = 0;
  auto run = [&](const LayeredCConcave& f) {
    if (std::abs(coeffs[idx]) > 0.0)
      pot_detail::layered_backward(f, u, cache.fn[idx], coeffs[idx],
                                   grads ? grads + off : nullptr, du, scratch.w);
    off += block_size(f);
    ++idx;
  };
  run(net.beta0);
  for (const auto& stage : net.stacks)
    for (const auto& f : stage) run(f);
}

// Backward through the covariate network: upstream[c] is dLoss/d(feature
// weight c) (entry 0, the fixed 1, is ignored). Accumulates into the dense
// layer slice of the flat gradient vector.
inline void g_backward(const PotentialNetwork& net, const GCache& cache,
                       std::span<const double> upstream, double* grads) {
  if (net.g.empty()) return;
  // r: dLoss/dh_i, walked backwards.
  std::size_t nstages = net.g.size();
  std::vector<Eigen::VectorXd> r(nstages);
  std::size_t idx = 1;
  for (std::size_t i = 0; i < nstages; ++i) {
    r[i].resize(net.g[i].b.size());
    for (int c = 0; c < r[i].size(); ++c) r[i](c) = upstream[idx++];
  }
  // flat offsets of the dense slices
  std::size_t off = 0;
  {
    ParamLayout lay = make_layout(net);
    for (const ParamBlock& b : lay.blocks)
      if (b.name == "g1.w") {
        off = b.offset;
        break;
      }
  }
  for (std::size_t i = nstages; i-- > 0;) {
    Eigen::VectorXd mask = (cache.s[i].array() > 0.0).cast<double>();
    Eigen::VectorXd delta = r[i].cwiseProduct(mask);
    if (i > 0) r[i - 1] += net.g[i].w.transpose() * delta;
  }
  // second pass to write gradients in layout order
  double* p = grads + off;
  std::vector<Eigen::VectorXd> delta(nstages);
  for (std::size_t i = 0; i < nstages; ++i) {
    Eigen::VectorXd mask = (cache.s[i].array() > 0.0).cast<double>();
    delta[i] = r[i].cwiseProduct(mask);
  }
  for (std::size_t i = 0; i < nstages; ++i) {
    const Eigen::VectorXd& hin = cache.h[i];
    for (int rr = 0; rr < net.g[i].w.rows(); ++rr)
      for (int cc = 0; cc < net.g[i].w.cols(); ++cc)
        *p++ += delta[i](rr) * hin(cc);
    for (int rr = 0; rr < net.g[i].b.size(); ++rr) *p++ += delta[i](rr);
  }
}

// Full-network parameter gradient of phi(u; x), plus the input gradient.
// Reference path for tests and small-scale use; the trainer drives the
// batched primitives directly.
inline double phi_with_grads(const PotentialNetwork& net, const Point& u,
                             const Eigen::VectorXd& x, std::vector<double>& grads,
                             Tangent* du = nullptr) {
  ParamLayout lay = make_layout(net);
  grads.assign(lay.total, 0.0);
  PointCache pc;
  beta_features(net, u, pc);
  BackwardScratch scratch;
  if (du) *du = Tangent{0.0, 0.0, 0.0, 0.0};
  if (net.covariate_dim == 0) {
    std::vector<double> ones{1.0};
    beta_backward(net, u, pc, ones, grads.data(), du, scratch);
    return pc.feat[0];
  }
  GCache gc;
  g_forward(net, x, gc);
  std::vector<double> fw;
  feature_weights(net, gc, fw);
  beta_backward(net, u, pc, fw, grads.data(), du, scratch);
  // dLoss/d(feature weight c) = beta_c(u)
  g_backward(net, gc, pc.feat, grads.data());
  double v = 0.0;
  for (std::size_t i = 0; i < fw.size(); ++i) v += fw[i] * pc.feat[i];
  return v;
}

// grad_u phi(u; x) as a tangent at u.
inline Tangent grad_u(const PotentialNetwork& net, const Point& u,
                      const Eigen::VectorXd& x) {
  PointCache pc;
  beta_features(net, u, pc);
  std::vector<double> fw{1.0};
  if (net.covariate_dim != 0) {
    GCache gc;
    g_forward(net, x, gc);
    feature_weights(net, gc, fw);
  }
  Tangent du{0.0, 0.0, 0.0, 0.0};
  BackwardScratch scratch;
  beta_backward(net, u, pc, fw, nullptr, &du, scratch);
  return du;
}

inline Tangent grad_u(const PotentialNetwork& net, const Point& u) {
  return grad_u(net, u, Eigen::VectorXd());
}

// ---------------------------------------------------------------------------
// Soft c-transform over a sampled bank
//
//   psi(y) = softmin_i [ c(u_i, y) - phi_i ],
//
// with phi_i the potential values on the bank. gamma == 0 gives the hard
// transform.

inline double c_transform(Manifold m, std::span<const Point> bank,
                          std::span<const double> phi_bank, const Point& y,
                          double gamma, std::vector<double>& abuf) {
  if (bank.size() != phi_bank.size())
    throw DimensionMismatch("c_transform: bank/value size mismatch");
  if (bank.empty()) throw EmptyBatch("c_transform: empty bank");
  abuf.resize(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i)
    abuf[i] = cost(m, bank[i], y) - phi_bank[i];
  return softmin(abuf, gamma);
}

inline double c_transform(Manifold m, std::span<const Point> bank,
                          std::span<const double> phi_bank, const Point& y,
                          double gamma) {
  std::vector<double> abuf;
  return c_transform(m, bank, phi_bank, y, gamma, abuf);
}

// Gradient of the soft c-transform in y: sum_i w_i * grad_y c(u_i, y).
inline Tangent c_transform_grad(Manifold m, std::span<const Point> bank,
                                std::span<const double> phi_bank, const Point& y,
                                double gamma, std::vector<double>& abuf,
                                std::vector<double>& wbuf) {
  abuf.resize(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i)
    abuf[i] = cost(m, bank[i], y) - phi_bank[i];
  softmin_weights(abuf, gamma, wbuf);
  Tangent g{0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < bank.size(); ++i) {
    if (wbuf[i] < kWeightCut) continue;
    pot_detail::accum_cost_grads(m, bank[i], y, wbuf[i], nullptr, &g);
  }
  return g;
}

// Double conjugate of the bank values through the bank itself:
// phi_cc_i = softmin_j [ C_ij - psi_j ],  psi_j = softmin_i [ C_ij - phi_i ].
// costs is the dense T x T bank self-cost matrix, row-major.
inline void double_conjugate(std::span<const double> costs,
                             std::span<const double> phi_bank, double gamma,
                             std::vector<double>& psi, std::vector<double>& phi_cc) {
  const std::size_t n = phi_bank.size();
  if (costs.size() != n * n) throw DimensionMismatch("double_conjugate: bad cost matrix");
  psi.resize(n);
  phi_cc.resize(n);
  std::vector<double> buf(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = costs[i * n + j] - phi_bank[i];
    psi[j] = softmin(buf, gamma);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) buf[j] = costs[i * n + j] - psi[j];
    phi_cc[i] = softmin(buf, gamma);
  }
}

}  // namespace mvqr

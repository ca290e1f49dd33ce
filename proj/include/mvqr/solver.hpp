#pragma once
// Relaxed-dual training of c-concave potential networks.
//
// The estimator maximizes the entropic semi-dual objective over a uniform
// reference bank u_1..u_T (resampled every resample_every iterations) and a
// data minibatch y_1..y_B with covariates x_j:
//
//   dual      = (1/(T B)) sum_ij phi(u_i; x_j)
//   conjugate = (1/B) sum_j softmin_i [ c(u_i, y_j) - phi(u_i; x_j) ]
//   loss      = -(dual + conjugate) + lambda * sum_a |phi^cc - phi|(pair a)
//
// where the involution term is an unnormalized sum over P subsampled bank
// points (each paired with one minibatch covariate when conditional); the
// double soft c-transform runs over the subsampled bank only. The sum keeps
// lambda on the scale the penalty was tuned at; LossTerms::involution
// reports the per-pair mean as a comparable error metric. With
// covariate_dim == 0 the same code path sheds the j-averaging (phi does not
// depend on j) and is the unconditional estimator.
//
// Gradients flow through a batched reverse pass: every (i, j) pair
// contributes a scalar coefficient A_ij to d loss / d phi_ij; the
// coefficients are contracted once against the feature weights to give one
// weighted backward pass per bank point and per covariate.
//
// Identity pretraining minimizes mean ||grad_u phi||^2, whose parameter
// gradient is obtained without second derivatives by differencing two
// first-order parameter-gradient passes along the detached input gradient.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvqr/data.hpp"
#include "mvqr/error.hpp"
#include "mvqr/manifold.hpp"
#include "mvqr/parallel.hpp"
#include "mvqr/potential.hpp"
#include "mvqr/rng.hpp"

namespace mvqr {

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct Adam {
  AdamConfig cfg;
  std::vector<double> m, v;
  long t = 0;

  explicit Adam(std::size_t n, AdamConfig c = {}) : cfg(c), m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grads) {
    if (params.size() != m.size() || grads.size() != m.size())
      throw DimensionMismatch("adam: size mismatch");
    ++t;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
      double mh = m[i] / bc1, vh = v[i] / bc2;
      params[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
};

// ---------------------------------------------------------------------------
// Loss engine

struct LossTerms {
  double loss = 0.0;
  double dual = 0.0;
  double conjugate = 0.0;
  double involution = 0.0;  // mean per-pair |phi^cc - phi| (metric, not the loss term)
};

// One evaluation of the batched objective. Covariates are required exactly
// when the network is conditional; inv_bank selects the involution
// subsample (bank indices) and inv_cov pairs one batch covariate with each
// of them (conditional networks only, same length as inv_bank).
struct LossInputs {
  std::span<const Point> bank;
  std::span<const Point> ys;
  std::span<const std::vector<double>> xs;  // empty when covariate_dim == 0
  std::span<const std::size_t> inv_bank;
  std::span<const std::size_t> inv_cov;     // ignored when covariate_dim == 0
  const double* slab = nullptr;  // optional bank x ys cost matrix, row-major
  double gamma_c = 0.1;
  double lambda = 0.0;
};

struct LossWork {
  std::vector<PointCache> bank_cache;
  std::vector<GCache> gcache;
  std::vector<double> B;        // T x F beta features
  std::vector<double> FW;       // B x F feature weights
  std::vector<double> phi_mat;  // T x B (T x 1 unconditional)
  std::vector<double> vcoef;    // T x F backward coefficients
  std::vector<double> scoef;    // B x F dense-stage upstreams
  std::vector<double> abuf, wbuf;
  std::vector<double> inv_cost, w1, w2, sign, tvec, inv_coef;
  BackwardScratch scratch;
};

// Computes the loss terms; accumulates parameter gradients into *grads
// (sized to the layout) when non-null.
inline LossTerms vqr_loss(const PotentialNetwork& net, const LossInputs& in,
                          std::vector<double>* grads, LossWork& work) {
  const std::size_t T = in.bank.size();
  const std::size_t B = in.ys.size();
  const bool cond = net.covariate_dim > 0;
  const std::size_t F = static_cast<std::size_t>(net.feature_count());
  if (T == 0) throw EmptyBatch("vqr_loss: empty bank");
  if (B == 0) throw EmptyBatch("vqr_loss: empty batch");
  if (cond && in.xs.size() != B)
    throw DimensionMismatch("vqr_loss: covariate count mismatch");
  if (!cond && !in.xs.empty())
    throw DimensionMismatch("vqr_loss: covariates passed to unconditional model");

  // forward beta features over the bank
  work.bank_cache.resize(T);
  work.B.resize(T * F);
  parallel_for(T, [&](std::size_t i) {
    beta_features(net, in.bank[i], work.bank_cache[i]);
    for (std::size_t f = 0; f < F; ++f) work.B[i * F + f] = work.bank_cache[i].feat[f];
  });

  // forward feature weights over the batch
  const std::size_t ncols = cond ? B : 1;
  work.FW.assign(ncols * F, 1.0);
  if (cond) {
    work.gcache.resize(B);
    std::vector<double> fw;
    for (std::size_t j = 0; j < B; ++j) {
      Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(
          in.xs[j].data(), static_cast<Eigen::Index>(in.xs[j].size()));
      g_forward(net, x, work.gcache[j]);
      feature_weights(net, work.gcache[j], fw);
      for (std::size_t f = 0; f < F; ++f) work.FW[j * F + f] = fw[f];
    }
  }

  // phi matrix and dual term
  work.phi_mat.resize(T * ncols);
  double dual = 0.0;
  if (!cond) {
    double s = 0.0;
    for (std::size_t i = 0; i < T; ++i) {
      work.phi_mat[i] = work.B[i];  // F == 1
      s += work.phi_mat[i];
    }
    dual = s / static_cast<double>(T);
  } else {
    double s = 0.0;
    for (std::size_t j = 0; j < B; ++j) {
      const double* fw = &work.FW[j * F];
      for (std::size_t i = 0; i < T; ++i) {
        double v = 0.0;
        const double* bi = &work.B[i * F];
        for (std::size_t f = 0; f < F; ++f) v += bi[f] * fw[f];
        work.phi_mat[i * ncols + j] = v;
        s += v;
      }
    }
    dual = s / (static_cast<double>(T) * static_cast<double>(B));
  }

  work.vcoef.assign(T * F, 0.0);
  work.scoef.assign(ncols * F, 0.0);

  // involution penalty: unnormalized sum over the subsampled pairs
  double inv_pen = 0.0;
  const std::size_t P = in.inv_bank.size();
  if (cond && P > 0 && in.inv_cov.size() != P)
    throw DimensionMismatch("vqr_loss: inv_cov must pair 1:1 with inv_bank");
  const std::size_t Q = cond ? P : (P > 0 ? 1 : 0);
  work.inv_coef.assign(P * std::max<std::size_t>(Q, 1), 0.0);
  if (P > 0) {
    work.inv_cost.resize(P * P);
    for (std::size_t a = 0; a < P; ++a)
      for (std::size_t b = 0; b < P; ++b)
        work.inv_cost[a * P + b] =
            cost(net.manifold, in.bank[in.inv_bank[a]], in.bank[in.inv_bank[b]]);
    work.w1.resize(P * P);
    work.w2.resize(P * P);
    work.sign.resize(P);
    work.tvec.resize(P);
    std::vector<double>& col = work.abuf;
    std::vector<double>& wcol = work.wbuf;
    col.resize(P);
    std::vector<double> psi(P);
    if (!cond) {
      auto phi_at = [&](std::size_t a) {
        return work.phi_mat[in.inv_bank[a] * ncols];
      };
      // psi_b = softmin_a (C_ab - phi_a), weights into w1 column b
      for (std::size_t b = 0; b < P; ++b) {
        for (std::size_t a = 0; a < P; ++a) col[a] = work.inv_cost[a * P + b] - phi_at(a);
        psi[b] = softmin(col, in.gamma_c);
        softmin_weights(col, in.gamma_c, wcol);
        for (std::size_t a = 0; a < P; ++a) work.w1[a * P + b] = wcol[a];
      }
      // phi_cc_a = softmin_b (C_ab - psi_b), weights into w2 row a
      for (std::size_t a = 0; a < P; ++a) {
        for (std::size_t b = 0; b < P; ++b) col[b] = work.inv_cost[a * P + b] - psi[b];
        double cc = softmin(col, in.gamma_c);
        softmin_weights(col, in.gamma_c, wcol);
        for (std::size_t b = 0; b < P; ++b) work.w2[a * P + b] = wcol[b];
        double diff = cc - phi_at(a);
        inv_pen += std::abs(diff);
        work.sign[a] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      }
      if (grads && in.lambda != 0.0) {
        // d pen / d phi_k = sum_b t_b w1_kb - sign_k, t_b = sum_a sign_a w2_ab
        for (std::size_t b = 0; b < P; ++b) {
          double t = 0.0;
          for (std::size_t a = 0; a < P; ++a) t += work.sign[a] * work.w2[a * P + b];
          work.tvec[b] = t;
        }
        for (std::size_t k = 0; k < P; ++k) {
          double s = 0.0;
          for (std::size_t b = 0; b < P; ++b) s += work.tvec[b] * work.w1[k * P + b];
          work.inv_coef[k] += in.lambda * (s - work.sign[k]);
        }
      }
    } else {
      // pair q: bank point in.inv_bank[q] with covariate in.inv_cov[q]; the
      // double transform runs at that covariate, only row q contributes
      for (std::size_t q = 0; q < P; ++q) {
        std::size_t jc = in.inv_cov[q];
        auto phi_at = [&](std::size_t a) {
          return work.phi_mat[in.inv_bank[a] * ncols + jc];
        };
        for (std::size_t b = 0; b < P; ++b) {
          for (std::size_t a = 0; a < P; ++a) col[a] = work.inv_cost[a * P + b] - phi_at(a);
          psi[b] = softmin(col, in.gamma_c);
          softmin_weights(col, in.gamma_c, wcol);
          for (std::size_t a = 0; a < P; ++a) work.w1[a * P + b] = wcol[a];
        }
        for (std::size_t b = 0; b < P; ++b) col[b] = work.inv_cost[q * P + b] - psi[b];
        double cc = softmin(col, in.gamma_c);
        double diff = cc - phi_at(q);
        inv_pen += std::abs(diff);
        if (grads && in.lambda != 0.0) {
          softmin_weights(col, in.gamma_c, wcol);  // w2 row q
          double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
          // d|diff|/d phi_k = sgn (sum_b w2_qb w1_kb - [k == q])
          for (std::size_t k = 0; k < P; ++k) {
            double s = 0.0;
            for (std::size_t b = 0; b < P; ++b) s += wcol[b] * work.w1[k * P + b];
            work.inv_coef[k * Q + q] +=
                in.lambda * sgn * (s - (k == q ? 1.0 : 0.0));
          }
        }
      }
    }
  }

  // conjugate term column by column; accumulate backward coefficients
  double conj = 0.0;
  std::vector<double>& a = work.abuf;
  std::vector<double>& w = work.wbuf;
  a.resize(T);
  const double inv_T = 1.0 / static_cast<double>(T);
  const double inv_B = 1.0 / static_cast<double>(B);
  for (std::size_t j = 0; j < B; ++j) {
    std::size_t colidx = cond ? j : 0;
    for (std::size_t i = 0; i < T; ++i) {
      double c = in.slab ? in.slab[i * B + j] : cost(net.manifold, in.bank[i], in.ys[j]);
      a[i] = c - work.phi_mat[i * ncols + colidx];
    }
    conj += softmin(a, in.gamma_c);
    if (!grads) continue;
    softmin_weights(a, in.gamma_c, w);
    const double* fw = &work.FW[colidx * F];
    for (std::size_t i = 0; i < T; ++i) {
      // conjugate part of d loss / d phi_ij; the dual part is added below
      double A = w[i] * inv_B;
      double* vi = &work.vcoef[i * F];
      if (cond) {
        double* sj = &work.scoef[j * F];
        const double* bi = &work.B[i * F];
        for (std::size_t f = 0; f < F; ++f) {
          vi[f] += A * fw[f];
          sj[f] += A * bi[f];
        }
      } else {
        vi[0] += A;
      }
    }
  }
  conj *= inv_B;

  if (grads) {
    // dual-term coefficients
    if (!cond) {
      for (std::size_t i = 0; i < T; ++i) work.vcoef[i * F] -= inv_T;
    } else {
      double c0 = inv_T * inv_B;
      for (std::size_t j = 0; j < B; ++j) {
        const double* fw = &work.FW[j * F];
        double* sj = &work.scoef[j * F];
        for (std::size_t i = 0; i < T; ++i) {
          double* vi = &work.vcoef[i * F];
          const double* bi = &work.B[i * F];
          for (std::size_t f = 0; f < F; ++f) {
            vi[f] -= c0 * fw[f];
            sj[f] -= c0 * bi[f];
          }
        }
      }
    }
    // involution coefficients
    if (P > 0 && in.lambda != 0.0) {
      for (std::size_t k = 0; k < P; ++k) {
        std::size_t i = in.inv_bank[k];
        for (std::size_t q = 0; q < std::max<std::size_t>(Q, 1); ++q) {
          double c = work.inv_coef[k * std::max<std::size_t>(Q, 1) + q];
          if (c == 0.0) continue;
          std::size_t jc = cond ? in.inv_cov[q] : 0;
          const double* fw = &work.FW[jc * F];
          double* vi = &work.vcoef[i * F];
          if (cond) {
            double* sj = &work.scoef[jc * F];
            const double* bi = &work.B[i * F];
            for (std::size_t f = 0; f < F; ++f) {
              vi[f] += c * fw[f];
              sj[f] += c * bi[f];
            }
          } else {
            vi[0] += c;
          }
        }
      }
    }
    // weighted backward passes
    for (std::size_t i = 0; i < T; ++i)
      beta_backward(net, in.bank[i], work.bank_cache[i],
                    std::span<const double>(&work.vcoef[i * F], F), grads->data(),
                    nullptr, work.scratch);
    if (cond)
      for (std::size_t j = 0; j < B; ++j)
        g_backward(net, work.gcache[j],
                   std::span<const double>(&work.scoef[j * F], F), grads->data());
  }

  LossTerms out;
  out.dual = dual;
  out.conjugate = conj;
  out.involution = P > 0 ? inv_pen / static_cast<double>(P) : 0.0;
  out.loss = -(dual + conj) + in.lambda * inv_pen;
  if (!std::isfinite(out.loss)) throw NonFiniteLoss("objective is not finite");
  return out;
}

// ---------------------------------------------------------------------------
// Identity pretraining

// Minimizes mean ||grad_u phi(u; x)||^2 over uniform u so the induced map
// starts near the identity. See the header comment for the differencing
// trick; eps is the geodesic step of the two side evaluations.
inline void identity_pretrain(PotentialNetwork& net, int iterations,
                              const AdamConfig& adam_cfg,
                              std::span<const std::vector<double>> covariates,
                              Rng& rng, int batch_u = 32, int batch_x = 8,
                              double eps = 1e-4) {
  ParamLayout lay = make_layout(net);
  std::vector<double> params, grads, gplus, gminus;
  pack_params(net, params);
  Adam adam(lay.total, adam_cfg);
  const bool cond = net.covariate_dim > 0;
  if (cond && covariates.empty())
    throw EmptyBatch("identity_pretrain: conditional model needs covariates");
  for (int it = 0; it < iterations; ++it) {
    grads.assign(lay.total, 0.0);
    int nx = cond ? batch_x : 1;
    double denom = static_cast<double>(batch_u * nx);
    for (int bx = 0; bx < nx; ++bx) {
      Eigen::VectorXd x;
      if (cond) {
        const auto& raw = covariates[rng.uniform_index(covariates.size())];
        x = Eigen::Map<const Eigen::VectorXd>(raw.data(),
                                              static_cast<Eigen::Index>(raw.size()));
      }
      for (int bu = 0; bu < batch_u; ++bu) {
        Point u = random_point(net.manifold, rng);
        Tangent g = grad_u(net, u, x);
        double n2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + g[3] * g[3];
        double n = std::sqrt(n2);
        if (n < 1e-12) continue;
        Tangent step;
        for (int c = 0; c < 4; ++c) step[c] = g[c] / n * eps;
        Point up = exp_map(net.manifold, u, step);
        for (int c = 0; c < 4; ++c) step[c] = -step[c];
        Point um = exp_map(net.manifold, u, step);
        phi_with_grads(net, up, x, gplus);
        phi_with_grads(net, um, x, gminus);
        double scale = n / eps / denom;
        for (std::size_t p = 0; p < lay.total; ++p)
          grads[p] += scale * (gplus[p] - gminus[p]);
      }
    }
    adam.step(params, grads);
    unpack_params(net, params);
    reproject_support(net);
    pack_params(net, params);
  }
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
  int iterations = 6000;
  double learning_rate = 1e-3;
  double pretrain_lr = 1e-2;
  int bank_size = 1024;       // T
  int batch_cap = 1024;       // minibatch = min(N, batch_cap)
  int resample_every = 100;
  int eval_bank_size = 4096;
  int pretrain_iters = 500;
  double gamma_conjugate = 0.1;
  double lambda_involution = 0.1;
  int involution_points = 32;  // subsampled (u, x) pairs per iteration
  int involution_probe_every = 50;
  double init_value_scale = 0.0;  // >0: scramble potential values at init
  std::uint64_t seed = 0;
};

struct TraceRow {
  int iter;
  double loss, dual, conjugate, involution;
};

struct TrainResult {
  PotentialNetwork net;
  std::vector<Point> eval_bank;
  std::vector<TraceRow> trace;
  double gamma_conjugate = 0.1;
  int step_count = 0;
  double final_loss = 0.0;
};

inline void write_trace_csv(const std::vector<TraceRow>& rows,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out.precision(12);
  out << "iter,loss,dual_term,conjugate_term,involution_error\n";
  for (const TraceRow& r : rows)
    out << r.iter << "," << r.loss << "," << r.dual << "," << r.conjugate << ","
        << r.involution << "\n";
}

using ProgressFn = std::function<void(int, const LossTerms&)>;

inline TrainResult train(const Dataset& data, const ModelShape& shape,
                         const TrainConfig& cfg, ProgressFn progress = nullptr) {
  if (data.size() == 0) throw EmptySampleSet("train: empty dataset");
  const Manifold m = data.manifold;
  const std::size_t N = data.size();
  const std::size_t batch = std::min<std::size_t>(N, static_cast<std::size_t>(cfg.batch_cap));
  const std::size_t T = static_cast<std::size_t>(cfg.bank_size);
  const bool cond = data.covariate_dim > 0;

  Rng init_rng(cfg.seed, stream::kInit);
  TrainResult res;
  res.net = make_network(m, shape, data.covariate_dim, init_rng);
  if (cfg.init_value_scale > 0.0)
    randomize_values(res.net, cfg.init_value_scale, init_rng);
  res.gamma_conjugate = cfg.gamma_conjugate;

  if (cfg.pretrain_iters > 0) {
    AdamConfig ac;
    ac.lr = cfg.pretrain_lr;
    identity_pretrain(res.net, cfg.pretrain_iters, ac, data.covariates, init_rng);
  }

  ParamLayout lay = make_layout(res.net);
  std::vector<double> params, grads(lay.total);
  pack_params(res.net, params);
  Adam adam(lay.total, {cfg.learning_rate, 0.9, 0.999, 1e-8});

  Rng bank_rng(cfg.seed, stream::kBank);
  Rng batch_rng(cfg.seed, stream::kMinibatch);
  Rng probe_rng(cfg.seed, stream::kTest);

  std::vector<Point> bank(T);
  std::vector<double> slab;  // T x batch costs, rebuilt when bank or batch changes
  std::vector<std::size_t> order(N);
  for (std::size_t i = 0; i < N; ++i) order[i] = i;

  LossWork work;
  std::vector<Point> ys(batch);
  std::vector<std::vector<double>> xs(cond ? batch : 0);
  std::vector<std::size_t> inv_bank, inv_cov;
  std::vector<double> probe_psi, probe_cc, probe_costs;
  double last_probe = 0.0;

  // full bank-to-dataset cost slab, sliced per minibatch
  std::vector<double> full_slab;
  auto resample_bank = [&] {
    for (std::size_t i = 0; i < T; ++i) bank[i] = random_point(m, bank_rng);
    full_slab.resize(T * N);
    parallel_for(T, [&](std::size_t i) {
      for (std::size_t j = 0; j < N; ++j)
        full_slab[i * N + j] = cost(m, bank[i], data.points[j]);
    });
  };

  slab.resize(T * batch);
  res.trace.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int it = 0; it < cfg.iterations; ++it) {
    if (it % cfg.resample_every == 0) resample_bank();
    // minibatch: leading block of a partial shuffle
    for (std::size_t k = 0; k < batch; ++k) {
      std::size_t j = k + static_cast<std::size_t>(batch_rng.uniform_index(N - k));
      std::swap(order[k], order[j]);
    }
    for (std::size_t k = 0; k < batch; ++k) {
      std::size_t idx = order[k];
      ys[k] = data.points[idx];
      if (cond) xs[k] = data.covariates[idx];
      for (std::size_t i = 0; i < T; ++i) slab[i * batch + k] = full_slab[i * N + idx];
    }
    // involution subsample: P (u, x) pairs
    std::size_t P = std::min<std::size_t>(static_cast<std::size_t>(cfg.involution_points), T);
    bool probe_iter = cfg.involution_probe_every > 0 &&
                      (it % cfg.involution_probe_every == 0);
    bool want_inv = cfg.lambda_involution != 0.0 || probe_iter;
    inv_bank.clear();
    inv_cov.clear();
    if (want_inv) {
      for (std::size_t k = 0; k < P; ++k)
        inv_bank.push_back(static_cast<std::size_t>(probe_rng.uniform_index(T)));
      if (cond)
        for (std::size_t k = 0; k < P; ++k)
          inv_cov.push_back(static_cast<std::size_t>(probe_rng.uniform_index(batch)));
    }

    LossInputs in;
    in.bank = bank;
    in.ys = ys;
    if (cond) in.xs = xs;
    in.inv_bank = inv_bank;
    in.inv_cov = inv_cov;
    in.slab = slab.data();
    in.gamma_c = cfg.gamma_conjugate;
    in.lambda = cfg.lambda_involution;

    grads.assign(lay.total, 0.0);
    LossTerms terms = vqr_loss(res.net, in, &grads, work);
    if (want_inv) last_probe = terms.involution;

    adam.step(params, grads);
    unpack_params(res.net, params);
    reproject_support(res.net);
    pack_params(res.net, params);

    res.trace.push_back({it, terms.loss, terms.dual, terms.conjugate, last_probe});
    if (progress) progress(it, terms);
  }
  res.step_count = cfg.iterations;
  res.final_loss = res.trace.empty() ? 0.0 : res.trace.back().loss;

  Rng eval_rng(cfg.seed, stream::kEvalBank);
  res.eval_bank.resize(static_cast<std::size_t>(cfg.eval_bank_size));
  for (Point& p : res.eval_bank) p = random_point(m, eval_rng);
  return res;
}

}  // namespace mvqr

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "mvqr/checkpoint.hpp"
#include "mvqr/solver.hpp"

using namespace mvqr;

namespace {

// Jitter the non-support parameters and move support points along random
// tangents so every objective term is active and away from kinks.
void jitter_params(PotentialNetwork& net, Rng& rng) {
  ParamLayout lay = make_layout(net);
  std::vector<double> flat;
  pack_params(net, flat);
  int ambient = ambient_dim(net.manifold);
  int idim = intrinsic_dim(net.manifold);
  for (const ParamBlock& b : lay.blocks) {
    if (b.name.size() >= 2 && b.name.compare(b.name.size() - 2, 2, ".z") == 0) {
      std::size_t npts = b.size / static_cast<std::size_t>(ambient);
      for (std::size_t m = 0; m < npts; ++m) {
        Point z{0.0, 0.0, 0.0, 0.0};
        for (int c = 0; c < ambient; ++c)
          z[static_cast<std::size_t>(c)] = flat[b.offset + m * ambient + c];
        auto frame = tangent_frame(net.manifold, z);
        Tangent step{0.0, 0.0, 0.0, 0.0};
        for (int d = 0; d < idim; ++d) {
          double s = rng.uniform(-0.3, 0.3);
          for (int c = 0; c < 4; ++c) step[static_cast<std::size_t>(c)] += s * frame[static_cast<std::size_t>(d)][static_cast<std::size_t>(c)];
        }
        Point zn = exp_map(net.manifold, z, step);
        for (int c = 0; c < ambient; ++c)
          flat[b.offset + m * ambient + c] = zn[static_cast<std::size_t>(c)];
      }
    } else {
      for (std::size_t i = 0; i < b.size; ++i)
        flat[b.offset + i] += rng.uniform(-0.5, 0.5);
    }
  }
  unpack_params(net, flat);
}

struct FdProblem {
  PotentialNetwork net;
  std::vector<Point> bank, ys;
  std::vector<std::vector<double>> xs;
  std::vector<std::size_t> inv_bank, inv_cov;
  double gamma_c = 0.2, lambda = 0.3;
};

double loss_value(const FdProblem& p, const std::vector<double>& flat) {
  PotentialNetwork net = p.net;
  unpack_params(net, flat);
  LossInputs in;
  in.bank = p.bank;
  in.ys = p.ys;
  if (net.covariate_dim > 0) in.xs = p.xs;
  in.inv_bank = p.inv_bank;
  in.inv_cov = p.inv_cov;
  in.gamma_c = p.gamma_c;
  in.lambda = p.lambda;
  LossWork work;
  return vqr_loss(net, in, nullptr, work).loss;
}

// Central differences; support blocks are stepped along tangent frames and
// compared with the projection of the analytic gradient onto the same
// direction.
void check_loss_grads(const FdProblem& p) {
  ParamLayout lay = make_layout(p.net);
  std::vector<double> flat;
  pack_params(p.net, flat);

  std::vector<double> grads(lay.total, 0.0);
  LossInputs in;
  in.bank = p.bank;
  in.ys = p.ys;
  if (p.net.covariate_dim > 0) in.xs = p.xs;
  in.inv_bank = p.inv_bank;
  in.inv_cov = p.inv_cov;
  in.gamma_c = p.gamma_c;
  in.lambda = p.lambda;
  LossWork work;
  vqr_loss(p.net, in, &grads, work);

  const double h = 1e-5;
  int ambient = ambient_dim(p.net.manifold);
  int idim = intrinsic_dim(p.net.manifold);
  auto check_dir = [&](double fd, double an) {
    REQUIRE(std::abs(fd - an) <= std::max(1e-7, 1e-4 * std::abs(fd)));
  };
  for (const ParamBlock& b : lay.blocks) {
    bool is_support =
        b.name.size() >= 2 && b.name.compare(b.name.size() - 2, 2, ".z") == 0;
    if (is_support) {
      std::size_t npts = b.size / static_cast<std::size_t>(ambient);
      for (std::size_t m = 0; m < npts; ++m) {
        Point z{0.0, 0.0, 0.0, 0.0};
        for (int c = 0; c < ambient; ++c)
          z[static_cast<std::size_t>(c)] = flat[b.offset + m * ambient + c];
        auto frame = tangent_frame(p.net.manifold, z);
        for (int d = 0; d < idim; ++d) {
          Tangent dir = frame[static_cast<std::size_t>(d)];
          auto shifted = [&](double t) {
            std::vector<double> f2 = flat;
            Tangent step;
            for (int c = 0; c < 4; ++c) step[static_cast<std::size_t>(c)] = t * dir[static_cast<std::size_t>(c)];
            Point zn = exp_map(p.net.manifold, z, step);
            for (int c = 0; c < ambient; ++c)
              f2[b.offset + m * ambient + c] = zn[static_cast<std::size_t>(c)];
            return loss_value(p, f2);
          };
          double fd = (shifted(h) - shifted(-h)) / (2.0 * h);
          double an = 0.0;
          for (int c = 0; c < ambient; ++c)
            an += grads[b.offset + m * ambient + c] * dir[static_cast<std::size_t>(c)];
          check_dir(fd, an);
        }
      }
    } else {
      for (std::size_t i = 0; i < b.size; ++i) {
        std::vector<double> f2 = flat;
        f2[b.offset + i] = flat[b.offset + i] + h;
        double up = loss_value(p, f2);
        f2[b.offset + i] = flat[b.offset + i] - h;
        double dn = loss_value(p, f2);
        check_dir((up - dn) / (2.0 * h), grads[b.offset + i]);
      }
    }
  }
}

double mean_pushforward_distance(const PotentialNetwork& net, const Point& target,
                                 Rng& rng, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    Point u = random_point(net.manifold, rng);
    Tangent g = grad_u(net, u);
    for (double& c : g) c = -c;
    s += distance(net.manifold, exp_map(net.manifold, u, g), target);
  }
  return s / n;
}

}  // namespace

TEST_CASE("adam matches the closed-form first and second step", "[solver]") {
  std::vector<double> p{1.0, -2.0, 0.5};
  std::vector<double> g1{0.5, -0.25, 0.0};
  std::vector<double> g2{-0.1, 0.4, 1.0};
  AdamConfig cfg;
  cfg.lr = 1e-3;
  Adam adam(3, cfg);
  std::vector<double> q = p;
  adam.step(q, g1);
  for (int i = 0; i < 3; ++i) {
    // after one step the bias corrections cancel: delta = lr g / (|g| + eps)
    double expect = p[i] - (g1[i] == 0.0 ? 0.0 : cfg.lr * g1[i] / (std::abs(g1[i]) + cfg.eps));
    REQUIRE(q[i] == Catch::Approx(expect).margin(1e-15));
  }
  std::vector<double> q1 = q;
  adam.step(q, g2);
  for (int i = 0; i < 3; ++i) {
    double m = cfg.beta1 * (1.0 - cfg.beta1) * g1[i] + (1.0 - cfg.beta1) * g2[i];
    double v = cfg.beta2 * (1.0 - cfg.beta2) * g1[i] * g1[i] +
               (1.0 - cfg.beta2) * g2[i] * g2[i];
    double mh = m / (1.0 - cfg.beta1 * cfg.beta1);
    double vh = v / (1.0 - cfg.beta2 * cfg.beta2);
    double expect = q1[i] - cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    REQUIRE(q[i] == Catch::Approx(expect).margin(1e-15));
  }
  REQUIRE_THROWS_AS(adam.step(q, std::vector<double>{1.0}), DimensionMismatch);
}

TEST_CASE("loss matches plain-loop reference on all terms", "[solver]") {
  for (Manifold m : {Manifold::S1, Manifold::S2, Manifold::T2}) {
    for (int k : {0, 3}) {
      Rng rng(77 + static_cast<std::uint64_t>(m) * 10 + static_cast<std::uint64_t>(k), stream::kTest);
      ModelShape shape;
      shape.support_points = 5;
      shape.layers = 2;
      shape.gamma = 0.15;
      if (k > 0) shape.stack_widths = {2, 3};
      PotentialNetwork net = make_network(m, shape, k, rng);
      jitter_params(net, rng);

      FdProblem p;
      p.net = net;
      std::size_t T = 9, B = 6;
      for (std::size_t i = 0; i < T; ++i) p.bank.push_back(random_point(m, rng));
      for (std::size_t j = 0; j < B; ++j) {
        p.ys.push_back(random_point(m, rng));
        if (k > 0) {
          std::vector<double> x(static_cast<std::size_t>(k));
          for (double& v : x) v = rng.uniform(-1.0, 1.0);
          p.xs.push_back(x);
        }
      }
      p.inv_bank = {0, 2, 4, 7};
      p.inv_cov = {0, 3, 5, 1};

      LossInputs in;
      in.bank = p.bank;
      in.ys = p.ys;
      if (k > 0) in.xs = p.xs;
      in.inv_bank = p.inv_bank;
      in.inv_cov = p.inv_cov;
      in.gamma_c = p.gamma_c;
      in.lambda = p.lambda;
      LossWork work;
      std::vector<double> grads(make_layout(net).total, 0.0);
      LossTerms t = vqr_loss(net, in, &grads, work);

      auto phi_at = [&](std::size_t i, std::size_t j) {
        if (k == 0) return phi(net, p.bank[i]);
        Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(
            p.xs[j].data(), static_cast<Eigen::Index>(p.xs[j].size()));
        return phi(net, p.bank[i], x);
      };
      double dual = 0.0;
      if (k == 0) {
        for (std::size_t i = 0; i < T; ++i) dual += phi_at(i, 0);
        dual /= static_cast<double>(T);
      } else {
        for (std::size_t i = 0; i < T; ++i)
          for (std::size_t j = 0; j < B; ++j) dual += phi_at(i, j);
        dual /= static_cast<double>(T * B);
      }
      double conj = 0.0;
      std::vector<double> col(T);
      for (std::size_t j = 0; j < B; ++j) {
        for (std::size_t i = 0; i < T; ++i)
          col[i] = cost(m, p.bank[i], p.ys[j]) - phi_at(i, k == 0 ? 0 : j);
        conj += softmin(col, p.gamma_c);
      }
      conj /= static_cast<double>(B);
      std::size_t P = p.inv_bank.size();
      double pen = 0.0;
      std::vector<double> psi(P), row(P);
      // pair a: bank point inv_bank[a] with covariate inv_cov[a]; the
      // unconditional case is one implicit covariate for every pair
      for (std::size_t q = 0; q < P; ++q) {
        std::size_t jc = k == 0 ? 0 : p.inv_cov[q];
        for (std::size_t b = 0; b < P; ++b) {
          for (std::size_t a2 = 0; a2 < P; ++a2)
            row[a2] = cost(m, p.bank[p.inv_bank[a2]], p.bank[p.inv_bank[b]]) -
                      phi_at(p.inv_bank[a2], jc);
          psi[b] = softmin(row, p.gamma_c);
        }
        for (std::size_t b = 0; b < P; ++b)
          row[b] = cost(m, p.bank[p.inv_bank[q]], p.bank[p.inv_bank[b]]) - psi[b];
        pen += std::abs(softmin(row, p.gamma_c) - phi_at(p.inv_bank[q], jc));
      }

      REQUIRE(t.dual == Catch::Approx(dual).margin(1e-10));
      REQUIRE(t.conjugate == Catch::Approx(conj).margin(1e-10));
      REQUIRE(t.involution ==
              Catch::Approx(pen / static_cast<double>(P)).margin(1e-10));
      REQUIRE(t.loss == Catch::Approx(-(dual + conj) + p.lambda * pen).margin(1e-10));
    }
  }
}

TEST_CASE("loss gradients match finite differences", "[solver]") {
  for (Manifold m : {Manifold::S1, Manifold::S2, Manifold::T2}) {
    for (int k : {0, 3}) {
      Rng rng(911 + static_cast<std::uint64_t>(m) * 10 + static_cast<std::uint64_t>(k), stream::kTest);
      ModelShape shape;
      shape.support_points = 4;
      shape.layers = 2;
      shape.gamma = 0.15;
      if (k > 0) shape.stack_widths = {2, 3};
      FdProblem p;
      p.net = make_network(m, shape, k, rng);
      jitter_params(p.net, rng);
      std::size_t T = 8, B = 5;
      for (std::size_t i = 0; i < T; ++i) p.bank.push_back(random_point(m, rng));
      for (std::size_t j = 0; j < B; ++j) {
        p.ys.push_back(random_point(m, rng));
        if (k > 0) {
          std::vector<double> x(static_cast<std::size_t>(k));
          for (double& v : x) v = rng.uniform(-1.0, 1.0);
          p.xs.push_back(x);
        }
      }
      p.inv_bank = {0, 2, 5, 6};
      p.inv_cov = {0, 2, 4, 1};
      check_loss_grads(p);
    }
  }
}

TEST_CASE("precomputed cost slab gives identical losses", "[solver]") {
  Rng rng(5150, stream::kTest);
  ModelShape shape;
  shape.support_points = 6;
  shape.layers = 1;
  shape.stack_widths = {3};
  PotentialNetwork net = make_network(Manifold::T2, shape, 2, rng);
  jitter_params(net, rng);
  std::size_t T = 12, B = 9;
  std::vector<Point> bank, ys;
  std::vector<std::vector<double>> xs;
  for (std::size_t i = 0; i < T; ++i) bank.push_back(random_point(Manifold::T2, rng));
  for (std::size_t j = 0; j < B; ++j) {
    ys.push_back(random_point(Manifold::T2, rng));
    xs.push_back({rng.uniform(0.5, 2.0), rng.uniform(-1.0, 1.0)});
  }
  std::vector<double> slab(T * B);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < B; ++j) slab[i * B + j] = cost(Manifold::T2, bank[i], ys[j]);
  LossInputs in;
  in.bank = bank;
  in.ys = ys;
  in.xs = xs;
  in.gamma_c = 0.1;
  in.lambda = 0.0;
  LossWork w1, w2;
  LossTerms a = vqr_loss(net, in, nullptr, w1);
  in.slab = slab.data();
  LossTerms b = vqr_loss(net, in, nullptr, w2);
  REQUIRE(a.loss == b.loss);
  REQUIRE(a.dual == b.dual);
  REQUIRE(a.conjugate == b.conjugate);
}

TEST_CASE("loss input validation", "[solver]") {
  Rng rng(31, stream::kTest);
  ModelShape shape;
  PotentialNetwork net = make_network(Manifold::S2, shape, 0, rng);
  std::vector<Point> bank{random_point(Manifold::S2, rng)};
  std::vector<Point> ys{random_point(Manifold::S2, rng)};
  std::vector<std::vector<double>> xs{{1.0}};
  LossWork work;
  {
    LossInputs in;
    in.ys = ys;
    REQUIRE_THROWS_AS(vqr_loss(net, in, nullptr, work), EmptyBatch);
  }
  {
    LossInputs in;
    in.bank = bank;
    REQUIRE_THROWS_AS(vqr_loss(net, in, nullptr, work), EmptyBatch);
  }
  {
    LossInputs in;
    in.bank = bank;
    in.ys = ys;
    in.xs = xs;  // unconditional model must reject covariates
    REQUIRE_THROWS_AS(vqr_loss(net, in, nullptr, work), DimensionMismatch);
  }
}

TEST_CASE("non-finite parameters surface as NonFiniteLoss", "[solver]") {
  Rng rng(32, stream::kTest);
  ModelShape shape;
  PotentialNetwork net = make_network(Manifold::S2, shape, 0, rng);
  std::vector<double> flat;
  pack_params(net, flat);
  ParamLayout lay = make_layout(net);
  for (const ParamBlock& b : lay.blocks)
    if (b.name == "beta0.layer0.alpha") flat[b.offset] = std::nan("");
  unpack_params(net, flat);
  std::vector<Point> bank, ys;
  for (int i = 0; i < 4; ++i) {
    bank.push_back(random_point(Manifold::S2, rng));
    ys.push_back(random_point(Manifold::S2, rng));
  }
  LossInputs in;
  in.bank = bank;
  in.ys = ys;
  LossWork work;
  REQUIRE_THROWS_AS(vqr_loss(net, in, nullptr, work), NonFiniteLoss);
}

TEST_CASE("identity pretraining shrinks potential gradients", "[solver]") {
  Rng rng(4242, stream::kTest);
  ModelShape shape;
  shape.support_points = 8;
  shape.layers = 2;
  shape.stack_widths = {3};
  PotentialNetwork net = make_network(Manifold::S2, shape, 2, rng);
  jitter_params(net, rng);

  std::vector<std::vector<double>> covs;
  for (int i = 0; i < 16; ++i) covs.push_back({rng.uniform(0.5, 2.0), rng.uniform(-1.0, 1.0)});

  auto mean_grad_norm = [&](const PotentialNetwork& n) {
    Rng r2(7, stream::kEvalBank);
    double s = 0.0;
    int cnt = 64;
    for (int i = 0; i < cnt; ++i) {
      const auto& raw = covs[r2.uniform_index(covs.size())];
      Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(raw.data(), 2);
      Tangent g = grad_u(n, random_point(n.manifold, r2), x);
      s += std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + g[3] * g[3]);
    }
    return s / cnt;
  };

  double before = mean_grad_norm(net);
  AdamConfig ac;
  ac.lr = 1e-2;
  Rng prng(1, stream::kInit);
  identity_pretrain(net, 250, ac, covs, prng);
  double after = mean_grad_norm(net);
  INFO("before " << before << " after " << after);
  REQUIRE(after < 0.25 * before);
  REQUIRE(after < 0.1);
}

TEST_CASE("training contracts onto a point mass", "[solver]") {
  Point target = s2_from_spherical(1.1, 0.7);
  Dataset data;
  data.manifold = Manifold::S2;
  data.points.assign(96, target);

  ModelShape shape;
  shape.support_points = 12;
  shape.layers = 1;
  TrainConfig cfg;
  cfg.iterations = 500;
  cfg.learning_rate = 3e-2;
  cfg.bank_size = 64;
  cfg.batch_cap = 64;
  cfg.eval_bank_size = 16;
  cfg.pretrain_iters = 0;
  // the optimal potential c(u, target) is maximally steep; the involution
  // penalty would bias against it, and this oracle checks the bare OT map
  cfg.lambda_involution = 0.0;
  cfg.seed = 2024;
  TrainResult res = train(data, shape, cfg);

  Rng rng(99, stream::kSample);
  double mean_d = mean_pushforward_distance(res.net, target, rng, 200);
  INFO("mean distance to target " << mean_d);
  REQUIRE(mean_d < 0.25);
  REQUIRE(res.trace.size() == 500);
  REQUIRE(res.trace.front().loss > res.trace.back().loss);
}

TEST_CASE("training on uniform data stays near the identity", "[solver]") {
  Rng drng(313, stream::kData);
  Dataset data;
  data.manifold = Manifold::S2;
  for (int i = 0; i < 256; ++i) data.points.push_back(random_point(Manifold::S2, drng));

  ModelShape shape;
  shape.support_points = 16;
  shape.layers = 1;
  TrainConfig cfg;
  cfg.iterations = 500;
  cfg.learning_rate = 1e-3;
  cfg.bank_size = 128;
  cfg.batch_cap = 256;
  cfg.eval_bank_size = 16;
  cfg.pretrain_iters = 200;
  cfg.seed = 77;
  TrainResult res = train(data, shape, cfg);

  Rng rng(5, stream::kSample);
  double disp = 0.0;
  for (int i = 0; i < 200; ++i) {
    Point u = random_point(Manifold::S2, rng);
    Tangent g = grad_u(res.net, u);
    for (double& c : g) c = -c;
    disp += distance(Manifold::S2, exp_map(Manifold::S2, u, g), u);
  }
  disp /= 200.0;
  INFO("mean displacement " << disp);
  REQUIRE(disp < 0.15);
}

TEST_CASE("training is deterministic and thread-count invariant", "[solver]") {
  Rng drng(11, stream::kData);
  Dataset data;
  data.manifold = Manifold::T2;
  data.covariate_dim = 1;
  for (int i = 0; i < 48; ++i) {
    data.points.push_back(random_point(Manifold::T2, drng));
    data.covariates.push_back({drng.uniform(0.5, 2.0)});
  }
  ModelShape shape;
  shape.support_points = 4;
  shape.layers = 1;
  shape.stack_widths = {2};
  TrainConfig cfg;
  cfg.iterations = 25;
  cfg.bank_size = 16;
  cfg.batch_cap = 32;
  cfg.eval_bank_size = 8;
  cfg.pretrain_iters = 10;
  cfg.involution_points = 8;
  cfg.seed = 5;

  auto flat_of = [&](const TrainResult& r) {
    std::vector<double> f;
    pack_params(r.net, f);
    return f;
  };
  TrainResult a = train(data, shape, cfg);
  TrainResult b = train(data, shape, cfg);
  REQUIRE(flat_of(a) == flat_of(b));
  REQUIRE(a.eval_bank == b.eval_bank);

  setenv("MVQR_THREADS", "3", 1);
  TrainResult c = train(data, shape, cfg);
  unsetenv("MVQR_THREADS");
  REQUIRE(flat_of(a) == flat_of(c));
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    REQUIRE(a.trace[i].loss == c.trace[i].loss);
    REQUIRE(a.trace[i].involution == c.trace[i].involution);
  }
}

TEST_CASE("involution trace column is carried between probes", "[solver]") {
  Rng drng(21, stream::kData);
  Dataset data;
  data.manifold = Manifold::S1;
  for (int i = 0; i < 64; ++i) data.points.push_back(random_point(Manifold::S1, drng));
  ModelShape shape;
  shape.support_points = 4;
  shape.layers = 1;
  TrainConfig cfg;
  cfg.iterations = 24;
  cfg.bank_size = 16;
  cfg.batch_cap = 32;
  cfg.eval_bank_size = 8;
  cfg.pretrain_iters = 0;
  cfg.lambda_involution = 0.0;  // probe-only: value refreshed every probe_every
  cfg.involution_probe_every = 10;
  cfg.seed = 3;
  TrainResult res = train(data, shape, cfg);
  REQUIRE(res.trace.size() == 24);
  for (int i = 0; i < 24; ++i) {
    int probe = (i / 10) * 10;
    REQUIRE(res.trace[static_cast<std::size_t>(i)].involution ==
            res.trace[static_cast<std::size_t>(probe)].involution);
    REQUIRE(std::isfinite(res.trace[static_cast<std::size_t>(i)].loss));
  }
  REQUIRE(res.trace[0].involution > 0.0);

  auto tmp = std::filesystem::temp_directory_path() / "mvqr_trace_test.csv";
  write_trace_csv(res.trace, tmp.string());
  std::ifstream in(tmp);
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "iter,loss,dual_term,conjugate_term,involution_error");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  REQUIRE(rows == 24);
  std::filesystem::remove(tmp);
}

TEST_CASE("checkpoints round-trip bit-exactly", "[solver]") {
  Rng drng(9, stream::kData);
  Dataset data;
  data.manifold = Manifold::S2;
  data.covariate_dim = 2;
  for (int i = 0; i < 40; ++i) {
    data.points.push_back(random_point(Manifold::S2, drng));
    data.covariates.push_back({drng.uniform(0.5, 2.0), drng.uniform(-1.0, 1.0)});
  }
  ModelShape shape;
  shape.support_points = 5;
  shape.layers = 2;
  shape.stack_widths = {2};
  TrainConfig cfg;
  cfg.iterations = 12;
  cfg.bank_size = 12;
  cfg.batch_cap = 16;
  cfg.eval_bank_size = 10;
  cfg.pretrain_iters = 5;
  cfg.seed = 8;
  TrainResult res = train(data, shape, cfg);

  auto tmp = std::filesystem::temp_directory_path() / "mvqr_ckpt_test.json";
  Checkpoint ck = checkpoint_from_result(res);
  save_checkpoint(ck, tmp.string());
  Checkpoint back = load_checkpoint(tmp.string());

  std::vector<double> f1, f2;
  pack_params(ck.net, f1);
  pack_params(back.net, f2);
  REQUIRE(f1 == f2);
  REQUIRE(back.eval_bank == ck.eval_bank);
  REQUIRE(back.gamma_conjugate == ck.gamma_conjugate);
  REQUIRE(back.step_count == ck.step_count);

  // evaluations agree bitwise
  Rng rng(3, stream::kTest);
  for (int i = 0; i < 20; ++i) {
    Point u = random_point(Manifold::S2, rng);
    Eigen::VectorXd x(2);
    x << rng.uniform(0.5, 2.0), rng.uniform(-1.0, 1.0);
    REQUIRE(phi(ck.net, u, x) == phi(back.net, u, x));
  }
  std::filesystem::remove(tmp);
}

TEST_CASE("checkpoint loading rejects bad files", "[solver]") {
  Rng rng(14, stream::kInit);
  ModelShape shape;
  shape.support_points = 3;
  PotentialNetwork net = make_network(Manifold::S1, shape, 0, rng);
  Checkpoint ck;
  ck.net = net;
  ck.eval_bank.push_back(random_point(Manifold::S1, rng));
  auto dir = std::filesystem::temp_directory_path();
  auto good = dir / "mvqr_ckpt_good.json";
  save_checkpoint(ck, good.string());

  // wrong schema version
  {
    std::ifstream in(good);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto pos = text.find("\"schema_version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 19, "\"schema_version\": 2");
    auto bad = dir / "mvqr_ckpt_badver.json";
    std::ofstream(bad.string()) << text;
    REQUIRE_THROWS_AS(load_checkpoint(bad.string()), VersionError);
    std::filesystem::remove(bad);
  }
  // missing parameter block
  {
    std::ifstream in(good);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto pos = text.find("beta0.layer0.alpha");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 18, "beta0.layer0.gamma");
    auto bad = dir / "mvqr_ckpt_noblock.json";
    std::ofstream(bad.string()) << text;
    REQUIRE_THROWS_AS(load_checkpoint(bad.string()), ParseError);
    std::filesystem::remove(bad);
  }
  // not json at all
  {
    auto bad = dir / "mvqr_ckpt_garbage.json";
    std::ofstream(bad.string()) << "not a checkpoint {";
    REQUIRE_THROWS_AS(load_checkpoint(bad.string()), ParseError);
    std::filesystem::remove(bad);
  }
  REQUIRE_THROWS_AS(load_checkpoint((dir / "mvqr_ckpt_missing.json").string()), Error);
  std::filesystem::remove(good);
}

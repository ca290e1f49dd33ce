// mvqr: manifold vector quantile estimation and regression.
//
// Subcommands: gen-data, train, sample, contour, likelihood, eval, bench.
// Exit codes: 0 success, 2 invalid input (flags, config, file contents),
// 1 runtime failure (non-finite loss, non-convergence).

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mvqr/checkpoint.hpp"
#include "mvqr/data.hpp"
#include "mvqr/manifold.hpp"
#include "mvqr/metrics.hpp"
#include "mvqr/ot_oracle.hpp"
#include "mvqr/quantile.hpp"
#include "mvqr/solver.hpp"
#include "mvqr/svg.hpp"

namespace fs = std::filesystem;
using namespace mvqr;

namespace {

// ---------------------------------------------------------------------------
// config file

constexpr int kConfigSchema = 1;

struct RunConfig {
  ModelShape shape;
  TrainConfig train;
};

void reject_unknown(const nlohmann::json& obj, const std::vector<std::string>& keys,
                    const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const std::string& k : keys)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ParseError("config: unknown key \"" + it.key() + "\" in " + where);
  }
}

void apply_profile(RunConfig& rc, const std::string& profile) {
  if (profile == "desk") {
    rc.train.iterations = 6000;
  } else if (profile == "paper") {
    rc.train.iterations = 50000;
    rc.train.bank_size = 2048;
    rc.train.eval_bank_size = 8192;
    rc.train.pretrain_iters = 1000;
  } else {
    throw ParseError("unknown profile \"" + profile + "\" (desk or paper)");
  }
}

void apply_config_file(RunConfig& rc, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  try {
    reject_unknown(j, {"schema_version", "model", "train"}, "top level");
    int version = j.at("schema_version").get<int>();
    if (version != kConfigSchema)
      throw VersionError(path + ": schema_version " + std::to_string(version) +
                         " (expected " + std::to_string(kConfigSchema) + ")");
    if (j.contains("model")) {
      const auto& m = j["model"];
      reject_unknown(m, {"support_points", "layers", "stack_widths", "gamma"}, "model");
      if (m.contains("support_points")) rc.shape.support_points = m["support_points"].get<int>();
      if (m.contains("layers")) rc.shape.layers = m["layers"].get<int>();
      if (m.contains("stack_widths")) rc.shape.stack_widths = m["stack_widths"].get<std::vector<int>>();
      if (m.contains("gamma")) rc.shape.gamma = m["gamma"].get<double>();
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      reject_unknown(t,
                     {"iterations", "learning_rate", "pretrain_lr", "bank_size",
                      "batch_cap", "resample_every", "eval_bank_size",
                      "pretrain_iters", "gamma_conjugate", "lambda_involution",
                      "involution_points", "involution_probe_every"},
                     "train");
      if (t.contains("iterations")) rc.train.iterations = t["iterations"].get<int>();
      if (t.contains("learning_rate")) rc.train.learning_rate = t["learning_rate"].get<double>();
      if (t.contains("pretrain_lr")) rc.train.pretrain_lr = t["pretrain_lr"].get<double>();
      if (t.contains("bank_size")) rc.train.bank_size = t["bank_size"].get<int>();
      if (t.contains("batch_cap")) rc.train.batch_cap = t["batch_cap"].get<int>();
      if (t.contains("resample_every")) rc.train.resample_every = t["resample_every"].get<int>();
      if (t.contains("eval_bank_size")) rc.train.eval_bank_size = t["eval_bank_size"].get<int>();
      if (t.contains("pretrain_iters")) rc.train.pretrain_iters = t["pretrain_iters"].get<int>();
      if (t.contains("gamma_conjugate")) rc.train.gamma_conjugate = t["gamma_conjugate"].get<double>();
      if (t.contains("lambda_involution")) rc.train.lambda_involution = t["lambda_involution"].get<double>();
      if (t.contains("involution_points")) rc.train.involution_points = t["involution_points"].get<int>();
      if (t.contains("involution_probe_every")) rc.train.involution_probe_every = t["involution_probe_every"].get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// shared helpers

struct OutputLock {
  fs::path file;
  explicit OutputLock(const fs::path& dir) : file(dir / "mvqr.lock") {
    fs::create_directories(dir);
    if (fs::exists(file))
      throw Error("lock file " + file.string() +
                  " exists; another run may be active (remove it if stale)");
    std::ofstream out(file);
    out << "pid " << ::getpid() << "\n";
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(file, ec);
  }
};

std::vector<double> parse_covariate(const std::string& xspec, const std::string& aa) {
  if (!xspec.empty() && !aa.empty())
    throw ParseError("give either --x or --aa, not both");
  if (!aa.empty()) return one_hot_amino_acid(aa);
  std::vector<double> out;
  if (xspec.empty()) return out;
  auto fields = data_detail::split_csv_line(xspec);
  for (const std::string& f : fields) out.push_back(data_detail::parse_double(f, "--x"));
  return out;
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void check_covariate(const QuantileModel& q, const std::vector<double>& xv) {
  if (static_cast<int>(xv.size()) != q.net.covariate_dim)
    throw DimensionMismatch("model expects a covariate of dimension " +
                            std::to_string(q.net.covariate_dim) + ", got " +
                            std::to_string(xv.size()));
}

Dataset load_data(const std::string& path, const std::string& format, Manifold m) {
  if (format == "dihedral") return read_dihedral_csv(path);
  if (format == "csv") return read_dataset_csv(m, path);
  throw ParseError("unknown --format \"" + format + "\" (csv or dihedral)");
}

// one inverse evaluator per distinct covariate, built lazily
class EvaluatorCache {
 public:
  explicit EvaluatorCache(const QuantileModel& m) : model_(m) {}

  const InverseEvaluator& at(const std::vector<double>& x) {
    auto it = cache_.find(x);
    if (it == cache_.end())
      it = cache_.emplace(x, std::make_unique<InverseEvaluator>(model_, to_eigen(x)))
               .first;
    return *it->second;
  }

 private:
  const QuantileModel& model_;
  std::map<std::vector<double>, std::unique_ptr<InverseEvaluator>> cache_;
};

std::vector<Point> rank_points(const QuantileModel& q, const Dataset& data,
                               EvaluatorCache& cache) {
  std::vector<Point> ranks(data.size());
  std::vector<double> none;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& x = q.net.covariate_dim > 0 ? data.covariates[i] : none;
    ranks[i] = cache.at(x)(data.points[i]);
  }
  return ranks;
}

Point compute_pole(const QuantileModel& q, const Dataset& data,
                   EvaluatorCache& cache, const std::string& mode) {
  if (mode == "mean") {
    // frechet mean of the response sample, used directly as the rank-space
    // pole; well defined even when the fitted ranks are nearly uniform
    return frechet_mean(q.manifold(), data.points);
  }
  if (mode == "rank-mean") {
    return frechet_mean(q.manifold(), rank_points(q, data, cache));
  }
  if (mode == "rank-of-mean") {
    if (q.net.covariate_dim > 0)
      throw ParseError("--pole rank-of-mean needs an unconditional model");
    Point mean = frechet_mean(q.manifold(), data.points);
    return cache.at({})(mean);
  }
  throw ParseError("unknown --pole \"" + mode +
                   "\" (mean, rank-mean or rank-of-mean)");
}

std::vector<double> parse_taus(const std::string& spec) {
  std::vector<double> taus;
  for (const std::string& f : data_detail::split_csv_line(spec)) {
    double t = data_detail::parse_double(f, "--taus");
    if (!(t > 0.0 && t < 1.0)) throw ParseError("tau must be inside (0, 1)");
    taus.push_back(t);
  }
  if (taus.empty()) throw ParseError("no tau levels given");
  return taus;
}

double wall_ms(const std::function<void()>& fn) {
  auto t0 = std::chrono::steady_clock::now();
  fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

// ---------------------------------------------------------------------------
// subcommands

struct GenArgs {
  std::string process = "multimodal", manifold = "s2", out, svg;
  int n = 1000;
  std::uint64_t seed = 0;
  double x_lo = 0.5, x_hi = 2.0, kappa0 = kMultimodalKappa0, shape_scale = kShapeScale;
  std::optional<double> x_fixed;
  bool paper_sampling = false;
};

int run_gen(const GenArgs& a) {
  if (a.process == "dihedral") {
    std::vector<std::string> aa;
    std::vector<Point> pts;
    gen_dihedral_fixture(static_cast<std::size_t>(a.n), a.seed, aa, pts);
    write_dihedral_csv(aa, pts, a.out);
    if (!a.svg.empty()) write_svg(a.svg, Manifold::T2, {SvgLayer{pts, "#1f77b4", 1.5, false}});
    std::cout << "wrote " << pts.size() << " dihedral rows to " << a.out << "\n";
    return 0;
  }
  ProcessSpec spec;
  spec.process = a.process;
  spec.manifold = manifold_from_name(a.manifold);
  spec.x_fixed = a.x_fixed;
  spec.x_lo = a.x_lo;
  spec.x_hi = a.x_hi;
  spec.kappa0 = a.kappa0;
  spec.shape_scale = a.shape_scale;
  spec.paper_sampling = a.paper_sampling;
  Dataset d = generate(spec, static_cast<std::size_t>(a.n), a.seed);
  write_dataset_csv(d, a.out);
  if (!a.svg.empty())
    write_svg(a.svg, d.manifold, {SvgLayer{d.points, "#1f77b4", 1.5, false}});
  std::cout << "wrote " << d.size() << " samples (covariate_dim " << d.covariate_dim
            << ") to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string data, format = "csv", manifold = "s2", out, config, profile = "desk";
  std::uint64_t seed = 0;
  int iterations = -1, bank_size = -1, support_points = -1;
  double lambda = -1.0;
};

int run_train(const TrainArgs& a) {
  Dataset data = load_data(a.data, a.format, manifold_from_name(a.manifold));
  RunConfig rc;
  apply_profile(rc, a.profile);
  if (!a.config.empty()) apply_config_file(rc, a.config);
  if (a.iterations >= 0) rc.train.iterations = a.iterations;
  if (a.bank_size >= 0) rc.train.bank_size = a.bank_size;
  if (a.support_points >= 0) rc.shape.support_points = a.support_points;
  if (a.lambda >= 0.0) rc.train.lambda_involution = a.lambda;
  rc.train.seed = a.seed;
  if (data.covariate_dim > 0 && rc.shape.stack_widths.empty())
    rc.shape.stack_widths = {8, 8};
  if (data.covariate_dim == 0) rc.shape.stack_widths.clear();

  OutputLock lock(a.out);
  int report = std::max(1, rc.train.iterations / 10);
  TrainResult res = train(data, rc.shape, rc.train, [&](int it, const LossTerms& t) {
    if (it % report == 0 || it + 1 == rc.train.iterations)
      std::cout << "iter " << it << " loss " << t.loss << " dual " << t.dual
                << " conjugate " << t.conjugate << "\n";
  });
  fs::path dir(a.out);
  save_checkpoint(checkpoint_from_result(res), (dir / "checkpoint.json").string());
  write_trace_csv(res.trace, (dir / "trace.csv").string());
  std::cout << "final loss " << res.final_loss << "; wrote " << (dir / "checkpoint.json").string()
            << " and " << (dir / "trace.csv").string() << "\n";
  return 0;
}

struct SampleArgs {
  std::string model, out, svg, x, aa;
  int n = 1000;
  std::uint64_t seed = 0;
};

int run_sample(const SampleArgs& a) {
  QuantileModel q = make_model(load_checkpoint(a.model));
  std::vector<double> xv = parse_covariate(a.x, a.aa);
  check_covariate(q, xv);
  std::vector<Point> pts = sample_model(q, to_eigen(xv), a.n, a.seed);
  Dataset d;
  d.manifold = q.manifold();
  d.covariate_dim = q.net.covariate_dim;
  d.points = pts;
  if (d.covariate_dim > 0) d.covariates.assign(pts.size(), xv);
  write_dataset_csv(d, a.out);
  if (!a.svg.empty())
    write_svg(a.svg, q.manifold(), {SvgLayer{pts, "#1f77b4", 1.5, false}});
  std::cout << "wrote " << pts.size() << " samples to " << a.out << "\n";
  return 0;
}

struct ContourArgs {
  std::string model, data, format = "csv", out, svg, x, aa, pole = "mean";
  std::string taus = "0.2,0.4,0.6";
  std::uint64_t seed = 0;
  int mc = 100000, knots = 200, segments = 256;
};

int run_contour(const ContourArgs& a) {
  QuantileModel q = make_model(load_checkpoint(a.model));
  Dataset data = load_data(a.data, a.format, q.manifold());
  if (data.covariate_dim != q.net.covariate_dim)
    throw DimensionMismatch("data and model disagree on the covariate");
  std::vector<double> taus = parse_taus(a.taus);
  std::vector<double> xv = parse_covariate(a.x, a.aa);
  check_covariate(q, xv);
  EvaluatorCache cache(q);
  Point pole = compute_pole(q, data, cache, a.pole);
  Calibration cal = calibrate(q.manifold(), pole, a.mc, a.knots, a.seed);

  std::ofstream out(a.out);
  if (!out) throw Error("cannot open for writing: " + a.out);
  out.precision(17);
  int ambient = ambient_dim(q.manifold());
  out << "tau,kappa,idx";
  for (int c = 0; c < ambient; ++c) out << ",y" << c;
  out << "\n";
  std::vector<SvgLayer> layers;
  layers.push_back(SvgLayer{data.points, "#bbbbbb", 1.2, false});
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  for (std::size_t t = 0; t < taus.size(); ++t) {
    double kappa = kappa_for(cal, taus[t]);
    std::vector<Point> ring = contour(q, to_eigen(xv), pole, kappa, a.segments);
    for (std::size_t i = 0; i < ring.size(); ++i) {
      out << taus[t] << "," << kappa << "," << i;
      for (int c = 0; c < ambient; ++c) out << "," << ring[i][static_cast<std::size_t>(c)];
      out << "\n";
    }
    bool closed = ring.size() > 2;  // S1 contours are two endpoints, not a loop
    if (closed) ring.push_back(ring.front());
    layers.push_back(SvgLayer{ring, palette[t % 5], 2.5, closed});
  }
  if (!a.svg.empty()) write_svg(a.svg, q.manifold(), layers);
  std::cout << "wrote contours for " << taus.size() << " levels to " << a.out << "\n";
  return 0;
}

struct LikelihoodArgs {
  std::string model, data, format = "csv", out;
};

int run_likelihood(const LikelihoodArgs& a) {
  QuantileModel q = make_model(load_checkpoint(a.model));
  Dataset data = load_data(a.data, a.format, q.manifold());
  if (data.covariate_dim != q.net.covariate_dim)
    throw DimensionMismatch("data and model disagree on the covariate");
  EvaluatorCache cache(q);
  std::ofstream out(a.out);
  if (!out) throw Error("cannot open for writing: " + a.out);
  out.precision(12);
  out << "idx,density,log_density,clamped\n";
  std::vector<double> none;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& x = q.net.covariate_dim > 0 ? data.covariates[i] : none;
    const InverseEvaluator& inv = cache.at(x);
    double det = std::abs(inverse_jacobian_det(q, inv, data.points[i]));
    bool clamped = det < kDetFloor;
    double dens = det / volume(q.manifold());
    double logd = std::log(std::max(det, kDetFloor) / volume(q.manifold()));
    out << i << "," << dens << "," << logd << "," << (clamped ? 1 : 0) << "\n";
  }
  std::cout << "wrote per-row likelihoods to " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string model, data, format = "csv", out;
  std::string taus = "0.2,0.4,0.6";
  std::uint64_t seed = 0;
  int grid = 4096, mc = 100000, knots = 200;
};

int run_eval(const EvalArgs& a) {
  QuantileModel q = make_model(load_checkpoint(a.model));
  Dataset data = load_data(a.data, a.format, q.manifold());
  if (data.covariate_dim != q.net.covariate_dim)
    throw DimensionMismatch("data and model disagree on the covariate");
  if (data.size() == 0) throw EmptySampleSet("eval: empty dataset");
  std::vector<double> taus = parse_taus(a.taus);

  EvaluatorCache cache(q);
  std::vector<Point> ranks = rank_points(q, data, cache);
  Point pole = frechet_mean(q.manifold(), data.points);
  Calibration cal = calibrate(q.manifold(), pole, a.mc, a.knots, a.seed);

  std::vector<MetricRow> rows;
  char cond[64];

  // coverage of calibrated rank balls
  for (double tau : taus) {
    double kappa = kappa_for(cal, tau);
    std::size_t hits = 0;
    for (const Point& r : ranks)
      if (distance(q.manifold(), r, pole) <= kappa) ++hits;
    double cov = static_cast<double>(hits) / static_cast<double>(ranks.size());
    double se = std::sqrt(std::max(0.0, cov * (1.0 - cov) / static_cast<double>(ranks.size())));
    std::snprintf(cond, sizeof cond, "tau=%g", tau);
    rows.push_back({"coverage", cond, cov, se, "pole=mean"});
  }

  // pushforward KDE distance: model samples at the data covariates
  Rng rng(a.seed, stream::kSample);
  std::vector<Point> model_pts(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    Point u = random_point(q.manifold(), rng);
    model_pts[i] = q.net.covariate_dim > 0
                       ? quantile_map(q, u, to_eigen(data.covariates[i]))
                       : quantile_map(q, u);
  }
  EvalGrid grid = eval_grid(q.manifold(), a.grid);
  double l1 = kde_l1_samples(q.manifold(), data.points, model_pts, grid);
  rows.push_back({"kde_l1", "-", l1, 0.0, "grid=" + std::to_string(a.grid)});

  // rank uniformity as an importance-weight ESS
  std::vector<double> w(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i)
    w[i] = kde_density(q.manifold(), ranks, ranks[i], 10.0) * volume(q.manifold());
  rows.push_back({"rank_ess", "-", ess_percent(w), 0.0, "kappa=10"});

  write_metrics_csv(rows, a.out);
  std::cout << "wrote " << rows.size() << " metric rows to " << a.out << "\n";
  return 0;
}

struct BenchArgs {
  std::string manifold = "s2", sizes = "500,1000,2000,4000", out;
  int seeds = 3, iterations = 800, bank = 512, batch = 256;
  std::uint64_t seed = 0;
};

int run_bench(const BenchArgs& a) {
  Manifold m = manifold_from_name(a.manifold);
  std::vector<int> sizes;
  for (const std::string& f : data_detail::split_csv_line(a.sizes)) {
    int n = static_cast<int>(data_detail::parse_double(f, "--sizes"));
    if (n < 2) throw ParseError("bench sizes must be >= 2");
    sizes.push_back(n);
  }
  std::ofstream out(a.out);
  if (!out) throw Error("cannot open for writing: " + a.out);
  out.precision(12);
  out << "method,n,seed,wall_ms,cost\n";
  for (int n : sizes) {
    for (int s = 0; s < a.seeds; ++s) {
      std::uint64_t seed = a.seed + static_cast<std::uint64_t>(s);
      ProcessSpec spec;
      spec.process = "multimodal";
      spec.manifold = m;
      spec.x_fixed = 1.0;
      Dataset data = generate(spec, static_cast<std::size_t>(n), seed);
      Rng brng(seed, stream::kBank);
      std::vector<Point> us(static_cast<std::size_t>(n));
      for (Point& p : us) p = random_point(m, brng);

      // exact assignment on the full bipartite problem
      std::vector<double> c = cost_matrix(m, us, data.points);
      AssignmentResult ar;
      double t_assign = wall_ms([&] { ar = assignment_solve(c, n); });
      out << "assignment," << n << "," << seed << "," << t_assign << ","
          << ar.cost / static_cast<double>(n) << "\n";

      // stochastic relaxed dual with size-independent knobs
      TrainConfig cfg;
      cfg.iterations = a.iterations;
      cfg.bank_size = a.bank;
      cfg.batch_cap = a.batch;
      cfg.eval_bank_size = a.bank;
      cfg.pretrain_iters = 100;
      cfg.seed = seed;
      ModelShape shape;
      shape.support_points = 32;
      shape.layers = 1;
      double dual_cost = 0.0;
      double t_dual = wall_ms([&] {
        TrainResult res = train(data, shape, cfg);
        // dual objective on a fresh bank and the full dataset
        LossInputs in;
        in.bank = res.eval_bank;
        in.ys = data.points;
        in.gamma_c = cfg.gamma_conjugate;
        in.lambda = 0.0;
        LossWork work;
        LossTerms t = vqr_loss(res.net, in, nullptr, work);
        dual_cost = t.dual + t.conjugate;
      });
      out << "dual," << n << "," << seed << "," << t_dual << "," << dual_cost << "\n";
      std::cout << "n=" << n << " seed=" << seed << " assignment " << t_assign
                << " ms, dual " << t_dual << " ms\n";
    }
  }
  std::cout << "wrote benchmark rows to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"manifold vector quantile estimation and regression"};
  app.require_subcommand(1);

  GenArgs ga;
  CLI::App* gen = app.add_subcommand("gen-data", "sample a synthetic process to CSV");
  gen->add_option("--process", ga.process,
                  "multimodal | heart | star | uniform | dihedral");
  gen->add_option("--manifold", ga.manifold, "s1 | s2 | t2");
  gen->add_option("--n", ga.n, "number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--seed", ga.seed, "RNG seed");
  gen->add_option("--x-fixed", ga.x_fixed, "condition every sample at this x");
  gen->add_option("--x-lo", ga.x_lo, "covariate range low end");
  gen->add_option("--x-hi", ga.x_hi, "covariate range high end");
  gen->add_option("--kappa0", ga.kappa0, "multimodal concentration at x=1");
  gen->add_option("--shape-scale", ga.shape_scale, "heart/star size parameter");
  gen->add_flag("--paper-sampling", ga.paper_sampling,
                "use the angle-based uniform sampler");
  gen->add_option("--out", ga.out, "output CSV")->required();
  gen->add_option("--svg", ga.svg, "optional scatter plot");

  TrainArgs ta;
  CLI::App* tr = app.add_subcommand("train", "fit a quantile model");
  tr->add_option("--data", ta.data, "input CSV")->required();
  tr->add_option("--format", ta.format, "csv | dihedral");
  tr->add_option("--manifold", ta.manifold, "s1 | s2 | t2 (csv format)");
  tr->add_option("--out", ta.out, "output directory")->required();
  tr->add_option("--config", ta.config, "JSON config file");
  tr->add_option("--profile", ta.profile, "desk | paper");
  tr->add_option("--seed", ta.seed, "RNG seed");
  tr->add_option("--iterations", ta.iterations, "override iteration count");
  tr->add_option("--bank-size", ta.bank_size, "override reference bank size");
  tr->add_option("--support-points", ta.support_points, "override support size");
  tr->add_option("--lambda", ta.lambda, "override involution weight");

  SampleArgs sa;
  CLI::App* sm = app.add_subcommand("sample", "draw from a trained model");
  sm->add_option("--model", sa.model, "checkpoint JSON")->required();
  sm->add_option("--n", sa.n, "number of samples")->check(CLI::PositiveNumber);
  sm->add_option("--seed", sa.seed, "RNG seed");
  sm->add_option("--x", sa.x, "covariate values, comma separated");
  sm->add_option("--aa", sa.aa, "amino acid code (dihedral models)");
  sm->add_option("--out", sa.out, "output CSV")->required();
  sm->add_option("--svg", sa.svg, "optional scatter plot");

  ContourArgs ca;
  CLI::App* co = app.add_subcommand("contour", "calibrated confidence contours");
  co->add_option("--model", ca.model, "checkpoint JSON")->required();
  co->add_option("--data", ca.data, "data CSV for the pole")->required();
  co->add_option("--format", ca.format, "csv | dihedral");
  co->add_option("--taus", ca.taus, "coverage levels, comma separated");
  co->add_option("--x", ca.x, "covariate values, comma separated");
  co->add_option("--aa", ca.aa, "amino acid code (dihedral models)");
  co->add_option("--pole", ca.pole, "mean | rank-mean | rank-of-mean");
  co->add_option("--seed", ca.seed, "RNG seed");
  co->add_option("--mc", ca.mc, "calibration Monte Carlo size");
  co->add_option("--knots", ca.knots, "calibration table size");
  co->add_option("--segments", ca.segments, "points per contour");
  co->add_option("--out", ca.out, "output CSV")->required();
  co->add_option("--svg", ca.svg, "optional plot");

  LikelihoodArgs la;
  CLI::App* li = app.add_subcommand("likelihood", "per-row model densities");
  li->add_option("--model", la.model, "checkpoint JSON")->required();
  li->add_option("--data", la.data, "input CSV")->required();
  li->add_option("--format", la.format, "csv | dihedral");
  li->add_option("--out", la.out, "output CSV")->required();

  EvalArgs ea;
  CLI::App* ev = app.add_subcommand("eval", "coverage, KDE distance, rank ESS");
  ev->add_option("--model", ea.model, "checkpoint JSON")->required();
  ev->add_option("--data", ea.data, "input CSV")->required();
  ev->add_option("--format", ea.format, "csv | dihedral");
  ev->add_option("--taus", ea.taus, "coverage levels");
  ev->add_option("--seed", ea.seed, "RNG seed");
  ev->add_option("--grid", ea.grid, "KDE quadrature size");
  ev->add_option("--mc", ea.mc, "calibration Monte Carlo size");
  ev->add_option("--knots", ea.knots, "calibration table size");
  ev->add_option("--out", ea.out, "metrics CSV")->required();

  BenchArgs ba;
  CLI::App* be = app.add_subcommand("bench", "exact assignment vs relaxed dual");
  be->add_option("--manifold", ba.manifold, "s1 | s2 | t2");
  be->add_option("--sizes", ba.sizes, "problem sizes, comma separated");
  be->add_option("--seeds", ba.seeds, "seeds per size")->check(CLI::PositiveNumber);
  be->add_option("--seed", ba.seed, "base RNG seed");
  be->add_option("--iterations", ba.iterations, "dual iterations");
  be->add_option("--bank", ba.bank, "dual bank size");
  be->add_option("--batch", ba.batch, "dual minibatch cap");
  be->add_option("--out", ba.out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(gen)) return run_gen(ga);
    if (app.got_subcommand(tr)) return run_train(ta);
    if (app.got_subcommand(sm)) return run_sample(sa);
    if (app.got_subcommand(co)) return run_contour(ca);
    if (app.got_subcommand(li)) return run_likelihood(la);
    if (app.got_subcommand(ev)) return run_eval(ea);
    if (app.got_subcommand(be)) return run_bench(ba);
  } catch (const NonFiniteLoss& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NoConvergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ZeroDensity& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

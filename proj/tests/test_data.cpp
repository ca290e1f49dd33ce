#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "mvqr/data.hpp"

using namespace mvqr;
using Catch::Approx;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("vmf cosine marginal matches the analytic law", "[data]") {
  const double kappa = 10.0;
  const Point mu{0.2, -0.4, 0.0, 0.0};
  Point mun = project(Manifold::S2, {0.2, -0.4, 0.89, 0.0});
  (void)mu;
  Rng rng(501, stream::kTest);
  const int n = 30000;
  // mean resultant length: coth(kappa) - 1/kappa
  double want = 1.0 / std::tanh(kappa) - 1.0 / kappa;
  double acc = 0.0;
  // chi-square against exact bin masses of the cosine marginal
  const int bins = 10;
  std::vector<double> counts(bins, 0.0), edges(bins + 1);
  for (int b = 0; b <= bins; ++b) edges[b] = -1.0 + 2.0 * b / bins;
  for (int i = 0; i < n; ++i) {
    Point y = sample_vmf_s2(mun, kappa, rng);
    double t = mun[0] * y[0] + mun[1] * y[1] + mun[2] * y[2];
    acc += t;
    int b = std::min(bins - 1, static_cast<int>((t + 1.0) / 2.0 * bins));
    counts[b] += 1.0;
  }
  REQUIRE(acc / n == Approx(want).margin(0.01));
  double denom = 1.0 - std::exp(-2.0 * kappa), chi2 = 0.0, df = 0.0;
  for (int b = 0; b < bins; ++b) {
    double mass = (std::exp(kappa * (edges[b + 1] - 1.0)) -
                   std::exp(kappa * (edges[b] - 1.0))) /
                  denom;
    double expect = mass * n;
    if (expect < 5.0) continue;  // skip sparse tail bins
    chi2 += (counts[b] - expect) * (counts[b] - expect) / expect;
    df += 1.0;
  }
  REQUIRE(df >= 3.0);
  REQUIRE(chi2 < 27.0);  // generous .999 bound for df <= 9
}

TEST_CASE("vmf azimuth is uniform around the mean", "[data]") {
  Rng rng(502, stream::kTest);
  Point mu = project(Manifold::S2, {1.0, 1.0, -0.5, 0.0});
  auto frame = tangent_frame(Manifold::S2, mu);
  const int n = 20000;
  double counts[8] = {0};
  for (int i = 0; i < n; ++i) {
    Point y = sample_vmf_s2(mu, 4.0, rng);
    double a = 0.0, b = 0.0;
    for (int c = 0; c < 3; ++c) {
      a += y[c] * frame[0][c];
      b += y[c] * frame[1][c];
    }
    double ang = std::atan2(b, a);
    int cell = std::min(7, static_cast<int>((ang + kPi) / (2.0 * kPi) * 8.0));
    counts[cell] += 1.0;
  }
  double expect = n / 8.0, chi2 = 0.0;
  for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
  REQUIRE(chi2 < 24.322);
}

TEST_CASE("von mises mean cosine matches the bessel ratio", "[data]") {
  Rng rng(503, stream::kTest);
  const double kappa = 2.0, mu = 0.8;
  const int n = 30000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    acc += std::cos(sample_vm_angle(mu, kappa, rng) - mu);
  double want = std::cyl_bessel_i(1.0, kappa) / std::cyl_bessel_i(0.0, kappa);
  REQUIRE(acc / n == Approx(want).margin(0.015));
}

TEST_CASE("densities integrate to one", "[data]") {
  SECTION("vmf and multimodal on s2 via latitude-longitude quadrature") {
    Point mu = project(Manifold::S2, {0.3, 0.3, 1.0, 0.0});
    const int nt = 400, np = 800;
    double s_vmf = 0.0, s_mix = 0.0;
    for (int i = 0; i < nt; ++i) {
      double theta = (i + 0.5) * kPi / nt;
      for (int j = 0; j < np; ++j) {
        double phi = (j + 0.5) * 2.0 * kPi / np;
        Point y = s2_from_spherical(theta, phi);
        double w = std::sin(theta) * (kPi / nt) * (2.0 * kPi / np);
        s_vmf += w * vmf_s2_density(mu, 10.0, y);
        s_mix += w * multimodal_density(Manifold::S2, 0.7, y);
      }
    }
    REQUIRE(s_vmf == Approx(1.0).margin(1e-4));
    REQUIRE(s_mix == Approx(1.0).margin(1e-4));
  }
  SECTION("product von mises on t2") {
    const int n = 400;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      double a = -kPi + (i + 0.5) * 2.0 * kPi / n;
      for (int j = 0; j < n; ++j) {
        double b = -kPi + (j + 0.5) * 2.0 * kPi / n;
        s += vm_t2_density(0.5, -1.0, 6.0, t2_from_angles(a, b)) *
             (2.0 * kPi / n) * (2.0 * kPi / n);
      }
    }
    REQUIRE(s == Approx(1.0).margin(1e-6));
  }
  SECTION("large kappa normalizer stays finite") {
    REQUIRE(std::isfinite(log_bessel_i0(800.0)));
    REQUIRE(vm_angle_density(0.0, 800.0, kPi) >= 0.0);
    REQUIRE(std::isfinite(vmf_s2_density({0, 0, 1, 0}, 500.0, {0, 0, 1, 0})));
  }
}

TEST_CASE("multimodal components are balanced and concentrated", "[data]") {
  for (Manifold m : {Manifold::S2, Manifold::T2}) {
    Rng rng(504, stream::kTest);
    auto centers = multimodal_centers(m);
    const int n = 8000;
    std::vector<double> counts(centers.size(), 0.0);
    int near = 0;
    for (int i = 0; i < n; ++i) {
      Point y = sample_multimodal(m, 1.0, rng);
      std::size_t best = 0;
      for (std::size_t c = 1; c < centers.size(); ++c)
        if (distance(m, y, centers[c]) < distance(m, y, centers[best])) best = c;
      counts[best] += 1.0;
      if (distance(m, y, centers[best]) < 1.0) ++near;
    }
    double expect = n / static_cast<double>(centers.size()), chi2 = 0.0;
    for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
    REQUIRE(chi2 < 16.27);  // chi2_{3, .999}
    REQUIRE(near > n * 0.95);
  }
  Rng rng(505, stream::kTest);
  REQUIRE_THROWS_AS(sample_multimodal(Manifold::S2, 0.0, rng), RadiusOutOfRange);
}

TEST_CASE("shape sampling stays inside and the area oracle is consistent", "[data]") {
  Rng rng(506, stream::kTest);
  for (const char* name : {"heart", "star"}) {
    ShapeRegion region = make_shape(name, 1.0);
    double area = shape_area(region);
    REQUIRE(area == Approx(shape_area(region, 80000)).margin(1e-8));
    // Monte Carlo acceptance consistency: area = cap area * acceptance rate
    double rmax = region.max_radius();
    double cap = 2.0 * kPi * (1.0 - std::cos(rmax));
    const int n = 20000;
    int inside = 0;
    for (int i = 0; i < n; ++i) {
      double w = rng.uniform(std::cos(rmax), 1.0);
      double a = rng.uniform(0.0, 2.0 * kPi);
      double s = std::sqrt(std::max(0.0, 1.0 - w * w));
      Point y{s * std::cos(a), s * std::sin(a), w, 0.0};
      if (shape_contains(region, y)) ++inside;
    }
    REQUIRE(cap * inside / n == Approx(area).margin(0.06));
    for (int i = 0; i < 500; ++i) {
      Point y = sample_shape(region, rng);
      REQUIRE(shape_contains(region, y));
      REQUIRE(shape_density(region, area, y) == Approx(1.0 / area));
    }
    Point far{0.0, 0.0, -1.0, 0.0};
    REQUIRE(shape_density(region, area, far) == 0.0);
  }
  REQUIRE_THROWS_AS(make_shape("heart", 3.2), RadiusOutOfRange);
  REQUIRE_THROWS_AS(make_shape("blob", 1.0), ParseError);
}

TEST_CASE("paper-recipe uniform sampling is uniform too", "[data]") {
  Rng rng(507, stream::kTest);
  const int n = 20000;
  double counts[8] = {0};
  for (int i = 0; i < n; ++i) {
    Point p = sample_uniform(Manifold::S2, rng, true);
    int c = (p[0] > 0) + 2 * (p[1] > 0) + 4 * (p[2] > 0);
    counts[c] += 1.0;
  }
  double expect = n / 8.0, chi2 = 0.0;
  for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
  REQUIRE(chi2 < 24.322);
}

TEST_CASE("dataset generation is deterministic", "[data]") {
  ProcessSpec spec;
  spec.process = "multimodal";
  spec.manifold = Manifold::T2;
  Dataset a = generate(spec, 50, 9001);
  Dataset b = generate(spec, 50, 9001);
  Dataset c = generate(spec, 50, 9002);
  REQUIRE(a.covariate_dim == 1);
  REQUIRE(a.points == b.points);
  REQUIRE(a.covariates == b.covariates);
  REQUIRE(a.points != c.points);
  for (const auto& x : a.covariates) {
    REQUIRE(x[0] >= spec.x_lo);
    REQUIRE(x[0] <= spec.x_hi);
  }
  spec.x_fixed = 0.8;
  Dataset d = generate(spec, 20, 1);
  REQUIRE(d.covariate_dim == 0);
  REQUIRE(d.covariates.empty());
}

TEST_CASE("dataset csv roundtrips", "[data]") {
  ProcessSpec spec;
  spec.process = "multimodal";
  spec.manifold = Manifold::S2;
  Dataset d = generate(spec, 40, 123);
  std::string path = temp_path("mvqr_test_ds.csv");
  write_dataset_csv(d, path);
  Dataset back = read_dataset_csv(Manifold::S2, path);
  REQUIRE(back.size() == d.size());
  REQUIRE(back.covariate_dim == 1);
  for (std::size_t i = 0; i < d.size(); ++i) {
    REQUIRE(back.covariates[i][0] == d.covariates[i][0]);
    for (int c = 0; c < 3; ++c)
      REQUIRE(back.points[i][c] == Approx(d.points[i][c]).margin(1e-15));
  }
  std::remove(path.c_str());
  REQUIRE_THROWS_AS(read_dataset_csv(Manifold::S2, temp_path("missing_file.csv")),
                    Error);
}

TEST_CASE("malformed dataset csv is rejected", "[data]") {
  std::string path = temp_path("mvqr_bad_ds.csv");
  {
    std::ofstream out(path);
    out << "coord_0,coord_1,coord_2\n0.0,1.0\n";
  }
  REQUIRE_THROWS_AS(read_dataset_csv(Manifold::S2, path), ParseError);
  {
    std::ofstream out(path);
    out << "coord_0,coord_1,coord_2\n0.0,1.0,zebra\n";
  }
  REQUIRE_THROWS_AS(read_dataset_csv(Manifold::S2, path), ParseError);
  {
    std::ofstream out(path);
    out << "coord_0,coord_1\n1.0,0.0\n";  // wrong manifold width
  }
  REQUIRE_THROWS_AS(read_dataset_csv(Manifold::S2, path), ParseError);
  std::remove(path.c_str());
}

TEST_CASE("amino acid encoding", "[data]") {
  REQUIRE(amino_acid_index("ALA") == 0);
  REQUIRE(amino_acid_index("VAL") == 19);
  REQUIRE(amino_acid_index("gly") == 7);
  REQUIRE(amino_acid_index("G") == 7);
  REQUIRE(amino_acid_index("A") == 0);
  auto v = one_hot_amino_acid("PRO");
  REQUIRE(v.size() == 20);
  REQUIRE(v[14] == 1.0);
  double s = 0.0;
  for (double e : v) s += e;
  REQUIRE(s == 1.0);
  REQUIRE_THROWS_AS(amino_acid_index("XYZ"), UnknownAminoAcid);
  REQUIRE_THROWS_AS(amino_acid_index("B"), UnknownAminoAcid);
}

TEST_CASE("dihedral csv io", "[data]") {
  std::vector<std::string> aa;
  std::vector<Point> pts;
  gen_dihedral_fixture(400, 31, aa, pts);
  REQUIRE(aa.size() == 400);
  std::string path = temp_path("mvqr_test_dihedral.csv");
  write_dihedral_csv(aa, pts, path);
  Dataset d = read_dihedral_csv(path);
  REQUIRE(d.size() == 400);
  REQUIRE(d.covariate_dim == 20);
  for (std::size_t i = 0; i < d.size(); ++i) {
    REQUIRE(distance(Manifold::T2, d.points[i], pts[i]) < 1e-7);
    REQUIRE(d.covariates[i][static_cast<std::size_t>(amino_acid_index(aa[i]))] == 1.0);
  }
  // at least 3 distinct residues in the fixture
  std::vector<std::string> uniq = aa;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  REQUIRE(uniq.size() >= 3);
  std::remove(path.c_str());
}

TEST_CASE("dihedral csv rejects bad rows", "[data]") {
  std::string path = temp_path("mvqr_bad_dihedral.csv");
  {
    std::ofstream out(path);
    out << "aa,phi_deg,psi_deg\nALA,-63.0,200.0\n";
  }
  REQUIRE_THROWS_AS(read_dihedral_csv(path), AngleOutOfRange);
  {
    std::ofstream out(path);
    out << "aa,phi_deg,psi_deg\nZZZ,-63.0,20.0\n";
  }
  REQUIRE_THROWS_AS(read_dihedral_csv(path), UnknownAminoAcid);
  {
    std::ofstream out(path);
    out << "residue,phi,psi\nALA,-63.0,20.0\n";
  }
  REQUIRE_THROWS_AS(read_dihedral_csv(path), ParseError);
  std::remove(path.c_str());
}

TEST_CASE("split is deterministic and partitions the data", "[data]") {
  ProcessSpec spec;
  spec.process = "multimodal";
  spec.manifold = Manifold::S2;
  Dataset d = generate(spec, 100, 55);
  Split s1 = split_dataset(d, 0.25, 7);
  Split s2 = split_dataset(d, 0.25, 7);
  REQUIRE(s1.eval.size() == 25);
  REQUIRE(s1.train.size() == 75);
  REQUIRE(s1.train.points == s2.train.points);
  REQUIRE(s1.eval.points == s2.eval.points);
  // partition: together they hold exactly the original points
  std::vector<Point> all = s1.train.points;
  all.insert(all.end(), s1.eval.points.begin(), s1.eval.points.end());
  std::sort(all.begin(), all.end());
  std::vector<Point> orig = d.points;
  std::sort(orig.begin(), orig.end());
  REQUIRE(all == orig);
  REQUIRE_THROWS_AS(split_dataset(d, 1.0, 7), ParseError);
}

TEST_CASE("dihedral mixture densities normalize and match the sampler", "[data]") {
  // each residue density integrates to 1 over the torus
  int k = 48;
  double cell = volume(Manifold::T2) / (k * k);
  for (const auto& row : dihedral_table()) {
    double s = 0.0;
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) {
        double pa = -kPi + (a + 0.5) * 2.0 * kPi / k;
        double pb = -kPi + (b + 0.5) * 2.0 * kPi / k;
        s += dihedral_density(row.first, t2_from_angles(pa, pb)) * cell;
      }
    REQUIRE(std::abs(s - 1.0) < 1e-6);
  }
  REQUIRE_THROWS_AS(dihedral_modes("XXX"), UnknownAminoAcid);

  // fixture samples of one residue land where its density says they should:
  // mean log density of PRO samples under PRO beats it under GLY
  std::vector<std::string> aa;
  std::vector<Point> pts;
  gen_dihedral_fixture(4000, 9, aa, pts);
  double lp_own = 0.0, lp_other = 0.0;
  int n_pro = 0;
  for (std::size_t i = 0; i < aa.size(); ++i) {
    if (aa[i] != "PRO") continue;
    ++n_pro;
    lp_own += std::log(dihedral_density("PRO", pts[i]));
    lp_other += std::log(dihedral_density("GLY", pts[i]));
  }
  REQUIRE(n_pro > 500);
  REQUIRE(lp_own / n_pro > lp_other / n_pro + 1.0);
}

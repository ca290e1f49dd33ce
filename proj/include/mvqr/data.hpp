#pragma once
// Data generation and dataset IO.
//
// Samplers: von Mises-Fisher on S2 (exact inverse-CDF for the cosine
// marginal), von Mises on S1 (Best-Fisher rejection), product von Mises on
// T2, and uniform. Synthetic processes: 4-component "multimodal" mixtures
// whose concentration scales as kappa0 / x with the scalar covariate, and
// uniform draws from heart / star shaped regions on S2 whose size scales
// linearly with x. Ground-truth densities for all synthetic processes are
// exposed alongside the samplers.
//
// Datasets move through CSV. Unconditional rows are coord_0..coord_{D-1};
// scalar-conditioned rows prepend x; dihedral files use aa,phi_deg,psi_deg
// with angles in degrees and the amino acid one-hot encoded over the 20
// canonical residues.

#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvqr/error.hpp"
#include "mvqr/manifold.hpp"
#include "mvqr/rng.hpp"

namespace mvqr {

// ---------------------------------------------------------------------------
// Component samplers

// von Mises-Fisher on S2 with mean direction mu. The cosine t = <mu, y> has
// density ~ exp(kappa t) on [-1, 1], inverted in closed form.
inline Point sample_vmf_s2(const Point& mu, double kappa, Rng& rng) {
  if (kappa < 1e-8) return random_point(Manifold::S2, rng);
  double xi = rng.uniform();
  double w;
  double e2k = std::exp(-2.0 * kappa);
  if (xi < 1e-300) xi = 1e-300;
  w = 1.0 + std::log(xi + (1.0 - xi) * e2k) / kappa;
  if (w < -1.0) w = -1.0;
  if (w > 1.0) w = 1.0;
  double s = std::sqrt(std::max(0.0, 1.0 - w * w));
  double a = rng.uniform(0.0, 2.0 * kPi);
  auto frame = tangent_frame(Manifold::S2, mu);
  Point p{0.0, 0.0, 0.0, 0.0};
  for (int i = 0; i < 3; ++i)
    p[i] = w * mu[i] + s * (std::cos(a) * frame[0][i] + std::sin(a) * frame[1][i]);
  return project(Manifold::S2, p);
}

// von Mises angle with mean mu (radians), Best-Fisher rejection.
inline double sample_vm_angle(double mu, double kappa, Rng& rng) {
  if (kappa < 1e-8) return rng.uniform(-kPi, kPi);
  double a = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  double b = (a - std::sqrt(2.0 * a)) / (2.0 * kappa);
  double r = (1.0 + b * b) / (2.0 * b);
  for (;;) {
    double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
    double z = std::cos(kPi * u1);
    double f = (1.0 + r * z) / (r + z);
    double c = kappa * (r - f);
    if (c * (2.0 - c) - u2 > 0.0 ||
        (u2 > 0.0 && std::log(c / u2) + 1.0 - c >= 0.0)) {
      double theta = mu + (u3 < 0.5 ? -1.0 : 1.0) * std::acos(f);
      // wrap to (-pi, pi]
      theta = std::remainder(theta, 2.0 * kPi);
      return theta;
    }
  }
}

inline Point sample_vm_t2(double mu_a, double mu_b, double kappa, Rng& rng) {
  return t2_from_angles(sample_vm_angle(mu_a, kappa, rng),
                        sample_vm_angle(mu_b, kappa, rng));
}

// ---------------------------------------------------------------------------
// Densities (w.r.t. the Riemannian volume measure)

// log I0 via the series for small z and the asymptotic expansion for large z,
// so the von Mises normalizer stays finite for any kappa.
inline double log_bessel_i0(double z) {
  if (z < 650.0) return std::log(std::cyl_bessel_i(0.0, z));
  return z - 0.5 * std::log(2.0 * kPi * z) +
         std::log(1.0 + 1.0 / (8.0 * z) + 9.0 / (128.0 * z * z));
}

inline double vmf_s2_density(const Point& mu, double kappa, const Point& y) {
  if (kappa < 1e-8) return 1.0 / (4.0 * kPi);
  double t = mu[0] * y[0] + mu[1] * y[1] + mu[2] * y[2];
  // C(kappa) = kappa / (4 pi sinh kappa)
  double log_norm = std::log(kappa) - std::log(4.0 * kPi) -
                    (kappa + std::log1p(-std::exp(-2.0 * kappa)) - std::log(2.0));
  return std::exp(log_norm + kappa * t);
}

inline double vm_angle_density(double mu, double kappa, double theta) {
  if (kappa < 1e-8) return 1.0 / (2.0 * kPi);
  return std::exp(kappa * std::cos(theta - mu) - log_bessel_i0(kappa)) /
         (2.0 * kPi);
}

inline double vm_t2_density(double mu_a, double mu_b, double kappa, const Point& y) {
  auto ang = t2_angles(y);
  return vm_angle_density(mu_a, kappa, ang[0]) *
         vm_angle_density(mu_b, kappa, ang[1]);
}

// ---------------------------------------------------------------------------
// Multimodal mixture process: 4 equally weighted components, concentration
// kappa0 / x. S2 centers are the even-parity corners (+-1,+-1,+-1)/sqrt(3);
// T2 centers the four (+-pi/2, +-pi/2) angle pairs.

inline constexpr double kMultimodalKappa0 = 10.0;

inline std::vector<Point> multimodal_centers(Manifold m) {
  double r = 1.0 / std::sqrt(3.0);
  switch (m) {
    case Manifold::S2:
      return {{r, r, r, 0.0}, {r, -r, -r, 0.0}, {-r, r, -r, 0.0}, {-r, -r, r, 0.0}};
    case Manifold::T2:
      return {t2_from_angles(kPi / 2, kPi / 2), t2_from_angles(kPi / 2, -kPi / 2),
              t2_from_angles(-kPi / 2, kPi / 2), t2_from_angles(-kPi / 2, -kPi / 2)};
    default:
      // S1: four evenly spaced modes
      return {s1_from_angle(0.0), s1_from_angle(kPi / 2), s1_from_angle(kPi),
              s1_from_angle(-kPi / 2)};
  }
}

inline Point sample_multimodal(Manifold m, double x, Rng& rng,
                               double kappa0 = kMultimodalKappa0) {
  if (x <= 0.0) throw RadiusOutOfRange("multimodal: conditioning x must be positive");
  double kappa = kappa0 / x;
  auto centers = multimodal_centers(m);
  const Point& c = centers[rng.uniform_index(centers.size())];
  switch (m) {
    case Manifold::S2: return sample_vmf_s2(c, kappa, rng);
    case Manifold::T2: {
      auto ang = t2_angles(c);
      return sample_vm_t2(ang[0], ang[1], kappa, rng);
    }
    default: return s1_from_angle(sample_vm_angle(s1_angle(c), kappa, rng));
  }
}

inline double multimodal_density(Manifold m, double x, const Point& y,
                                 double kappa0 = kMultimodalKappa0) {
  double kappa = kappa0 / x;
  auto centers = multimodal_centers(m);
  double p = 0.0;
  for (const Point& c : centers) {
    switch (m) {
      case Manifold::S2: p += vmf_s2_density(c, kappa, y); break;
      case Manifold::T2: {
        auto ang = t2_angles(c);
        p += vm_t2_density(ang[0], ang[1], kappa, y);
        break;
      }
      default: p += vm_angle_density(s1_angle(c), kappa, s1_angle(y)) / 1.0;
    }
  }
  return p / static_cast<double>(centers.size());
}

// ---------------------------------------------------------------------------
// Star-shaped regions on S2 around the north pole: uniform area measure
// inside the polar curve rho <= r(theta), sampled by rejection from the
// enclosing spherical cap. Radii scale linearly with the covariate.

inline constexpr double kShapeScale = 0.5;  // radians at x = 1

struct ShapeRegion {
  enum class Kind { Heart, Star } kind;
  double scale;  // s * x

  double radius(double theta) const {
    if (kind == Kind::Heart) return scale * (1.0 - std::sin(theta));
    return scale * (0.55 + 0.45 * std::cos(5.0 * theta));
  }
  double max_radius() const { return kind == Kind::Heart ? 2.0 * scale : scale; }
};

inline ShapeRegion make_shape(const std::string& name, double x,
                              double s = kShapeScale) {
  ShapeRegion r;
  if (name == "heart")
    r.kind = ShapeRegion::Kind::Heart;
  else if (name == "star")
    r.kind = ShapeRegion::Kind::Star;
  else
    throw ParseError("unknown shape: " + name);
  r.scale = s * x;
  if (r.scale <= 0.0 || r.max_radius() >= kPi)
    throw RadiusOutOfRange("shape radius must stay inside (0, pi)");
  return r;
}

// Area = integral of (1 - cos r(theta)) d theta, by midpoint quadrature.
inline double shape_area(const ShapeRegion& region, int panels = 20000) {
  double s = 0.0;
  for (int i = 0; i < panels; ++i) {
    double theta = (i + 0.5) / panels * 2.0 * kPi;
    s += 1.0 - std::cos(region.radius(theta));
  }
  return s * 2.0 * kPi / panels;
}

// Polar coordinates of y around the north pole: rho = colatitude, theta =
// azimuth measured in the fixed frame at the pole.
inline std::array<double, 2> s2_polar(const Point& y) {
  double rho = std::acos(geo_detail::clamp1(y[2]));
  double theta = std::atan2(y[1], y[0]);
  return {rho, theta};
}

inline bool shape_contains(const ShapeRegion& region, const Point& y) {
  auto pol = s2_polar(y);
  return pol[0] <= region.radius(pol[1]);
}

inline Point sample_shape(const ShapeRegion& region, Rng& rng) {
  double rmax = region.max_radius();
  double cmin = std::cos(rmax);
  for (;;) {
    // uniform in the cap rho <= rmax
    double w = rng.uniform(cmin, 1.0);
    double a = rng.uniform(0.0, 2.0 * kPi);
    double s = std::sqrt(std::max(0.0, 1.0 - w * w));
    Point y{s * std::cos(a), s * std::sin(a), w, 0.0};
    if (shape_contains(region, y)) return y;
  }
}

inline double shape_density(const ShapeRegion& region, double area, const Point& y) {
  return shape_contains(region, y) ? 1.0 / area : 0.0;
}

// ---------------------------------------------------------------------------
// Uniform sampling; the "paper" recipe parameterizes by angles / the z
// coordinate instead of normalizing Gaussians. Identical distributions,
// different draw sequences.

inline Point sample_uniform(Manifold m, Rng& rng, bool paper_recipe = false) {
  if (!paper_recipe) return random_point(m, rng);
  switch (m) {
    case Manifold::S1: return s1_from_angle(rng.uniform(-kPi, kPi));
    case Manifold::T2:
      return t2_from_angles(rng.uniform(-kPi, kPi), rng.uniform(-kPi, kPi));
    default: {
      double z = rng.uniform(-1.0, 1.0);
      double a = rng.uniform(0.0, 2.0 * kPi);
      double s = std::sqrt(std::max(0.0, 1.0 - z * z));
      return {s * std::cos(a), s * std::sin(a), z, 0.0};
    }
  }
}

// ---------------------------------------------------------------------------
// Datasets

struct Dataset {
  Manifold manifold = Manifold::S2;
  int covariate_dim = 0;                 // 0, 1 (scalar) or 20 (amino acid)
  std::vector<Point> points;
  std::vector<std::vector<double>> covariates;  // empty when covariate_dim == 0

  std::size_t size() const { return points.size(); }
};

// Synthetic process description. x_fixed set: every sample conditioned at
// that x; otherwise x ~ U[x_lo, x_hi] per sample (scalar covariate).
struct ProcessSpec {
  std::string process = "multimodal";  // multimodal | heart | star | uniform
  Manifold manifold = Manifold::S2;
  std::optional<double> x_fixed;
  double x_lo = 0.5, x_hi = 2.0;
  double kappa0 = kMultimodalKappa0;
  double shape_scale = kShapeScale;
  bool paper_sampling = false;
};

inline Point sample_process(const ProcessSpec& spec, double x, Rng& rng) {
  if (spec.process == "multimodal")
    return sample_multimodal(spec.manifold, x, rng, spec.kappa0);
  if (spec.process == "heart" || spec.process == "star") {
    if (spec.manifold != Manifold::S2)
      throw ParseError("shape processes live on s2");
    return sample_shape(make_shape(spec.process, x, spec.shape_scale), rng);
  }
  if (spec.process == "uniform")
    return sample_uniform(spec.manifold, rng, spec.paper_sampling);
  throw ParseError("unknown process: " + spec.process);
}

// Ground-truth density of the process at conditioning x.
inline double process_density(const ProcessSpec& spec, double x, const Point& y) {
  if (spec.process == "multimodal")
    return multimodal_density(spec.manifold, x, y, spec.kappa0);
  if (spec.process == "heart" || spec.process == "star") {
    ShapeRegion region = make_shape(spec.process, x, spec.shape_scale);
    return shape_density(region, shape_area(region), y);
  }
  if (spec.process == "uniform") return 1.0 / volume(spec.manifold);
  throw ParseError("unknown process: " + spec.process);
}

inline Dataset generate(const ProcessSpec& spec, std::size_t n, std::uint64_t seed) {
  Rng rng(seed, stream::kData);
  Dataset d;
  d.manifold = spec.manifold;
  bool conditional = !spec.x_fixed.has_value() && spec.process != "uniform";
  d.covariate_dim = conditional ? 1 : 0;
  for (std::size_t i = 0; i < n; ++i) {
    double x = spec.x_fixed.value_or(1.0);
    if (conditional) x = rng.uniform(spec.x_lo, spec.x_hi);
    d.points.push_back(sample_process(spec, x, rng));
    if (conditional) d.covariates.push_back({x});
  }
  return d;
}

// ---------------------------------------------------------------------------
// Amino acids (canonical 20, alphabetical by 3-letter code)

inline const std::array<std::string, 20>& amino_acids() {
  static const std::array<std::string, 20> names = {
      "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
      "LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL"};
  return names;
}

inline int amino_acid_index(const std::string& code) {
  static const std::string one = "ARNDCQEGHILKMFPSTWYV";
  if (code.size() == 1) {
    auto pos = one.find(std::toupper(code[0]));
    if (pos != std::string::npos) return static_cast<int>(pos);
    throw UnknownAminoAcid("unknown amino acid: " + code);
  }
  std::string up = code;
  for (char& c : up) c = static_cast<char>(std::toupper(c));
  const auto& names = amino_acids();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == up) return static_cast<int>(i);
  throw UnknownAminoAcid("unknown amino acid: " + code);
}

inline std::vector<double> one_hot_amino_acid(const std::string& code) {
  std::vector<double> v(20, 0.0);
  v[static_cast<std::size_t>(amino_acid_index(code))] = 1.0;
  return v;
}

// ---------------------------------------------------------------------------
// CSV IO

namespace data_detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw ParseError("trailing characters");
    return v;
  } catch (const ParseError&) {
    throw ParseError("bad " + what + ": '" + s + "'");
  } catch (const std::exception&) {
    throw ParseError("bad " + what + ": '" + s + "'");
  }
}

}  // namespace data_detail

inline void write_dataset_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out.precision(17);
  int dim = ambient_dim(d.manifold);
  if (d.covariate_dim == 1) out << "x,";
  for (int i = 0; i < dim; ++i) out << "coord_" << i << (i + 1 < dim ? "," : "\n");
  for (std::size_t r = 0; r < d.points.size(); ++r) {
    if (d.covariate_dim == 1) out << d.covariates[r][0] << ",";
    for (int i = 0; i < dim; ++i)
      out << d.points[r][i] << (i + 1 < dim ? "," : "\n");
  }
}

// Reads coord_* (optionally preceded by x) rows; points are reprojected so
// round-tripped files stay exactly on the manifold.
inline Dataset read_dataset_csv(Manifold m, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  Dataset d;
  d.manifold = m;
  int dim = ambient_dim(m);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty dataset file: " + path);
  auto header = data_detail::split_csv_line(line);
  bool with_x = !header.empty() && header[0] == "x";
  int expected = dim + (with_x ? 1 : 0);
  if (static_cast<int>(header.size()) != expected)
    throw ParseError("unexpected dataset header in " + path);
  d.covariate_dim = with_x ? 1 : 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = data_detail::split_csv_line(line);
    if (static_cast<int>(cells.size()) != expected)
      throw ParseError(path + ":" + std::to_string(lineno) + ": wrong column count");
    int at = 0;
    if (with_x)
      d.covariates.push_back({data_detail::parse_double(cells[at++], "covariate")});
    Point p{0.0, 0.0, 0.0, 0.0};
    for (int i = 0; i < dim; ++i)
      p[i] = data_detail::parse_double(cells[at++], "coordinate");
    d.points.push_back(project(m, p));
  }
  if (d.points.empty()) throw EmptySampleSet("dataset has no rows: " + path);
  return d;
}

// Dihedral rows: aa,phi_deg,psi_deg. Angles must lie in [-180, 180]; the
// amino acid becomes a 20-dim one-hot covariate and the angle pair a T2
// point.
inline Dataset read_dihedral_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty dihedral file: " + path);
  auto header = data_detail::split_csv_line(line);
  if (header.size() != 3 || header[0] != "aa" || header[1] != "phi_deg" ||
      header[2] != "psi_deg")
    throw ParseError("dihedral header must be aa,phi_deg,psi_deg");
  Dataset d;
  d.manifold = Manifold::T2;
  d.covariate_dim = 20;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = data_detail::split_csv_line(line);
    if (cells.size() != 3)
      throw ParseError(path + ":" + std::to_string(lineno) + ": wrong column count");
    double phi = data_detail::parse_double(cells[1], "phi_deg");
    double psi = data_detail::parse_double(cells[2], "psi_deg");
    if (phi < -180.0 || phi > 180.0 || psi < -180.0 || psi > 180.0)
      throw AngleOutOfRange(path + ":" + std::to_string(lineno) +
                            ": angles must lie in [-180, 180]");
    d.covariates.push_back(one_hot_amino_acid(cells[0]));
    d.points.push_back(t2_from_angles(phi * kPi / 180.0, psi * kPi / 180.0));
  }
  if (d.points.empty()) throw EmptySampleSet("dihedral file has no rows: " + path);
  return d;
}

inline void write_dihedral_csv(const std::vector<std::string>& aa,
                               const std::vector<Point>& pts,
                               const std::string& path) {
  if (aa.size() != pts.size()) throw DimensionMismatch("dihedral write: size mismatch");
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out.precision(10);
  out << "aa,phi_deg,psi_deg\n";
  for (std::size_t i = 0; i < aa.size(); ++i) {
    auto ang = t2_angles(pts[i]);
    out << aa[i] << "," << ang[0] * 180.0 / kPi << "," << ang[1] * 180.0 / kPi
        << "\n";
  }
}

// Synthetic Ramachandran-like torus clusters, residue-dependent. Sample data
// for the dihedral pipeline; not measurements. Mode weights sum to 1 per code.
struct DihedralMode {
  double phi, psi, kappa, weight;
};

inline const std::vector<std::pair<std::string, std::vector<DihedralMode>>>&
dihedral_table() {
  auto deg = [](double v) { return v * kPi / 180.0; };
  static const std::vector<std::pair<std::string, std::vector<DihedralMode>>> table = {
      {"ALA",
       {{deg(-63), deg(-43), 14.0, 0.55}, {deg(-120), deg(135), 9.0, 0.45}}},
      {"GLY",
       {{deg(-75), deg(-35), 5.0, 0.35},
        {deg(75), deg(35), 5.0, 0.35},
        {deg(-100), deg(150), 4.0, 0.30}}},
      {"PRO", {{deg(-61), deg(-35), 18.0, 0.6}, {deg(-63), deg(145), 16.0, 0.4}}},
      {"SER",
       {{deg(-67), deg(-38), 11.0, 0.5}, {deg(-115), deg(130), 8.0, 0.5}}},
  };
  return table;
}

inline const std::vector<DihedralMode>& dihedral_modes(const std::string& code) {
  for (const auto& row : dihedral_table())
    if (row.first == code) return row.second;
  throw UnknownAminoAcid("no dihedral modes for: " + code);
}

inline double dihedral_density(const std::string& code, const Point& y) {
  double p = 0.0;
  for (const DihedralMode& m : dihedral_modes(code))
    p += m.weight * vm_t2_density(m.phi, m.psi, m.kappa, y);
  return p;
}

inline void gen_dihedral_fixture(std::size_t n, std::uint64_t seed,
                                 std::vector<std::string>& aa,
                                 std::vector<Point>& pts) {
  const auto& table = dihedral_table();
  Rng rng(seed, stream::kData);
  aa.clear();
  pts.clear();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& res = table[rng.uniform_index(table.size())];
    double pick = rng.uniform(), acc = 0.0;
    const DihedralMode* mode = &res.second.back();
    for (const DihedralMode& m : res.second) {
      acc += m.weight;
      if (pick <= acc) {
        mode = &m;
        break;
      }
    }
    aa.push_back(res.first);
    pts.push_back(sample_vm_t2(mode->phi, mode->psi, mode->kappa, rng));
  }
}

// ---------------------------------------------------------------------------
// Deterministic train/eval split

struct Split {
  Dataset train;
  Dataset eval;
};

inline Split split_dataset(const Dataset& d, double eval_fraction,
                           std::uint64_t seed) {
  if (eval_fraction < 0.0 || eval_fraction >= 1.0)
    throw ParseError("eval fraction must lie in [0, 1)");
  std::vector<std::size_t> idx(d.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed, stream::kData + 17);
  rng.shuffle(idx);
  std::size_t n_eval = static_cast<std::size_t>(eval_fraction * d.size());
  Split s;
  s.train.manifold = s.eval.manifold = d.manifold;
  s.train.covariate_dim = s.eval.covariate_dim = d.covariate_dim;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    Dataset& dst = k < n_eval ? s.eval : s.train;
    dst.points.push_back(d.points[idx[k]]);
    if (d.covariate_dim > 0) dst.covariates.push_back(d.covariates[idx[k]]);
  }
  return s;
}

}  // namespace mvqr

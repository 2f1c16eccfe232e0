#include "capkit/fractional.hpp"

#include "capkit/error.hpp"
#include "capkit/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

namespace capkit::frac {

namespace {

constexpr double kPi = std::numbers::pi;

struct Directions {
  std::vector<Vec> u;
  std::vector<double> w;
};

// Antipodally symmetric direction rule: trapezoid in angle (n = 2) or
// Gauss-Legendre in cos(theta) times trapezoid in azimuth (n = 3).
Directions direction_rule(int n, int m) {
  Directions d;
  if (n == 2) {
    m += m % 2;
    for (int k = 0; k < m; ++k) {
      const double t = 2.0 * kPi * (k + 0.5) / m;
      d.u.emplace_back(std::cos(t), std::sin(t), 0.0);
      d.w.push_back(2.0 * kPi / m);
    }
    return d;
  }
  const int p = std::max(2, m / 2);
  const auto& gl = quad::gauss_legendre(p);
  for (int i = 0; i < p; ++i) {
    const double c = gl.nodes[i], sn = std::sqrt(1.0 - c * c);
    for (int k = 0; k < 2 * p; ++k) {
      const double phi = kPi * (k + 0.5) / p;
      d.u.emplace_back(sn * std::cos(phi), sn * std::sin(phi), c);
      d.w.push_back(gl.weights[i] * kPi / p);
    }
  }
  return d;
}

// Rule for integrands that depend on u only through u.x (fields symmetric
// about the x-axis, evaluated on it): half-circle for n = 2, polar
// Gauss-Legendre with the azimuth integrated out for n = 3.
Directions axial_rule(int n, int m) {
  Directions d;
  if (n == 2) {
    for (int k = 0; k < m; ++k) {
      const double t = kPi * (k + 0.5) / m;
      d.u.emplace_back(std::cos(t), std::sin(t), 0.0);
      d.w.push_back(2.0 * kPi / m);
    }
    return d;
  }
  const auto& gl = quad::gauss_legendre(m);
  for (int i = 0; i < m; ++i) {
    const double c = gl.nodes[i];
    d.u.emplace_back(c, std::sqrt(1.0 - c * c), 0.0);
    d.w.push_back(2.0 * kPi * gl.weights[i]);
  }
  return d;
}

double laplacian_once(const Field& f, int n, const Vec& x, double s, const LaplacianOptions& o,
                      const TailModel& tail, int res, bool axial = false) {
  const Directions dirs = axial ? axial_rule(n, o.angular * res) : direction_rule(n, o.angular * res);
  const double fx = f(x);
  const double r0 = o.inner_radius, R = o.outer_radius;
  const auto& gl = quad::gauss_legendre(o.radial_order);

  auto shell = [&](double r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < dirs.u.size(); ++k) acc += dirs.w[k] * (fx - f(x + r * dirs.u[k]));
    return acc;
  };

  // Inner ball. Below re the shell average is the even series c2 r^2 + c4 r^4
  // (fitted at re and re/2) and integrates in closed form; the raw
  // differences there would be dominated by cancellation.
  const double re = 0.02 * r0;
  double inner = 0.0;
  {
    const double s1 = shell(re), s2 = shell(0.5 * re);
    const double c4 = (s1 - 4.0 * s2) / (-0.75 * std::pow(re, 4));
    const double c2 = (s1 - c4 * std::pow(re, 4)) / (re * re);
    inner += c2 * std::pow(re, 2.0 - 2.0 * s) / (2.0 - 2.0 * s) + c4 * std::pow(re, 4.0 - 2.0 * s) / (4.0 - 2.0 * s);
  }
  {
    // r = r0 xi^beta makes r^{-1-2s} dr against r^2 a bounded weight.
    const double beta = 1.0 / (2.0 - 2.0 * s);
    const double x0 = std::pow(re / r0, 1.0 / beta);
    const int panels = o.inner_panels * res;
    const double h = (1.0 - x0) / panels;
    for (int p = 0; p < panels; ++p) {
      const double lo = x0 + p * h;
      for (int g = 0; g < o.radial_order; ++g) {
        const double xi = lo + 0.5 * h * (gl.nodes[g] + 1.0);
        const double r = r0 * std::pow(xi, beta);
        const double jac = std::pow(r0, -2.0 * s) * beta * std::pow(xi, -1.0 - 2.0 * s * beta);
        inner += 0.5 * h * gl.weights[g] * jac * shell(r);
      }
    }
  }

  // Annulus r0 < r < R in log r.
  double outer = 0.0;
  if (R > r0) {
    const int panels = o.outer_panels * res;
    const double a = std::log(r0), b = std::log(R), h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
      for (int g = 0; g < o.radial_order; ++g) {
        const double r = std::exp(a + p * h + 0.5 * h * (gl.nodes[g] + 1.0));
        outer += 0.5 * h * gl.weights[g] * std::pow(r, -2.0 * s) * shell(r);
      }
    }
  }

  // Beyond R with |x + z - center| ~ |z|.
  const double area = geom::sphere_measure(n);
  double far = fx * area * std::pow(R, -2.0 * s) / (2.0 * s);
  if (tail.amplitude != 0.0)
    far -= tail.amplitude * area * std::pow(R, -tail.decay - 2.0 * s) / (tail.decay + 2.0 * s);

  double v = inner + outer + far;
  if (o.normalized) v *= cns_constant(n, s);
  return v;
}

// Chebyshev interpolant on [a, b].
class Chebyshev {
 public:
  Chebyshev() = default;
  Chebyshev(const std::function<double(double)>& f, double a, double b, int degree) : a_(a), b_(b) {
    const int m = degree + 1;
    std::vector<double> fx(m);
    for (int k = 0; k < m; ++k) fx[k] = f(map(std::cos(kPi * (k + 0.5) / m)));
    c_.assign(m, 0.0);
    for (int j = 0; j < m; ++j) {
      double acc = 0.0;
      for (int k = 0; k < m; ++k) acc += fx[k] * std::cos(kPi * j * (k + 0.5) / m);
      c_[j] = 2.0 * acc / m;
    }
    c_[0] *= 0.5;
  }
  double operator()(double x) const {
    const double t = (2.0 * x - a_ - b_) / (b_ - a_);
    double b1 = 0.0, b2 = 0.0;
    for (int j = static_cast<int>(c_.size()) - 1; j >= 1; --j) {
      const double b0 = 2.0 * t * b1 - b2 + c_[j];
      b2 = b1;
      b1 = b0;
    }
    return t * b1 - b2 + c_[0];
  }

 private:
  double map(double t) const { return 0.5 * (a_ + b_) + 0.5 * (b_ - a_) * t; }
  double a_ = 0.0, b_ = 1.0;
  std::vector<double> c_;
};

double test_density(TestDensity kind, double r2) {
  if (r2 >= 1.0) return 0.0;
  if (kind == TestDensity::Bump) return std::exp(-1.0 / (1.0 - r2));
  return std::pow(1.0 - r2, 4);
}

// W(r) = int rho(y) |x - y|^{2s-n} dy at x = (r, 0, 0), by polar quadrature
// about x with t = xi^{1/(2s)} absorbing the kernel singularity.
double riesz_potential_radial(int n, double s, TestDensity kind, double r, int res) {
  const Directions dirs = axial_rule(n, 64 * res);
  std::vector<double> xi, wx;
  double total = 0.0;
  for (std::size_t k = 0; k < dirs.u.size(); ++k) {
    const Vec& u = dirs.u[k];
    const double b = r * u.x();  // x.u
    const double disc = b * b - r * r + 1.0;
    if (disc <= 0.0) continue;
    const double sq = std::sqrt(disc);
    const double thi = -b + sq;
    if (thi <= 0.0) continue;
    const double tlo = std::max(0.0, -b - sq);
    const double x0 = std::pow(tlo, 2.0 * s), x1 = std::pow(thi, 2.0 * s);
    if (tlo == 0.0)
      quad::graded_rule(x0, x1, 12, 10 * res, 0.35, xi, wx);
    else
      quad::composite_rule(x0, x1, 12, 6 * res, xi, wx);
    double acc = 0.0;
    for (std::size_t i = 0; i < xi.size(); ++i) {
      const double t = std::pow(xi[i], 0.5 / s);
      const Vec y = Vec(r, 0.0, 0.0) + t * u;
      acc += wx[i] * test_density(kind, y.squaredNorm());
    }
    total += dirs.w[k] * acc / (2.0 * s);
  }
  return total;
}

Eigen::MatrixXd power_design(const std::vector<double>& ts, double p) {
  Eigen::MatrixXd A(ts.size(), 2);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    A(k, 0) = std::pow(ts[k], p);
    A(k, 1) = std::pow(ts[k], p + 1.0);
  }
  return A;
}

// Exponent p of the best fit c t^p (1 + b t), by golden-section search on
// the variable-projection residual.
double free_exponent(const std::vector<double>& ts, const Eigen::VectorXd& g) {
  auto resid = [&](double p) {
    const Eigen::MatrixXd A = power_design(ts, p);
    return (A * A.colPivHouseholderQr().solve(g) - g).squaredNorm();
  };
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = 0.0, b = 1.5;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = resid(x1), f2 = resid(x2);
  for (int it = 0; it < 60; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = resid(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = resid(x2);
    }
  }
  return 0.5 * (a + b);
}

double density_mass(int n, TestDensity kind) {
  const double area = geom::sphere_measure(n);
  return area * quad::integrate([&](double r) { return test_density(kind, r * r) * std::pow(r, n - 1); },
                                0.0, 1.0, 16, 16);
}

}  // namespace

LaplacianResult frac_laplacian_point(const Field& f, int n, const Vec& x, double s,
                                     const LaplacianOptions& opts, const TailModel& tail) {
  if (n != 2 && n != 3) throw ConfigError("frac_laplacian_point: n must be 2 or 3");
  if (!(s > 0.0 && s < 1.0)) throw ConfigError("frac_laplacian_point: s must lie in (0, 1)");
  if (!(opts.inner_radius > 0.0)) throw ConfigError("frac_laplacian_point: inner_radius must be positive");
  const double coarse = laplacian_once(f, n, x, s, opts, tail, 1);
  const double fine = laplacian_once(f, n, x, s, opts, tail, 2);
  return {fine, std::abs(fine - coarse)};
}

CnsReport cns_self_consistency(int n, double s, TestDensity density, int resolution) {
  if (n != 2 && n != 3) throw ConfigError("cns_constant: n must be 2 or 3");
  if (!(s > 0.0 && s < 1.0)) throw ConfigError("cns_constant: s must lie in (0, 1)");
  const int res = std::max(1, resolution);

  // W on [0, 2] directly, and W(r) r^{n-2s} as a function of 2/r beyond.
  const Chebyshev near([&](double r) { return riesz_potential_radial(n, s, density, r, res); }, 0.0, 2.0,
                       40 * res);
  const double mass = density_mass(n, density);
  const Chebyshev far(
      [&](double u) {
        const double r = 2.0 / u;
        return riesz_potential_radial(n, s, density, r, res) * std::pow(r, n - 2.0 * s);
      },
      0.0, 1.0, 16 * res);
  const Field W = [&](const Vec& y) {
    const double r = y.norm();
    if (r <= 2.0) return near(r);
    return far(2.0 / r) * std::pow(r, 2.0 * s - n);
  };

  LaplacianOptions lo;
  lo.inner_radius = 0.5;
  lo.outer_radius = 60.0;
  lo.radial_order = 12;
  lo.inner_panels = 4 * res;
  lo.outer_panels = 24 * res;
  lo.angular = 32 * res;
  lo.normalized = false;
  const TailModel tail{mass, n - 2.0 * s, Vec::Zero()};

  CnsReport rep;
  rep.n = n;
  rep.s = s;
  for (double r : {0.0, 0.15, 0.3, 0.45, 0.6}) {
    const Vec x(r, 0.0, 0.0);
    const double L = laplacian_once(W, n, x, s, lo, tail, 1, true);
    rep.points.push_back(r);
    rep.ratios.push_back(test_density(density, r * r) / L);
  }
  const auto [mn, mx] = std::minmax_element(rep.ratios.begin(), rep.ratios.end());
  double mean = 0.0;
  for (double v : rep.ratios) mean += v;
  mean /= static_cast<double>(rep.ratios.size());
  rep.value = mean;
  rep.spread = (*mx - *mn) / mean;
  return rep;
}

double cns_constant(int n, double s) {
  static std::mutex mu;
  static std::map<std::pair<int, double>, double> cache;
  {
    std::lock_guard lock(mu);
    auto it = cache.find({n, s});
    if (it != cache.end()) return it->second;
  }
  const CnsReport rep = cns_self_consistency(n, s);
  if (!(rep.spread < 0.01))
    throw SolverError("c_{n,s} self-consistency spread " + std::to_string(rep.spread) + " exceeds 1%");
  std::lock_guard lock(mu);
  cache.emplace(std::make_pair(n, s), rep.value);
  return rep.value;
}

double tail_integral(int n, double s, int resolution) {
  if (!(s > 0.0 && s < 1.0)) throw ConfigError("tail_integral: s must lie in (0, 1)");
  const int res = std::max(1, resolution);
  const double p = 0.5 * (n + 2.0 * s);
  const double cut = 4.0;
  const double body = quad::integrate(
      [&](double r) { return std::pow(r, n - 2) * std::pow(1.0 + r * r, -p); }, 0.0, cut, 16, 8 * res);
  // (1 + r^2)^{-p} = r^{-2p} sum_k binom(-p, k) r^{-2k} beyond the cut.
  double tail = 0.0, coef = 1.0;
  for (int k = 0; k < 40 * res; ++k) {
    const double e = 1.0 + 2.0 * s + 2.0 * k;
    tail += coef * std::pow(cut, -e) / e;
    coef *= -(p + k) / (k + 1.0);
  }
  const double sphere = n == 2 ? 2.0 : 2.0 * kPi;
  return sphere * (body + tail);
}

double proof_integral(double s, int resolution) {
  if (!(s > 0.0 && s < 1.0)) throw ConfigError("proof_integral: s must lie in (0, 1)");
  const int res = std::max(1, resolution);
  // r = xi^{1/(1-s)} and t = r / w with w = zeta^{1/s}; both remaining
  // (1 - .)^s endpoint factors sit at xi, zeta -> 1.
  std::vector<double> xi, wxi, ze, wze;
  quad::graded_rule(1.0, 0.0, 12, 12 * res, 0.4, xi, wxi);
  quad::graded_rule(1.0, 0.0, 12, 12 * res, 0.4, ze, wze);
  double total = 0.0;
  for (std::size_t i = 0; i < xi.size(); ++i) {
    const double r = std::pow(xi[i], 1.0 / (1.0 - s));
    const double dr = std::pow(xi[i], s / (1.0 - s)) / (1.0 - s);
    double row = 0.0;
    for (std::size_t j = 0; j < ze.size(); ++j) {
      const double w = std::pow(ze[j], 1.0 / s);
      const double t = r / w;
      const double dt = r / (w * w) * std::pow(ze[j], 1.0 / s - 1.0) / s;
      row += std::abs(wze[j]) * std::pow(1.0 - r, s) * std::pow(t - r, s) * std::pow(t, -2.0 * s - 1.0) * dt;
    }
    total += std::abs(wxi[i]) * row * dr;
  }
  return total;
}

FracConstants theorem_constants(int n, double s, int resolution) {
  FracConstants c;
  c.n = n;
  c.s = s;
  c.resolution = resolution;
  c.cns = resolution == 1 ? cns_constant(n, s) : cns_self_consistency(n, s, TestDensity::Bump, resolution).value;
  c.a_ns = tail_integral(n, s, resolution);
  c.c_s = proof_integral(s, resolution);
  c.c0 = c.c_s * c.a_ns * c.cns;
  return c;
}

double NormalDerivativeTrace::cv_abs() const {
  if (d.empty()) return 0.0;
  double m1 = 0.0, m2 = 0.0;
  for (double v : d) {
    m1 += std::abs(v);
    m2 += v * v;
  }
  m1 /= size();
  m2 /= size();
  return std::sqrt(std::max(0.0, m2 - m1 * m1)) / m1;
}

NormalDerivativeTrace s_normal_derivative(const eq::EquilibriumSolution& sol, const geom::Body& body,
                                          double s, const TraceFit& fit) {
  if (!(s > 0.0 && s < 1.0)) throw ConfigError("s_normal_derivative: s must lie in (0, 1)");
  if (fit.k < 3) throw ConfigError("s_normal_derivative: need at least 3 offsets");
  if (fit.t_min < 0.0 || fit.t_max < 0.0) throw ConfigError("s_normal_derivative: negative offsets");
  const eq::NodeSet& ns = *sol.nodes;
  std::vector<int> outer;
  for (int j = 0; j < ns.size(); ++j)
    if (ns.outer[j]) outer.push_back(j);

  NormalDerivativeTrace tr;
  tr.s = s;
  int failed = 0;
  for (int i = 0; i < body.size(); ++i) {
    const Vec& sigma = body.sigma[i];
    const Vec& nu = body.normal(i);
    int near = outer.front();
    for (int j : outer)
      if ((ns.nodes[j] - sigma).squaredNorm() < (ns.nodes[near] - sigma).squaredNorm()) near = j;
    const double tmin = fit.t_min > 0.0 ? fit.t_min : 2.0 * ns.cell_size[near];
    const double tmax = fit.t_max > 0.0 ? fit.t_max : 4.0 * tmin;
    if (!(tmax > tmin)) throw ConfigError("s_normal_derivative: t_max must exceed t_min");

    // g(t) = c t^s (1 + b t): linear least squares in (c, c b).
    std::vector<double> ts(fit.k);
    Eigen::VectorXd g(fit.k);
    for (int k = 0; k < fit.k; ++k) {
      const double t = tmax * std::pow(tmin / tmax, static_cast<double>(k) / (fit.k - 1));
      const double gk = 1.0 - eq::normalized_potential(sol, sigma + t * nu);
      if (!(gk > 0.0))
        throw SolverError("s_normal_derivative: 1 - u <= 0 at boundary node " + std::to_string(i) +
                          " (t = " + std::to_string(t) + ")");
      ts[k] = t;
      g(k) = gk;
      if (i == 0) tr.t.push_back(t);
    }
    const Eigen::MatrixXd A = power_design(ts, s);
    const Eigen::Vector2d cb = A.colPivHouseholderQr().solve(g);
    const double res = (A * cb - g).norm() / g.norm();
    if (!(res <= fit.max_residual)) ++failed;
    tr.sigma.push_back(sigma);
    tr.normal.push_back(nu);
    tr.d.push_back(-cb(0));
    tr.b.push_back(cb(1) / cb(0));
    tr.exponent.push_back(free_exponent(ts, g));
    tr.residual.push_back(res);
  }
  tr.failed = failed;
  if (failed > 0.05 * body.size())
    throw SolverError("s_normal_derivative: " + std::to_string(failed) + " of " + std::to_string(body.size()) +
                      " boundary fits exceed residual " + std::to_string(fit.max_residual));
  return tr;
}

std::string trace_csv(const NormalDerivativeTrace& tr) {
  std::ostringstream os;
  os.precision(12);
  os << "node,sigma_x,sigma_y,sigma_z,nu_x,nu_y,nu_z,d,exponent,residual\n";
  for (int i = 0; i < tr.size(); ++i) {
    os << i << ',' << tr.sigma[i].x() << ',' << tr.sigma[i].y() << ',' << tr.sigma[i].z() << ','
       << tr.normal[i].x() << ',' << tr.normal[i].y() << ',' << tr.normal[i].z() << ',' << tr.d[i] << ','
       << tr.exponent[i] << ',' << tr.residual[i] << '\n';
  }
  return os.str();
}

HarmonicityProbe s_harmonicity_residual(const eq::EquilibriumSolution& sol, const geom::Body& body,
                                        const Vec& x, int resolution) {
  const int n = sol.dim;
  const double s = 0.5 * sol.alpha;
  double dist = -std::numeric_limits<double>::infinity(), hmax = 0.0;
  for (int i = 0; i < body.size(); ++i) {
    dist = std::max(dist, x.dot(body.normal(i)) - body.support.h[i]);
    hmax = std::max(hmax, std::abs(body.support.h[i]));
  }
  if (!(dist > 0.0)) throw ConfigError("s_harmonicity_residual: probe is not exterior");

  LaplacianOptions o;
  o.inner_radius = std::min(1.0, 0.5 * dist);
  o.outer_radius = 50.0 * hmax + 2.0 * x.norm();
  o.inner_panels = 2 * resolution;
  o.outer_panels = 16 * resolution;
  o.angular = (n == 2 ? 64 : 16) * resolution;
  const TailModel tail{1.0, n - sol.alpha, geom::steiner_point(body.support)};
  const Field V = [&](const Vec& y) { return eq::potential(sol, y); };

  HarmonicityProbe p;
  p.x = x;
  const LaplacianResult r = frac_laplacian_point(V, n, x, s, o, tail);
  p.residual = r.value;
  p.error = r.error;
  p.scale = cns_constant(n, s) * geom::sphere_measure(n) * V(x) * std::pow(dist, -2.0 * s) / (2.0 * s);
  return p;
}

}  // namespace capkit::frac

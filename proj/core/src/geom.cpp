#include "capkit/geom.hpp"

#include "capkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace capkit::geom {

namespace {

constexpr double kPi = std::numbers::pi;

void require_same_grid(const SupportVector& a, const SupportVector& b) {
  if (a.grid != b.grid && !a.grid->compatible(*b.grid))
    throw GeometryError("grid mismatch between support vectors");
}

// Cosine/sine table for the N-point DFT: entry k holds angle 2*pi*k/N.
struct DftTable {
  std::vector<double> c, s;
  explicit DftTable(int n) : c(n), s(n) {
    for (int k = 0; k < n; ++k) {
      c[k] = std::cos(2.0 * kPi * k / n);
      s[k] = std::sin(2.0 * kPi * k / n);
    }
  }
};

void dft(const std::vector<double>& h, std::vector<double>& a, std::vector<double>& b) {
  const int n = static_cast<int>(h.size());
  const DftTable tab(n);
  const int half = n / 2;
  a.assign(half + 1, 0.0);
  b.assign(half + 1, 0.0);
  for (int m = 0; m <= half; ++m) {
    double sa = 0.0, sb = 0.0;
    for (int j = 0; j < n; ++j) {
      const int k = static_cast<int>((static_cast<long long>(m) * j) % n);
      sa += h[j] * tab.c[k];
      sb += h[j] * tab.s[k];
    }
    const double scale = (m == 0 || (n % 2 == 0 && m == half)) ? 1.0 / n : 2.0 / n;
    a[m] = sa * scale;
    b[m] = sb * scale;
  }
  if (n % 2 == 0) b[half] = 0.0;
}

// Fitted tangential gradient and Hessian of the homogeneous extension at node i.
void local_fit(const SupportVector& sv, int i, Eigen::Vector2d& grad, Eigen::Matrix2d& hess) {
  const DirectionGrid& g = *sv.grid;
  const Vec& vi = g.direction(i);
  const auto& e = g.frame(i);
  const auto& nb = g.neighbours(i);
  const int m = static_cast<int>(nb.size());
  Eigen::MatrixXd A(m, 9);
  Eigen::VectorXd rhs(m);
  for (int r = 0; r < m; ++r) {
    const Vec& vj = g.direction(nb[r]);
    const double c = vj.dot(vi);
    const double a = vj.dot(e.col(0)) / c;
    const double b = vj.dot(e.col(1)) / c;
    rhs(r) = sv.h[nb[r]] / c - sv.h[i];
    A.row(r) << a, b, 0.5 * a * a, a * b, 0.5 * b * b, a * a * a, a * a * b, a * b * b, b * b * b;
  }
  const Eigen::VectorXd x = A.colPivHouseholderQr().solve(rhs);
  grad = Eigen::Vector2d(x(0), x(1));
  hess << x(2), x(3), x(3), x(4);
}

void tangent_data(const SupportVector& sv, std::vector<Eigen::Vector2d>& grads,
                  std::vector<Eigen::Matrix2d>& hess) {
  if (sv.tangent_gradient && sv.tangent_hessian) {
    grads = *sv.tangent_gradient;
    hess = *sv.tangent_hessian;
    return;
  }
  const int n = sv.size();
  grads.resize(n);
  hess.resize(n);
  for (int i = 0; i < n; ++i) local_fit(sv, i, grads[i], hess[i]);
}

}  // namespace

double sphere_measure(int n) {
  if (n == 2) return 2.0 * kPi;
  if (n == 3) return 4.0 * kPi;
  throw GeometryError("unsupported dimension " + std::to_string(n));
}

DirectionGrid::DirectionGrid(int dim, int resolution) : dim_(dim) {
  if (dim != 2 && dim != 3)
    throw GeometryError("unsupported dimension " + std::to_string(dim) + " (expected 2 or 3)");
  if (resolution < 16)
    throw GeometryError("direction grid resolution " + std::to_string(resolution) +
                        " too small (minimum 16)");
  dirs_.resize(resolution);
  weights_.assign(resolution, sphere_measure(dim) / resolution);
  if (dim == 2) {
    spacing_ = 2.0 * kPi / resolution;
    for (int i = 0; i < resolution; ++i) {
      const double t = spacing_ * i;
      dirs_[i] = Vec(std::cos(t), std::sin(t), 0.0);
    }
    return;
  }

  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < resolution; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / resolution;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    dirs_[i] = Vec(r * std::cos(phi), r * std::sin(phi), z);
  }
  spacing_ = std::sqrt(4.0 * kPi / resolution);

  frames_.resize(resolution);
  for (int i = 0; i < resolution; ++i) {
    const Vec& v = dirs_[i];
    const Vec ref = std::abs(v.z()) < 0.9 ? Vec(0, 0, 1) : Vec(1, 0, 0);
    const Vec e1 = ref.cross(v).normalized();
    const Vec e2 = v.cross(e1);
    frames_[i].col(0) = e1;
    frames_[i].col(1) = e2;
  }

  const int k = std::min(24, resolution - 1);
  neighbours_.resize(resolution);
  std::vector<int> idx(resolution);
  for (int i = 0; i < resolution; ++i) {
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + k + 1, idx.end(), [&](int a, int b) {
      const double da = dirs_[a].dot(dirs_[i]), db = dirs_[b].dot(dirs_[i]);
      return da != db ? da > db : a < b;
    });
    for (int j = 0, taken = 0; taken < k; ++j) {
      if (idx[j] == i) continue;
      neighbours_[i].push_back(idx[j]);
      ++taken;
    }
  }
}

double DirectionGrid::angle(int i) const {
  if (dim_ != 2) throw GeometryError("angle() is only defined for planar grids");
  return spacing_ * i;
}

GridPtr make_direction_grid(int n, int resolution) {
  return std::make_shared<const DirectionGrid>(n, resolution);
}

// ---------------------------------------------------------------------------
// Trigonometric interpolation

TrigSeries::TrigSeries(const std::vector<double>& samples) : n_(static_cast<int>(samples.size())) {
  dft(samples, a_, b_);
}

double TrigSeries::value(double t) const {
  double s = a_[0];
  for (std::size_t m = 1; m < a_.size(); ++m)
    s += a_[m] * std::cos(m * t) + b_[m] * std::sin(m * t);
  return s;
}

double TrigSeries::d1(double t) const {
  double s = 0.0;
  const std::size_t top = (n_ % 2 == 0) ? a_.size() - 1 : a_.size();
  for (std::size_t m = 1; m < top; ++m)
    s += m * (-a_[m] * std::sin(m * t) + b_[m] * std::cos(m * t));
  return s;
}

double TrigSeries::d2(double t) const {
  double s = 0.0;
  const std::size_t top = (n_ % 2 == 0) ? a_.size() - 1 : a_.size();
  for (std::size_t m = 1; m < top; ++m)
    s -= double(m * m) * (a_[m] * std::cos(m * t) + b_[m] * std::sin(m * t));
  return s;
}

void spectral_derivatives(const std::vector<double>& h, std::vector<double>& d1,
                          std::vector<double>& d2) {
  const int n = static_cast<int>(h.size());
  std::vector<double> a, b;
  dft(h, a, b);
  const DftTable tab(n);
  const int top = (n % 2 == 0) ? n / 2 : n / 2 + 1;  // Nyquist mode dropped
  d1.assign(n, 0.0);
  d2.assign(n, 0.0);
  for (int j = 0; j < n; ++j) {
    double s1 = 0.0, s2 = 0.0;
    for (int m = 1; m < top; ++m) {
      const int k = static_cast<int>((static_cast<long long>(m) * j) % n);
      s1 += m * (-a[m] * tab.s[k] + b[m] * tab.c[k]);
      s2 -= double(m) * m * (a[m] * tab.c[k] + b[m] * tab.s[k]);
    }
    d1[j] = s1;
    d2[j] = s2;
  }
}

// ---------------------------------------------------------------------------
// Certificates and combinations

std::vector<double> curvature_radii_min(const SupportVector& sv) {
  const int n = sv.size();
  std::vector<double> out(n);
  if (sv.dim() == 2) {
    std::vector<double> d1, d2;
    spectral_derivatives(sv.h, d1, d2);
    for (int i = 0; i < n; ++i) out[i] = d2[i] + sv.h[i];
    return out;
  }
  std::vector<Eigen::Vector2d> g;
  std::vector<Eigen::Matrix2d> H;
  tangent_data(sv, g, H);
  for (int i = 0; i < n; ++i) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(H[i], Eigen::EigenvaluesOnly);
    out[i] = es.eigenvalues()(0);
  }
  return out;
}

bool is_certified(const SupportVector& sv, double margin) {
  for (double v : sv.h)
    if (!(v > 0.0)) return false;
  const auto r = curvature_radii_min(sv);
  return std::all_of(r.begin(), r.end(), [&](double x) { return x > margin; });
}

void certify(const SupportVector& sv, double margin) {
  for (int i = 0; i < sv.size(); ++i)
    if (!(sv.h[i] > 0.0))
      throw GeometryError("origin not interior: h[" + std::to_string(i) +
                          "] = " + std::to_string(sv.h[i]));
  const auto r = curvature_radii_min(sv);
  const auto it = std::min_element(r.begin(), r.end());
  if (!(*it > margin))
    throw GeometryError("convexity certificate failed: min radius of curvature " +
                        std::to_string(*it) + " at node " +
                        std::to_string(it - r.begin()));
}

SupportVector linear_combine(double a, const SupportVector& hA, double b,
                             const SupportVector& hB) {
  require_same_grid(hA, hB);
  SupportVector out;
  out.grid = hA.grid;
  out.h.resize(hA.h.size());
  for (std::size_t i = 0; i < hA.h.size(); ++i) out.h[i] = a * hA.h[i] + b * hB.h[i];
  if (hA.tangent_gradient && hB.tangent_gradient && hA.tangent_hessian && hB.tangent_hessian) {
    std::vector<Eigen::Vector2d> g(hA.h.size());
    std::vector<Eigen::Matrix2d> H(hA.h.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] = a * (*hA.tangent_gradient)[i] + b * (*hB.tangent_gradient)[i];
      H[i] = a * (*hA.tangent_hessian)[i] + b * (*hB.tangent_hessian)[i];
    }
    out.tangent_gradient = std::move(g);
    out.tangent_hessian = std::move(H);
  }
  return out;
}

SupportVector minkowski_combine(double a, const SupportVector& hA, double b,
                                const SupportVector& hB) {
  if (a < 0.0 || b < 0.0 || !(a + b > 0.0))
    throw GeometryError("Minkowski combination needs a, b >= 0 and a + b > 0");
  SupportVector out = linear_combine(a, hA, b, hB);
  certify(out);
  return out;
}

SupportVector point_support(const GridPtr& grid, const Vec& c) {
  SupportVector out;
  out.grid = grid;
  out.h.resize(grid->size());
  for (int i = 0; i < grid->size(); ++i) out.h[i] = c.dot(grid->direction(i));
  if (grid->dim() == 3) {
    std::vector<Eigen::Vector2d> g(grid->size());
    std::vector<Eigen::Matrix2d> H(grid->size(), Eigen::Matrix2d::Zero());
    for (int i = 0; i < grid->size(); ++i) g[i] = grid->frame(i).transpose() * c;
    out.tangent_gradient = std::move(g);
    out.tangent_hessian = std::move(H);
  }
  return out;
}

SupportVector translate(const SupportVector& h, const Vec& c) {
  if (h.tangent_gradient) return linear_combine(1.0, h, 1.0, point_support(h.grid, c));
  SupportVector out = h;
  for (int i = 0; i < h.size(); ++i) out.h[i] += c.dot(h.grid->direction(i));
  return out;
}

SupportVector scale(const SupportVector& h, double t) {
  if (!(t > 0.0)) throw GeometryError("scale factor must be positive");
  return linear_combine(t, h, 0.0, h);
}

SupportVector rotate_grid_steps(const SupportVector& h, int steps) {
  if (h.dim() != 2) throw GeometryError("grid rotation is only defined for n = 2");
  const int n = h.size();
  SupportVector out;
  out.grid = h.grid;
  out.h.resize(n);
  // rotated body R K has h_RK(v) = h_K(R^T v)
  for (int i = 0; i < n; ++i) out.h[i] = h.h[((i - steps) % n + n) % n];
  return out;
}

// ---------------------------------------------------------------------------
// Wulff shape

Body wulff_body(const SupportVector& sv) {
  certify(sv);
  Body body;
  body.support = sv;
  const int n = sv.size();
  const DirectionGrid& g = *sv.grid;
  body.sigma.resize(n);
  body.curvature.resize(n);
  body.area.resize(n);
  body.radii_min.resize(n);

  if (sv.dim() == 2) {
    std::vector<double> d1, d2;
    spectral_derivatives(sv.h, d1, d2);
    body.series = TrigSeries(sv.h);
    const double dt = g.spacing();
    for (int i = 0; i < n; ++i) {
      const Vec& v = g.direction(i);
      const Vec vp(-v.y(), v.x(), 0.0);
      body.sigma[i] = sv.h[i] * v + d1[i] * vp;
      const double rho = d2[i] + sv.h[i];
      body.radii_min[i] = rho;
      body.curvature[i] = 1.0 / rho;
      body.area[i] = rho * dt;
    }
    return body;
  }

  std::vector<Eigen::Vector2d> grads;
  std::vector<Eigen::Matrix2d> hess;
  tangent_data(sv, grads, hess);
  body.tangent_gradient = grads;
  body.radii_matrix = hess;
  for (int i = 0; i < n; ++i) {
    const Vec& v = g.direction(i);
    body.sigma[i] = sv.h[i] * v + g.frame(i) * grads[i];
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(hess[i], Eigen::EigenvaluesOnly);
    const double r1 = es.eigenvalues()(0), r2 = es.eigenvalues()(1);
    body.radii_min[i] = r1;
    body.curvature[i] = 1.0 / (r1 * r2);
    body.area[i] = r1 * r2 * g.weight(i);
  }
  return body;
}

// ---------------------------------------------------------------------------
// Functionals

double volume(const Body& body) {
  double s = 0.0;
  for (int i = 0; i < body.size(); ++i) s += body.support.h[i] * body.area[i];
  return s / body.dim();
}

double mean_width(const SupportVector& sv) {
  double s = 0.0;
  for (int i = 0; i < sv.size(); ++i) s += sv.h[i] * sv.grid->weight(i);
  return 2.0 * s / sphere_measure(sv.dim());
}

double surface_area(const Body& body) {
  return std::accumulate(body.area.begin(), body.area.end(), 0.0);
}

double hausdorff_distance(const SupportVector& a, const SupportVector& b) {
  require_same_grid(a, b);
  double d = 0.0;
  for (int i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.h[i] - b.h[i]));
  return d;
}

Vec steiner_point(const SupportVector& sv) {
  Vec c = Vec::Zero();
  for (int i = 0; i < sv.size(); ++i) c += sv.h[i] * sv.grid->weight(i) * sv.grid->direction(i);
  return c * (sv.dim() / sphere_measure(sv.dim()));
}

double inradius(const SupportVector& sv, const Vec& center) {
  double r = std::numeric_limits<double>::infinity();
  for (int i = 0; i < sv.size(); ++i) r = std::min(r, sv.h[i] - center.dot(sv.grid->direction(i)));
  return r;
}

double inradius(const Body& body) { return inradius(body.support, steiner_point(body.support)); }

BallFit best_fit_ball(const Body& body) {
  BallFit fit;
  fit.center = steiner_point(body.support);
  fit.radius = 0.5 * mean_width(body);
  for (int i = 0; i < body.size(); ++i) {
    const double hb = fit.radius + fit.center.dot(body.normal(i));
    fit.deviation = std::max(fit.deviation, std::abs(body.support.h[i] - hb));
  }
  return fit;
}

double radial_function(const Body& body, const Vec& center, const Vec& u) {
  const int n = body.size();
  if (body.dim() == 3) {
    int best = -1;
    double r = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      const Vec& v = body.normal(i);
      const double c = u.dot(v);
      if (c <= 1e-3) continue;
      const double ri = (body.support.h[i] - center.dot(v)) / c;
      if (ri < r) {
        r = ri;
        best = i;
      }
    }
    if (best < 0 || body.radii_matrix.empty()) return r;
    // The minimising half-space only bounds the body from outside. Solve
    // sigma(xi) - center = lambda u on the second-order model
    //   sigma(xi) = (h - xi.W xi / 2) v + E (g + W xi)
    // of the inverse Gauss map around the best node, re-anchoring at the
    // nearest neighbour while the solution leaves the node's patch.
    const DirectionGrid& g = body.grid();
    int i = best;
    for (int hop = 0; hop < 4; ++hop) {
      const Vec& v = g.direction(i);
      const auto& E = g.frame(i);
      const Eigen::Matrix2d& W = body.radii_matrix[i];
      const Eigen::Vector2d& gr = body.tangent_gradient[i];
      const double h = body.support.h[i];
      Eigen::Vector3d z(0.0, 0.0, r);  // (xi, lambda)
      for (int it = 0; it < 8; ++it) {
        const Eigen::Vector2d xi = z.head<2>();
        const Eigen::Vector2d wx = W * xi;
        const Vec F = (h - 0.5 * xi.dot(wx)) * v + E * (gr + wx) - center - z(2) * u;
        Eigen::Matrix3d J;
        J.leftCols<2>() = -v * wx.transpose() + E * W;
        J.col(2) = -u;
        const Eigen::Vector3d dz = J.fullPivLu().solve(-F);
        z += dz;
        if (dz.norm() < 1e-14 * (1.0 + std::abs(z(2)))) break;
      }
      const Vec vn = (v + E * z.head<2>()).normalized();
      int next = i;
      double bestc = vn.dot(v);
      for (int j : g.neighbours(i)) {
        const double c = vn.dot(g.direction(j));
        if (c > bestc) {
          bestc = c;
          next = j;
        }
      }
      if (next == i || !(z(2) > 0.0)) {
        if (z(2) > 0.0 && std::abs(z(2) - r) < 0.1 * r) return z(2);
        return r;
      }
      i = next;
    }
    return r;
  }

  // Planar: find theta with (sigma(theta) - center) parallel to u by a
  // safeguarded Newton iteration on the cross product.
  int best = 0;
  double best_cos = -2.0;
  for (int i = 0; i < n; ++i) {
    const Vec d = body.sigma[i] - center;
    const double c = d.dot(u) / d.norm();
    if (c > best_cos) {
      best_cos = c;
      best = i;
    }
  }
  const TrigSeries& s = body.series;
  auto point = [&](double t) {
    const Vec v(std::cos(t), std::sin(t), 0.0), vp(-std::sin(t), std::cos(t), 0.0);
    return Vec(s.value(t) * v + s.d1(t) * vp);
  };
  auto cross = [&](double t) {
    const Vec d = point(t) - center;
    return d.x() * u.y() - d.y() * u.x();
  };
  const double dt = body.grid().spacing();
  double lo = body.grid().angle(best) - dt, hi = body.grid().angle(best) + dt;
  double flo = cross(lo), fhi = cross(hi);
  // cross decreases as theta increases for a counter-clockwise boundary
  for (int widen = 0; widen < 8 && flo * fhi > 0.0; ++widen) {
    lo -= dt;
    hi += dt;
    flo = cross(lo);
    fhi = cross(hi);
  }
  if (flo * fhi > 0.0) throw GeometryError("radial_function: bracketing failed");
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 60; ++it) {
    const double f = cross(t);
    if (std::abs(f) < 1e-15) break;
    if ((f > 0.0) == (flo > 0.0)) {
      lo = t;
      flo = f;
    } else {
      hi = t;
    }
    const Vec v(std::cos(t), std::sin(t), 0.0), vp(-std::sin(t), std::cos(t), 0.0);
    const double rho = s.d2(t) + s.value(t);
    const Vec dp = rho * vp;
    const double df = dp.x() * u.y() - dp.y() * u.x();
    double next = (df != 0.0) ? t - f / df : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) < 1e-15) {
      t = next;
      break;
    }
    t = next;
  }
  return (point(t) - center).dot(u);
}

}  // namespace capkit::geom

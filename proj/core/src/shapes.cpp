#include "capkit/shapes.hpp"

#include "capkit/error.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace capkit::geom {

namespace {

constexpr double kPi = std::numbers::pi;

// splitmix64: portable deterministic stream for random_trig coefficients.
struct SplitMix {
  std::uint64_t state;
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() { return 2.0 * (next() >> 11) * 0x1.0p-53 - 1.0; }  // [-1, 1)
};

struct Fourier {
  std::vector<double> a, b;  // index = frequency
  double value(double t) const {
    double s = 0.0;
    for (std::size_t m = 0; m < a.size(); ++m) s += a[m] * std::cos(m * t) + b[m] * std::sin(m * t);
    return s;
  }
  // h'' + h
  double radius(double t) const {
    double s = 0.0;
    for (std::size_t m = 0; m < a.size(); ++m)
      s += (1.0 - double(m * m)) * (a[m] * std::cos(m * t) + b[m] * std::sin(m * t));
    return s;
  }
};

SupportVector sample(const GridPtr& grid, const std::function<double(const Vec&)>& h) {
  SupportVector out;
  out.grid = grid;
  out.h.resize(grid->size());
  for (int i = 0; i < grid->size(); ++i) out.h[i] = h(grid->direction(i));
  return out;
}

SupportVector ball(const BallSpec& s, const GridPtr& grid) {
  if (!(s.radius > 0.0)) throw GeometryError("ball radius must be positive");
  SupportVector out = sample(grid, [&](const Vec& v) { return s.radius + s.center.dot(v); });
  if (grid->dim() == 3) {
    std::vector<Eigen::Vector2d> g(grid->size());
    std::vector<Eigen::Matrix2d> H(grid->size(), s.radius * Eigen::Matrix2d::Identity());
    for (int i = 0; i < grid->size(); ++i) g[i] = grid->frame(i).transpose() * s.center;
    out.tangent_gradient = std::move(g);
    out.tangent_hessian = std::move(H);
  }
  return out;
}

SupportVector ellipsoid(const EllipsoidSpec& s, const GridPtr& grid) {
  const int n = grid->dim();
  if (static_cast<int>(s.axes.size()) != n)
    throw GeometryError("ellipsoid needs " + std::to_string(n) + " semi-axes");
  for (double a : s.axes)
    if (!(a > 0.0)) throw GeometryError("ellipsoid semi-axes must be positive");

  if (n == 2) {
    const double a = s.axes[0], b = s.axes[1], ca = std::cos(s.angle), sa = std::sin(s.angle);
    return sample(grid, [&](const Vec& v) {
      const double x = ca * v.x() + sa * v.y(), y = -sa * v.x() + ca * v.y();
      return std::sqrt(a * a * x * x + b * b * y * y) + s.center.dot(v);
    });
  }

  // H(x) = sqrt(x^T A^2 x) + c.x is the 1-homogeneous extension.
  const Eigen::Vector3d a2(s.axes[0] * s.axes[0], s.axes[1] * s.axes[1], s.axes[2] * s.axes[2]);
  SupportVector out;
  out.grid = grid;
  out.h.resize(grid->size());
  std::vector<Eigen::Vector2d> g(grid->size());
  std::vector<Eigen::Matrix2d> H(grid->size());
  for (int i = 0; i < grid->size(); ++i) {
    const Vec& v = grid->direction(i);
    const Vec Av = a2.cwiseProduct(v);
    const double q = std::sqrt(v.dot(Av));
    out.h[i] = q + s.center.dot(v);
    const Vec grad = Av / q + s.center;
    const Eigen::Matrix3d hess = Eigen::Matrix3d(a2.asDiagonal()) / q - Av * Av.transpose() / (q * q * q);
    const auto& E = grid->frame(i);
    g[i] = E.transpose() * grad;
    H[i] = E.transpose() * hess * E;
  }
  out.tangent_gradient = std::move(g);
  out.tangent_hessian = std::move(H);
  return out;
}

SupportVector smoothed_polygon(const SmoothedPolygonSpec& s, const GridPtr& grid) {
  if (grid->dim() != 2) throw GeometryError("smoothed_polygon is planar only");
  const auto& p = s.vertices;
  const int k = static_cast<int>(p.size());
  if (k < 3) throw GeometryError("smoothed_polygon needs at least 3 vertices");
  if (!(s.rho > 0.0)) throw GeometryError("smoothed_polygon needs rho > 0");
  if (!(s.mollify > 0.0)) throw GeometryError("smoothed_polygon needs mollify > 0");

  std::vector<double> len(k), nang(k);
  for (int e = 0; e < k; ++e) {
    const Eigen::Vector2d d = p[(e + 1) % k] - p[e];
    len[e] = d.norm();
    if (!(len[e] > 0.0)) throw GeometryError("smoothed_polygon has repeated vertices");
    nang[e] = std::atan2(-d.x(), d.y());  // outward normal of a CCW edge
    const Eigen::Vector2d d2 = p[(e + 2) % k] - p[(e + 1) % k];
    if (d.x() * d2.y() - d.y() * d2.x() <= 0.0)
      throw GeometryError("smoothed_polygon vertices must be convex and counter-clockwise");
  }

  // Steiner point of the polygon: vertices weighted by exterior angle.
  Eigen::Vector2d steiner = Eigen::Vector2d::Zero();
  for (int v = 0; v < k; ++v) {
    double ext = nang[v] - nang[(v - 1 + k) % k];
    while (ext < 0.0) ext += 2.0 * kPi;
    while (ext >= 2.0 * kPi) ext -= 2.0 * kPi;
    steiner += p[v] * ext / (2.0 * kPi);
  }

  const double eps = s.mollify;
  const int mmax = static_cast<int>(std::ceil(std::sqrt(2.0 * 40.0) / eps));
  Fourier f;
  f.a.assign(mmax + 1, 0.0);
  f.b.assign(mmax + 1, 0.0);
  double perimeter = 0.0;
  for (double l : len) perimeter += l;
  f.a[0] = s.rho + perimeter / (2.0 * kPi);
  f.a[1] = steiner.x();
  f.b[1] = steiner.y();
  for (int m = 2; m <= mmax; ++m) {
    const double damp = std::exp(-0.5 * m * m * eps * eps);
    double rc = 0.0, rs = 0.0;
    for (int e = 0; e < k; ++e) {
      rc += len[e] * std::cos(m * nang[e]);
      rs += len[e] * std::sin(m * nang[e]);
    }
    f.a[m] = damp * rc / kPi / (1.0 - double(m * m));
    f.b[m] = damp * rs / kPi / (1.0 - double(m * m));
  }
  SupportVector out;
  out.grid = grid;
  out.h.resize(grid->size());
  for (int i = 0; i < grid->size(); ++i) out.h[i] = f.value(grid->angle(i));
  return out;
}

SupportVector random_trig(const RandomTrigSpec& s, const GridPtr& grid) {
  if (grid->dim() != 2) throw GeometryError("random_trig is planar only");
  if (s.degree < 2) throw GeometryError("random_trig degree must be >= 2");
  if (!(s.margin > 0.0 && s.margin < 1.0)) throw GeometryError("random_trig margin must be in (0, 1)");
  SplitMix rng{s.seed * 0x632be59bd9b4e019ULL + 1};
  Fourier f;
  f.a.assign(s.degree + 1, 0.0);
  f.b.assign(s.degree + 1, 0.0);
  f.a[0] = 1.0;
  f.a[1] = 0.05 * rng.uniform();
  f.b[1] = 0.05 * rng.uniform();
  for (int m = 2; m <= s.degree; ++m) {
    f.a[m] = s.amplitude * rng.uniform() / m;
    f.b[m] = s.amplitude * rng.uniform() / m;
  }
  const int probe = 2048;
  auto min_radius = [&] {
    double r = 1e300;
    for (int j = 0; j < probe; ++j) r = std::min(r, f.radius(2.0 * kPi * j / probe));
    return r;
  };
  int iter = 0;
  while (min_radius() < s.margin) {
    if (++iter > 200) throw GeometryError("random_trig: convexity projection did not converge");
    for (int m = 2; m <= s.degree; ++m) {
      f.a[m] *= 0.8;
      f.b[m] *= 0.8;
    }
  }
  SupportVector out;
  out.grid = grid;
  out.h.resize(grid->size());
  for (int i = 0; i < grid->size(); ++i) out.h[i] = f.value(grid->angle(i));
  return out;
}

std::vector<double> numbers_in(const std::string& args) {
  std::vector<double> out;
  std::stringstream ss(args);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(tok, &pos));
      if (tok.find_first_not_of(" \t", pos) != std::string::npos) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("shape argument '" + tok + "' is not a number");
    }
  }
  return out;
}

Vec vec_from(const nlohmann::json& j) {
  Vec c = Vec::Zero();
  if (!j.is_array() || j.size() > 3) throw ConfigError("center must be an array of up to 3 numbers");
  for (std::size_t i = 0; i < j.size(); ++i) c(i) = j[i].get<double>();
  return c;
}

ShapeSpec parse_compact(const std::string& text) {
  const auto open = text.find('('), close = text.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw ConfigError("cannot parse shape '" + text + "'");
  std::string name = text.substr(0, open);
  name.erase(name.find_last_not_of(" \t") + 1);
  const auto args = numbers_in(text.substr(open + 1, close - open - 1));
  auto need = [&](std::size_t lo, std::size_t hi) {
    if (args.size() < lo || args.size() > hi)
      throw ConfigError("shape '" + text + "': wrong number of arguments");
  };
  if (name == "ball") {
    need(1, 4);
    BallSpec b{args[0], Vec::Zero()};
    for (std::size_t i = 1; i < args.size(); ++i) b.center(i - 1) = args[i];
    return b;
  }
  if (name == "ellipse") {
    need(2, 3);
    return EllipsoidSpec{{args[0], args[1]}, Vec::Zero(), args.size() == 3 ? args[2] : 0.0};
  }
  if (name == "ellipsoid") {
    need(3, 3);
    return EllipsoidSpec{{args[0], args[1], args[2]}, Vec::Zero(), 0.0};
  }
  if (name == "square") {
    need(2, 3);
    const double a = args[0];
    SmoothedPolygonSpec p;
    p.vertices = {{-a, -a}, {a, -a}, {a, a}, {-a, a}};
    p.rho = args[1];
    if (args.size() == 3) p.mollify = args[2];
    return p;
  }
  if (name == "random_trig") {
    need(3, 4);
    RandomTrigSpec r;
    r.seed = static_cast<std::uint64_t>(args[0]);
    r.degree = static_cast<int>(args[1]);
    r.margin = args[2];
    if (args.size() == 4) r.amplitude = args[3];
    return r;
  }
  throw ConfigError("unknown shape '" + name + "'");
}

}  // namespace

SupportVector catalog_support(const ShapeSpec& spec, const GridPtr& grid) {
  SupportVector out = std::visit(
      [&](const auto& s) -> SupportVector {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, BallSpec>) return ball(s, grid);
        else if constexpr (std::is_same_v<T, EllipsoidSpec>) return ellipsoid(s, grid);
        else if constexpr (std::is_same_v<T, SmoothedPolygonSpec>) return smoothed_polygon(s, grid);
        else return random_trig(s, grid);
      },
      spec);
  certify(out);
  return out;
}

ShapeSpec parse_shape(const nlohmann::json& j) {
  if (j.is_string()) return parse_compact(j.get<std::string>());
  if (!j.is_object() || !j.contains("type")) throw ConfigError("shape must be a string or an object with 'type'");
  const std::string type = j.at("type").get<std::string>();
  auto check_keys = [&](std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      bool ok = it.key() == "type";
      for (const char* a : allowed) ok = ok || it.key() == a;
      if (!ok) throw ConfigError("shape '" + type + "': unknown key '" + it.key() + "'");
    }
  };
  if (type == "ball") {
    check_keys({"radius", "center"});
    BallSpec b;
    b.radius = j.value("radius", 1.0);
    if (j.contains("center")) b.center = vec_from(j.at("center"));
    return b;
  }
  if (type == "ellipse" || type == "ellipsoid") {
    check_keys({"axes", "center", "angle"});
    EllipsoidSpec e;
    e.axes = j.at("axes").get<std::vector<double>>();
    if (j.contains("center")) e.center = vec_from(j.at("center"));
    e.angle = j.value("angle", 0.0);
    return e;
  }
  if (type == "smoothed_polygon") {
    check_keys({"vertices", "rho", "mollify"});
    SmoothedPolygonSpec p;
    for (const auto& v : j.at("vertices")) p.vertices.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
    p.rho = j.value("rho", p.rho);
    p.mollify = j.value("mollify", p.mollify);
    return p;
  }
  if (type == "random_trig") {
    check_keys({"seed", "degree", "margin", "amplitude"});
    RandomTrigSpec r;
    r.seed = j.value("seed", std::uint64_t{0});
    r.degree = j.value("degree", r.degree);
    r.margin = j.value("margin", r.margin);
    r.amplitude = j.value("amplitude", r.amplitude);
    return r;
  }
  throw ConfigError("unknown shape type '" + type + "'");
}

nlohmann::json shape_to_json(const ShapeSpec& spec) {
  auto vec = [](const Vec& c) { return nlohmann::json::array({c.x(), c.y(), c.z()}); };
  return std::visit(
      [&](const auto& s) -> nlohmann::json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, BallSpec>) {
          return {{"type", "ball"}, {"radius", s.radius}, {"center", vec(s.center)}};
        } else if constexpr (std::is_same_v<T, EllipsoidSpec>) {
          return {{"type", s.axes.size() == 2 ? "ellipse" : "ellipsoid"},
                  {"axes", s.axes}, {"center", vec(s.center)}, {"angle", s.angle}};
        } else if constexpr (std::is_same_v<T, SmoothedPolygonSpec>) {
          nlohmann::json verts = nlohmann::json::array();
          for (const auto& v : s.vertices) verts.push_back({v.x(), v.y()});
          return {{"type", "smoothed_polygon"}, {"vertices", verts}, {"rho", s.rho}, {"mollify", s.mollify}};
        } else {
          return {{"type", "random_trig"}, {"seed", s.seed}, {"degree", s.degree},
                  {"margin", s.margin}, {"amplitude", s.amplitude}};
        }
      },
      spec);
}

std::string describe(const ShapeSpec& spec) {
  std::ostringstream os;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, BallSpec>) {
          os << "ball(" << s.radius << ")";
        } else if constexpr (std::is_same_v<T, EllipsoidSpec>) {
          os << (s.axes.size() == 2 ? "ellipse(" : "ellipsoid(");
          for (std::size_t i = 0; i < s.axes.size(); ++i) os << (i ? "," : "") << s.axes[i];
          os << ")";
        } else if constexpr (std::is_same_v<T, SmoothedPolygonSpec>) {
          os << "smoothed_polygon(" << s.vertices.size() << " vertices, rho=" << s.rho << ")";
        } else {
          os << "random_trig(" << s.seed << "," << s.degree << "," << s.margin << ")";
        }
      },
      spec);
  return os.str();
}

}  // namespace capkit::geom

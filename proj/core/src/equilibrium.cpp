#include "capkit/equilibrium.hpp"

#include "capkit/error.hpp"
#include "capkit/fractional.hpp"
#include "capkit/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>

namespace capkit::eq {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kDenseLimit = 20000;

double unit_ball_volume(int n) { return n == 2 ? kPi : 4.0 * kPi / 3.0; }

// Angular integrals of the exit distance from a point at radius rho inside
// the unit ball: int_{S^{n-1}} l(e)^alpha de.
double exit_moment(int n, double alpha, double rho) {
  std::vector<double> x, w;
  double sum = 0.0;
  if (n == 2) {
    // l(theta) = -rho cos + sqrt(1 - rho^2 sin^2); sharpest near theta = pi/2
    // as rho -> 1, so grade both halves of [0, pi] towards it.
    for (int half = 0; half < 2; ++half) {
      const double a = 0.5 * kPi, b = half == 0 ? 0.0 : kPi;
      quad::graded_rule(a, b, 12, 24, 0.55, x, w);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double c = std::cos(x[i]), s = std::sin(x[i]);
        const double l = -rho * c + std::sqrt(std::max(0.0, 1.0 - rho * rho * s * s));
        sum += std::abs(w[i]) * std::pow(std::max(l, 0.0), alpha);
      }
    }
    return 2.0 * sum;
  }
  for (int half = 0; half < 2; ++half) {
    quad::graded_rule(0.0, half == 0 ? -1.0 : 1.0, 12, 24, 0.55, x, w);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double c = x[i];
      const double l = -rho * c + std::sqrt(std::max(0.0, 1.0 - rho * rho * (1.0 - c * c)));
      sum += std::abs(w[i]) * std::pow(std::max(l, 0.0), alpha);
    }
  }
  return 2.0 * kPi * sum;
}

double compute_unit_self_energy(int n, double alpha) {
  std::vector<double> x, w;
  quad::graded_rule(1.0, 0.0, 16, 30, 0.5, x, w);
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double rho = x[i];
    const double p = exit_moment(n, alpha, rho) / (alpha * unit_ball_volume(n));
    sum += std::abs(w[i]) * p * n * std::pow(rho, n - 1);
  }
  return sum;
}

// Kernel columns, dense below kDenseLimit nodes and recomputed otherwise.
class KernelMatrix {
 public:
  KernelMatrix(const NodeSet& ns, const RieszKernel& k) : ns_(ns), k_(k), n_(ns.size()) {
    diag_.resize(n_);
    for (int j = 0; j < n_; ++j) diag_[j] = k.self_energy(ns.radius[j]);
    if (n_ <= kDenseLimit) {
      dense_.resize(n_, n_);
      for (int j = 0; j < n_; ++j) {
        dense_(j, j) = diag_[j];
        for (int i = j + 1; i < n_; ++i) {
          const double v = entry(i, j);
          dense_(i, j) = v;
          dense_(j, i) = v;
        }
      }
    } else {
      buf_.resize(n_);
    }
  }

  double diag(int j) const { return diag_[j]; }

  const double* column(int j) {
    if (dense_.size() > 0) return dense_.col(j).data();
    for (int i = 0; i < n_; ++i) buf_[i] = i == j ? diag_[j] : entry(i, j);
    return buf_.data();
  }

  void multiply(const std::vector<double>& mu, std::vector<double>& out) {
    out.assign(n_, 0.0);
    if (dense_.size() > 0) {
      Eigen::Map<const Eigen::VectorXd> m(mu.data(), n_);
      Eigen::Map<Eigen::VectorXd> o(out.data(), n_);
      o.noalias() = dense_ * m;
      return;
    }
    for (int j = 0; j < n_; ++j) {
      if (mu[j] == 0.0) continue;
      const double* c = column(j);
      for (int i = 0; i < n_; ++i) out[i] += mu[j] * c[i];
    }
  }

 private:
  double entry(int i, int j) const {
    const double d = (ns_.nodes[i] - ns_.nodes[j]).norm();
    if (!(d > 0.0)) throw SolverError("coincident nodes " + std::to_string(i) + " and " + std::to_string(j));
    return k_(d);
  }

  const NodeSet& ns_;
  const RieszKernel& k_;
  int n_;
  std::vector<double> diag_;
  Eigen::MatrixXd dense_;
  std::vector<double> buf_;
};

void check_options(const DiscretizationOptions& opts, double grading) {
  if (opts.target_cells < 100)
    throw ConfigError("target_cells must be >= 100 (got " + std::to_string(opts.target_cells) + ")");
  if (!(grading >= 1.0 && grading <= 3.0))
    throw ConfigError("grading exponent must lie in [1, 3] (got " + std::to_string(grading) + ")");
}

double layer_edge(int k, int K, double gamma) {
  return 1.0 - std::pow(1.0 - static_cast<double>(k) / K, gamma);
}

// Sector counts per layer: 4 * 2^j or 4q * 2^j, whichever makes cells about
// as wide as they are thick. Every layer is a union of the finest sectors,
// whose count is the lcm of the layer counts.
std::vector<int> sector_plan(int q, int K, double gamma) {
  std::vector<int> out(K);
  for (int k = 0; k < K; ++k) {
    const double a = layer_edge(k, K, gamma), b = layer_edge(k + 1, K, gamma);
    const double desired = 2.0 * kPi * 0.5 * (a + b) / (b - a);
    int pick = 4;
    for (int base : {4, 4 * q}) {
      const int j = static_cast<int>(std::max(0.0, std::round(std::log2(desired / base))));
      const int m = base << j;
      if (std::abs(std::log(m / desired)) < std::abs(std::log(pick / desired))) pick = m;
    }
    out[k] = pick;
  }
  return out;
}

NodeSet discretize_planar(const geom::Body& body, int target, double gamma) {
  int bestQ = 1, bestK = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int q : {1, 3, 5}) {
    for (int K = 2; K <= 400; ++K) {
      const auto plan = sector_plan(q, K, gamma);
      const double count = std::accumulate(plan.begin(), plan.end(), 0.0);
      if (*std::max_element(plan.begin(), plan.end()) > (1 << 16)) break;
      const double score = std::abs(std::log(count / target));
      if (score < best) {
        best = score;
        bestQ = q;
        bestK = K;
      }
    }
  }
  const int K = bestK;
  const auto plan = sector_plan(bestQ, K, gamma);
  const int M = std::accumulate(plan.begin(), plan.end(), 1, [](int a, int b) { return std::lcm(a, b); });

  NodeSet ns;
  ns.dim = 2;
  ns.center = geom::steiner_point(body.support);
  ns.layers = K;
  ns.sectors = M;

  // Per finest sector: int rho^2 dphi and int rho^3 e(phi) dphi.
  const auto& gl = quad::gauss_legendre(6);
  std::vector<double> i2(M, 0.0), rbar(M, 0.0);
  std::vector<Vec> i3(M, Vec::Zero());
  const double dphi = 2.0 * kPi / M;
  for (int j = 0; j < M; ++j) {
    for (std::size_t g = 0; g < gl.nodes.size(); ++g) {
      const double phi = dphi * (j + 0.5 * (gl.nodes[g] + 1.0));
      const double wq = 0.5 * dphi * gl.weights[g];
      const Vec e(std::cos(phi), std::sin(phi), 0.0);
      const double rho = geom::radial_function(body, ns.center, e);
      i2[j] += wq * rho * rho;
      i3[j] += wq * rho * rho * rho * e;
    }
    rbar[j] = std::sqrt(i2[j] / dphi);
  }

  for (int k = 0; k < K; ++k) {
    const double a = layer_edge(k, K, gamma), b = layer_edge(k + 1, K, gamma);
    const int mk = plan[k], group = M / mk;
    for (int c = 0; c < mk; ++c) {
      double s2 = 0.0, rb = 0.0;
      Vec s3 = Vec::Zero();
      for (int j = c * group; j < (c + 1) * group; ++j) {
        s2 += i2[j];
        s3 += i3[j];
        rb = std::max(rb, rbar[j]);
      }
      const double vol = 0.5 * (b * b - a * a) * s2;
      const Vec centroid = ((b * b * b - a * a * a) / 3.0) * s3 / vol;
      ns.nodes.push_back(ns.center + centroid);
      ns.volume.push_back(vol);
      ns.radius.push_back(std::sqrt(vol / kPi));
      ns.cell_size.push_back(std::max(b * rb * dphi * group, (b - a) * rb));
      ns.outer.push_back(k == K - 1 ? 1 : 0);
    }
  }
  return ns;
}

NodeSet discretize_spatial(const geom::Body& body, int target, double gamma) {
  // Layer k > 0 gets about 4 pi s^2 / ds^2 directions (cells as wide as they
  // are thick); layer 0 is a single central cell.
  auto count_for = [&](int K, std::vector<int>* plan) {
    double total = 1.0;
    if (plan) plan->assign(K, 1);
    for (int k = 1; k < K; ++k) {
      const double a = layer_edge(k, K, gamma), b = layer_edge(k + 1, K, gamma);
      const double mid = 0.5 * (a + b);
      const int mk = std::max(16, static_cast<int>(std::lround(4.0 * kPi * mid * mid / ((b - a) * (b - a)))));
      total += mk;
      if (plan) (*plan)[k] = mk;
    }
    return total;
  };
  int bestK = 2;
  double best = std::numeric_limits<double>::infinity();
  for (int K = 2; K <= 200; ++K) {
    const double count = count_for(K, nullptr);
    const double score = std::abs(std::log(count / target));
    if (score < best) {
      best = score;
      bestK = K;
    }
    if (count > 4.0 * target) break;
  }
  std::vector<int> plan;
  count_for(bestK, &plan);
  const int bestM = *std::max_element(plan.begin(), plan.end());

  NodeSet ns;
  ns.dim = 3;
  ns.center = geom::steiner_point(body.support);
  ns.layers = bestK;
  ns.sectors = bestM;

  // Reference shell integral int rho^3 dw from the finest direction set; each
  // layer's one-point cell rule is rescaled to it so the volumes add up.
  struct Layer {
    geom::GridPtr dirs;
    std::vector<double> rho;
    double moment = 0.0;
  };
  std::map<int, Layer> layers;
  for (int k = 1; k < bestK; ++k) {
    auto& L = layers[plan[k]];
    if (L.dirs) continue;
    L.dirs = geom::make_direction_grid(3, plan[k]);
    L.rho.resize(plan[k]);
    for (int i = 0; i < plan[k]; ++i) {
      L.rho[i] = geom::radial_function(body, ns.center, L.dirs->direction(i));
      L.moment += std::pow(L.rho[i], 3) * L.dirs->weight(i);
    }
  }
  const Layer& finest = layers.rbegin()->second;
  const double ref = finest.moment;

  // Central cell.
  {
    const double b = layer_edge(1, bestK, gamma);
    const double vol = b * b * b / 3.0 * ref;
    Vec m4 = Vec::Zero();
    for (int i = 0; i < finest.dirs->size(); ++i)
      m4 += std::pow(finest.rho[i], 4) * finest.dirs->weight(i) * finest.dirs->direction(i);
    ns.nodes.push_back(ns.center + (std::pow(b, 4) / 4.0) * m4 / vol);
    ns.volume.push_back(vol);
    ns.radius.push_back(std::cbrt(vol / unit_ball_volume(3)));
    ns.cell_size.push_back(2.0 * b * *std::max_element(finest.rho.begin(), finest.rho.end()));
    ns.outer.push_back(bestK == 1 ? 1 : 0);
  }
  for (int k = 1; k < bestK; ++k) {
    const double a = layer_edge(k, bestK, gamma), b = layer_edge(k + 1, bestK, gamma);
    const Layer& L = layers.at(plan[k]);
    const double fix = ref / L.moment;
    const double shell = (b * b * b - a * a * a) / 3.0;
    const double lever = 0.75 * (std::pow(b, 4) - std::pow(a, 4)) / (b * b * b - a * a * a);
    for (int i = 0; i < L.dirs->size(); ++i) {
      const double rho = L.rho[i], w = L.dirs->weight(i);
      const double vol = shell * rho * rho * rho * w * fix;
      ns.nodes.push_back(ns.center + lever * rho * L.dirs->direction(i));
      ns.volume.push_back(vol);
      ns.radius.push_back(std::cbrt(vol / unit_ball_volume(3)));
      ns.cell_size.push_back(std::max(b * rho * std::sqrt(w), (b - a) * rho));
      ns.outer.push_back(k == bestK - 1 ? 1 : 0);
    }
  }
  return ns;
}

}  // namespace

double default_grading(double alpha) { return alpha <= 1.0 ? 2.0 : 1.5; }

double NodeSet::total_volume() const {
  double v = 0.0;
  for (double x : volume) v += x;
  return v;
}

NodeSet discretize_body(const geom::Body& body, const DiscretizationOptions& opts) {
  const double gamma = opts.grading == 0.0 ? 2.0 : opts.grading;
  check_options(opts, gamma);
  if (body.dim() == 2) return discretize_planar(body, opts.target_cells, gamma);
  if (body.dim() == 3) return discretize_spatial(body, opts.target_cells, gamma);
  throw GeometryError("discretize_body: unsupported dimension");
}

void check_alpha(int dim, double alpha) {
  if (dim != 2 && dim != 3) throw ConfigError("dimension must be 2 or 3");
  if (!(alpha > 0.0 && alpha < std::min(2.0, static_cast<double>(dim))))
    throw ConfigError("alpha must satisfy 0 < alpha < min(2, n) (got " + std::to_string(alpha) + ")");
}

double unit_ball_self_energy(int dim, double alpha) {
  check_alpha(dim, alpha);
  static std::mutex mu;
  static std::map<std::pair<int, double>, double> cache;
  {
    std::lock_guard lock(mu);
    auto it = cache.find({dim, alpha});
    if (it != cache.end()) return it->second;
  }
  const double v = compute_unit_self_energy(dim, alpha);
  std::lock_guard lock(mu);
  cache.emplace(std::make_pair(dim, alpha), v);
  return v;
}

RieszKernel::RieszKernel(int dim, double alpha)
    : dim_(dim), alpha_(alpha), unit_self_(unit_ball_self_energy(dim, alpha)) {}

double RieszKernel::regularized(double d, double r) const {
  if (d >= r) return (*this)(d);
  const double t = d / r;
  return std::pow(r, alpha_ - dim_) * (unit_self_ + (1.0 - unit_self_) * t * t);
}

double riesz_energy(const NodeSet& nodes, const std::vector<double>& weights, double alpha) {
  check_alpha(nodes.dim, alpha);
  if (static_cast<int>(weights.size()) != nodes.size())
    throw ConfigError("riesz_energy: weight count does not match node count");
  const RieszKernel k(nodes.dim, alpha);
  double e = 0.0;
  for (int j = 0; j < nodes.size(); ++j) {
    if (weights[j] == 0.0) continue;
    double row = weights[j] * k.self_energy(nodes.radius[j]);
    for (int i = j + 1; i < nodes.size(); ++i) {
      if (weights[i] == 0.0) continue;
      const double d = (nodes.nodes[i] - nodes.nodes[j]).norm();
      if (!(d > 0.0)) throw SolverError("coincident nodes " + std::to_string(i) + " and " + std::to_string(j));
      row += 2.0 * weights[i] * k(d);
    }
    e += weights[j] * row;
  }
  return e;
}

EquilibriumSolution solve_equilibrium(std::shared_ptr<const NodeSet> nodes, double alpha,
                                      const SolverOptions& opts,
                                      const std::vector<double>* warm_start) {
  if (!nodes || nodes->size() == 0) throw ConfigError("solve_equilibrium: empty node set");
  check_alpha(nodes->dim, alpha);
  const NodeSet& ns = *nodes;
  const int N = ns.size();
  const RieszKernel kern(ns.dim, alpha);
  KernelMatrix K(ns, kern);

  std::vector<double> mu(N);
  if (warm_start) {
    if (static_cast<int>(warm_start->size()) != N)
      throw ConfigError("warm start has " + std::to_string(warm_start->size()) + " entries, expected " +
                        std::to_string(N));
    for (int j = 0; j < N; ++j) mu[j] = std::max(0.0, (*warm_start)[j]);
  } else {
    // Uniform density: every cell starts in the active set.
    mu = ns.volume;
  }
  double total = std::accumulate(mu.begin(), mu.end(), 0.0);
  if (!(total > 0.0)) throw ConfigError("warm start has no positive mass");
  for (double& m : mu) m /= total;

  std::vector<double> v;  // V = K mu
  K.multiply(mu, v);
  double q = std::inner_product(mu.begin(), mu.end(), v.begin(), 0.0);

  SolverTrace tr;
  tr.energy_history.push_back(q);
  const long refresh = std::max(200L, 4L * N);
  for (long it = 0;; ++it) {
    int s = 0, a = -1;
    for (int j = 0; j < N; ++j) {
      if (v[j] < v[s]) s = j;
      if (mu[j] > 0.0 && (a < 0 || v[j] > v[a])) a = j;
    }
    tr.iterations = it;
    tr.gap = (v[a] - v[s]) / q;
    if (tr.gap <= opts.gap_tol) {
      tr.converged = true;
      break;
    }
    if (it >= opts.max_iter) break;

    const double gfw = q - v[s], gaw = v[a] - q;
    if (gfw >= gaw) {
      const double curv = K.diag(s) - 2.0 * v[s] + q;
      const double g = curv > 0.0 ? std::min(1.0, gfw / curv) : 1.0;
      const double vs = v[s];
      const double* col = K.column(s);
      for (int j = 0; j < N; ++j) {
        mu[j] *= 1.0 - g;
        v[j] = (1.0 - g) * v[j] + g * col[j];
      }
      mu[s] += g;
      q = (1.0 - g) * (1.0 - g) * q + 2.0 * g * (1.0 - g) * vs + g * g * K.diag(s);
      ++tr.fw_steps;
    } else {
      const double gmax = mu[a] < 1.0 ? mu[a] / (1.0 - mu[a]) : std::numeric_limits<double>::infinity();
      const double curv = q - 2.0 * v[a] + K.diag(a);
      double g = curv > 0.0 ? gaw / curv : gmax;
      bool drop = false;
      if (g >= gmax) {
        g = gmax;
        drop = true;
      }
      const double va = v[a];
      const double* col = K.column(a);
      for (int j = 0; j < N; ++j) {
        mu[j] *= 1.0 + g;
        v[j] = (1.0 + g) * v[j] - g * col[j];
      }
      mu[a] -= g;
      if (drop || mu[a] < 0.0) mu[a] = 0.0;
      q = (1.0 + g) * (1.0 + g) * q - 2.0 * g * (1.0 + g) * va + g * g * K.diag(a);
      ++tr.away_steps;
      if (drop) ++tr.drop_steps;
    }

    if ((it + 1) % refresh == 0) {
      total = std::accumulate(mu.begin(), mu.end(), 0.0);
      for (double& m : mu) m /= total;
      K.multiply(mu, v);
      q = std::inner_product(mu.begin(), mu.end(), v.begin(), 0.0);
    }
    if (opts.history_stride > 0 && (it + 1) % opts.history_stride == 0) tr.energy_history.push_back(q);
  }

  total = std::accumulate(mu.begin(), mu.end(), 0.0);
  for (double& m : mu) m /= total;
  K.multiply(mu, v);
  q = std::inner_product(mu.begin(), mu.end(), v.begin(), 0.0);
  tr.energy_history.push_back(q);

  EquilibriumSolution sol;
  sol.nodes = std::move(nodes);
  sol.dim = ns.dim;
  sol.alpha = alpha;
  sol.weights = std::move(mu);
  sol.node_potential = std::move(v);
  sol.energy = q;

  double m1 = 0.0, m2 = 0.0;
  int cnt = 0;
  for (int j = 0; j < N; ++j) {
    if (sol.weights[j] <= 0.0) continue;
    m1 += sol.node_potential[j];
    m2 += sol.node_potential[j] * sol.node_potential[j];
    ++cnt;
  }
  m1 /= cnt;
  sol.flatness = std::sqrt(std::max(0.0, m2 / cnt - m1 * m1)) / m1;
  tr.converged = tr.converged && sol.flatness <= opts.flatness_tol;
  sol.trace = std::move(tr);
  sol.capacity = frac::cns_constant(sol.dim, 0.5 * alpha) / sol.energy;
  return sol;
}

double capacity(const EquilibriumSolution& sol) {
  if (!sol.converged()) throw SolverError("capacity of an unconverged equilibrium solution");
  return frac::cns_constant(sol.dim, 0.5 * sol.alpha) / sol.energy;
}

double potential(const EquilibriumSolution& sol, const Vec& x) {
  const NodeSet& ns = *sol.nodes;
  const RieszKernel k(sol.dim, sol.alpha);
  double v = 0.0;
  for (int j = 0; j < ns.size(); ++j) {
    const double d = (x - ns.nodes[j]).norm();
    if (d == 0.0) return sol.node_potential[j];
    if (sol.weights[j] == 0.0) continue;
    v += sol.weights[j] * k.regularized(d, ns.radius[j]);
  }
  return v;
}

EquilibriumSolution solve_body(const geom::Body& body, double alpha, const DiscretizationOptions& dopts,
                               const SolverOptions& sopts, const std::vector<double>* warm_start) {
  DiscretizationOptions d = dopts;
  if (d.grading == 0.0) d.grading = default_grading(alpha);
  auto ns = std::make_shared<const NodeSet>(discretize_body(body, d));
  return solve_equilibrium(std::move(ns), alpha, sopts, warm_start);
}

}  // namespace capkit::eq

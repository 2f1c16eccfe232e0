#include "capkit/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace capkit::quad {

namespace {

Rule build_rule(int n) {
  Rule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    // Tricomi initial guess, then Newton on P_n.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute derivative at the converged node
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[i] = -x;
    r.nodes[n - 1 - i] = x;
    r.weights[i] = w;
    r.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) r.nodes[m - 1] = 0.0;
  return r;
}

}  // namespace

const Rule& gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
  static std::mutex mu;
  static std::map<int, Rule> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_rule(n)).first;
  return it->second;
}

void composite_rule(double a, double b, int order, int panels,
                    std::vector<double>& x, std::vector<double>& w) {
  const Rule& r = gauss_legendre(order);
  x.clear();
  w.clear();
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * h;
    for (int i = 0; i < order; ++i) {
      x.push_back(lo + 0.5 * h * (r.nodes[i] + 1.0));
      w.push_back(0.5 * h * r.weights[i]);
    }
  }
}

void graded_rule(double a, double b, int order, int panels, double ratio,
                 std::vector<double>& x, std::vector<double>& w) {
  const Rule& r = gauss_legendre(order);
  x.clear();
  w.clear();
  // panel edges a + (b-a) * ratio^(panels-k), k = 0..panels, first panel [a, a+(b-a)ratio^(panels-1)]
  std::vector<double> edges{a};
  for (int k = panels - 1; k >= 0; --k) edges.push_back(a + (b - a) * std::pow(ratio, k));
  for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
    const double lo = edges[p], h = edges[p + 1] - edges[p];
    for (int i = 0; i < order; ++i) {
      x.push_back(lo + 0.5 * h * (r.nodes[i] + 1.0));
      w.push_back(0.5 * h * r.weights[i]);
    }
  }
}

double integrate(const std::function<double(double)>& f, double a, double b,
                 int order, int panels) {
  std::vector<double> x, w;
  composite_rule(a, b, order, panels, x, w);
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += w[i] * f(x[i]);
  return sum;
}

}  // namespace capkit::quad

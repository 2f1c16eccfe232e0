#pragma once

#include <functional>
#include <vector>

namespace capkit::quad {

/// Gauss-Legendre rule on [-1, 1].
struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Returns the n-point Gauss-Legendre rule. Rules are memoized per n and the
/// returned reference stays valid for the lifetime of the program.
const Rule& gauss_legendre(int n);

/// Composite Gauss-Legendre on [a, b] with `panels` equal panels of `order`
/// points each.
double integrate(const std::function<double(double)>& f, double a, double b,
                 int order = 16, int panels = 1);

/// Tensor rule helper: fills x/w with a composite rule on [a, b].
void composite_rule(double a, double b, int order, int panels,
                    std::vector<double>& x, std::vector<double>& w);

/// Composite rule with panels geometrically graded towards `a`
/// (panel widths shrink by `ratio` approaching a). Used for endpoint
/// singularities that survive substitution.
void graded_rule(double a, double b, int order, int panels, double ratio,
                 std::vector<double>& x, std::vector<double>& w);

}  // namespace capkit::quad

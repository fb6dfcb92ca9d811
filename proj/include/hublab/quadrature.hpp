// Copyright 2026 The hublab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace hublab {

/// Gauss-Legendre rule on [-1,1], nodes by Newton iteration on P_n.
struct GaussRule {
  std::vector<double> nodes, weights;

  explicit GaussRule(int n) {
    nodes.resize(n);
    weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
      double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double pp = 0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = 0.0;
        for (int j = 0; j < n; ++j) {
          double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1);
        }
        pp = n * (x * p0 - p1) / (x * x - 1.0);
        double dx = p0 / pp;
        x -= dx;
        if (std::abs(dx) < 1e-15) break;
      }
      nodes[i] = -x;
      nodes[n - 1 - i] = x;
      weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * pp * pp);
    }
  }

  template <class F>
  double integrate(F&& f, double a, double b) const {
    double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double s = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(c + h * nodes[i]);
    return s * h;
  }
};

namespace detail {

template <class F>
double adaptive_gauss_rec(F& f, double a, double b, double tol, const GaussRule& lo,
                          const GaussRule& hi, double whole, int depth) {
  double m = 0.5 * (a + b);
  double left = hi.integrate(f, a, m);
  double right = hi.integrate(f, m, b);
  if (depth > 48) return left + right;
  if (std::abs(left + right - whole) < tol) return left + right;
  return adaptive_gauss_rec(f, a, m, 0.5 * tol, lo, hi, left, depth + 1) +
         adaptive_gauss_rec(f, m, b, 0.5 * tol, lo, hi, right, depth + 1);
}

}  // namespace detail

/// Adaptive Gauss quadrature with absolute tolerance.
template <class F>
double adaptive_gauss(F&& f, double a, double b, double tol = 1e-12) {
  if (a == b) return 0.0;
  static const GaussRule g7(7), g15(15);
  double whole = g15.integrate(f, a, b);
  return detail::adaptive_gauss_rec(f, a, b, tol, g7, g15, whole, 0);
}

/// Integrates over [a,b] split at the given interior knots, adaptively on
/// each smooth piece. Knots outside (a,b) are ignored.
template <class F>
double integrate_with_knots(F&& f, double a, double b, std::vector<double> knots,
                            double tol = 1e-12) {
  knots.push_back(a);
  knots.push_back(b);
  std::sort(knots.begin(), knots.end());
  double s = 0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    double lo = std::clamp(knots[i], a, b), hi = std::clamp(knots[i + 1], a, b);
    if (hi - lo > 1e-15) s += adaptive_gauss(f, lo, hi, tol);
  }
  return s;
}

/// Composite fixed-order Gauss on uniform panels; deterministic cost, used
/// for oscillatory radial integrands where the panel size is chosen from
/// the oscillation wavelength.
template <class F>
double composite_gauss(F&& f, double a, double b, int panels, const GaussRule& rule) {
  double s = 0, h = (b - a) / panels;
  for (int i = 0; i < panels; ++i) s += rule.integrate(f, a + i * h, a + (i + 1) * h);
  return s;
}

/// Fixed-node tanh-sinh rule. Exponentially accurate for integrands analytic
/// on the open interval, including square-root endpoint behavior, at a
/// deterministic node count -- so a nested integral remains a smooth function
/// of its outer parameter, which adaptive rules do not guarantee.
class TanhSinhRule {
 public:
  explicit TanhSinhRule(double h = 0.0625) : h_(h) {
    for (double t = h;; t += h) {
      double s = 0.5 * std::numbers::pi * std::sinh(t);
      double c = std::cosh(s);
      double w = 0.25 * std::numbers::pi * std::cosh(t) / (c * c);
      double sigma = 1.0 / (1.0 + std::exp(2.0 * s));  // offset from the near end
      if (w < 1e-17 || sigma < 1e-16) break;
      side_.push_back({sigma, w});
    }
  }

  /// Returns {value, error estimate}; the estimate compares against the
  /// embedded stride-2 subrule (step 2h).
  template <class F>
  std::pair<double, double> integrate(F&& f, double a, double b) const {
    double len = b - a;
    double fine = 0.25 * std::numbers::pi * f(a + 0.5 * len);
    double coarse = fine;
    for (std::size_t k = 0; k < side_.size(); ++k) {
      double v =
          side_[k].weight * (f(a + len * side_[k].sigma) + f(b - len * side_[k].sigma));
      fine += v;
      if (k % 2 == 1) coarse += v;
    }
    return {fine * h_ * len, std::abs(fine - 2.0 * coarse) * h_ * len};
  }

 private:
  struct Node {
    double sigma, weight;
  };
  double h_;
  std::vector<Node> side_;
};

/// Tanh-sinh over [a,b] split at the given interior knots; knots outside
/// (a,b) are ignored. Returns {value, error estimate}.
template <class F>
std::pair<double, double> tanh_sinh_with_knots(F&& f, double a, double b,
                                               std::vector<double> knots) {
  static const TanhSinhRule rule;
  knots.push_back(a);
  knots.push_back(b);
  std::sort(knots.begin(), knots.end());
  double val = 0, err = 0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    double lo = std::clamp(knots[i], a, b), hi = std::clamp(knots[i + 1], a, b);
    if (hi - lo > 1e-15) {
      auto [v, e] = rule.integrate(f, lo, hi);
      val += v;
      err += e;
    }
  }
  return {val, err};
}

}  // namespace hublab

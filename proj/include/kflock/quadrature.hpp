#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace kflock {

/// Quadrature rule on the unit reference cell [-1/2, 1/2]; weights sum to 1,
/// so integrals over a cell of width h are h * sum(w_q * f(center + x_q * h)).
struct QuadRule {
  std::vector<double> points;
  std::vector<double> weights;
};

/// Gauss-Lobatto rule with n points on [-1/2, 1/2]. Includes both endpoints,
/// exact for polynomials of degree <= 2n-3. Only n in {2, 3} is supported,
/// which covers limiting of polynomials up to degree 2.
inline QuadRule gauss_lobatto(int n) {
  switch (n) {
    case 2:
      return {{-0.5, 0.5}, {0.5, 0.5}};
    case 3:
      return {{-0.5, 0.0, 0.5}, {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0}};
    default:
      throw std::invalid_argument("gauss_lobatto: unsupported point count " +
                                  std::to_string(n));
  }
}

/// 5-point Gauss-Legendre rule mapped to [-1/2, 1/2]; exact for degree <= 9.
inline const QuadRule& gauss_legendre_5() {
  static const QuadRule rule = [] {
    const double x1 = 0.5384693101056831;
    const double x2 = 0.9061798459386640;
    const double w0 = 0.5688888888888889;
    const double w1 = 0.4786286704993665;
    const double w2 = 0.2369268850561891;
    QuadRule r;
    r.points = {-x2 / 2, -x1 / 2, 0.0, x1 / 2, x2 / 2};
    r.weights = {w2 / 2, w1 / 2, w0 / 2, w1 / 2, w2 / 2};
    return r;
  }();
  return rule;
}

namespace detail {

inline double simpson_panel(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <class F>
double adaptive_simpson_rec(const F& f, double a, double b, double fa, double fm,
                            double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson_panel(a, m, fa, flm, fm);
  const double right = simpson_panel(m, b, fm, frm, fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson integration of f over [a, b] to absolute tolerance tol.
template <class F>
double adaptive_simpson(const F& f, double a, double b, double tol) {
  if (a == b) return 0.0;
  const double fa = f(a);
  const double fm = f(0.5 * (a + b));
  const double fb = f(b);
  const double whole = detail::simpson_panel(a, b, fa, fm, fb);
  return detail::adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 55);
}

}  // namespace kflock

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "kflock/grid.hpp"
#include "kflock/interaction.hpp"
#include "kflock/quadrature.hpp"

namespace kflock {

inline double total_mass(const DGState& state, const PhaseGrid& grid) {
  const double cell = grid.h() * grid.dx();
  double mass = 0.0;
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.nv; ++j) mass += state.at(i, j, 0);
  }
  return mass * cell;
}

/// Velocity marginal F(v) = integral of f over x, kept as a one-dimensional
/// DG function: moments[j*(degree+1)+l] = sum_i f_{ij}^{(l)} dx.
struct VelocityMarginal {
  double v_min = 0.0, v_max = 0.0;
  int nv = 0, degree = 0;
  std::vector<double> moments;

  VelocityMarginal() = default;
  VelocityMarginal(double lo, double hi, int cells, int k)
      : v_min(lo), v_max(hi), nv(cells), degree(k),
        moments(static_cast<std::size_t>(cells) * (k + 1), 0.0) {}

  double h() const { return (v_max - v_min) / nv; }
  double v_center(int j) const { return v_min + (j + 0.5) * h(); }
  double at(int j, int l) const {
    return moments[static_cast<std::size_t>(j) * (degree + 1) + l];
  }
  double& at(int j, int l) {
    return moments[static_cast<std::size_t>(j) * (degree + 1) + l];
  }
  std::span<const double> cell(int j) const {
    return {moments.data() + static_cast<std::size_t>(j) * (degree + 1),
            static_cast<std::size_t>(degree + 1)};
  }
};

inline VelocityMarginal velocity_marginal(const DGState& state,
                                          const PhaseGrid& grid) {
  VelocityMarginal marginal(grid.v_min, grid.v_max, grid.nv, grid.degree);
  const double dx = grid.dx();
  for (int j = 0; j < grid.nv; ++j) {
    for (int l = 0; l <= grid.degree; ++l) {
      double acc = 0.0;
      for (int i = 0; i < grid.nx; ++i) acc += state.at(i, j, l);
      marginal.at(j, l) = acc * dx;
    }
  }
  return marginal;
}

inline double default_support_mass_tol(const DGState& state, const PhaseGrid& grid) {
  return 1e-10 * total_mass(state, grid) /
         (static_cast<double>(grid.nx) * grid.nv);
}

struct SupportWidths {
  double x_width = 0.0;
  double v_width = 0.0;
};

namespace detail {

inline double band_width(const std::vector<double>& band_mass, double cell_width,
                         double tol) {
  int lo = -1, hi = -1;
  for (int b = 0; b < static_cast<int>(band_mass.size()); ++b) {
    if (band_mass[b] > tol) {
      if (lo < 0) lo = b;
      hi = b;
    }
  }
  if (lo < 0) return 0.0;
  return (hi - lo + 1) * cell_width;
}

}  // namespace detail

/// Extents of the smallest x band and v band outside which every row holds
/// mass at or below mass_tol. A negative mass_tol selects the default dust
/// level 1e-10 * m / (nx * nv).
inline SupportWidths support_widths(const DGState& state, const PhaseGrid& grid,
                                    double mass_tol = -1.0) {
  if (mass_tol < 0.0) mass_tol = default_support_mass_tol(state, grid);
  const double cell = grid.h() * grid.dx();
  std::vector<double> x_band(grid.nx, 0.0), v_band(grid.nv, 0.0);
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.nv; ++j) {
      const double m = state.at(i, j, 0) * cell;
      x_band[i] += m;
      v_band[j] += m;
    }
  }
  return {detail::band_width(x_band, grid.dx(), mass_tol),
          detail::band_width(v_band, grid.h(), mass_tol)};
}

/// Velocity support width restricted to x cells i_lo..i_hi inclusive.
inline double v_support_width_in_x_range(const DGState& state,
                                         const PhaseGrid& grid, int i_lo,
                                         int i_hi, double mass_tol) {
  const double cell = grid.h() * grid.dx();
  std::vector<double> v_band(grid.nv, 0.0);
  for (int i = std::max(0, i_lo); i <= std::min(grid.nx - 1, i_hi); ++i) {
    for (int j = 0; j < grid.nv; ++j) v_band[j] += state.at(i, j, 0) * cell;
  }
  return detail::band_width(v_band, grid.h(), mass_tol);
}

/// Number of local maxima of the piecewise-constant marginal that exceed
/// `rel_threshold` times its largest value; runs of equal values count once.
inline int cluster_count(const VelocityMarginal& marginal,
                         double rel_threshold = 0.05) {
  const int n = marginal.nv;
  if (n == 0) return 0;
  std::vector<double> w(n);
  for (int j = 0; j < n; ++j) w[j] = marginal.at(j, 0);
  const double peak = *std::max_element(w.begin(), w.end());
  if (!(peak > 0.0)) return 0;
  const double threshold = rel_threshold * peak;
  int clusters = 0;
  int j = 0;
  while (j < n) {
    int end = j;
    while (end + 1 < n && w[end + 1] == w[j]) ++end;  // plateau j..end
    const bool rises_left = (j == 0) || (w[j - 1] < w[j]);
    const bool falls_right = (end == n - 1) || (w[end + 1] < w[j]);
    if (rises_left && falls_right && w[j] > threshold) ++clusters;
    j = end + 1;
  }
  return clusters;
}

/// psi(t) = integral of the influence function from 0 to t.
inline double influence_integral(const InfluenceFunction& phi, double t,
                                 double tol = 1e-12) {
  return adaptive_simpson([&phi](double r) { return phi(r); }, 0.0, t, tol);
}

/// A-priori flock bound: the diameter D solves
///   integral of phi from S0 to D = V0,
/// i.e. psi(D) = V0 + psi(S0). If the influence decays too fast for the
/// equation to have a solution (checked up to a large cutoff), no
/// unconditional bound exists.
struct FlockBound {
  bool exists = false;
  double s0 = 0.0, v0 = 0.0;
  double diameter = 0.0;
  double phi_at_diameter = 0.0;
};

inline FlockBound flock_diameter(const InfluenceFunction& phi, double s0,
                                 double v0) {
  FlockBound bound;
  bound.s0 = s0;
  bound.v0 = v0;
  if (v0 < 0.0 || s0 < 0.0)
    throw std::invalid_argument("flock_diameter: widths must be nonnegative");
  auto gain = [&](double upper) {
    return adaptive_simpson([&phi](double r) { return phi(r); }, s0, upper, 1e-12);
  };
  if (v0 == 0.0) {
    bound.exists = true;
    bound.diameter = s0;
    bound.phi_at_diameter = phi(s0);
    return bound;
  }
  const double cutoff = 1e7;
  double width = std::max(1.0, v0);
  while (gain(s0 + width) < v0) {
    width *= 2.0;
    if (width > cutoff) return bound;  // exists stays false
  }
  double lo = s0, hi = s0 + width;
  for (int it = 0; it < 200 && (hi - lo) > 1e-11; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (gain(mid) < v0) lo = mid; else hi = mid;
  }
  bound.exists = true;
  bound.diameter = 0.5 * (lo + hi);
  bound.phi_at_diameter = phi(bound.diameter);
  return bound;
}

/// Exponential envelope V0 * exp(-phi(D) t) that bounds the velocity support
/// width along the flow.
inline double decay_envelope(const FlockBound& bound, double v0, double t) {
  return v0 * std::exp(-bound.phi_at_diameter * t);
}

namespace detail {

/// Exact integral of |c0 + c1 xi + c2 xi^2| over [a, b]: split at the real
/// roots, then 5-point Gauss on each piece (exact for the smooth factor).
inline double abs_quadratic_integral(double c0, double c1, double c2, double a,
                                     double b) {
  std::vector<double> cuts{a, b};
  const double scale = std::abs(c0) + std::abs(c1) * std::max(std::abs(a), std::abs(b)) +
                       std::abs(c2) * std::max(a * a, b * b);
  if (std::abs(c2) > 1e-14 * std::max(scale, 1e-300)) {
    const double disc = c1 * c1 - 4.0 * c2 * c0;
    if (disc > 0.0) {
      const double sq = std::sqrt(disc);
      const double q = -0.5 * (c1 + (c1 >= 0.0 ? sq : -sq));
      for (double root : {q / c2, (q != 0.0 ? c0 / q : -c1 / (2.0 * c2))}) {
        if (root > a && root < b) cuts.push_back(root);
      }
    }
  } else if (std::abs(c1) > 0.0) {
    const double root = -c0 / c1;
    if (root > a && root < b) cuts.push_back(root);
  }
  std::sort(cuts.begin(), cuts.end());
  const QuadRule& rule = gauss_legendre_5();
  double total = 0.0;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double lo = cuts[s], hi = cuts[s + 1];
    const double mid = 0.5 * (lo + hi), len = hi - lo;
    double piece = 0.0;
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const double xi = mid + rule.points[q] * len;
      piece += rule.weights[q] * std::abs(c0 + xi * (c1 + xi * c2));
    }
    total += piece * len;
  }
  return total;
}

}  // namespace detail

/// L1 distance between a marginal and a reference living on a nested
/// refinement of its grid. The reference is first averaged exactly onto the
/// coarse cells; the remaining polynomial difference is integrated piecewise
/// exactly (split at sign changes, Gauss on each piece).
inline double l1_error(const VelocityMarginal& coarse,
                       const VelocityMarginal& reference) {
  const double span = coarse.v_max - coarse.v_min;
  if (std::abs(coarse.v_min - reference.v_min) > 1e-12 * std::abs(span) ||
      std::abs(coarse.v_max - reference.v_max) > 1e-12 * std::abs(span))
    throw std::invalid_argument("l1_error: marginals live on different domains");
  if (coarse.degree != reference.degree)
    throw std::invalid_argument("l1_error: marginals have different degrees");
  if (reference.nv % coarse.nv != 0)
    throw std::invalid_argument("l1_error: grids are not nested");
  const int q = reference.nv / coarse.nv;
  const int k = coarse.degree;
  const double hc = coarse.h(), hf = reference.h();
  const LegendreBasis coarse_basis(k, hc), fine_basis(k, hf);
  const QuadRule& rule = gauss_legendre_5();

  double total = 0.0;
  for (int J = 0; J < coarse.nv; ++J) {
    const double vc = coarse.v_center(J);
    // Project the reference restriction onto the coarse cell's basis.
    double proj[3] = {0.0, 0.0, 0.0};
    for (int sub = 0; sub < q; ++sub) {
      const int jf = J * q + sub;
      const double vf = reference.v_center(jf);
      for (int l = 0; l <= k; ++l) {
        double acc = 0.0;
        for (std::size_t g = 0; g < rule.points.size(); ++g) {
          const double xi_f = rule.points[g] * hf;
          const double value = fine_basis.eval(reference.cell(jf), xi_f);
          acc += rule.weights[g] * value * coarse_basis.poly(l, vf + xi_f - vc);
        }
        proj[l] += acc * hf;
      }
    }
    double scale = 1.0;
    double delta[3] = {0.0, 0.0, 0.0};
    for (int l = 0; l <= k; ++l) {
      proj[l] *= scale / hc;
      scale /= hc;
      delta[l] = coarse.at(J, l) - proj[l];
    }
    // Difference polynomial in monomial form on the local coordinate.
    const double c0 = delta[0] - (k >= 2 ? 15.0 * delta[2] : 0.0);
    const double c1 = k >= 1 ? coarse_basis.normalizer(1) * delta[1] : 0.0;
    const double c2 = k >= 2 ? coarse_basis.normalizer(2) * delta[2] : 0.0;
    total += detail::abs_quadratic_integral(c0, c1, c2, -hc / 2, hc / 2);
  }
  return total;
}

/// Observed orders between successive refinement levels: r_s = -log2(e_{s+1}/e_s).
inline std::vector<double> convergence_rates(const std::vector<double>& errors) {
  std::vector<double> rates;
  for (std::size_t s = 0; s + 1 < errors.size(); ++s) {
    rates.push_back(-std::log2(errors[s + 1] / errors[s]));
  }
  return rates;
}

struct DiagnosticsRecord {
  double time = 0.0;
  double mass = 0.0;
  double x_width = 0.0;
  double v_width = 0.0;
  double envelope = std::numeric_limits<double>::quiet_NaN();
  int clusters = 0;
  VelocityMarginal marginal;
};

inline DiagnosticsRecord collect_diagnostics(const DGState& state,
                                             const PhaseGrid& grid,
                                             const std::optional<FlockBound>& bound) {
  DiagnosticsRecord rec;
  rec.time = state.time;
  rec.mass = total_mass(state, grid);
  const SupportWidths widths = support_widths(state, grid);
  rec.x_width = widths.x_width;
  rec.v_width = widths.v_width;
  if (bound && bound->exists) {
    rec.envelope = decay_envelope(*bound, bound->v0, state.time);
  }
  rec.marginal = velocity_marginal(state, grid);
  rec.clusters = cluster_count(rec.marginal);
  return rec;
}

}  // namespace kflock

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "kflock/errors.hpp"
#include "kflock/grid.hpp"
#include "kflock/interaction.hpp"

namespace kflock {

/// Upwind trace: the left state if the interface velocity is nonnegative,
/// the right state otherwise.
inline double upwind_value(double left, double right, double velocity) {
  return velocity >= 0.0 ? left : right;
}

/// Interface fluxes (upwind trace times interface velocity) for every x cell.
/// flux(i, m) with m = 0..nv; each interior value is stored once and shared by
/// the two neighboring cells, so the update telescopes and conserves mass.
/// The domain boundary interfaces m = 0 and m = nv carry zero flux.
struct FluxSet {
  int nx = 0, nv = 0;
  std::vector<double> values;

  FluxSet() = default;
  FluxSet(int cells_x, int cells_v)
      : nx(cells_x), nv(cells_v),
        values(static_cast<std::size_t>(cells_x) * (cells_v + 1), 0.0) {}

  std::size_t index(int i, int m) const {
    return static_cast<std::size_t>(i) * (nv + 1) + m;
  }
  double at(int i, int m) const { return values[index(i, m)]; }
  double& at(int i, int m) { return values[index(i, m)]; }
};

inline FluxSet compute_fluxes(const DGState& state, const AlignmentMoments& g,
                              const PhaseGrid& grid) {
  FluxSet fluxes(grid.nx, grid.nv);
  const LegendreBasis basis(grid.degree, grid.h());
  const double half = grid.h() / 2.0;
  for (int i = 0; i < grid.nx; ++i) {
    const std::vector<double> L = interface_velocities(g, grid, i);
    for (int m = 1; m < grid.nv; ++m) {
      const double left = basis.eval(state.cell(i, m - 1), half);
      const double right = basis.eval(state.cell(i, m), -half);
      fluxes.at(i, m) = upwind_value(left, right, L[m]) * L[m];
    }
  }
  return fluxes;
}

/// Time derivative of every modal coefficient under the alignment dynamics.
/// Per cell j of x cell i, with F the interface fluxes and S_j the row sum
/// sum_p [(p - j) g0_p + g1_p]:
///   d m0 = (F_j - F_{j+1}) / h
///   d m1 = -(F_j + F_{j+1}) / (2h) + h (m0 S_j - m1 sum g0)
///   d m2 = (F_j - F_{j+1}) / (6h) + 2h (m1 S_j - (m0/12 + m2) sum g0)
inline DGState flocking_rhs(const DGState& state, const AlignmentMoments& g,
                            const PhaseGrid& grid) {
  DGState rhs(grid);
  rhs.time = state.time;
  const FluxSet fluxes = compute_fluxes(state, g, grid);
  const double h = grid.h();
  for (int i = 0; i < grid.nx; ++i) {
    const AlignmentRowSums s = alignment_row_sums(g, i);
    for (int j = 0; j < grid.nv; ++j) {
      const double fm = fluxes.at(i, j);
      const double fp = fluxes.at(i, j + 1);
      rhs.at(i, j, 0) = (fm - fp) / h;
      if (grid.degree >= 1) {
        const double relative = (s.index_weighted - static_cast<double>(j) * s.total0) +
                                s.total1;  // sum_p [(p - j) g0_p + g1_p]
        const double m0 = state.at(i, j, 0);
        const double m1 = state.at(i, j, 1);
        rhs.at(i, j, 1) = -(fm + fp) / (2.0 * h) + h * (m0 * relative - m1 * s.total0);
        if (grid.degree >= 2) {
          const double m2 = state.at(i, j, 2);
          rhs.at(i, j, 2) = (fm - fp) / (6.0 * h) +
                            2.0 * h * (m1 * relative - (m0 / 12.0 + m2) * s.total0);
        }
      }
    }
  }
  return rhs;
}

/// Gauss-Lobatto point count used for positivity control of degree-k cells;
/// k <= 2n - 3 makes the rule exact enough for the convexity argument.
inline int lobatto_points_for_degree(int degree) { return degree == 2 ? 3 : 2; }

namespace detail {

inline double cell_lobatto_min(const LegendreBasis& basis,
                               std::span<const double> moments,
                               const QuadRule& rule) {
  double lo = std::numeric_limits<double>::infinity();
  for (double xi : rule.points) {
    lo = std::min(lo, basis.eval(moments, xi * basis.h));
  }
  return lo;
}

}  // namespace detail

/// Smallest Gauss-Lobatto point value over all cells.
inline double min_lobatto_value(const DGState& state, const PhaseGrid& grid) {
  const LegendreBasis basis(grid.degree, grid.h());
  const QuadRule rule = gauss_lobatto(lobatto_points_for_degree(grid.degree));
  double lo = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.nv; ++j) {
      lo = std::min(lo, detail::cell_lobatto_min(basis, state.cell(i, j), rule));
    }
  }
  return lo;
}

/// Linear scaling limiter toward the cell average: with m the Lobatto minimum
/// and eps = min(eps_floor, avg), cells with m < eps get their higher moments
/// scaled by theta = (avg - eps)/(avg - m). The average itself is untouched,
/// so mass is conserved exactly. theta is nudged down by ulps until the
/// re-evaluated minimum clears eps, which makes the operator a projection
/// (applying it twice equals applying it once, bit for bit).
inline void limit_in_place(DGState& state, const PhaseGrid& grid,
                           double eps_floor = 1e-13) {
  const LegendreBasis basis(grid.degree, grid.h());
  const QuadRule rule = gauss_lobatto(lobatto_points_for_degree(grid.degree));
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.nv; ++j) {
      const double avg = state.at(i, j, 0);
      if (avg < 0.0) {
        throw StabilityError("negative cell average " + std::to_string(avg) +
                             " in cell (" + std::to_string(i) + ", " +
                             std::to_string(j) + "); time step violates the CFL bound");
      }
      if (grid.degree == 0) continue;
      auto cell = state.cell(i, j);
      const double eps = std::min(eps_floor, avg);
      const double lo = detail::cell_lobatto_min(basis, cell, rule);
      if (lo >= eps) continue;
      double theta = (avg - eps) / (avg - lo);
      double original[3] = {0.0, 0.0, 0.0};
      for (int l = 1; l <= grid.degree; ++l) original[l] = cell[l];
      for (int attempt = 0; attempt < 200; ++attempt) {
        for (int l = 1; l <= grid.degree; ++l) cell[l] = theta * original[l];
        if (detail::cell_lobatto_min(basis, cell, rule) >= eps) break;
        theta = theta > 0.0 ? std::nextafter(theta, 0.0) : 0.0;
      }
    }
  }
}

inline DGState apply_limiter(const DGState& state, const PhaseGrid& grid,
                             double eps_floor = 1e-13) {
  DGState out = state;
  limit_in_place(out, grid, eps_floor);
  return out;
}

enum class CflMode { dynamic_bound, static_bound };

inline double cfl_alpha1(int degree) { return degree == 2 ? 1.0 / 6.0 : 0.5; }

/// Largest stable step for the alignment subsystem. The dynamic bound uses
/// the current max |L| over all interfaces; the static bound replaces it by
/// its a-priori ceiling v_max - v_min. A field with no motion at all falls
/// back to the static bound.
inline double max_stable_dt(const AlignmentMoments& g, const PhaseGrid& grid,
                            CflMode mode, double safety = 0.9) {
  const double alpha = cfl_alpha1(grid.degree);
  double speed = grid.v_span();
  if (mode == CflMode::dynamic_bound) {
    double max_l = 0.0;
    for (int i = 0; i < grid.nx; ++i) {
      for (double L : interface_velocities(g, grid, i)) {
        max_l = std::max(max_l, std::abs(L));
      }
    }
    if (max_l > 0.0) speed = max_l;
  }
  return safety * alpha * grid.h() / speed;
}

}  // namespace kflock

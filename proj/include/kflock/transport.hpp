#pragma once

#include <cmath>
#include <vector>

#include "kflock/grid.hpp"
#include "kflock/time_integration.hpp"

namespace kflock {

enum class XReconstruction { upwind_first_order, minmod_muscl };
enum class XBoundary { outflow, periodic };
enum class Splitting { lie, strang };

struct TransportConfig {
  XReconstruction reconstruction = XReconstruction::minmod_muscl;
  XBoundary boundary = XBoundary::outflow;
  Splitting splitting = Splitting::strang;
};

namespace detail {

inline double minmod(double a, double b) {
  if (a > 0.0 && b > 0.0) return std::min(a, b);
  if (a < 0.0 && b < 0.0) return std::max(a, b);
  return 0.0;
}

/// One finite-volume substep of u_t + a u_x = 0 on a row of cell averages,
/// with |nu| = |a| dt / dx <= 1. Outflow treats the exterior as vacuum, so
/// nothing enters and mass can only leave.
inline void advect_row_substep(std::vector<double>& u, double nu,
                               XReconstruction recon, XBoundary boundary,
                               std::vector<double>& flux) {
  const int m = static_cast<int>(u.size());
  const bool periodic = boundary == XBoundary::periodic;
  auto value = [&](int i) -> double {
    if (periodic) return u[((i % m) + m) % m];
    return (i < 0 || i >= m) ? 0.0 : u[i];
  };
  auto slope = [&](int i) -> double {
    return minmod(value(i) - value(i - 1), value(i + 1) - value(i));
  };
  const double anu = std::abs(nu);
  flux.assign(m + 1, 0.0);
  for (int f = 0; f <= m; ++f) {
    // interface f sits between cells f-1 and f
    if (nu > 0.0) {
      double q = value(f - 1);
      if (recon == XReconstruction::minmod_muscl) {
        q += 0.5 * (1.0 - anu) * slope(f - 1);
      }
      flux[f] = q;
    } else {
      double q = value(f);
      if (recon == XReconstruction::minmod_muscl) {
        q -= 0.5 * (1.0 - anu) * slope(f);
      }
      flux[f] = q;
    }
  }
  for (int i = 0; i < m; ++i) {
    u[i] -= nu * (flux[i + 1] - flux[i]);
  }
}

}  // namespace detail

/// Constant-coefficient transport in x: every v row advects at its cell
/// center velocity; all modal coefficients of the row ride along unchanged.
/// Steps larger than the advective CFL are split internally.
inline DGState transport_step(const DGState& state, const PhaseGrid& grid,
                              const TransportConfig& cfg, double dt) {
  DGState out = state;
  const double dx = grid.dx();
  std::vector<double> row(grid.nx);
  std::vector<double> flux;
  for (int j = 0; j < grid.nv; ++j) {
    const double speed = grid.v_center(j);
    if (speed == 0.0 || dt == 0.0) continue;
    const double nu_total = speed * dt / dx;
    const int substeps =
        std::max(1, static_cast<int>(std::ceil(std::abs(nu_total) - 1e-12)));
    const double nu = nu_total / substeps;
    for (int l = 0; l <= grid.degree; ++l) {
      for (int i = 0; i < grid.nx; ++i) row[i] = out.at(i, j, l);
      for (int s = 0; s < substeps; ++s) {
        detail::advect_row_substep(row, nu, cfg.reconstruction, cfg.boundary, flux);
      }
      for (int i = 0; i < grid.nx; ++i) out.at(i, j, l) = row[i];
    }
  }
  out.time = state.time + dt;
  return out;
}

/// One composed step of transport and alignment. Transport does not control
/// the sign of the higher v moments, so the positivity limiter runs after
/// every transport application before the state reenters the alignment solver.
inline DGState split_step(const DGState& state, const PhaseGrid& grid,
                          const FlockingSystem& sys, TimeScheme scheme,
                          const TransportConfig& cfg, double dt) {
  DGState s = state;
  if (cfg.splitting == Splitting::lie) {
    s = transport_step(s, grid, cfg, dt);
    limit_in_place(s, grid, sys.limiter_epsilon);
    s = advance(sys, s, dt, scheme);
  } else {
    s = transport_step(s, grid, cfg, 0.5 * dt);
    limit_in_place(s, grid, sys.limiter_epsilon);
    s = advance(sys, s, dt, scheme);
    s = transport_step(s, grid, cfg, 0.5 * dt);
    limit_in_place(s, grid, sys.limiter_epsilon);
  }
  s.time = state.time + dt;
  return s;
}

}  // namespace kflock

#pragma once

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kflock/grid.hpp"

namespace kflock {

/// Shortest decimal form that round-trips to the same double.
inline std::string shortest_repr(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  (void)ec;
  return std::string(buf, end);
}

/// Normalization of the alignment operator: Cucker-Smale divides by total
/// mass, Motsch-Tadmor by the local influence-weighted density.
enum class Normalization { cucker_smale, motsch_tadmor };

/// Radial influence weight phi(r): phi(0) = 1, nonincreasing, values in [0,1].
struct InfluenceFunction {
  std::string descriptor;
  std::function<double(double)> fn;
  double operator()(double r) const { return fn(r); }
};

inline InfluenceFunction influence_power_law(double p = 0.5) {
  return {"power_law " + shortest_repr(p),
          [p](double r) { return std::pow(1.0 + r, -p); }};
}

inline InfluenceFunction influence_indicator(double radius) {
  return {"indicator " + shortest_repr(radius),
          [radius](double r) { return r < radius ? 1.0 : 0.0; }};
}

/// (1 - r)^2 for r < 1, else 0.
inline InfluenceFunction influence_poly_cutoff() {
  return {"poly_cutoff", [](double r) {
            return r < 1.0 ? (1.0 - r) * (1.0 - r) : 0.0;
          }};
}

inline InfluenceFunction influence_constant() {
  return {"one", [](double) { return 1.0; }};
}

inline InfluenceFunction influence_custom(std::string descriptor,
                                          std::function<double(double)> fn) {
  return {std::move(descriptor), std::move(fn)};
}

/// Spot-checks the admissibility conditions on a sample of radii.
inline void check_influence(const InfluenceFunction& phi, double r_max = 10.0) {
  if (std::abs(phi(0.0) - 1.0) > 1e-12)
    throw std::invalid_argument("influence function: phi(0) must be 1");
  double prev = phi(0.0);
  const int samples = 64;
  for (int s = 1; s <= samples; ++s) {
    const double r = r_max * s / samples;
    const double value = phi(r);
    if (value < 0.0 || value > 1.0)
      throw std::invalid_argument("influence function: values must lie in [0,1]");
    if (value > prev + 1e-12)
      throw std::invalid_argument("influence function: must be nonincreasing");
    prev = value;
  }
}

struct InteractionModel {
  Normalization kind = Normalization::cucker_smale;
  InfluenceFunction phi;
  double mass = 0.0;  // total mass, fixed at initialization
};

/// Influence weights between x cells, cached once per grid. The grid is
/// uniform, so the kernel depends only on the cell-index offset.
struct AlignmentKernel {
  std::vector<double> by_offset;

  static AlignmentKernel build(const PhaseGrid& grid, const InfluenceFunction& phi) {
    AlignmentKernel kernel;
    kernel.by_offset.resize(grid.nx);
    for (int q = 0; q < grid.nx; ++q) {
      kernel.by_offset[q] = phi(q * grid.dx());
    }
    return kernel;
  }

  double at(int i, int p) const { return by_offset[std::abs(i - p)]; }
};

/// Zeroth and first velocity moments of the alignment density G at every
/// (x cell, v cell): zeroth[i*nv+p] and first[i*nv+p].
struct AlignmentMoments {
  int nx = 0, nv = 0;
  std::vector<double> zeroth, first;

  AlignmentMoments() = default;
  AlignmentMoments(int cells_x, int cells_v)
      : nx(cells_x), nv(cells_v),
        zeroth(static_cast<std::size_t>(cells_x) * cells_v, 0.0),
        first(static_cast<std::size_t>(cells_x) * cells_v, 0.0) {}

  std::size_t index(int i, int p) const {
    return static_cast<std::size_t>(i) * nv + p;
  }
  double g0(int i, int p) const { return zeroth[index(i, p)]; }
  double g1(int i, int p) const { return first[index(i, p)]; }
};

/// MT rows whose normalization falls below this fraction of the total mass
/// are treated as vacuum: their G row (hence their alignment velocity) is 0.
inline constexpr double degenerate_normalization_factor = 1e-14;

/// Normalization weight for x cell i: total mass under CS, the
/// influence-weighted spatial density under MT.
inline double normalization(const DGState& state, const InteractionModel& model,
                            const PhaseGrid& grid, const AlignmentKernel& kernel,
                            int i) {
  if (model.kind == Normalization::cucker_smale) return model.mass;
  const double h = grid.h();
  const double dx = grid.dx();
  double phi_weighted = 0.0;
  for (int p = 0; p < grid.nx; ++p) {
    double rho = 0.0;
    for (int j = 0; j < grid.nv; ++j) rho += state.at(p, j, 0);
    phi_weighted += kernel.at(i, p) * rho * h * dx;
  }
  return phi_weighted;
}

/// Moments of G(x_i, v) = (1/Phi_i) * sum_p phi(|x_i - x_p|) f(x_p, v) dx.
/// The x sum runs in ascending p for reproducibility. Each row satisfies
/// h * sum_j zeroth[i][j] <= 1, with equality on nondegenerate MT rows.
inline AlignmentMoments compute_alignment_moments(const DGState& state,
                                                  const InteractionModel& model,
                                                  const PhaseGrid& grid,
                                                  const AlignmentKernel& kernel) {
  AlignmentMoments g(grid.nx, grid.nv);
  const double h = grid.h();
  const double dx = grid.dx();
  const double eps_phi = degenerate_normalization_factor * model.mass;

  // Spatial density per x cell, used by the MT normalization.
  std::vector<double> rho(grid.nx, 0.0);
  for (int p = 0; p < grid.nx; ++p) {
    double acc = 0.0;
    for (int j = 0; j < grid.nv; ++j) acc += state.at(p, j, 0);
    rho[p] = acc * h;
  }

  for (int i = 0; i < grid.nx; ++i) {
    double phi_i;
    if (model.kind == Normalization::cucker_smale) {
      phi_i = model.mass;
    } else {
      phi_i = 0.0;
      for (int p = 0; p < grid.nx; ++p) phi_i += kernel.at(i, p) * rho[p] * dx;
    }
    if (phi_i <= eps_phi) continue;  // degenerate row stays zero

    const double inv_phi = 1.0 / phi_i;
    for (int p = 0; p < grid.nx; ++p) {
      const double w = kernel.at(i, p) * dx * inv_phi;
      if (w == 0.0) continue;
      for (int j = 0; j < grid.nv; ++j) {
        g.zeroth[g.index(i, j)] += w * state.at(p, j, 0);
        if (state.degree >= 1) g.first[g.index(i, j)] += w * state.at(p, j, 1);
      }
    }
  }
  return g;
}

inline AlignmentMoments compute_alignment_moments(const DGState& state,
                                                  const InteractionModel& model,
                                                  const PhaseGrid& grid) {
  return compute_alignment_moments(state, model, grid,
                                   AlignmentKernel::build(grid, model.phi));
}

/// Accumulated sums of one G row used by both the interface velocities and
/// the interior terms of the moment equations.
struct AlignmentRowSums {
  double total0 = 0.0;       // sum_p g0
  double total1 = 0.0;       // sum_p g1
  double index_weighted = 0.0;  // sum_p p * g0
};

inline AlignmentRowSums alignment_row_sums(const AlignmentMoments& g, int i) {
  AlignmentRowSums s;
  for (int p = 0; p < g.nv; ++p) {
    const double z = g.g0(i, p);
    s.total0 += z;
    s.index_weighted += p * z;
    s.total1 += g.g1(i, p);
  }
  return s;
}

/// Alignment velocity at the nv+1 interfaces of x cell i:
///   L_m = h^2 * sum_p [ (p + 1/2 - m) g0_p + g1_p ],  m = 0..nv.
/// Evaluated through the row sums, so the values are affine in m by
/// construction and the extreme |L| sits at an end interface.
inline std::vector<double> interface_velocities(const AlignmentMoments& g,
                                                const PhaseGrid& grid, int i) {
  const AlignmentRowSums s = alignment_row_sums(g, i);
  const double h2 = grid.h() * grid.h();
  const double base = s.index_weighted + s.total1;
  std::vector<double> L(grid.nv + 1);
  for (int m = 0; m <= grid.nv; ++m) {
    L[m] = h2 * (base + (0.5 - m) * s.total0);
  }
  return L;
}

}  // namespace kflock

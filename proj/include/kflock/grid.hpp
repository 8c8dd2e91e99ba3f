#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kflock/quadrature.hpp"

namespace kflock {

/// Uniform tensor grid on [x_min,x_max] x [v_min,v_max]. Velocity cells carry
/// a modal Legendre expansion of degree `degree` (0, 1 or 2); x cells carry
/// plain averages of those modal coefficients.
struct PhaseGrid {
  double x_min, x_max;
  int nx;
  double v_min, v_max;
  int nv;
  int degree;

  PhaseGrid(double x_lo, double x_hi, int cells_x, double v_lo, double v_hi,
            int cells_v, int k)
      : x_min(x_lo), x_max(x_hi), nx(cells_x), v_min(v_lo), v_max(v_hi),
        nv(cells_v), degree(k) {
    if (!(x_max > x_min) || !(v_max > v_min))
      throw std::invalid_argument("PhaseGrid: empty domain");
    if (nx < 1 || nv < 1)
      throw std::invalid_argument("PhaseGrid: need at least one cell per axis");
    if (degree < 0 || degree > 2)
      throw std::invalid_argument("PhaseGrid: degree must be 0, 1 or 2");
  }

  double dx() const { return (x_max - x_min) / nx; }
  double h() const { return (v_max - v_min) / nv; }
  double v_span() const { return v_max - v_min; }
  double x_center(int i) const { return x_min + (i + 0.5) * dx(); }
  double v_center(int j) const { return v_min + (j + 0.5) * h(); }
  /// Interface m in 0..nv separates cells m-1 and m; both sides share this value.
  double v_interface(int m) const { return v_min + m * h(); }
};

/// Scaled Legendre basis on a velocity cell of width h, in the local
/// coordinate xi = v - v_center: p0 = 1, p1 = xi, p2 = xi^2 - h^2/12.
/// A cell polynomial is sum_l a_l * m_l * p_l with normalizers
/// a_0 = 1, a_1 = 12/h, a_2 = 180/h^2, where m_l are the stored moments
/// m_l = (1/h^{l+1}) * integral of f * p_l over the cell.
struct LegendreBasis {
  int degree;
  double h;

  LegendreBasis(int k, double width) : degree(k), h(width) {}

  double poly(int l, double xi) const {
    switch (l) {
      case 0: return 1.0;
      case 1: return xi;
      case 2: return xi * xi - h * h / 12.0;
      default: throw std::invalid_argument("LegendreBasis: degree out of range");
    }
  }

  double normalizer(int l) const {
    switch (l) {
      case 0: return 1.0;
      case 1: return 12.0 / h;
      case 2: return 180.0 / (h * h);
      default: throw std::invalid_argument("LegendreBasis: degree out of range");
    }
  }

  /// Value of the cell polynomial at local coordinate xi in [-h/2, h/2].
  double eval(std::span<const double> moments, double xi) const {
    double value = 0.0;
    for (int l = 0; l < static_cast<int>(moments.size()); ++l) {
      value += normalizer(l) * moments[l] * poly(l, xi);
    }
    return value;
  }
};

/// Modal coefficients for every (x, v) cell, shape nx * nv * (degree + 1).
/// coef[(i*nv + j)*(degree+1) + l] is moment l of cell (i, j).
struct DGState {
  int nx = 0, nv = 0, degree = 0;
  double time = 0.0;
  std::vector<double> coef;

  DGState() = default;
  DGState(int cells_x, int cells_v, int k)
      : nx(cells_x), nv(cells_v), degree(k),
        coef(static_cast<std::size_t>(cells_x) * cells_v * (k + 1), 0.0) {}
  explicit DGState(const PhaseGrid& grid)
      : DGState(grid.nx, grid.nv, grid.degree) {}

  int order() const { return degree + 1; }
  std::size_t index(int i, int j, int l) const {
    return (static_cast<std::size_t>(i) * nv + j) * order() + l;
  }
  double& at(int i, int j, int l) { return coef[index(i, j, l)]; }
  double at(int i, int j, int l) const { return coef[index(i, j, l)]; }
  std::span<const double> cell(int i, int j) const {
    return {coef.data() + index(i, j, 0), static_cast<std::size_t>(order())};
  }
  std::span<double> cell(int i, int j) {
    return {coef.data() + index(i, j, 0), static_cast<std::size_t>(order())};
  }

  bool same_shape(const DGState& o) const {
    return nx == o.nx && nv == o.nv && degree == o.degree;
  }
};

/// L2 projection of initial data onto the DG space: x is sampled at cell
/// centers, the v integral uses 5-point Gauss-Legendre per cell (exact for
/// the polynomial factors involved).
template <class F>
DGState project(const PhaseGrid& grid, F&& f) {
  DGState state(grid);
  const LegendreBasis basis(grid.degree, grid.h());
  const QuadRule& rule = gauss_legendre_5();
  const double h = grid.h();
  for (int i = 0; i < grid.nx; ++i) {
    const double x = grid.x_center(i);
    for (int j = 0; j < grid.nv; ++j) {
      const double vc = grid.v_center(j);
      for (int l = 0; l <= grid.degree; ++l) {
        double acc = 0.0;
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
          const double xi = rule.points[q] * h;
          acc += rule.weights[q] * f(x, vc + xi) * basis.poly(l, xi);
        }
        // (1/h^{l+1}) * integral = (1/h^{l+1}) * h * sum(w f p)
        double scale = 1.0;
        for (int p = 0; p < l; ++p) scale /= h;
        state.at(i, j, l) = acc * scale;
      }
    }
  }
  return state;
}

}  // namespace kflock

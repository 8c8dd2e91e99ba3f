#include <cmath>
#include <cstdlib>
#include <random>

#include "catch2/catch_amalgamated.hpp"
#include "kflock/diagnostics.hpp"
#include "kflock/interaction.hpp"

using namespace kflock;

namespace {

DGState random_positive_state(const PhaseGrid& grid, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> avg(0.1, 2.0);
  std::uniform_real_distribution<double> tilt(-0.01, 0.01);
  DGState state(grid);
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.nv; ++j) {
      state.at(i, j, 0) = avg(rng);
      for (int l = 1; l <= grid.degree; ++l) state.at(i, j, l) = tilt(rng);
    }
  }
  return state;
}

/// Interface velocities recomputed by brute force: evaluate the degree-1
/// representation of the alignment density pointwise and integrate
/// (v - v_m) G(v) with 5-point Gauss per cell.
std::vector<double> interface_velocities_oracle(const AlignmentMoments& g,
                                                const PhaseGrid& grid, int i) {
  const double h = grid.h();
  const LegendreBasis basis(1, h);
  const QuadRule& rule = gauss_legendre_5();
  std::vector<double> L(grid.nv + 1, 0.0);
  for (int m = 0; m <= grid.nv; ++m) {
    const double vm = grid.v_interface(m);
    double acc = 0.0;
    for (int p = 0; p < grid.nv; ++p) {
      const double moments[2] = {g.g0(i, p), g.g1(i, p)};
      const double vc = grid.v_center(p);
      for (std::size_t q = 0; q < rule.points.size(); ++q) {
        const double xi = rule.points[q] * h;
        acc += rule.weights[q] * (vc + xi - vm) * basis.eval(moments, xi);
      }
    }
    L[m] = acc * h;
  }
  return L;
}

}  // namespace

TEST_CASE("shortest_repr round-trips doubles through text") {
  for (double x : {0.1, 1.0 / 3.0, 0.98, 1e-300, 1234.5, -0.004, 0.0}) {
    const std::string s = shortest_repr(x);
    REQUIRE(std::strtod(s.c_str(), nullptr) == x);
  }
  REQUIRE(shortest_repr(2.0) == "2");
  REQUIRE(shortest_repr(0.5) == "0.5");
}

TEST_CASE("influence function factories") {
  const InfluenceFunction pl = influence_power_law(0.5);
  REQUIRE(pl.descriptor == "power_law 0.5");
  REQUIRE(pl(0.0) == 1.0);
  REQUIRE(std::abs(pl(3.0) - 0.5) < 1e-15);  // (1+3)^(-1/2)

  const InfluenceFunction ind = influence_indicator(0.8);
  REQUIRE(ind.descriptor == "indicator 0.8");
  REQUIRE(ind(0.79) == 1.0);
  REQUIRE(ind(0.8) == 0.0);  // half-open support

  const InfluenceFunction cut = influence_poly_cutoff();
  REQUIRE(std::abs(cut(0.5) - 0.25) < 1e-15);
  REQUIRE(cut(1.0) == 0.0);

  REQUIRE(influence_constant()(123.0) == 1.0);

  check_influence(pl);
  check_influence(ind);
  check_influence(cut);
  REQUIRE_THROWS_AS(
      check_influence(influence_custom("bad", [](double r) { return 1.0 + r; })),
      std::invalid_argument);
  REQUIRE_THROWS_AS(
      check_influence(influence_custom("bad", [](double) { return 0.5; })),
      std::invalid_argument);
}

TEST_CASE("alignment kernel caches the influence by cell offset") {
  const PhaseGrid grid(-1.0, 1.0, 8, -1.0, 1.0, 4, 1);
  const InfluenceFunction phi = influence_power_law(0.5);
  const AlignmentKernel kernel = AlignmentKernel::build(grid, phi);
  for (int i = 0; i < grid.nx; ++i) {
    for (int p = 0; p < grid.nx; ++p) {
      const double direct = phi(std::abs(grid.x_center(i) - grid.x_center(p)));
      REQUIRE(std::abs(kernel.at(i, p) - direct) < 1e-14);
    }
  }
}

TEST_CASE("normalization weight per model") {
  const PhaseGrid grid(-1.0, 1.0, 6, -1.0, 1.0, 8, 1);
  const DGState state = random_positive_state(grid, 11);
  const double mass = total_mass(state, grid);

  const InteractionModel cs{Normalization::cucker_smale,
                            influence_power_law(0.5), mass};
  const AlignmentKernel kernel = AlignmentKernel::build(grid, cs.phi);
  for (int i = 0; i < grid.nx; ++i) {
    REQUIRE(normalization(state, cs, grid, kernel, i) == mass);
  }

  const InteractionModel mt{Normalization::motsch_tadmor,
                            influence_power_law(0.5), mass};
  for (int i : {0, 3, 5}) {
    double expected = 0.0;
    for (int p = 0; p < grid.nx; ++p) {
      double rho = 0.0;
      for (int j = 0; j < grid.nv; ++j) rho += state.at(p, j, 0);
      expected += kernel.at(i, p) * rho * grid.h() * grid.dx();
    }
    const double got = normalization(state, mt, grid, kernel, i);
    REQUIRE(std::abs(got - expected) < 1e-13 * mass);
    REQUIRE(got <= mass * (1.0 + 1e-12));  // phi <= 1
  }
}

TEST_CASE("normalized density rows integrate to at most one") {
  const PhaseGrid grid(-1.0, 1.0, 10, -1.0, 1.0, 12, 2);
  const DGState state = random_positive_state(grid, 23);
  const double mass = total_mass(state, grid);
  const double h = grid.h();

  SECTION("global normalization stays at or below one") {
    const InteractionModel model{Normalization::cucker_smale,
                                 influence_power_law(0.5), mass};
    const AlignmentMoments g = compute_alignment_moments(state, model, grid);
    for (int i = 0; i < grid.nx; ++i) {
      double row = 0.0;
      for (int j = 0; j < grid.nv; ++j) row += g.g0(i, j);
      REQUIRE(row * h <= 1.0 + 1e-12);
      REQUIRE(row * h > 0.0);
    }
  }

  SECTION("local normalization gives exactly one on populated rows") {
    const InteractionModel model{Normalization::motsch_tadmor,
                                 influence_power_law(0.5), mass};
    const AlignmentMoments g = compute_alignment_moments(state, model, grid);
    for (int i = 0; i < grid.nx; ++i) {
      double row = 0.0;
      for (int j = 0; j < grid.nv; ++j) row += g.g0(i, j);
      REQUIRE(std::abs(row * h - 1.0) < 1e-12);
    }
  }

  SECTION("constant influence makes both normalizations agree") {
    const InteractionModel cs{Normalization::cucker_smale, influence_constant(),
                              mass};
    const InteractionModel mt{Normalization::motsch_tadmor,
                              influence_constant(), mass};
    const AlignmentMoments gc = compute_alignment_moments(state, cs, grid);
    const AlignmentMoments gm = compute_alignment_moments(state, mt, grid);
    for (std::size_t n = 0; n < gc.zeroth.size(); ++n) {
      REQUIRE(std::abs(gc.zeroth[n] - gm.zeroth[n]) < 1e-13);
      REQUIRE(std::abs(gc.first[n] - gm.first[n]) < 1e-15);
    }
  }
}

TEST_CASE("vacuum rows under local normalization produce no motion") {
  // all mass sits in the left quarter; indicator influence cannot reach the
  // right half, whose normalization is zero
  const PhaseGrid grid(0.0, 4.0, 16, -1.0, 1.0, 8, 1);
  DGState state(grid);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < grid.nv; ++j) state.at(i, j, 0) = 1.0;
  }
  const InteractionModel model{Normalization::motsch_tadmor,
                               influence_indicator(0.6),
                               total_mass(state, grid)};
  const AlignmentMoments g = compute_alignment_moments(state, model, grid);
  for (int i = 8; i < grid.nx; ++i) {
    const std::vector<double> L = interface_velocities(g, grid, i);
    for (double value : L) REQUIRE(value == 0.0);
  }
  // populated rows still integrate to one
  double row0 = 0.0;
  for (int j = 0; j < grid.nv; ++j) row0 += g.g0(0, j);
  REQUIRE(std::abs(row0 * grid.h() - 1.0) < 1e-12);
}

TEST_CASE("uniform alignment density pulls toward the origin") {
  // f constant on [-1,1] in v: the normalized density is 1/2 everywhere,
  // so the drift at interface velocity v_m is exactly -v_m
  for (int nv : {8, 64, 256}) {
    const PhaseGrid grid(-1.0, 1.0, 4, -1.0, 1.0, nv, 2);
    DGState state(grid);
    for (int i = 0; i < grid.nx; ++i) {
      for (int j = 0; j < grid.nv; ++j) state.at(i, j, 0) = 1.0;
    }
    const InteractionModel model{Normalization::cucker_smale,
                                 influence_constant(),
                                 total_mass(state, grid)};
    const AlignmentMoments g = compute_alignment_moments(state, model, grid);
    for (int i = 0; i < grid.nx; ++i) {
      const std::vector<double> L = interface_velocities(g, grid, i);
      for (int m = 0; m <= grid.nv; ++m) {
        REQUIRE(std::abs(L[m] + grid.v_interface(m)) < 1e-13);
      }
    }
  }
}

TEST_CASE("interface velocities match direct quadrature of the density") {
  const PhaseGrid grid(-1.0, 1.0, 6, -1.0, 1.0, 16, 2);
  const DGState state = random_positive_state(grid, 37);
  const InteractionModel model{Normalization::cucker_smale,
                               influence_power_law(0.5),
                               total_mass(state, grid)};
  const AlignmentMoments g = compute_alignment_moments(state, model, grid);
  for (int i = 0; i < grid.nx; ++i) {
    const std::vector<double> fast = interface_velocities(g, grid, i);
    const std::vector<double> slow = interface_velocities_oracle(g, grid, i);
    double scale = 1.0;
    for (double v : slow) scale = std::max(scale, std::abs(v));
    for (int m = 0; m <= grid.nv; ++m) {
      REQUIRE(std::abs(fast[m] - slow[m]) < 1e-12 * scale);
    }
  }
}

TEST_CASE("interface velocities are affine in the interface index") {
  const PhaseGrid grid(-1.0, 1.0, 5, -1.0, 1.0, 24, 2);
  const DGState state = random_positive_state(grid, 41);
  const InteractionModel model{Normalization::motsch_tadmor,
                               influence_power_law(1.0),
                               total_mass(state, grid)};
  const AlignmentMoments g = compute_alignment_moments(state, model, grid);
  const double h = grid.h();
  for (int i = 0; i < grid.nx; ++i) {
    const std::vector<double> L = interface_velocities(g, grid, i);
    const AlignmentRowSums sums = alignment_row_sums(g, i);
    // consecutive difference is h^2 * sum g0, at most h when rows sum to 1
    for (int m = 0; m < grid.nv; ++m) {
      REQUIRE(std::abs((L[m] - L[m + 1]) - h * h * sums.total0) <
              1e-12 * grid.v_span());
    }
    REQUIRE(h * h * sums.total0 <= h * (1.0 + 1e-12));
  }
}

#pragma once

#include <optional>
#include <stdexcept>

#include "kflock/flocking.hpp"
#include "kflock/grid.hpp"
#include "kflock/interaction.hpp"

namespace kflock {

enum class TimeScheme { forward_euler, ssp_rk2, ssp_rk3 };

/// Pairing that matches the time order to the spatial order.
inline TimeScheme default_scheme_for_degree(int degree) {
  switch (degree) {
    case 0: return TimeScheme::forward_euler;
    case 1: return TimeScheme::ssp_rk2;
    default: return TimeScheme::ssp_rk3;
  }
}

struct IntegratorConfig {
  TimeScheme scheme = TimeScheme::ssp_rk3;
  CflMode cfl_mode = CflMode::static_bound;
  double safety = 0.9;
  std::optional<double> dt;  // fixed step; empty means CFL-driven
  double t_end = 0.0;
  double cadence = 1.0;  // spacing of diagnostic outputs
};

// State arithmetic used by the generic steppers. A scalar "state" is allowed
// so the schemes can be exercised against closed-form solutions. The convex
// combinations (weights sum to one) are evaluated in difference form, which
// blends two identical states to themselves bitwise; a discrete steady state
// is then an exact fixed point of every scheme.
inline double axpy(double x, double a, double y) { return x + a * y; }
inline double blend(double, double a, double wb, double b) {
  return a + wb * (b - a);
}

inline DGState axpy(const DGState& x, double a, const DGState& y) {
  DGState out = x;
  for (std::size_t n = 0; n < out.coef.size(); ++n) {
    out.coef[n] = x.coef[n] + a * y.coef[n];
  }
  return out;
}

inline DGState blend(double, const DGState& a, double wb, const DGState& b) {
  DGState out = a;
  for (std::size_t n = 0; n < out.coef.size(); ++n) {
    out.coef[n] = a.coef[n] + wb * (b.coef[n] - a.coef[n]);
  }
  return out;
}

/// One forward Euler building block: state + dt * rhs, followed by the
/// system's post hook (the positivity limiter for the flocking system).
template <class System, class State>
State euler_substage(const System& sys, const State& state, double dt) {
  State next = axpy(state, dt, sys.rhs(state));
  sys.post_substage(next);
  return next;
}

template <class System, class State>
State forward_euler_step(const System& sys, const State& state, double dt) {
  return euler_substage(sys, state, dt);
}

/// Heun-type SSP scheme: convex combination of Euler substages, so any
/// convex invariant enforced by the substages survives the full step up to
/// rounding. The post hook runs again on every blended state because the
/// blend arithmetic can land a few ulps outside the invariant set.
template <class System, class State>
State ssp_rk2_step(const System& sys, const State& state, double dt) {
  const State s1 = euler_substage(sys, state, dt);
  State out = blend(0.5, state, 0.5, euler_substage(sys, s1, dt));
  sys.post_substage(out);
  return out;
}

template <class System, class State>
State ssp_rk3_step(const System& sys, const State& state, double dt) {
  const State s1 = euler_substage(sys, state, dt);
  State s2 = blend(0.75, state, 0.25, euler_substage(sys, s1, dt));
  sys.post_substage(s2);
  State out = blend(1.0 / 3.0, state, 2.0 / 3.0, euler_substage(sys, s2, dt));
  sys.post_substage(out);
  return out;
}

template <class System, class State>
State advance(const System& sys, const State& state, double dt, TimeScheme scheme) {
  switch (scheme) {
    case TimeScheme::forward_euler: return forward_euler_step(sys, state, dt);
    case TimeScheme::ssp_rk2: return ssp_rk2_step(sys, state, dt);
    case TimeScheme::ssp_rk3: return ssp_rk3_step(sys, state, dt);
  }
  throw std::logic_error("advance: unknown scheme");
}

/// The alignment subsystem as a steppable system: recomputes the alignment
/// moments from the current state in every substage and limits afterwards.
struct FlockingSystem {
  PhaseGrid grid;
  InteractionModel model;
  AlignmentKernel kernel;
  double limiter_epsilon = 1e-13;

  FlockingSystem(const PhaseGrid& g, InteractionModel m, double eps = 1e-13)
      : grid(g), model(std::move(m)),
        kernel(AlignmentKernel::build(g, model.phi)), limiter_epsilon(eps) {}

  AlignmentMoments alignment(const DGState& state) const {
    return compute_alignment_moments(state, model, grid, kernel);
  }
  DGState rhs(const DGState& state) const {
    return flocking_rhs(state, alignment(state), grid);
  }
  void post_substage(DGState& state) const {
    limit_in_place(state, grid, limiter_epsilon);
  }
  double stable_dt(const DGState& state, CflMode mode, double safety) const {
    return max_stable_dt(alignment(state), grid, mode, safety);
  }
};

/// Flocking step that also advances the state clock.
inline DGState flocking_step(const FlockingSystem& sys, const DGState& state,
                             double dt, TimeScheme scheme) {
  DGState out = advance(sys, state, dt, scheme);
  out.time = state.time + dt;
  return out;
}

}  // namespace kflock

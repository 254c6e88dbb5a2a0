/// @file hamiltonian.hpp
/// Canonical evolution in the axial gauge A_3 = 0. The dynamical pair is the
/// transverse potentials (A_1, A_2) and their conjugate momenta (Pi_1, Pi_2),
/// all divergence-free inner vector fields; A_0 is not dynamical and is
/// re-solved from the Gauss constraint  lambda * Lap3 A_0 = P G  whenever it
/// is needed, where P is the transverse projector and G collects the momentum
/// self-coupling source. The energy functional is
///
///   H = 1/2 <Pi,Pi> + lambda^2/2 <F_12,F_12>
///       + lambda^2/2 sum_i |d3 A_i|^2_cells + lambda^2/2 |d3 A_0|^2_cells,
///
/// with the x3 derivatives living on the staggered cell lattice so that the
/// constraint solve and the energy gradient use one and the same discrete
/// operator. Time derivatives are the exact canonical gradient of H on the
/// divergence-free phase space (including the implicit dependence through the
/// solved A_0), so midpoint/rk4 drift is pure time-discretization error.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "isodyn/lagrangian.hpp"
#include "isodyn/lattice.hpp"

namespace isodyn {

// ==== state =================================================================

/// Phase-space point of the axial-gauge system. `a0` caches the constraint
/// solve for the current (a, pi); consumers that need it check `a0_fresh` and
/// throw std::logic_error when the cache is stale. `step` invalidates the
/// cache, `refresh_a0` re-establishes it.
struct AxialState {
    LatticeSpec spec;
    std::array<AlgebraField, 2> a;    // A_1, A_2
    std::array<AlgebraField, 2> pi;   // Pi_1, Pi_2 (= lambda F_01, lambda F_02)
    AlgebraField a0;                  // solved A_0 cache
    double t = 0.0;
    bool a0_fresh = false;

    explicit AxialState(const LatticeSpec& s)
        : spec(s),
          a{AlgebraField(s), AlgebraField(s)},
          pi{AlgebraField(s), AlgebraField(s)},
          a0(s) {}
};

/// Canonical right-hand side (dA_i/dt, dPi_i/dt), both transverse-projected.
/// `divfree_leak` reports the largest relative transverse-projection
/// correction that was removed from the four raw outputs; it is only filled
/// when time_derivatives is asked to measure it and is zero otherwise.
struct TimeDerivatives {
    std::array<AlgebraField, 2> da, dpi;
    double divfree_leak = 0.0;

    explicit TimeDerivatives(const LatticeSpec& s)
        : da{AlgebraField(s), AlgebraField(s)},
          dpi{AlgebraField(s), AlgebraField(s)} {}
};

enum class Scheme { rk4, midpoint };

/// One row of evolution diagnostics, cheap enough to emit every few steps.
struct DiagnosticsRecord {
    double t = 0.0;
    double h = 0.0;             // energy functional
    double gauss_l2 = 0.0;      // relative Gauss-constraint residual
    double bianchi_l2 = 0.0;    // relative cyclic-identity residual (1,2,3)
    double divfree_leak = 0.0;  // worst relative inner divergence of a state field
    std::array<double, 4> p{};  // four-momentum of the improved tensor
    std::vector<double> q;      // matter charges (empty without matter)
    int a0_iterations = 0;      // constraint solves performed (direct solve: 1)
};

// ==== constraint ============================================================

/// Solve the Gauss constraint for A_0 at the state's (a, pi):
/// A_0 = P(Lap3^{-1} G) / lambda with wall values pinned to zero. Does not
/// touch the state's cache.
AlgebraField solve_a0(const DerivEngine& eng, const AxialState& st);

/// Solve and install the A_0 cache, marking it fresh.
void refresh_a0(const DerivEngine& eng, AxialState& st);

/// Gauss residual P G - lambda * Lap3 A_0 evaluated with the cached A_0.
/// Requires a fresh cache; with a freshly solved A_0 this is the round-trip
/// error of the tridiagonal solve.
AlgebraField gauss_residual(const DerivEngine& eng, const AxialState& st);

// ==== energy ================================================================

/// Total energy of the state (requires a fresh A_0 cache).
double hamiltonian(const DerivEngine& eng, const AxialState& st);

/// Per-site energy density whose plain sum times h1 h2 h3 reproduces
/// hamiltonian() up to rounding: inner integrals of the node terms plus the
/// half-sum node assignment of the staggered-cell terms (requires fresh A_0).
std::vector<double> hamiltonian_density(const DerivEngine& eng, const AxialState& st);

// ==== dynamics ==============================================================

/// Canonical time derivatives at the state's (a, pi) using the cached A_0
/// (requires a fresh cache). With measure_leak the relative size of the
/// transverse-projection correction on the raw right-hand side is recorded.
TimeDerivatives time_derivatives(const DerivEngine& eng, const AxialState& st,
                                 bool measure_leak = false);

/// Advance the state by spec.dt with the chosen scheme. Every stage re-solves
/// the constraint from its own (a, pi); the A_0 cache is left stale. The
/// implicit midpoint iteration throws std::runtime_error if it fails to
/// converge within its fixed-point budget.
void step(const DerivEngine& eng, AxialState& st, Scheme scheme);

/// Refresh the constraint and assemble the standard diagnostics row.
DiagnosticsRecord diagnostics(const DerivEngine& eng, AxialState& st);

// ==== reconstruction ========================================================

/// Four-potential view of the state: A_0 from the cache, A_3 = 0
/// (requires a fresh cache).
GaugeConfig gauge_config(const AxialState& st);

/// Field strength with the electric components reconstructed from the
/// momenta: F_0i = Pi_i / lambda, F_03 = -d3 A_0, F_i3 = -d3 A_i, and F_12
/// from the potentials (requires a fresh cache).
FieldStrength strength_with_momenta(const DerivEngine& eng, const AxialState& st);

// ==== brackets ==============================================================

/// A phase-space observable. The state handed to it always carries a fresh
/// A_0 cache; it may be evaluated at perturbed states during bracket
/// computation, hence the mutable reference.
using StateFunctional = std::function<double(const DerivEngine&, AxialState&)>;

/// Canonical Poisson bracket {f, g} evaluated by central finite differences
/// of both functionals over every (a, pi) lattice entry, with the constraint
/// re-solved at each perturbed state. Intended for small verification grids.
double poisson_bracket(const DerivEngine& eng, const AxialState& st,
                       const StateFunctional& f, const StateFunctional& g);

// ==== test data =============================================================

/// Deterministic band-limited random state (four independent draws seeded
/// from `seed`), with a stale A_0 cache.
AxialState random_state(std::uint64_t seed, const DerivEngine& eng,
                        int max_mode, double amplitude);

}  // namespace isodyn

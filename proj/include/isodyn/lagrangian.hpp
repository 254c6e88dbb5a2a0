/// @file lagrangian.hpp
/// Gauge-covariant calculus: field strength, covariant derivatives, the
/// action and its density, field-equation / Bianchi / current residuals,
/// and canonical + improved energy-momentum tensors.
///
/// Index conventions: spacetime indices mu = 0..3 with metric
/// eta = diag(-1,+1,+1,+1); spatial derivatives use spectral matrices on
/// x1, x2 and the centered second-order stencil on x3. Time derivatives are
/// never finite-differenced: callers supply them algebraically (the
/// evolution module derives them from momenta), and the static overloads
/// treat them as zero.

#pragma once

#include <array>
#include <vector>

#include "isodyn/algebra.hpp"
#include "isodyn/lattice.hpp"

namespace isodyn {

// ==== configuration types ===================================================

struct GaugeConfig {
    LatticeSpec spec;
    std::array<AlgebraField, 4> a;   // A_mu^M, mu = 0..3

    GaugeConfig() = default;
    explicit GaugeConfig(const LatticeSpec& s)
        : spec(s), a{AlgebraField(s), AlgebraField(s), AlgebraField(s), AlgebraField(s)} {}
};

/// Six ordered pairs mu < nu; antisymmetry is implicit in storage.
struct FieldStrength {
    LatticeSpec spec;
    std::array<AlgebraField, 6> f;

    FieldStrength() = default;
    explicit FieldStrength(const LatticeSpec& s)
        : spec(s), f{AlgebraField(s), AlgebraField(s), AlgebraField(s),
                     AlgebraField(s), AlgebraField(s), AlgebraField(s)} {}

    /// storage slot for the ordered pair mu < nu
    static int pair_index(int mu, int nu);
    /// F_mu_nu as a signed copy (handles mu > nu and the zero diagonal)
    AlgebraField component(int mu, int nu) const;
};

struct EnergyMomentum {
    enum class Variant { canonical, improved };
    LatticeSpec spec;
    Variant variant = Variant::improved;
    // theta[mu*4 + nu]: per-spatial-site values of theta^mu_nu (inner space
    // integrated out)
    std::array<std::vector<double>, 16> theta;
};

// ==== field strength and covariant derivatives ==============================

/// F_mu_nu = d_mu A_nu - d_nu A_mu + A_mu^N grad_N A_nu - A_nu^N grad_N A_mu.
/// The static overload treats d_0 A = 0; the second overload takes the four
/// caller-supplied time derivatives d_0 A_mu.
FieldStrength field_strength(const DerivEngine& eng, const GaugeConfig& a);
FieldStrength field_strength(const DerivEngine& eng, const GaugeConfig& a,
                             const std::array<AlgebraField, 4>& a_dot);

/// D_mu psi = d_mu psi + A_mu^M grad_M psi for spatial mu in {1,2,3};
/// mu = 0 requires the caller-supplied d_0 psi (second overload).
/// The spatial overload throws std::invalid_argument for mu = 0.
ScalarField covariant_derivative_scalar(const DerivEngine& eng, const ScalarField& psi,
                                        const GaugeConfig& a, int mu);
ScalarField covariant_derivative_scalar(const DerivEngine& eng, const ScalarField& psi,
                                        const ScalarField& psi_dot, const GaugeConfig& a);

/// (D_mu v)^M = d_mu v^M + A_mu^L grad_L v^M - v^N grad_N A_mu^M
/// (an endomorphism of the algebra: output divergence-free when inputs are).
AlgebraField covariant_derivative_vector(const DerivEngine& eng, const AlgebraField& v,
                                         const GaugeConfig& a, int mu);
AlgebraField covariant_derivative_vector(const DerivEngine& eng, const AlgebraField& v,
                                         const AlgebraField& v_dot, const GaugeConfig& a);

// ==== action ================================================================

/// Per-spatial-site density: inner integral of -(lambda^2/4) F_mu_nu.F^mu_nu
/// (both index orders summed; spacetime indices raised with eta).
std::vector<double> action_density(const FieldStrength& f);
/// Spatial sum of the density times the spatial cell volume h1*h2*h3.
double action(const FieldStrength& f);

// ==== residuals and currents ================================================

/// R_nu = eta^{mu mu} D_mu F_mu_nu (static: d_0 terms zero); zero on shell.
std::array<AlgebraField, 4> eom_residual(const DerivEngine& eng, const GaugeConfig& a,
                                         const FieldStrength& f);

/// J_nu^M = A^{mu N} grad_N F_mu_nu^M - F_mu_nu^N grad_N A^{mu M}; the
/// nonlinear part of the field equations, divergence-free in X.
std::array<AlgebraField, 4> noether_current(const DerivEngine& eng, const GaugeConfig& a,
                                            const FieldStrength& f);

/// D_rho F_mu_nu + D_mu F_nu_rho + D_nu F_rho_mu for the four ordered
/// triples (0,1,2), (0,1,3), (0,2,3), (1,2,3), in that order.
std::array<AlgebraField, 4> bianchi_residual(const DerivEngine& eng, const GaugeConfig& a,
                                             const FieldStrength& f);

// ==== energy-momentum =======================================================

/// Improved (gauge-invariant) tensor, from F alone:
/// theta^mu_nu = inner integral of lambda^2 [1/4 delta^mu_nu F.F - F^{mu rho} F_{nu rho}].
EnergyMomentum energy_momentum_improved(const FieldStrength& f);

/// Canonical tensor: T^mu_nu = -lambda^2 * inner integral of
/// F^{mu rho}.d_nu A_rho - delta^mu_nu * action density. d_0 A comes from
/// a_dot (pass zero fields for static configurations).
EnergyMomentum energy_momentum_canonical(const DerivEngine& eng, const GaugeConfig& a,
                                         const FieldStrength& f,
                                         const std::array<AlgebraField, 4>& a_dot);

/// p_nu = sum over spatial sites of theta^0_nu times h1*h2*h3.
std::array<double, 4> four_momentum(const EnergyMomentum& em);

// ==== group actions on configurations =======================================

/// delta A_mu = d_mu eps + A_mu^N grad_N eps - eps^N grad_N A_mu
/// (d_0 eps = 0: gauge parameters are static here).
std::array<AlgebraField, 4> gauge_vary_gauge(const DerivEngine& eng, const GaugeConfig& a,
                                             const AlgebraField& eps);

/// delta F_mu_nu = F_mu_nu^N grad_N eps - eps^N grad_N F_mu_nu (covariant).
FieldStrength gauge_vary_strength(const DerivEngine& eng, const FieldStrength& f,
                                  const AlgebraField& eps);

/// Inner scale map X -> rho X: l_inner -> rho l_inner, components -> rho *
/// components (see scale_components).
GaugeConfig scale_transform(const GaugeConfig& a, double rho);
FieldStrength scale_transform(const FieldStrength& f, double rho);

}  // namespace isodyn

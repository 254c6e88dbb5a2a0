/// @file algebra.hpp
/// The algebra of divergence-free inner vector fields and its actions:
/// Lie bracket, gauge variation of scalars, finite volume-preserving
/// pullbacks from an exact catalog, and inner scale transformations.

#pragma once

#include <string>
#include <vector>

#include "isodyn/lattice.hpp"

namespace isodyn {

// ==== Lie bracket and infinitesimal actions =================================

/// [e,f]^N = e^M grad_M f^N - f^M grad_M e^N (no projection applied; for
/// divergence-free band-limited inputs the result is divergence-free by the
/// closure identity, which tests assert rather than enforce).
AlgebraField lie_bracket(const DerivEngine& eng, const AlgebraField& e, const AlgebraField& f);

/// delta psi = -e^N grad_N psi
ScalarField gauge_vary_scalar(const DerivEngine& eng, const ScalarField& psi,
                              const AlgebraField& eps);

// ==== exact volume-preserving map catalog ===================================

/// Trigonometric displacement f(y) = coef * {sin|cos}(freq * 2*pi*y / L_X).
struct TrigPoly {
    double coef = 1.0;
    int freq = 1;
    bool is_sin = true;

    double eval(double y, double l_inner) const;
    double deriv(double y, double l_inner) const;   // f'(y)
};

enum class MapKind { identity, shift, shear, rotation };

/// Exact unimodular maps of the inner torus. Every catalog entry has
/// Jacobian determinant identically 1:
///   identity            X' = X
///   shift:c1,...,cD     X' = X + c (rigid translation)
///   shear:a,b:f         X'^a = X^a + f(X^b), other axes fixed (a != b)
///   rot:a,b             quarter turn: X'^a = -X^b, X'^b = X^a
/// Axis labels in the text grammar are 1-based.
struct VolumePreservingMap {
    MapKind kind = MapKind::identity;
    std::vector<double> shift_c;   // shift displacements, size D
    int axis_a = 0, axis_b = 1;    // shear / rotation pair (0-based)
    TrigPoly f;                    // shear displacement profile
};

/// Parse the CLI grammar above ("identity", "shift:0.5,0", "shear:1,2:sin",
/// "shear:1,2:0.3*cos2", "rot:1,2"). Throws std::invalid_argument on
/// malformed text or axes out of range for the spec.
VolumePreservingMap parse_map(const std::string& text, const LatticeSpec& spec);

/// Exact catalog inverse (shift -> -shift, shear -> -f, rot:a,b -> rot:b,a).
VolumePreservingMap inverse_map(const VolumePreservingMap& map);

/// Scalar pullback: psi'(x, X') = psi(x, X), i.e. psi' = psi o map^{-1}.
/// Off-grid displacements use trigonometric interpolation on the periodic
/// inner axes (exact on band-limited fields).
ScalarField pullback_scalar(const DerivEngine& eng, const ScalarField& psi,
                            const VolumePreservingMap& map);

/// Vector pullback: V'^N(x, X') = V^M(x, X) dX'^N/dX^M.
AlgebraField pullback_vector(const DerivEngine& eng, const AlgebraField& v,
                             const VolumePreservingMap& map);

// ==== inner scale transformation ============================================

/// X -> rho X realized on the lattice: l_inner -> rho * l_inner with grid
/// values reinterpreted at the rescaled coordinates, components * rho.
/// Throws std::domain_error for rho <= 0.
AlgebraField scale_components(const AlgebraField& f, double rho);
ScalarField scale_scalar_domain(const ScalarField& f, double rho);  // domain only

}  // namespace isodyn

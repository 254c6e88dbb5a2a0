/// @file lagrangian.cpp
/// Field strength, covariant derivatives, action, residuals, currents, and
/// energy-momentum tensors. See lagrangian.hpp for conventions.

#include "isodyn/lagrangian.hpp"

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace isodyn {

namespace {

constexpr double kEta[4] = {-1.0, 1.0, 1.0, 1.0};
constexpr int kPairMu[6] = {0, 0, 0, 1, 1, 2};
constexpr int kPairNu[6] = {1, 2, 3, 2, 3, 3};

void check_spacetime_index(int mu, const char* where) {
    if (mu < 0 || mu > 3)
        throw std::invalid_argument(std::string(where) + ": spacetime index out of range");
}

// d_mu of a scalar for spatial mu in {1,2,3}
void d_mu_scalar(const DerivEngine& eng, const ScalarField& f, int mu, ScalarField& out) {
    switch (mu) {
        case 1: eng.d_spatial(f, 0, out); break;
        case 2: eng.d_spatial(f, 1, out); break;
        case 3: eng.d3_centered(f, out); break;
        default: throw std::invalid_argument("d_mu_scalar: spatial index must be 1, 2 or 3");
    }
}

AlgebraField d_mu_vector(const DerivEngine& eng, const AlgebraField& v, int mu) {
    AlgebraField out(v.spec);
    for (int m = 0; m < v.dim(); ++m) d_mu_scalar(eng, v[m], mu, out[m]);
    return out;
}

// out += s * a * b, elementwise
void add_scaled_product(double s, const ScalarField& a, const ScalarField& b, ScalarField& out) {
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const std::int64_t n = a.size();
    for (std::int64_t i = 0; i < n; ++i) po[i] += s * pa[i] * pb[i];
}

// out = (x - y) + b, elementwise; orientation-symmetric rounding: swapping
// (x,y) and negating b negates the result bit-exactly.
void combine_strength(const AlgebraField& x, const AlgebraField& y, const AlgebraField& b,
                      AlgebraField& out) {
    for (int m = 0; m < out.dim(); ++m) {
        const double* px = x[m].data();
        const double* py = y[m].data();
        const double* pb = b[m].data();
        double* po = out[m].data();
        const std::int64_t n = out[m].size();
        for (std::int64_t i = 0; i < n; ++i) po[i] = (px[i] - py[i]) + pb[i];
    }
}

// D_mu w with the time slice of w treated as zero (static configurations):
// d_mu w (zero for mu = 0) plus the bracket [A_mu, w].
AlgebraField cov_static(const DerivEngine& eng, const GaugeConfig& a, int mu,
                        const AlgebraField& w) {
    AlgebraField out = (mu == 0) ? AlgebraField(w.spec) : d_mu_vector(eng, w, mu);
    AlgebraField br = lie_bracket(eng, a.a[mu], w);
    axpy(1.0, br, out);
    return out;
}

// non-owning signed reference to a stored pair (nullptr on the diagonal)
struct SignedPair {
    const AlgebraField* field = nullptr;
    double sign = 0.0;
};

SignedPair pair_view(const FieldStrength& f, int mu, int nu) {
    if (mu == nu) return {};
    if (mu < nu) return {&f.f[std::size_t(FieldStrength::pair_index(mu, nu))], 1.0};
    return {&f.f[std::size_t(FieldStrength::pair_index(nu, mu))], -1.0};
}

FieldStrength field_strength_impl(const DerivEngine& eng, const GaugeConfig& a,
                                  const std::array<AlgebraField, 4>* a_dot) {
    a.spec.validate();
    FieldStrength out(a.spec);
    for (int p = 0; p < 6; ++p) {
        const int mu = kPairMu[p];
        const int nu = kPairNu[p];
        AlgebraField dmu_anu = (mu == 0)
            ? (a_dot ? (*a_dot)[std::size_t(nu)] : AlgebraField(a.spec))
            : d_mu_vector(eng, a.a[std::size_t(nu)], mu);
        AlgebraField dnu_amu = d_mu_vector(eng, a.a[std::size_t(mu)], nu);  // nu >= 1 always
        AlgebraField br = lie_bracket(eng, a.a[std::size_t(mu)], a.a[std::size_t(nu)]);
        combine_strength(dmu_anu, dnu_amu, br, out.f[std::size_t(p)]);
    }
    return out;
}

}  // namespace

// ==== FieldStrength access ==================================================

int FieldStrength::pair_index(int mu, int nu) {
    check_spacetime_index(mu, "pair_index");
    check_spacetime_index(nu, "pair_index");
    if (mu >= nu) throw std::invalid_argument("pair_index: requires mu < nu");
    static constexpr int table[4][4] = {
        {-1, 0, 1, 2}, {-1, -1, 3, 4}, {-1, -1, -1, 5}, {-1, -1, -1, -1}};
    return table[mu][nu];
}

AlgebraField FieldStrength::component(int mu, int nu) const {
    check_spacetime_index(mu, "component");
    check_spacetime_index(nu, "component");
    if (mu == nu) return AlgebraField(spec);
    if (mu < nu) return f[std::size_t(pair_index(mu, nu))];
    AlgebraField out = f[std::size_t(pair_index(nu, mu))];
    scale(out, -1.0);
    return out;
}

// ==== field strength and covariant derivatives ==============================

FieldStrength field_strength(const DerivEngine& eng, const GaugeConfig& a) {
    return field_strength_impl(eng, a, nullptr);
}

FieldStrength field_strength(const DerivEngine& eng, const GaugeConfig& a,
                             const std::array<AlgebraField, 4>& a_dot) {
    return field_strength_impl(eng, a, &a_dot);
}

ScalarField covariant_derivative_scalar(const DerivEngine& eng, const ScalarField& psi,
                                        const GaugeConfig& a, int mu) {
    check_spacetime_index(mu, "covariant_derivative_scalar");
    if (mu == 0)
        throw std::invalid_argument(
            "covariant_derivative_scalar: mu = 0 requires the caller-supplied time "
            "derivative overload");
    ScalarField out(psi.spec);
    d_mu_scalar(eng, psi, mu, out);
    ScalarField dpsi(psi.spec);
    for (int n = 0; n < a.spec.d_inner; ++n) {
        eng.d_inner(psi, n, dpsi);
        pointwise_mul_add(a.a[std::size_t(mu)][n], dpsi, out);
    }
    return out;
}

ScalarField covariant_derivative_scalar(const DerivEngine& eng, const ScalarField& psi,
                                        const ScalarField& psi_dot, const GaugeConfig& a) {
    ScalarField out = psi_dot;
    ScalarField dpsi(psi.spec);
    for (int n = 0; n < a.spec.d_inner; ++n) {
        eng.d_inner(psi, n, dpsi);
        pointwise_mul_add(a.a[0][n], dpsi, out);
    }
    return out;
}

AlgebraField covariant_derivative_vector(const DerivEngine& eng, const AlgebraField& v,
                                         const GaugeConfig& a, int mu) {
    check_spacetime_index(mu, "covariant_derivative_vector");
    if (mu == 0)
        throw std::invalid_argument(
            "covariant_derivative_vector: mu = 0 requires the caller-supplied time "
            "derivative overload");
    return cov_static(eng, a, mu, v);
}

AlgebraField covariant_derivative_vector(const DerivEngine& eng, const AlgebraField& v,
                                         const AlgebraField& v_dot, const GaugeConfig& a) {
    AlgebraField out = v_dot;
    AlgebraField br = lie_bracket(eng, a.a[0], v);
    axpy(1.0, br, out);
    return out;
}

// ==== action ================================================================

std::vector<double> action_density(const FieldStrength& f) {
    ScalarField acc(f.spec);
    for (int p = 0; p < 6; ++p) {
        // both index orders of the pair, raised with eta
        const double w = 2.0 * kEta[kPairMu[p]] * kEta[kPairNu[p]];
        for (int m = 0; m < f.spec.d_inner; ++m)
            add_scaled_product(w, f.f[std::size_t(p)][m], f.f[std::size_t(p)][m], acc);
    }
    scale(acc, -0.25 * f.spec.lambda * f.spec.lambda);
    return inner_integral(acc);
}

double action(const FieldStrength& f) {
    std::vector<double> dens = action_density(f);
    const double vol = f.spec.h1() * f.spec.h2() * f.spec.h3();
    return vol * pairwise_sum(dens.data(), std::int64_t(dens.size()));
}

// ==== residuals and currents ================================================

std::array<AlgebraField, 4> eom_residual(const DerivEngine& eng, const GaugeConfig& a,
                                         const FieldStrength& f) {
    std::array<AlgebraField, 4> out{AlgebraField(a.spec), AlgebraField(a.spec),
                                    AlgebraField(a.spec), AlgebraField(a.spec)};
    for (int nu = 0; nu < 4; ++nu) {
        for (int mu = 0; mu < 4; ++mu) {
            if (mu == nu) continue;
            AlgebraField fmn = f.component(mu, nu);
            AlgebraField dmu = cov_static(eng, a, mu, fmn);
            axpy(kEta[mu], dmu, out[std::size_t(nu)]);
        }
    }
    return out;
}

std::array<AlgebraField, 4> noether_current(const DerivEngine& eng, const GaugeConfig& a,
                                            const FieldStrength& f) {
    std::array<AlgebraField, 4> out{AlgebraField(a.spec), AlgebraField(a.spec),
                                    AlgebraField(a.spec), AlgebraField(a.spec)};
    for (int nu = 0; nu < 4; ++nu) {
        for (int mu = 0; mu < 4; ++mu) {
            if (mu == nu) continue;
            AlgebraField fmn = f.component(mu, nu);
            AlgebraField br = lie_bracket(eng, a.a[std::size_t(mu)], fmn);
            axpy(kEta[mu], br, out[std::size_t(nu)]);
        }
    }
    return out;
}

std::array<AlgebraField, 4> bianchi_residual(const DerivEngine& eng, const GaugeConfig& a,
                                             const FieldStrength& f) {
    static constexpr int kTriples[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
    std::array<AlgebraField, 4> out{AlgebraField(a.spec), AlgebraField(a.spec),
                                    AlgebraField(a.spec), AlgebraField(a.spec)};
    for (int t = 0; t < 4; ++t) {
        const int r = kTriples[t][0], mu = kTriples[t][1], nu = kTriples[t][2];
        const int cyc[3][3] = {{r, mu, nu}, {mu, nu, r}, {nu, r, mu}};
        for (const auto& c : cyc) {
            AlgebraField fc = f.component(c[1], c[2]);
            AlgebraField dc = cov_static(eng, a, c[0], fc);
            axpy(1.0, dc, out[std::size_t(t)]);
        }
    }
    return out;
}

// ==== energy-momentum =======================================================

namespace {

// F_mu_nu F^mu_nu summed over both index orders, per lattice point
ScalarField strength_square(const FieldStrength& f) {
    ScalarField ff(f.spec);
    for (int p = 0; p < 6; ++p) {
        const double w = 2.0 * kEta[kPairMu[p]] * kEta[kPairNu[p]];
        for (int m = 0; m < f.spec.d_inner; ++m)
            add_scaled_product(w, f.f[std::size_t(p)][m], f.f[std::size_t(p)][m], ff);
    }
    return ff;
}

}  // namespace

EnergyMomentum energy_momentum_improved(const FieldStrength& f) {
    EnergyMomentum em;
    em.spec = f.spec;
    em.variant = EnergyMomentum::Variant::improved;
    const double lam2 = f.spec.lambda * f.spec.lambda;
    ScalarField ff = strength_square(f);
    ScalarField acc(f.spec);
    for (int mu = 0; mu < 4; ++mu) {
        for (int nu = 0; nu < 4; ++nu) {
            std::fill(acc.v.begin(), acc.v.end(), 0.0);
            for (int rho = 0; rho < 4; ++rho) {
                SignedPair va = pair_view(f, mu, rho);
                SignedPair vb = pair_view(f, nu, rho);
                if (!va.field || !vb.field) continue;
                const double s = -kEta[mu] * kEta[rho] * va.sign * vb.sign;
                for (int m = 0; m < f.spec.d_inner; ++m)
                    add_scaled_product(s, (*va.field)[m], (*vb.field)[m], acc);
            }
            if (mu == nu) axpy(0.25, ff, acc);
            std::vector<double> col = inner_integral(acc);
            for (double& c : col) c *= lam2;
            em.theta[std::size_t(mu * 4 + nu)] = std::move(col);
        }
    }
    return em;
}

EnergyMomentum energy_momentum_canonical(const DerivEngine& eng, const GaugeConfig& a,
                                         const FieldStrength& f,
                                         const std::array<AlgebraField, 4>& a_dot) {
    EnergyMomentum em;
    em.spec = f.spec;
    em.variant = EnergyMomentum::Variant::canonical;
    const double lam2 = f.spec.lambda * f.spec.lambda;
    std::vector<double> dens = action_density(f);
    ScalarField acc(f.spec);
    for (int nu = 0; nu < 4; ++nu) {
        std::array<AlgebraField, 4> da;
        for (int rho = 0; rho < 4; ++rho)
            da[std::size_t(rho)] = (nu == 0) ? a_dot[std::size_t(rho)]
                                             : d_mu_vector(eng, a.a[std::size_t(rho)], nu);
        for (int mu = 0; mu < 4; ++mu) {
            std::fill(acc.v.begin(), acc.v.end(), 0.0);
            for (int rho = 0; rho < 4; ++rho) {
                SignedPair vf = pair_view(f, mu, rho);
                if (!vf.field) continue;
                const double s = kEta[mu] * kEta[rho] * vf.sign;
                for (int m = 0; m < f.spec.d_inner; ++m)
                    add_scaled_product(s, (*vf.field)[m], da[std::size_t(rho)][m], acc);
            }
            std::vector<double> col = inner_integral(acc);
            for (double& c : col) c *= -lam2;
            if (mu == nu)
                for (std::size_t i = 0; i < col.size(); ++i) col[i] -= dens[i];
            em.theta[std::size_t(mu * 4 + nu)] = std::move(col);
        }
    }
    return em;
}

std::array<double, 4> four_momentum(const EnergyMomentum& em) {
    const double vol = em.spec.h1() * em.spec.h2() * em.spec.h3();
    std::array<double, 4> p{};
    for (int nu = 0; nu < 4; ++nu) {
        const std::vector<double>& col = em.theta[std::size_t(nu)];  // theta[0*4 + nu]
        p[std::size_t(nu)] = vol * pairwise_sum(col.data(), std::int64_t(col.size()));
    }
    return p;
}

// ==== group actions on configurations =======================================

std::array<AlgebraField, 4> gauge_vary_gauge(const DerivEngine& eng, const GaugeConfig& a,
                                             const AlgebraField& eps) {
    std::array<AlgebraField, 4> out{AlgebraField(a.spec), AlgebraField(a.spec),
                                    AlgebraField(a.spec), AlgebraField(a.spec)};
    for (int mu = 0; mu < 4; ++mu) {
        if (mu > 0) out[std::size_t(mu)] = d_mu_vector(eng, eps, mu);
        AlgebraField br = lie_bracket(eng, a.a[std::size_t(mu)], eps);
        axpy(1.0, br, out[std::size_t(mu)]);
    }
    return out;
}

FieldStrength gauge_vary_strength(const DerivEngine& eng, const FieldStrength& f,
                                  const AlgebraField& eps) {
    FieldStrength out(f.spec);
    for (int p = 0; p < 6; ++p)
        out.f[std::size_t(p)] = lie_bracket(eng, f.f[std::size_t(p)], eps);
    return out;
}

GaugeConfig scale_transform(const GaugeConfig& a, double rho) {
    GaugeConfig out;
    out.spec = a.spec;
    out.spec.l_inner *= rho;
    for (int mu = 0; mu < 4; ++mu)
        out.a[std::size_t(mu)] = scale_components(a.a[std::size_t(mu)], rho);
    return out;
}

FieldStrength scale_transform(const FieldStrength& f, double rho) {
    FieldStrength out;
    out.spec = f.spec;
    out.spec.l_inner *= rho;
    for (int p = 0; p < 6; ++p)
        out.f[std::size_t(p)] = scale_components(f.f[std::size_t(p)], rho);
    return out;
}

}  // namespace isodyn

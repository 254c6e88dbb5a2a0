/// @file algebra.cpp
/// Lie bracket, gauge variations, exact pullback catalog, scale maps.

#include "isodyn/algebra.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace isodyn {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

void require_same_spec(const LatticeSpec& a, const LatticeSpec& b, const char* what) {
    if (!(a == b)) throw std::invalid_argument(std::string(what) + ": lattice specs differ");
}

}  // namespace

// ==== bracket and scalar variation ==========================================

AlgebraField lie_bracket(const DerivEngine& eng, const AlgebraField& e, const AlgebraField& f) {
    require_same_spec(e.spec, f.spec, "lie_bracket");
    require_same_spec(e.spec, eng.spec, "lie_bracket");
    int dd = eng.spec.d_inner;
    AlgebraField out(eng.spec);
    ScalarField df(eng.spec), de(eng.spec);
    for (int n = 0; n < dd; ++n) {
        double* ov = out[n].data();
        for (int m = 0; m < dd; ++m) {
            eng.d_inner(f[n], m, df);
            eng.d_inner(e[n], m, de);
            const double* ev = e[m].data();
            const double* fv = f[m].data();
            const double* dfv = df.data();
            const double* dev = de.data();
            // accumulate the two transport terms as a per-site difference so
            // swapping (e,f) negates every partial sum bit-exactly
            parallel_for(out[n].size(), [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t i = lo; i < hi; ++i) {
                    double u = ev[i] * dfv[i];
                    double v = fv[i] * dev[i];
                    ov[i] += u - v;
                }
            });
        }
    }
    return out;
}

ScalarField gauge_vary_scalar(const DerivEngine& eng, const ScalarField& psi,
                              const AlgebraField& eps) {
    require_same_spec(psi.spec, eps.spec, "gauge_vary_scalar");
    ScalarField out(eng.spec), d(eng.spec);
    for (int m = 0; m < eng.spec.d_inner; ++m) {
        eng.d_inner(psi, m, d);
        scale(d, -1.0);
        pointwise_mul_add(eps[m], d, out);
    }
    return out;
}

// ==== trig displacement =====================================================

double TrigPoly::eval(double y, double l_inner) const {
    double ang = freq * 2.0 * kPi * y / l_inner;
    return coef * (is_sin ? std::sin(ang) : std::cos(ang));
}

double TrigPoly::deriv(double y, double l_inner) const {
    double w = freq * 2.0 * kPi / l_inner;
    double ang = w * y;
    return coef * w * (is_sin ? std::cos(ang) : -std::sin(ang));
}

// ==== catalog parsing =======================================================

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) { out.push_back(cur); cur.clear(); }
        else cur += c;
    }
    out.push_back(cur);
    return out;
}

double parse_real(const std::string& s, const char* what) {
    std::size_t pos = 0;
    double v = 0.0;
    try { v = std::stod(s, &pos); } catch (...) { pos = 0; }
    if (pos != s.size() || s.empty())
        throw std::invalid_argument(std::string(what) + ": bad number '" + s + "'");
    return v;
}

int parse_axis(const std::string& s, int d_inner, const char* what) {
    std::size_t pos = 0;
    int v = 0;
    try { v = std::stoi(s, &pos); } catch (...) { pos = 0; }
    if (pos != s.size() || s.empty() || v < 1 || v > d_inner)
        throw std::invalid_argument(std::string(what) + ": axis '" + s +
                                    "' out of range 1.." + std::to_string(d_inner));
    return v - 1;
}

TrigPoly parse_trig(const std::string& text) {
    TrigPoly f;
    std::string name = text;
    auto star = text.find('*');
    if (star != std::string::npos) {
        f.coef = parse_real(text.substr(0, star), "map displacement");
        name = text.substr(star + 1);
    }
    if (name == "sin") { f.is_sin = true; f.freq = 1; }
    else if (name == "cos") { f.is_sin = false; f.freq = 1; }
    else if (name == "sin2") { f.is_sin = true; f.freq = 2; }
    else if (name == "cos2") { f.is_sin = false; f.freq = 2; }
    else throw std::invalid_argument("map displacement: unknown profile '" + name +
                                     "' (want sin, cos, sin2 or cos2)");
    return f;
}

}  // namespace

VolumePreservingMap parse_map(const std::string& text, const LatticeSpec& spec) {
    VolumePreservingMap m;
    auto parts = split(text, ':');
    const std::string& head = parts[0];
    if (head == "identity") {
        if (parts.size() != 1) throw std::invalid_argument("map 'identity' takes no parameters");
        m.kind = MapKind::identity;
        return m;
    }
    if (head == "shift") {
        if (parts.size() != 2) throw std::invalid_argument("map 'shift' wants shift:c1,...,cD");
        m.kind = MapKind::shift;
        auto cs = split(parts[1], ',');
        if (int(cs.size()) != spec.d_inner)
            throw std::invalid_argument("map 'shift' wants exactly " +
                                        std::to_string(spec.d_inner) + " displacements");
        for (const auto& c : cs) m.shift_c.push_back(parse_real(c, "map 'shift'"));
        return m;
    }
    if (head == "shear") {
        if (parts.size() != 3) throw std::invalid_argument("map 'shear' wants shear:a,b:profile");
        auto axes = split(parts[1], ',');
        if (axes.size() != 2) throw std::invalid_argument("map 'shear' wants two axes");
        m.kind = MapKind::shear;
        m.axis_a = parse_axis(axes[0], spec.d_inner, "map 'shear'");
        m.axis_b = parse_axis(axes[1], spec.d_inner, "map 'shear'");
        if (m.axis_a == m.axis_b) throw std::invalid_argument("map 'shear' axes must differ");
        m.f = parse_trig(parts[2]);
        return m;
    }
    if (head == "rot") {
        if (parts.size() != 2) throw std::invalid_argument("map 'rot' wants rot:a,b");
        auto axes = split(parts[1], ',');
        if (axes.size() != 2) throw std::invalid_argument("map 'rot' wants two axes");
        m.kind = MapKind::rotation;
        m.axis_a = parse_axis(axes[0], spec.d_inner, "map 'rot'");
        m.axis_b = parse_axis(axes[1], spec.d_inner, "map 'rot'");
        if (m.axis_a == m.axis_b) throw std::invalid_argument("map 'rot' axes must differ");
        return m;
    }
    throw std::invalid_argument("unsupported map '" + head +
                                "' (catalog: identity, shift, shear, rot)");
}

VolumePreservingMap inverse_map(const VolumePreservingMap& map) {
    VolumePreservingMap inv = map;
    switch (map.kind) {
        case MapKind::identity: break;
        case MapKind::shift:
            for (auto& c : inv.shift_c) c = -c;
            break;
        case MapKind::shear:
            inv.f.coef = -inv.f.coef;
            break;
        case MapKind::rotation:
            std::swap(inv.axis_a, inv.axis_b);
            break;
    }
    return inv;
}

// ==== pullback implementation ===============================================

namespace {

/// K x K trigonometric-interpolation matrix for psi'(x_j) = psi(x_j - c):
/// real part of the inverse-DFT o phase o DFT composition; exact on modes
/// below Nyquist, cosine-consistent at Nyquist.
std::vector<double> shift_matrix(int k, double l, double c) {
    std::vector<double> s(std::size_t(k) * k, 0.0);
    for (int j = 0; j < k; ++j)
        for (int jp = 0; jp < k; ++jp) {
            double acc = 0.0;
            for (int m = 0; m < k; ++m) {
                int mm = (2 * m < k) ? m : m - k;
                double km = 2.0 * kPi * mm / l;
                double ang = 2.0 * kPi * double(mm) * (j - jp) / k - km * c;
                acc += std::cos(ang);
            }
            s[std::size_t(j) * k + jp] = acc / k;
        }
    return s;
}

bool near_integer(double x, double tol, std::int64_t& out) {
    double r = std::round(x);
    if (std::abs(x - r) <= tol) { out = std::int64_t(r); return true; }
    return false;
}

/// cyclic integer shift along inner axis: out(..., m, ...) = in(..., m - cells, ...)
void roll_inner(const ScalarField& f, int axis, std::int64_t cells, ScalarField& out) {
    const LatticeSpec& s = f.spec;
    int k = s.k_inner;
    std::int64_t kp = s.inner_points();
    std::int64_t l_sp = 1;
    for (int i = 0; i < axis; ++i) l_sp *= k;
    std::int64_t r_sp = kp / (l_sp * k);
    std::int64_t sh = ((cells % k) + k) % k;
    parallel_for(s.sites(), [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t site = b; site < e; ++site) {
            const double* fb = f.data() + site * kp;
            double* ob = out.data() + site * kp;
            for (std::int64_t l = 0; l < l_sp; ++l)
                for (int m = 0; m < k; ++m) {
                    std::int64_t src = (m - sh + k) % k;
                    const double* fr = fb + (l * k + src) * r_sp;
                    double* orow = ob + (l * k + m) * r_sp;
                    for (std::int64_t q = 0; q < r_sp; ++q) orow[q] = fr[q];
                }
        }
    });
}

/// out(..., m_a, ..., m_b, ...) = sum_c S[m_b](m_a, c) in(..., c, ..., m_b, ...)
/// with one K x K matrix per X^b grid value (the shear kernel).
void apply_sheared_matrices(const ScalarField& f, int axis_a, int axis_b,
                            const std::vector<double>& smats, ScalarField& out) {
    const LatticeSpec& s = f.spec;
    int k = s.k_inner;
    std::int64_t kp = s.inner_points();
    std::int64_t l_sp = 1;
    for (int i = 0; i < axis_a; ++i) l_sp *= k;
    std::int64_t r_sp = kp / (l_sp * k);
    // decode the X^b index from the spectator indices around axis_a
    std::int64_t lb_div = 1, rb_div = 1;
    if (axis_b < axis_a) {
        for (int i = axis_b + 1; i < axis_a; ++i) lb_div *= k;
    } else {
        for (int i = axis_b + 1; i < s.d_inner; ++i) rb_div *= k;
    }
    parallel_for(s.sites(), [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t site = b; site < e; ++site) {
            const double* fb = f.data() + site * kp;
            double* ob = out.data() + site * kp;
            for (std::int64_t l = 0; l < l_sp; ++l)
                for (std::int64_t r = 0; r < r_sp; ++r) {
                    std::int64_t mb = (axis_b < axis_a) ? (l / lb_div) % k : (r / rb_div) % k;
                    const double* sm = smats.data() + mb * k * k;
                    for (int a = 0; a < k; ++a) {
                        double acc = 0.0;
                        const double* srow = sm + std::int64_t(a) * k;
                        for (int c = 0; c < k; ++c)
                            acc += srow[c] * fb[(l * k + c) * r_sp + r];
                        ob[(l * k + a) * r_sp + r] = acc;
                    }
                }
        }
    });
}

/// scalar pullback under the quarter turn rot:a,b — source multi-index has
/// m_a_src = m_b and m_b_src = (K - m_a) mod K (the inverse rotation)
void rotate_scalar(const ScalarField& f, int axis_a, int axis_b, ScalarField& out) {
    const LatticeSpec& s = f.spec;
    int k = s.k_inner;
    std::int64_t kp = s.inner_points();
    int dd = s.d_inner;
    std::vector<std::int64_t> stride(std::size_t(dd), 1);
    for (int i = dd - 2; i >= 0; --i) stride[std::size_t(i)] = stride[std::size_t(i + 1)] * k;
    parallel_for(s.sites(), [&](std::int64_t b, std::int64_t e) {
        std::vector<int> idx(std::size_t(dd), 0);
        for (std::int64_t site = b; site < e; ++site) {
            const double* fb = f.data() + site * kp;
            double* ob = out.data() + site * kp;
            for (std::int64_t q = 0; q < kp; ++q) {
                std::int64_t rem = q;
                for (int m = dd - 1; m >= 0; --m) { idx[std::size_t(m)] = int(rem % k); rem /= k; }
                int ya = idx[std::size_t(axis_a)], yb = idx[std::size_t(axis_b)];
                std::int64_t src = q;
                src += (std::int64_t(yb) - ya) * stride[std::size_t(axis_a)];
                src += (std::int64_t((k - ya) % k) - yb) * stride[std::size_t(axis_b)];
                ob[q] = fb[src];
            }
        }
    });
}

ScalarField pullback_scalar_impl(const DerivEngine& eng, const ScalarField& psi,
                                 const VolumePreservingMap& map) {
    const LatticeSpec& s = eng.spec;
    int k = s.k_inner;
    double dx = s.dx_inner();
    switch (map.kind) {
        case MapKind::identity:
            return psi;
        case MapKind::shift: {
            ScalarField cur = psi, nxt(s);
            for (int ax = 0; ax < s.d_inner; ++ax) {
                double c = map.shift_c[std::size_t(ax)];
                if (c == 0.0) continue;
                std::int64_t cells = 0;
                if (near_integer(c / dx, 1e-12, cells)) {
                    roll_inner(cur, ax, cells, nxt);
                } else {
                    auto sm = shift_matrix(k, s.l_inner, c);
                    eng.apply_inner(cur, ax, sm.data(), nxt);
                }
                std::swap(cur, nxt);
            }
            return cur;
        }
        case MapKind::shear: {
            // per-X^b-slice shift along axis_a by f(X^b)
            std::vector<double> smats(std::size_t(k) * k * k);
            for (int mb = 0; mb < k; ++mb) {
                double c = map.f.eval(mb * dx, s.l_inner);
                auto sm = shift_matrix(k, s.l_inner, c);
                std::copy(sm.begin(), sm.end(), smats.begin() + std::int64_t(mb) * k * k);
            }
            ScalarField out(s);
            apply_sheared_matrices(psi, map.axis_a, map.axis_b, smats, out);
            return out;
        }
        case MapKind::rotation: {
            ScalarField out(s);
            rotate_scalar(psi, map.axis_a, map.axis_b, out);
            return out;
        }
    }
    throw std::logic_error("pullback: unreachable");
}

}  // namespace

ScalarField pullback_scalar(const DerivEngine& eng, const ScalarField& psi,
                            const VolumePreservingMap& map) {
    require_same_spec(psi.spec, eng.spec, "pullback_scalar");
    return pullback_scalar_impl(eng, psi, map);
}

AlgebraField pullback_vector(const DerivEngine& eng, const AlgebraField& v,
                             const VolumePreservingMap& map) {
    require_same_spec(v.spec, eng.spec, "pullback_vector");
    const LatticeSpec& s = eng.spec;
    AlgebraField out(s);
    switch (map.kind) {
        case MapKind::identity:
            return v;
        case MapKind::shift:
            for (int m = 0; m < s.d_inner; ++m)
                out[m] = pullback_scalar_impl(eng, v[m], map);
            return out;
        case MapKind::shear: {
            // dX'^a/dX^a = 1, dX'^a/dX^b = f'(X^b), identity elsewhere:
            // V'^a(Y) = V^a(X) + f'(Y^b) V^b(X), other components carried over
            for (int m = 0; m < s.d_inner; ++m)
                out[m] = pullback_scalar_impl(eng, v[m], map);
            ScalarField fprime(s);
            std::int64_t kp = s.inner_points();
            int k = s.k_inner;
            std::int64_t bstride = 1;
            for (int i = map.axis_b + 1; i < s.d_inner; ++i) bstride *= k;
            double dx = s.dx_inner();
            std::vector<double> fp(static_cast<std::size_t>(k), 0.0);
            for (int mb = 0; mb < k; ++mb) fp[std::size_t(mb)] = map.f.deriv(mb * dx, s.l_inner);
            parallel_for(s.sites(), [&](std::int64_t b, std::int64_t e) {
                for (std::int64_t site = b; site < e; ++site) {
                    double* fv = fprime.data() + site * kp;
                    for (std::int64_t q = 0; q < kp; ++q)
                        fv[q] = fp[std::size_t((q / bstride) % k)];
                }
            });
            pointwise_mul_add(fprime, out[map.axis_b], out[map.axis_a]);
            return out;
        }
        case MapKind::rotation: {
            // component rotation: V'^a = -V^b o inv, V'^b = V^a o inv
            for (int m = 0; m < s.d_inner; ++m) {
                if (m == map.axis_a || m == map.axis_b) continue;
                out[m] = pullback_scalar_impl(eng, v[m], map);
            }
            out[map.axis_a] = pullback_scalar_impl(eng, v[map.axis_b], map);
            scale(out[map.axis_a], -1.0);
            out[map.axis_b] = pullback_scalar_impl(eng, v[map.axis_a], map);
            return out;
        }
    }
    throw std::logic_error("pullback: unreachable");
}

// ==== scale transformation ==================================================

AlgebraField scale_components(const AlgebraField& f, double rho) {
    if (!(rho > 0.0)) throw std::domain_error("scale transform: rho must be positive");
    AlgebraField out = f;
    LatticeSpec ns = f.spec;
    ns.l_inner *= rho;
    out.spec = ns;
    for (int m = 0; m < f.dim(); ++m) {
        out[m].spec = ns;
        scale(out[m], rho);
    }
    return out;
}

ScalarField scale_scalar_domain(const ScalarField& f, double rho) {
    if (!(rho > 0.0)) throw std::domain_error("scale transform: rho must be positive");
    ScalarField out = f;
    out.spec.l_inner *= rho;
    return out;
}

}  // namespace isodyn

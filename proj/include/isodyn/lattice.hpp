/// @file lattice.hpp
/// Grid geometry, field storage, derivative engines, inner-space measure,
/// and the divergence-free projection that keeps fields in the gauge algebra.
///
/// Layout: a ScalarField stores row-major values over
///   (x1, x2, x3, X^1, ..., X^D), last axis contiguous.
/// Axes x1, x2 and all inner axes are periodic (spectral derivatives, exact
/// for band-limited data); axis x3 carries homogeneous Dirichlet walls at
/// x3 = 0 and x3 = l3 (fields vanish there) with second-order finite
/// differences, so the nonlocal potential solve is well posed.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace isodyn {

// ==== grid specification ====================================================

struct LatticeSpec {
    int n1 = 16, n2 = 16, n3 = 17;          // spatial grid counts
    double l1 = 6.283185307179586476925287;  // spatial extents
    double l2 = 6.283185307179586476925287;
    double l3 = 6.283185307179586476925287;
    int d_inner = 2;                         // inner dimension D >= 1
    int k_inner = 16;                        // grid count per inner axis
    double l_inner = 6.283185307179586476925287;  // inner torus circumference
    double lambda = 1.0;                     // cutoff, units 1/[X]
    double dt = 1e-3;                        // time step

    double h1() const { return l1 / n1; }
    double h2() const { return l2 / n2; }
    double h3() const { return l3 / (n3 - 1); }   // nodes include both walls
    double dx_inner() const { return l_inner / k_inner; }
    std::int64_t sites() const { return std::int64_t(n1) * n2 * n3; }
    std::int64_t inner_points() const;            // k_inner^d_inner
    std::int64_t scalar_size() const { return sites() * inner_points(); }
    // cell measure for spatial x inner sums (h1 h2 h3 dX^D)
    double cell_weight() const;
    // lambda^d_inner (inner measure normalization)
    double lambda_pow_d() const;

    bool operator==(const LatticeSpec&) const = default;
    // throws std::invalid_argument on violated invariants
    void validate() const;
};

// ==== fields ================================================================

struct ScalarField {
    LatticeSpec spec;
    std::vector<double> v;   // size spec.scalar_size()

    ScalarField() = default;
    explicit ScalarField(const LatticeSpec& s) : spec(s), v(s.scalar_size(), 0.0) {}

    double* data() { return v.data(); }
    const double* data() const { return v.data(); }
    std::int64_t size() const { return std::int64_t(v.size()); }
};

/// One ScalarField per inner index M (components of a vector field on the
/// inner torus). Divergence-free components are required for gauge-algebra
/// membership; use divfree_project to enforce.
struct AlgebraField {
    LatticeSpec spec;
    std::vector<ScalarField> comp;   // size spec.d_inner

    AlgebraField() = default;
    explicit AlgebraField(const LatticeSpec& s) : spec(s), comp(s.d_inner, ScalarField(s)) {}

    ScalarField& operator[](int m) { return comp[std::size_t(m)]; }
    const ScalarField& operator[](int m) const { return comp[std::size_t(m)]; }
    int dim() const { return int(comp.size()); }
};

// ==== deterministic reductions and arithmetic ==============================

/// Pairwise sum with a fixed recursion structure: run-to-run and
/// thread-count-independent.
double pairwise_sum(const double* a, std::int64_t n);

double dot(const ScalarField& a, const ScalarField& b);      // plain sum a.v
double dot(const AlgebraField& a, const AlgebraField& b);
double l2_norm(const ScalarField& a);
double l2_norm(const AlgebraField& a);

// in-place axpy-style helpers (y += s*x etc.)
void axpy(double s, const ScalarField& x, ScalarField& y);
void axpy(double s, const AlgebraField& x, AlgebraField& y);
void scale(ScalarField& x, double s);
void scale(AlgebraField& x, double s);

/// <a,b> with the full measure: cell_weight * lambda^D * sum(a*b).
double inner_product(const ScalarField& a, const ScalarField& b);
double inner_product(const AlgebraField& a, const AlgebraField& b);

// pointwise products (shapes must match)
void pointwise_mul(const ScalarField& a, const ScalarField& b, ScalarField& out);
void pointwise_mul_add(const ScalarField& a, const ScalarField& b, ScalarField& out);

// ==== worker parallelism ====================================================

/// Number of worker threads: ISODYN_THREADS if set (clamped to [1,64]),
/// else min(4, hardware). Results never depend on the value: parallel loops
/// write disjoint ranges and reductions are single-threaded pairwise sums.
int worker_threads();

/// Run fn(begin, end) over [0,n) split across worker threads.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

// ==== derivative engine =====================================================

/// Precomputed dense derivative matrices and stencil metadata for one
/// LatticeSpec. Spectral first derivatives are exact on band-limited data
/// (Nyquist mode zeroed for odd symmetry); x3 uses centered/staggered
/// second-order differences with Dirichlet walls.
struct DerivEngine {
    LatticeSpec spec;

    explicit DerivEngine(const LatticeSpec& s);

    // --- periodic spectral derivatives ---
    /// d/dx^i for i in {0,1} (axes x1, x2)
    void d_spatial(const ScalarField& f, int axis, ScalarField& out) const;
    /// d/dX^m along inner axis m in [0, D)
    void d_inner(const ScalarField& f, int axis, ScalarField& out) const;
    /// apply an arbitrary real K x K matrix ([out][in] row-major) along one
    /// inner axis (the primitive behind d_inner; also used by pullbacks)
    void apply_inner(const ScalarField& f, int axis, const double* m, ScalarField& out) const;
    /// conservative inner transport accumulated into out:
    /// out^M += s * sum_N d/dX^N (u^M v^N). Keeping the derivative outside
    /// the product (rather than expanding by the product rule) makes the
    /// summation-by-parts identity behind energy conservation hold exactly
    /// on the grid, aliasing included. Fused in-cache path for D = 2, K = 16.
    void inner_div_product(const AlgebraField& u, const AlgebraField& v,
                           double s, AlgebraField& out) const;

    // --- x3 finite differences (nodes j = 0..n3-1; walls structural zeros) ---
    /// centered first derivative on nodes; wall planes set to zero
    void d3_centered(const ScalarField& f, ScalarField& out) const;
    /// staggered forward difference: node field -> n3-1 cell planes
    /// (out laid out like a field with n3-1 planes; helper buffer type below)
    void d3_cell(const ScalarField& f, std::vector<double>& cells) const;
    /// 3-point Dirichlet Laplacian on nodes; wall planes zero
    void lap3(const ScalarField& f, ScalarField& out) const;
    /// solve lap3(u) = rhs per x3 column (Thomas algorithm), walls zero
    void solve_lap3(const ScalarField& rhs, ScalarField& out) const;
    /// node[j] = (cells[j-1] + cells[j]) / 2 with one-sided halves at the
    /// walls; preserves column sums exactly (sum over nodes == sum over cells)
    void cells_to_nodes_halfsum(const std::vector<double>& cells, ScalarField& out) const;

    // --- transverse projection (per inner Fourier mode) ---
    /// Projects each inner Fourier mode P != 0 with delta^M_N - P^M P_N/|P|^2;
    /// the P = 0 mode passes through. Exact, idempotent, self-adjoint.
    void divfree_project(AlgebraField& f) const;

    // number of x3 cell planes and the cell-array size for d3_cell buffers
    std::int64_t cell_array_size() const;

    // dense K x K real matrices, row-major: spectral derivative and the
    // DFT (cos/sin) blocks used by the projector
    std::vector<double> dmat_inner;   // K x K
    std::vector<double> dmat_inner_t; // K x K transpose (contiguous-axis form)
    std::vector<double> dmat_x1;      // n1 x n1
    std::vector<double> dmat_x2;      // n2 x n2
    std::vector<double> dft_cos, dft_sin;     // K x K forward DFT blocks
    std::vector<double> idft_cos, idft_sin;   // K x K inverse DFT blocks
    std::vector<double> kvec_inner;   // K wavenumbers (Nyquist zeroed)

    // projector mode tables over the flattened inner multi-index (kp entries):
    // the negated-mode permutation, the dd-vector of wavenumbers per mode, and
    // 1/|P|^2 (zero where the longitudinal direction is undefined)
    std::vector<std::int64_t> negq_inner;     // kp
    std::vector<double> kvec_multi;           // kp x D, [mode][axis]
    std::vector<double> pinv2_inner;          // kp

    // radix-4 pipeline tables for the 16x16 two-component projector fast path
    // (empty unless d_inner == 2 and k_inner == 16): stage-one twiddles and
    // the mode tables above reordered to the kernel's digit-reversed layout
    std::vector<double> fft_twr, fft_twi, fft_itwr, fft_itwi;  // 16 each
    std::vector<std::int64_t> fft_negp;                        // 256
    std::vector<double> fft_kx, fft_ky, fft_pinv2;             // 256 each
};

// ==== module operations =====================================================

/// grad_M f^M computed spectrally on the inner torus.
ScalarField inner_divergence(const DerivEngine& eng, const AlgebraField& f);

/// Transverse part of f (see DerivEngine::divfree_project); returns a copy.
AlgebraField divfree_project(const DerivEngine& eng, const AlgebraField& f);

/// lambda^D * dX^D * sum over the inner grid, per spatial point.
/// Result indexed by site = (x1*n2 + x2)*n3 + x3.
std::vector<double> inner_integral(const ScalarField& f);

/// Surface of the (d-1)-sphere divided by (2 pi)^d:
/// omega_d = 2 pi^{d/2} / ((2 pi)^d Gamma(d/2)).  Throws on d <= 0.
double omega_d(int d);

/// Deterministic pseudo-random band-limited field: inner and periodic-spatial
/// Fourier support <= max_mode, sin^2-windowed to vanish at the x3 walls,
/// then divfree-projected. Same seed -> bit-identical output.
/// Throws std::domain_error if max_mode reaches any axis Nyquist limit.
AlgebraField random_bandlimited(std::uint64_t seed, const DerivEngine& eng,
                                int max_mode, double amplitude);

/// Scalar-field variant used by matter initialization (same windowing, no
/// projection).
ScalarField random_bandlimited_scalar(std::uint64_t seed, const DerivEngine& eng,
                                      int max_mode, double amplitude);

// ==== deterministic RNG =====================================================

/// splitmix64: tiny deterministic generator for reproducible field draws.
struct SplitMix64 {
    std::uint64_t s;
    explicit SplitMix64(std::uint64_t seed) : s(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double uniform() {   // in [0,1)
        return double(next() >> 11) * 0x1.0p-53;
    }
    double normalish() { // symmetric, bounded; sum of 4 uniforms - 2
        return (uniform() + uniform() + uniform() + uniform()) - 2.0;
    }
};

}  // namespace isodyn

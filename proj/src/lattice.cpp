/// @file lattice.cpp
/// Grid geometry, derivative engines, transverse projection, reductions.

#include "isodyn/lattice.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <thread>

#include "lattice_kernels.hpp"

extern "C" void openblas_set_num_threads(int);

namespace isodyn {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

bool is_pow2(int n) { return n >= 1 && (n & (n - 1)) == 0; }

}  // namespace

// ==== spec ==================================================================

std::int64_t LatticeSpec::inner_points() const {
    std::int64_t p = 1;
    for (int i = 0; i < d_inner; ++i) p *= k_inner;
    return p;
}

double LatticeSpec::cell_weight() const {
    double dx = dx_inner();
    double w = h1() * h2() * h3();
    for (int i = 0; i < d_inner; ++i) w *= dx;
    return w;
}

double LatticeSpec::lambda_pow_d() const {
    double p = 1.0;
    for (int i = 0; i < d_inner; ++i) p *= lambda;
    return p;
}

void LatticeSpec::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("LatticeSpec: " + msg); };
    if (n1 < 1 || n2 < 1 || n3 < 1) fail("grid counts must be >= 1");
    if (!is_pow2(n1) || !is_pow2(n2)) fail("periodic axes n1, n2 must be powers of two");
    if (!is_pow2(k_inner)) fail("periodic inner axis count k_inner must be a power of two");
    if (n3 < 3) fail("axis x3 needs at least one interior node (n3 >= 3)");
    if (d_inner < 1) fail("d_inner must be >= 1");
    if (!(l1 > 0.0) || !(l2 > 0.0) || !(l3 > 0.0)) fail("spatial extents must be positive");
    if (!(l_inner > 0.0)) fail("l_inner must be positive");
    if (!(lambda > 0.0)) fail("lambda must be positive");
    if (!(dt > 0.0)) fail("dt must be positive");
}

// ==== reductions ============================================================

double pairwise_sum(const double* a, std::int64_t n) {
    if (n <= 16) {
        double s = 0.0;
        for (std::int64_t i = 0; i < n; ++i) s += a[i];
        return s;
    }
    std::int64_t h = n / 2;
    return pairwise_sum(a, h) + pairwise_sum(a + h, n - h);
}

namespace {

/// Deterministic blocked pairwise reduction of f(i) over [0,n).
template <class F>
double reduce_pairwise(std::int64_t n, F&& f) {
    constexpr std::int64_t kBlock = 1024;
    std::int64_t nb = (n + kBlock - 1) / kBlock;
    if (nb <= 1) {
        double s = 0.0;
        for (std::int64_t i = 0; i < n; ++i) s += f(i);
        return s;
    }
    std::vector<double> bs(static_cast<std::size_t>(nb), 0.0);
    for (std::int64_t b = 0; b < nb; ++b) {
        std::int64_t lo = b * kBlock, hi = std::min(n, lo + kBlock);
        double s = 0.0;
        for (std::int64_t i = lo; i < hi; ++i) s += f(i);
        bs[std::size_t(b)] = s;
    }
    return pairwise_sum(bs.data(), nb);
}

}  // namespace

double dot(const ScalarField& a, const ScalarField& b) {
    const double* x = a.data();
    const double* y = b.data();
    return reduce_pairwise(a.size(), [&](std::int64_t i) { return x[i] * y[i]; });
}

double dot(const AlgebraField& a, const AlgebraField& b) {
    double s = 0.0;
    for (int m = 0; m < a.dim(); ++m) s += dot(a[m], b[m]);
    return s;
}

double l2_norm(const ScalarField& a) { return std::sqrt(dot(a, a)); }
double l2_norm(const AlgebraField& a) { return std::sqrt(dot(a, a)); }

double inner_product(const ScalarField& a, const ScalarField& b) {
    return a.spec.cell_weight() * a.spec.lambda_pow_d() * dot(a, b);
}

double inner_product(const AlgebraField& a, const AlgebraField& b) {
    return a.spec.cell_weight() * a.spec.lambda_pow_d() * dot(a, b);
}

// ==== elementwise helpers ===================================================

void axpy(double s, const ScalarField& x, ScalarField& y) {
    const double* xv = x.data();
    double* yv = y.data();
    parallel_for(x.size(), [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t i = b; i < e; ++i) yv[i] += s * xv[i];
    });
}

void axpy(double s, const AlgebraField& x, AlgebraField& y) {
    for (int m = 0; m < x.dim(); ++m) axpy(s, x[m], y[m]);
}

void scale(ScalarField& x, double s) {
    double* xv = x.data();
    parallel_for(x.size(), [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t i = b; i < e; ++i) xv[i] *= s;
    });
}

void scale(AlgebraField& x, double s) {
    for (int m = 0; m < x.dim(); ++m) scale(x[m], s);
}

void pointwise_mul(const ScalarField& a, const ScalarField& b, ScalarField& out) {
    const double* av = a.data();
    const double* bv = b.data();
    double* ov = out.data();
    parallel_for(a.size(), [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) ov[i] = av[i] * bv[i];
    });
}

void pointwise_mul_add(const ScalarField& a, const ScalarField& b, ScalarField& out) {
    const double* av = a.data();
    const double* bv = b.data();
    double* ov = out.data();
    parallel_for(a.size(), [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) ov[i] += av[i] * bv[i];
    });
}

// ==== worker parallelism ====================================================

int worker_threads() {
    static int n = [] {
        if (const char* e = std::getenv("ISODYN_THREADS")) {
            int v = std::atoi(e);
            if (v >= 1) return std::min(v, 64);
        }
        unsigned hw = std::thread::hardware_concurrency();
        if (hw == 0) hw = 1;
        return int(std::min(8u, hw));
    }();
    return n;
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    // Every callback body is range-independent (per-row / per-site / per-column
    // work with disjoint outputs), so the chunk grid may vary with the thread
    // count without changing results; a single thread gets one full-range call
    // to avoid per-chunk dispatch and BLAS-call overhead.
    if (worker_threads() == 1) {
        fn(0, n);
        return;
    }
    std::int64_t nchunks = std::min<std::int64_t>(n, 64);
    std::int64_t chunk = (n + nchunks - 1) / nchunks;
    nchunks = (n + chunk - 1) / chunk;
    int nt = std::min<std::int64_t>(worker_threads(), nchunks);
    if (nt <= 1) {
        for (std::int64_t c = 0; c < nchunks; ++c)
            fn(c * chunk, std::min(n, (c + 1) * chunk));
        return;
    }
    std::atomic<std::int64_t> next{0};
    auto work = [&] {
        for (;;) {
            std::int64_t c = next.fetch_add(1);
            if (c >= nchunks) break;
            fn(c * chunk, std::min(n, (c + 1) * chunk));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(nt - 1));
    for (int t = 0; t < nt - 1; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
}

// ==== derivative engine =====================================================

namespace {

/// Circulant spectral-derivative matrix for a periodic axis: exact on modes
/// below Nyquist; the Nyquist mode is mapped to zero (odd-symmetry choice).
std::vector<double> build_periodic_deriv(int n, double len) {
    std::vector<double> d(std::size_t(n) * n, 0.0);
    if (n == 1) return d;
    std::vector<double> g(std::size_t(n), 0.0);
    double h = len / n;
    for (int shift = 0; shift < n; ++shift) {
        double s = 0.0;
        for (int m = 0; m < n; ++m) {
            int mm = (2 * m < n) ? m : m - n;
            if (2 * m == n) continue;  // Nyquist zeroed
            double k = 2.0 * kPi * mm / len;
            s += -k * std::sin(k * h * shift);
        }
        g[std::size_t(shift)] = s / n;
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            d[std::size_t(i) * n + j] = g[std::size_t(((i - j) % n + n) % n)];
    return d;
}

}  // namespace

DerivEngine::DerivEngine(const LatticeSpec& s) : spec(s) {
    spec.validate();
    openblas_set_num_threads(1);  // determinism; worker threads are ours

    dmat_x1 = build_periodic_deriv(spec.n1, spec.l1);
    dmat_x2 = build_periodic_deriv(spec.n2, spec.l2);
    dmat_inner = build_periodic_deriv(spec.k_inner, spec.l_inner);

    int K = spec.k_inner;
    dmat_inner_t.assign(std::size_t(K) * K, 0.0);
    for (int j = 0; j < K; ++j)
        for (int c = 0; c < K; ++c)
            dmat_inner_t[std::size_t(c) * K + j] = dmat_inner[std::size_t(j) * K + c];
    kvec_inner.assign(std::size_t(K), 0.0);
    for (int m = 0; m < K; ++m) {
        int mm = (2 * m < K) ? m : m - K;
        if (2 * m == K) mm = 0;  // Nyquist zeroed
        kvec_inner[std::size_t(m)] = 2.0 * kPi * mm / spec.l_inner;
    }

    // forward W[m][j] = exp(-2 pi i m j / K) / K; inverse W[j][m] = exp(+...)
    dft_cos.assign(std::size_t(K) * K, 0.0);
    dft_sin.assign(std::size_t(K) * K, 0.0);
    idft_cos.assign(std::size_t(K) * K, 0.0);
    idft_sin.assign(std::size_t(K) * K, 0.0);
    for (int m = 0; m < K; ++m) {
        for (int j = 0; j < K; ++j) {
            double ang = 2.0 * kPi * double(std::int64_t(m) * j % K) / K;
            dft_cos[std::size_t(m) * K + j] = std::cos(ang) / K;
            dft_sin[std::size_t(m) * K + j] = -std::sin(ang) / K;
            idft_cos[std::size_t(m) * K + j] = std::cos(ang);
            idft_sin[std::size_t(m) * K + j] = std::sin(ang);
        }
    }

    // projector mode tables over the flattened inner multi-index
    int dd = spec.d_inner;
    std::int64_t kp = spec.inner_points();
    negq_inner.assign(std::size_t(kp), 0);
    kvec_multi.assign(std::size_t(kp) * dd, 0.0);
    pinv2_inner.assign(std::size_t(kp), 0.0);
    for (std::int64_t q = 0; q < kp; ++q) {
        std::int64_t rem = q, neg = 0, place = 1;
        double p2 = 0.0;
        for (int ax = dd - 1; ax >= 0; --ax) {
            int idx = int(rem % K);
            rem /= K;
            neg += place * ((K - idx) % K);
            double kk = kvec_inner[std::size_t(idx)];
            kvec_multi[std::size_t(q) * dd + ax] = kk;
            p2 += kk * kk;
            place *= K;
        }
        negq_inner[std::size_t(q)] = neg;
        pinv2_inner[std::size_t(q)] = (p2 > 0.0) ? 1.0 / p2 : 0.0;
    }

    if (dd == 2 && K == 16) {
        // fast-path tables: stage-one radix-4 twiddles plus the mode tables
        // rearranged to the kernel's layout, where tile position (r2, r1)
        // holds the mode (rev4(r1), rev4(r2)) after both forward passes
        fft_twr.assign(16, 0.0);
        fft_twi.assign(16, 0.0);
        fft_itwr.assign(16, 0.0);
        fft_itwi.assign(16, 0.0);
        for (int j = 0; j < 4; ++j)
            for (int t = 0; t < 4; ++t) {
                double ang = 2.0 * kPi * double(j * t) / 16.0;
                fft_twr[std::size_t(j * 4 + t)] = std::cos(ang);
                fft_twi[std::size_t(j * 4 + t)] = -std::sin(ang);
                fft_itwr[std::size_t(j * 4 + t)] = std::cos(ang);
                fft_itwi[std::size_t(j * 4 + t)] = std::sin(ang);
            }
        auto rev4 = [](std::int64_t q) { return ((q & 3) << 2) | (q >> 2); };
        fft_negp.assign(256, 0);
        fft_kx.assign(256, 0.0);
        fft_ky.assign(256, 0.0);
        fft_pinv2.assign(256, 0.0);
        for (std::int64_t r2 = 0; r2 < 16; ++r2)
            for (std::int64_t r1 = 0; r1 < 16; ++r1) {
                std::int64_t p = r2 * 16 + r1;
                std::int64_t m = rev4(r1) * 16 + rev4(r2);
                std::int64_t mn = negq_inner[std::size_t(m)];
                fft_negp[std::size_t(p)] = rev4(mn % 16) * 16 + rev4(mn / 16);
                fft_kx[std::size_t(p)] = kvec_multi[std::size_t(m) * 2];
                fft_ky[std::size_t(p)] = kvec_multi[std::size_t(m) * 2 + 1];
                fft_pinv2[std::size_t(p)] = pinv2_inner[std::size_t(m)];
            }
    }
}

std::int64_t DerivEngine::cell_array_size() const {
    return std::int64_t(spec.n1) * spec.n2 * (spec.n3 - 1) * spec.inner_points();
}

// ---- spatial spectral derivatives ----

void DerivEngine::d_spatial(const ScalarField& f, int axis, ScalarField& out) const {
    if (axis != 0 && axis != 1) throw std::invalid_argument("d_spatial: axis must be 0 (x1) or 1 (x2)");
    std::int64_t kp = spec.inner_points();
    if (axis == 0) {
        // contract over x1: out(x1, R) = D * f(x1, R), R = n2*n3*Kp columns
        std::int64_t r = std::int64_t(spec.n2) * spec.n3 * kp;
        kern::row_mix_batch(f.data(), dmat_x1.data(), out.data(), spec.n1, r, 1);
    } else {
        // per x1 slab: out_s(x2, R2) = D * f_s(x2, R2), R2 = n3*Kp
        std::int64_t r2 = std::int64_t(spec.n3) * kp;
        kern::row_mix_batch(f.data(), dmat_x2.data(), out.data(), spec.n2, r2, spec.n1);
    }
}

// ---- inner derivatives ----

void DerivEngine::d_inner(const ScalarField& f, int axis, ScalarField& out) const {
    apply_inner(f, axis, dmat_inner.data(), out);
}

void DerivEngine::apply_inner(const ScalarField& f, int axis, const double* dm, ScalarField& out) const {
    int dd = spec.d_inner;
    int K = spec.k_inner;
    if (axis < 0 || axis >= dd) throw std::invalid_argument("apply_inner: axis out of range");
    if (f.data() == out.data()) throw std::invalid_argument("apply_inner: out must not alias f");
    if (axis == dd - 1) {
        // last inner axis contiguous: per-fiber contraction with the
        // transposed weights so the output index is the vector lane
        std::vector<double> wt(std::size_t(K) * K);
        for (int j = 0; j < K; ++j)
            for (int c = 0; c < K; ++c) wt[std::size_t(c) * K + j] = dm[std::size_t(j) * K + c];
        kern::fiber_apply_last(f.data(), wt.data(), out.data(), f.size() / K, K);
        return;
    }
    // general axis: view the inner block as (L, K, R) per site and
    // left-multiply the K axis; the contiguous R extent is the vector lane
    std::int64_t l_sp = 1;
    for (int i = 0; i < axis; ++i) l_sp *= K;
    std::int64_t r_sp = 1;
    for (int i = axis + 1; i < dd; ++i) r_sp *= K;
    kern::fiber_apply_axis(f.data(), dm, out.data(), spec.sites() * l_sp, K, r_sp);
}

void DerivEngine::inner_div_product(const AlgebraField& u, const AlgebraField& v,
                                    double s, AlgebraField& out) const {
    int dd = spec.d_inner;
    if (dd == 2 && spec.k_inner == 16) {
        kern::transport_div16_pair(u.comp[0].data(), u.comp[1].data(),
                                   v.comp[0].data(), v.comp[1].data(), s,
                                   out.comp[0].data(), out.comp[1].data(),
                                   spec.sites(), dmat_inner.data(),
                                   dmat_inner_t.data());
        return;
    }
    ScalarField prod(spec), der(spec);
    for (int m = 0; m < dd; ++m)
        for (int n = 0; n < dd; ++n) {
            pointwise_mul(u.comp[m], v.comp[n], prod);
            d_inner(prod, n, der);
            axpy(s, der, out.comp[m]);
        }
}

// ---- x3 stencils -----------------------------------------------------------

void DerivEngine::d3_centered(const ScalarField& f, ScalarField& out) const {
    std::int64_t kp = spec.inner_points();
    int n3 = spec.n3;
    double inv2h = 1.0 / (2.0 * spec.h3());
    std::int64_t cols = std::int64_t(spec.n1) * spec.n2;
    parallel_for(cols, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t c = b; c < e; ++c) {
            const double* fb = f.data() + c * n3 * kp;
            double* ob = out.data() + c * n3 * kp;
            for (std::int64_t q = 0; q < kp; ++q) ob[q] = 0.0;
            for (int j = 1; j < n3 - 1; ++j) {
                const double* fp = fb + std::int64_t(j + 1) * kp;
                const double* fm = fb + std::int64_t(j - 1) * kp;
                double* oo = ob + std::int64_t(j) * kp;
                for (std::int64_t q = 0; q < kp; ++q) oo[q] = (fp[q] - fm[q]) * inv2h;
            }
            double* ow = ob + std::int64_t(n3 - 1) * kp;
            for (std::int64_t q = 0; q < kp; ++q) ow[q] = 0.0;
        }
    });
}

void DerivEngine::d3_cell(const ScalarField& f, std::vector<double>& cells) const {
    std::int64_t kp = spec.inner_points();
    int n3 = spec.n3;
    double invh = 1.0 / spec.h3();
    cells.resize(std::size_t(cell_array_size()));
    std::int64_t cols = std::int64_t(spec.n1) * spec.n2;
    parallel_for(cols, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t c = b; c < e; ++c) {
            const double* fb = f.data() + c * n3 * kp;
            double* cb = cells.data() + c * (n3 - 1) * kp;
            for (int j = 0; j < n3 - 1; ++j) {
                const double* f0 = fb + std::int64_t(j) * kp;
                const double* f1 = fb + std::int64_t(j + 1) * kp;
                double* cc = cb + std::int64_t(j) * kp;
                for (std::int64_t q = 0; q < kp; ++q) cc[q] = (f1[q] - f0[q]) * invh;
            }
        }
    });
}

void DerivEngine::lap3(const ScalarField& f, ScalarField& out) const {
    std::int64_t kp = spec.inner_points();
    int n3 = spec.n3;
    double invh2 = 1.0 / (spec.h3() * spec.h3());
    std::int64_t cols = std::int64_t(spec.n1) * spec.n2;
    parallel_for(cols, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t c = b; c < e; ++c) {
            const double* fb = f.data() + c * n3 * kp;
            double* ob = out.data() + c * n3 * kp;
            for (std::int64_t q = 0; q < kp; ++q) ob[q] = 0.0;
            for (int j = 1; j < n3 - 1; ++j) {
                const double* fp = fb + std::int64_t(j + 1) * kp;
                const double* f0 = fb + std::int64_t(j) * kp;
                const double* fm = fb + std::int64_t(j - 1) * kp;
                double* oo = ob + std::int64_t(j) * kp;
                for (std::int64_t q = 0; q < kp; ++q)
                    oo[q] = (fp[q] - 2.0 * f0[q] + fm[q]) * invh2;
            }
            double* ow = ob + std::int64_t(n3 - 1) * kp;
            for (std::int64_t q = 0; q < kp; ++q) ow[q] = 0.0;
        }
    });
}

void DerivEngine::solve_lap3(const ScalarField& rhs, ScalarField& out) const {
    std::int64_t kp = spec.inner_points();
    int n3 = spec.n3;
    int ni = n3 - 2;  // interior nodes
    double h2 = spec.h3() * spec.h3();
    // Thomas factorization of tridiag(1,-2,1)/h2 (precomputable, tiny)
    std::vector<double> cp(std::size_t(ni), 0.0);
    {
        double b = -2.0;
        cp[0] = 1.0 / b;
        for (int i = 1; i < ni; ++i) cp[std::size_t(i)] = 1.0 / (-2.0 - cp[std::size_t(i - 1)]);
    }
    std::int64_t cols = std::int64_t(spec.n1) * spec.n2;
    parallel_for(cols, [&](std::int64_t b, std::int64_t e) {
        std::vector<double> d(std::size_t(ni) * kp);
        for (std::int64_t c = b; c < e; ++c) {
            const double* rb = rhs.data() + c * n3 * kp;
            double* ob = out.data() + c * n3 * kp;
            // forward sweep on scaled rhs (h2 * rhs)
            for (std::int64_t q = 0; q < kp; ++q)
                d[std::size_t(q)] = h2 * rb[kp + q] / -2.0;
            for (int i = 1; i < ni; ++i) {
                const double* ri = rb + std::int64_t(i + 1) * kp;
                double* di = d.data() + std::int64_t(i) * kp;
                const double* dm = d.data() + std::int64_t(i - 1) * kp;
                double denom = -2.0 - cp[std::size_t(i - 1)];
                for (std::int64_t q = 0; q < kp; ++q)
                    di[q] = (h2 * ri[q] - dm[q]) / denom;
            }
            // back substitution
            double* olast = ob + std::int64_t(ni) * kp;
            const double* dlast = d.data() + std::int64_t(ni - 1) * kp;
            for (std::int64_t q = 0; q < kp; ++q) olast[q] = dlast[q];
            for (int i = ni - 2; i >= 0; --i) {
                double* oi = ob + std::int64_t(i + 1) * kp;
                const double* onext = ob + std::int64_t(i + 2) * kp;
                const double* di = d.data() + std::int64_t(i) * kp;
                double cpi = cp[std::size_t(i)];
                for (std::int64_t q = 0; q < kp; ++q) oi[q] = di[q] - cpi * onext[q];
            }
            for (std::int64_t q = 0; q < kp; ++q) ob[q] = 0.0;
            double* ow = ob + std::int64_t(n3 - 1) * kp;
            for (std::int64_t q = 0; q < kp; ++q) ow[q] = 0.0;
        }
    });
}

void DerivEngine::cells_to_nodes_halfsum(const std::vector<double>& cells, ScalarField& out) const {
    std::int64_t kp = spec.inner_points();
    int n3 = spec.n3;
    std::int64_t cols = std::int64_t(spec.n1) * spec.n2;
    parallel_for(cols, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t c = b; c < e; ++c) {
            const double* cb = cells.data() + c * (n3 - 1) * kp;
            double* ob = out.data() + c * n3 * kp;
            for (std::int64_t q = 0; q < kp; ++q) ob[q] = 0.5 * cb[q];
            for (int j = 1; j < n3 - 1; ++j) {
                const double* cm = cb + std::int64_t(j - 1) * kp;
                const double* c0 = cb + std::int64_t(j) * kp;
                double* oo = ob + std::int64_t(j) * kp;
                for (std::int64_t q = 0; q < kp; ++q) oo[q] = 0.5 * (cm[q] + c0[q]);
            }
            const double* clast = cb + std::int64_t(n3 - 2) * kp;
            double* ow = ob + std::int64_t(n3 - 1) * kp;
            for (std::int64_t q = 0; q < kp; ++q) ow[q] = 0.5 * clast[q];
        }
    });
}

// ---- transverse projection -------------------------------------------------

void DerivEngine::divfree_project(AlgebraField& f) const {
    int dd = spec.d_inner;
    int K = spec.k_inner;
    std::int64_t kp = spec.inner_points();
    std::int64_t n = f[0].size();

    if (!fft_negp.empty()) {
        kern::project_fft16_pair(f[0].data(), f[1].data(), spec.sites(),
                                 fft_twr.data(), fft_twi.data(),
                                 fft_itwr.data(), fft_itwi.data(),
                                 fft_negp.data(), fft_kx.data(), fft_ky.data(),
                                 fft_pinv2.data());
        return;
    }

    // Pack component pairs (2p, 2p+1) as re + i*im and move them to inner
    // Fourier space in place (one complex transform carries two real fields;
    // an odd component count gets a zero pad). The transverse projection is
    // then a per-mode rank-one subtraction applied to the unpacked spectra,
    // after which the inverse transform restores both components at once.
    int npairs = (dd + 1) / 2;
    std::vector<double> pad;  // imaginary slot for an unpaired last component
    std::size_t np = std::size_t(npairs);
    std::vector<double*> rep(np), imp(np);
    for (int p = 0; p < npairs; ++p) {
        rep[std::size_t(p)] = f[2 * p].data();
        if (2 * p + 1 < dd) {
            imp[std::size_t(p)] = f[2 * p + 1].data();
        } else {
            pad.assign(std::size_t(n), 0.0);
            imp[std::size_t(p)] = pad.data();
        }
    }

    // transposed forward/inverse DFT blocks for the contiguous-axis kernel
    std::vector<double> ct(std::size_t(K) * K), st(std::size_t(K) * K);
    std::vector<double> ict(std::size_t(K) * K), ist(std::size_t(K) * K);
    for (int m = 0; m < K; ++m)
        for (int j = 0; j < K; ++j) {
            ct[std::size_t(j) * K + m] = dft_cos[std::size_t(m) * K + j];
            st[std::size_t(j) * K + m] = dft_sin[std::size_t(m) * K + j];
            ict[std::size_t(j) * K + m] = idft_cos[std::size_t(m) * K + j];
            ist[std::size_t(j) * K + m] = idft_sin[std::size_t(m) * K + j];
        }

    auto transform = [&](const double* cm, const double* sm,
                         const double* cmt, const double* smt) {
        for (int p = 0; p < npairs; ++p) {
            for (int ax = dd - 1; ax >= 0; --ax) {
                if (ax == dd - 1) {
                    kern::cplx_apply_last(rep[std::size_t(p)], imp[std::size_t(p)],
                                          cmt, smt, n / K, K);
                } else {
                    std::int64_t l_sp = 1;
                    for (int i = 0; i < ax; ++i) l_sp *= K;
                    std::int64_t r_sp = 1;
                    for (int i = ax + 1; i < dd; ++i) r_sp *= K;
                    kern::cplx_apply_axis(rep[std::size_t(p)], imp[std::size_t(p)],
                                          cm, sm, spec.sites() * l_sp, K, r_sp);
                }
            }
        }
    };

    transform(dft_cos.data(), dft_sin.data(), ct.data(), st.data());
    kern::project_packed_modes(rep.data(), imp.data(), npairs, dd, spec.sites(),
                               kp, negq_inner.data(), kvec_multi.data(),
                               pinv2_inner.data());
    transform(idft_cos.data(), idft_sin.data(), ict.data(), ist.data());
}

// ==== module operations =====================================================

ScalarField inner_divergence(const DerivEngine& eng, const AlgebraField& f) {
    ScalarField out(eng.spec), tmp(eng.spec);
    eng.d_inner(f[0], 0, out);
    for (int m = 1; m < eng.spec.d_inner; ++m) {
        eng.d_inner(f[m], m, tmp);
        axpy(1.0, tmp, out);
    }
    return out;
}

AlgebraField divfree_project(const DerivEngine& eng, const AlgebraField& f) {
    AlgebraField out = f;
    eng.divfree_project(out);
    return out;
}

std::vector<double> inner_integral(const ScalarField& f) {
    const LatticeSpec& s = f.spec;
    std::int64_t kp = s.inner_points();
    double dx = s.dx_inner();
    double w = s.lambda_pow_d();
    for (int i = 0; i < s.d_inner; ++i) w *= dx;
    std::vector<double> out(std::size_t(s.sites()), 0.0);
    parallel_for(s.sites(), [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t site = b; site < e; ++site) {
            const double* fb = f.data() + site * kp;
            double acc = 0.0;
            for (std::int64_t q = 0; q < kp; ++q) acc += fb[q];
            out[std::size_t(site)] = w * acc;
        }
    });
    return out;
}

double omega_d(int d) {
    if (d <= 0) throw std::domain_error("omega_d: d must be positive");
    double twopi = 2.0 * kPi;
    return 2.0 * std::pow(kPi, 0.5 * d) / (std::pow(twopi, double(d)) * std::tgamma(0.5 * d));
}

// ==== random band-limited fields ============================================

namespace {

/// Superposition of separable waves: per wave, small per-axis tables are
/// precomputed so the grid fill is pure multiply-accumulate (deterministic,
/// thread-count independent).
struct WaveTables {
    std::vector<double> axy;   // n1*n2: cos(k1 x1 + k2 x2 + phase)
    std::vector<double> bx3;   // n3: sin(j pi x3 / l3)
    std::vector<double> cin;   // K^D: cos(q . X + chi)
    double amp = 0.0;
};

WaveTables draw_wave(SplitMix64& rng, const LatticeSpec& s, int max_mode) {
    WaveTables w;
    auto imode = [&](int cap) {
        int span = 2 * cap + 1;
        return int(rng.next() % std::uint64_t(span)) - cap;
    };
    int m1 = imode(max_mode);
    int m2 = imode(max_mode);
    int jcap = std::min(max_mode, s.n3 - 2);
    int j = 1 + int(rng.next() % std::uint64_t(std::max(1, jcap)));
    std::vector<int> q(std::size_t(s.d_inner), 0);
    for (int m = 0; m < s.d_inner; ++m) q[std::size_t(m)] = imode(max_mode);
    double phase = 2.0 * kPi * rng.uniform();
    double chi = 2.0 * kPi * rng.uniform();
    w.amp = rng.normalish();

    w.axy.resize(std::size_t(s.n1) * s.n2);
    for (int a = 0; a < s.n1; ++a)
        for (int b = 0; b < s.n2; ++b) {
            double x1 = a * s.h1(), x2 = b * s.h2();
            w.axy[std::size_t(a) * s.n2 + b] =
                std::cos(2.0 * kPi * m1 * x1 / s.l1 + 2.0 * kPi * m2 * x2 / s.l2 + phase);
        }
    w.bx3.resize(std::size_t(s.n3));
    for (int c = 0; c < s.n3; ++c) {
        if (c == 0 || c == s.n3 - 1) {  // structural zeros at the walls
            w.bx3[std::size_t(c)] = 0.0;
            continue;
        }
        double x3 = c * s.h3();
        double win = std::sin(kPi * x3 / s.l3);
        w.bx3[std::size_t(c)] = std::sin(j * kPi * x3 / s.l3) * win * win;
    }
    std::int64_t kp = s.inner_points();
    w.cin.resize(std::size_t(kp));
    double dx = s.dx_inner();
    for (std::int64_t p = 0; p < kp; ++p) {
        std::int64_t rem = p;
        double ang = chi;
        for (int m = s.d_inner - 1; m >= 0; --m) {
            int idx = int(rem % s.k_inner);
            rem /= s.k_inner;
            ang += 2.0 * kPi * q[std::size_t(m)] * (idx * dx) / s.l_inner;
        }
        w.cin[std::size_t(p)] = std::cos(ang);
    }
    return w;
}

void add_waves(const std::vector<WaveTables>& waves, ScalarField& f) {
    const LatticeSpec& s = f.spec;
    std::int64_t kp = s.inner_points();
    parallel_for(s.sites(), [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t site = b; site < e; ++site) {
            std::int64_t x3 = site % s.n3;
            std::int64_t xy = site / s.n3;
            double* fb = f.data() + site * kp;
            for (const WaveTables& w : waves) {
                double c = w.amp * w.axy[std::size_t(xy)] * w.bx3[std::size_t(x3)];
                if (c == 0.0) continue;
                const double* ci = w.cin.data();
                for (std::int64_t q = 0; q < kp; ++q) fb[q] += c * ci[q];
            }
        }
    });
}

void check_bandlimit(const LatticeSpec& s, int max_mode) {
    if (max_mode < 1) throw std::domain_error("random_bandlimited: max_mode must be >= 1");
    if (2 * max_mode >= s.n1 || 2 * max_mode >= s.n2 || 2 * max_mode >= s.k_inner)
        throw std::domain_error("random_bandlimited: max_mode reaches a grid Nyquist limit");
}

void normalize_max(std::vector<ScalarField*> comps, double amplitude) {
    double mx = 0.0;
    for (ScalarField* f : comps)
        for (double v : f->v) mx = std::max(mx, std::abs(v));
    if (mx == 0.0) return;
    double sc = amplitude / mx;
    for (ScalarField* f : comps) scale(*f, sc);
}

constexpr int kWavesPerComponent = 24;

}  // namespace

AlgebraField random_bandlimited(std::uint64_t seed, const DerivEngine& eng,
                                int max_mode, double amplitude) {
    const LatticeSpec& s = eng.spec;
    check_bandlimit(s, max_mode);
    AlgebraField f(s);
    if (amplitude == 0.0) return f;
    SplitMix64 rng(seed);
    for (int m = 0; m < s.d_inner; ++m) {
        std::vector<WaveTables> waves;
        waves.reserve(kWavesPerComponent);
        for (int w = 0; w < kWavesPerComponent; ++w) waves.push_back(draw_wave(rng, s, max_mode));
        add_waves(waves, f[m]);
    }
    eng.divfree_project(f);
    std::vector<ScalarField*> comps;
    for (int m = 0; m < s.d_inner; ++m) comps.push_back(&f[m]);
    normalize_max(comps, amplitude);
    return f;
}

ScalarField random_bandlimited_scalar(std::uint64_t seed, const DerivEngine& eng,
                                      int max_mode, double amplitude) {
    const LatticeSpec& s = eng.spec;
    check_bandlimit(s, max_mode);
    ScalarField f(s);
    if (amplitude == 0.0) return f;
    SplitMix64 rng(seed ^ 0x5ca1ab1e0ddba11ULL);
    std::vector<WaveTables> waves;
    waves.reserve(kWavesPerComponent);
    for (int w = 0; w < kWavesPerComponent; ++w) waves.push_back(draw_wave(rng, s, max_mode));
    add_waves(waves, f);
    normalize_max({&f}, amplitude);
    return f;
}

}  // namespace isodyn

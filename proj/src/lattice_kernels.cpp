/// Hot-loop kernels for the derivative engine. Compiled with FP contraction
/// enabled (see CMakeLists); every loop body writes disjoint outputs, so the
/// parallel_for chunking never affects results. The fixed-K template
/// specializations let the compiler keep per-fiber accumulators in vector
/// registers across the contraction loop.
#include "lattice_kernels.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "isodyn/lattice.hpp"

namespace isodyn::kern {

namespace {

constexpr int kMaxFiber = 256;  // stack accumulator bound for fiber kernels
constexpr std::int64_t kQTile = 16;  // register tile along the contiguous lane

template <int KK>
void fiber_apply_last_fixed(const double* in, const double* wt, double* out,
                            std::int64_t rows) {
    parallel_for(rows, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t r = b; r < e; ++r) {
            const double* fr = in + r * KK;
            double* orow = out + r * KK;
            double acc[KK] = {};
            for (int c = 0; c < KK; ++c) {
                double bv = fr[c];
                const double* wrow = wt + std::int64_t(c) * KK;
#pragma omp simd
                for (int j = 0; j < KK; ++j) acc[j] += bv * wrow[j];
            }
#pragma omp simd
            for (int j = 0; j < KK; ++j) orow[j] = acc[j];
        }
    });
}

void fiber_apply_last_generic(const double* in, const double* wt, double* out,
                              std::int64_t rows, int k) {
    parallel_for(rows, [&](std::int64_t b, std::int64_t e) {
        double acc[kMaxFiber];
        for (std::int64_t r = b; r < e; ++r) {
            const double* fr = in + r * k;
            double* orow = out + r * k;
            for (int j = 0; j < k; ++j) acc[j] = 0.0;
            for (int c = 0; c < k; ++c) {
                double bv = fr[c];
                const double* wrow = wt + std::int64_t(c) * k;
#pragma omp simd
                for (int j = 0; j < k; ++j) acc[j] += bv * wrow[j];
            }
#pragma omp simd
            for (int j = 0; j < k; ++j) orow[j] = acc[j];
        }
    });
}

/// out[a][q] = sum_c w[a][c] in[c][q] for one (nout x r) block. Eight output
/// rows share each input load (the input is streamed nout/8 times instead of
/// nout times), with single-row cleanup for the remaining rows and lanes.
inline void mix_rows_tiled(const double* in, const double* w, double* out,
                           int nout, int nin, std::int64_t r,
                           std::int64_t in_stride, std::int64_t out_stride) {
    int a = 0;
    for (; a + 8 <= nout; a += 8) {
        double* o[8];
        const double* wr[8];
        for (int j = 0; j < 8; ++j) {
            o[j] = out + std::int64_t(a + j) * out_stride;
            wr[j] = w + std::int64_t(a + j) * nin;
        }
        std::int64_t q = 0;
        for (; q + 8 <= r; q += 8) {
            double acc[8][8] = {};
            for (int c = 0; c < nin; ++c) {
                const double* frow = in + std::int64_t(c) * in_stride + q;
                for (int j = 0; j < 8; ++j) {
                    double bv = wr[j][c];
#pragma omp simd
                    for (int t = 0; t < 8; ++t) acc[j][t] += bv * frow[t];
                }
            }
            for (int j = 0; j < 8; ++j) {
#pragma omp simd
                for (int t = 0; t < 8; ++t) o[j][q + t] = acc[j][t];
            }
        }
        for (; q < r; ++q) {
            for (int j = 0; j < 8; ++j) {
                double acc = 0.0;
                for (int c = 0; c < nin; ++c)
                    acc += wr[j][c] * in[std::int64_t(c) * in_stride + q];
                o[j][q] = acc;
            }
        }
    }
    for (; a < nout; ++a) {
        double* orow = out + std::int64_t(a) * out_stride;
        const double* wrow = w + std::int64_t(a) * nin;
        std::int64_t q = 0;
        for (; q + kQTile <= r; q += kQTile) {
            double acc[kQTile] = {};
            for (int c = 0; c < nin; ++c) {
                double bv = wrow[c];
                const double* frow = in + std::int64_t(c) * in_stride + q;
#pragma omp simd
                for (int t = 0; t < kQTile; ++t) acc[t] += bv * frow[t];
            }
#pragma omp simd
            for (int t = 0; t < kQTile; ++t) orow[q + t] = acc[t];
        }
        for (; q < r; ++q) {
            double acc = 0.0;
            for (int c = 0; c < nin; ++c)
                acc += wrow[c] * in[std::int64_t(c) * in_stride + q];
            orow[q] = acc;
        }
    }
}

}  // namespace

void fiber_apply_last(const double* in, const double* wt, double* out,
                      std::int64_t rows, int k) {
    if (k > kMaxFiber) throw std::invalid_argument("fiber_apply_last: k too large");
    switch (k) {
        case 4: fiber_apply_last_fixed<4>(in, wt, out, rows); return;
        case 8: fiber_apply_last_fixed<8>(in, wt, out, rows); return;
        case 16: fiber_apply_last_fixed<16>(in, wt, out, rows); return;
        case 32: fiber_apply_last_fixed<32>(in, wt, out, rows); return;
        default: fiber_apply_last_generic(in, wt, out, rows, k); return;
    }
}

void fiber_apply_axis(const double* in, const double* w, double* out,
                      std::int64_t blocks, int k, std::int64_t r) {
    std::int64_t bs = std::int64_t(k) * r;
    parallel_for(blocks, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t g = b; g < e; ++g)
            mix_rows_tiled(in + g * bs, w, out + g * bs, k, k, r, r, r);
    });
}

void row_mix_batch(const double* in, const double* w, double* out, int nrow,
                   std::int64_t ncol, std::int64_t nbatch) {
    std::int64_t stride = std::int64_t(nrow) * ncol;
    parallel_for(nbatch, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t g = b; g < e; ++g)
            mix_rows_tiled(in + g * stride, w, out + g * stride, nrow, nrow,
                           ncol, ncol, ncol);
    });
}

// ---- packed complex kernels -------------------------------------------------

namespace {

template <int KK>
void cplx_apply_last_fixed(double* re, double* im, const double* ct,
                           const double* st, std::int64_t rows) {
    parallel_for(rows, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t r = b; r < e; ++r) {
            double* rr = re + r * KK;
            double* ri = im + r * KK;
            double ar[KK] = {}, ai[KK] = {};
            for (int c = 0; c < KK; ++c) {
                double br = rr[c], bi = ri[c];
                const double* cc = ct + std::int64_t(c) * KK;
                const double* ss = st + std::int64_t(c) * KK;
#pragma omp simd
                for (int j = 0; j < KK; ++j) {
                    ar[j] += br * cc[j] - bi * ss[j];
                    ai[j] += br * ss[j] + bi * cc[j];
                }
            }
#pragma omp simd
            for (int j = 0; j < KK; ++j) { rr[j] = ar[j]; ri[j] = ai[j]; }
        }
    });
}

void cplx_apply_last_generic(double* re, double* im, const double* ct,
                             const double* st, std::int64_t rows, int k) {
    parallel_for(rows, [&](std::int64_t b, std::int64_t e) {
        double ar[kMaxFiber], ai[kMaxFiber];
        for (std::int64_t r = b; r < e; ++r) {
            double* rr = re + r * k;
            double* ri = im + r * k;
            for (int j = 0; j < k; ++j) { ar[j] = 0.0; ai[j] = 0.0; }
            for (int c = 0; c < k; ++c) {
                double br = rr[c], bi = ri[c];
                const double* cc = ct + std::int64_t(c) * k;
                const double* ss = st + std::int64_t(c) * k;
#pragma omp simd
                for (int j = 0; j < k; ++j) {
                    ar[j] += br * cc[j] - bi * ss[j];
                    ai[j] += br * ss[j] + bi * cc[j];
                }
            }
#pragma omp simd
            for (int j = 0; j < k; ++j) { rr[j] = ar[j]; ri[j] = ai[j]; }
        }
    });
}

/// one (k x r) complex block, q lane register-tiled, scratch-free:
/// accumulates each output row in registers before writing
inline void cplx_mix_block_tiled(double* re, double* im, const double* cm,
                                 const double* sm, int k, std::int64_t r,
                                 double* sr, double* si) {
    std::int64_t bs = std::int64_t(k) * r;
    for (int a = 0; a < k; ++a) {
        double* orr = sr + std::int64_t(a) * r;
        double* ori = si + std::int64_t(a) * r;
        const double* crow = cm + std::int64_t(a) * k;
        const double* srow = sm + std::int64_t(a) * k;
        std::int64_t q = 0;
        for (; q + kQTile <= r; q += kQTile) {
            double accr[kQTile] = {}, acci[kQTile] = {};
            for (int c = 0; c < k; ++c) {
                double wc = crow[c], ws = srow[c];
                const double* fr = re + std::int64_t(c) * r + q;
                const double* fi = im + std::int64_t(c) * r + q;
#pragma omp simd
                for (int t = 0; t < kQTile; ++t) {
                    accr[t] += wc * fr[t] - ws * fi[t];
                    acci[t] += ws * fr[t] + wc * fi[t];
                }
            }
#pragma omp simd
            for (int t = 0; t < kQTile; ++t) { orr[q + t] = accr[t]; ori[q + t] = acci[t]; }
        }
        for (; q < r; ++q) {
            double accr = 0.0, acci = 0.0;
            for (int c = 0; c < k; ++c) {
                double wc = crow[c], ws = srow[c];
                double fr = re[std::int64_t(c) * r + q];
                double fi = im[std::int64_t(c) * r + q];
                accr += wc * fr - ws * fi;
                acci += ws * fr + wc * fi;
            }
            orr[q] = accr;
            ori[q] = acci;
        }
    }
    for (std::int64_t q = 0; q < bs; ++q) re[q] = sr[q];
    for (std::int64_t q = 0; q < bs; ++q) im[q] = si[q];
}

}  // namespace

void cplx_apply_last(double* re, double* im, const double* ct, const double* st,
                     std::int64_t rows, int k) {
    if (k > kMaxFiber) throw std::invalid_argument("cplx_apply_last: k too large");
    switch (k) {
        case 4: cplx_apply_last_fixed<4>(re, im, ct, st, rows); return;
        case 8: cplx_apply_last_fixed<8>(re, im, ct, st, rows); return;
        case 16: cplx_apply_last_fixed<16>(re, im, ct, st, rows); return;
        case 32: cplx_apply_last_fixed<32>(re, im, ct, st, rows); return;
        default: cplx_apply_last_generic(re, im, ct, st, rows, k); return;
    }
}

void cplx_apply_axis(double* re, double* im, const double* c, const double* s,
                     std::int64_t blocks, int k, std::int64_t r) {
    std::int64_t bs = std::int64_t(k) * r;
    parallel_for(blocks, [&](std::int64_t b, std::int64_t e) {
        std::vector<double> sr(static_cast<std::size_t>(bs));
        std::vector<double> si(static_cast<std::size_t>(bs));
        for (std::int64_t g = b; g < e; ++g)
            cplx_mix_block_tiled(re + g * bs, im + g * bs, c, s, k, r,
                                 sr.data(), si.data());
    });
}

void project_packed_modes(double* const* re, double* const* im, int npairs,
                          int dd, std::int64_t nsites, std::int64_t kp,
                          const std::int64_t* negq, const double* kmulti,
                          const double* pinv2) {
    int ncomp = 2 * npairs;  // padded component count (>= dd)
    parallel_for(nsites, [&](std::int64_t b, std::int64_t e) {
        std::vector<double> scr(std::size_t(2 * npairs) * kp);
        std::vector<double> hr(static_cast<std::size_t>(ncomp));
        std::vector<double> hi(static_cast<std::size_t>(ncomp));
        for (std::int64_t site = b; site < e; ++site) {
            // snapshot the fiber: unpacking mode q reads modes q and -q
            for (int p = 0; p < npairs; ++p) {
                const double* rr = re[p] + site * kp;
                const double* ri = im[p] + site * kp;
                double* sc = scr.data() + std::size_t(2 * p) * kp;
                for (std::int64_t q = 0; q < kp; ++q) sc[q] = rr[q];
                for (std::int64_t q = 0; q < kp; ++q) sc[kp + q] = ri[q];
            }
            for (std::int64_t q = 0; q < kp; ++q) {
                double s = pinv2[q];
                if (s == 0.0) continue;  // zero/Nyquist modes pass through
                std::int64_t nq = negq[q];
                for (int p = 0; p < npairs; ++p) {
                    const double* sc = scr.data() + std::size_t(2 * p) * kp;
                    double zr = sc[q], zi = sc[kp + q];
                    double wr = sc[nq], wi = sc[kp + nq];
                    hr[std::size_t(2 * p)] = 0.5 * (zr + wr);
                    hi[std::size_t(2 * p)] = 0.5 * (zi - wi);
                    hr[std::size_t(2 * p + 1)] = 0.5 * (zi + wi);
                    hi[std::size_t(2 * p + 1)] = 0.5 * (wr - zr);
                }
                const double* pv = kmulti + q * dd;
                double dr = 0.0, di = 0.0;
                for (int m = 0; m < dd; ++m) {
                    dr += pv[m] * hr[std::size_t(m)];
                    di += pv[m] * hi[std::size_t(m)];
                }
                dr *= s;
                di *= s;
                for (int m = 0; m < dd; ++m) {
                    hr[std::size_t(m)] -= pv[m] * dr;
                    hi[std::size_t(m)] -= pv[m] * di;
                }
                for (int p = 0; p < npairs; ++p) {
                    double* rr = re[p] + site * kp;
                    double* ri = im[p] + site * kp;
                    rr[q] = hr[std::size_t(2 * p)] - hi[std::size_t(2 * p + 1)];
                    ri[q] = hi[std::size_t(2 * p)] + hr[std::size_t(2 * p + 1)];
                }
            }
        }
    });
}

// ---- fused 16x16 fiber projector ---------------------------------------------

namespace {

/// Radix-4 DIF pass over the row index of a 16x16 tile (lanes contiguous).
/// Unnormalized; leaves rows in base-4 digit-reversed order.
inline void fft16_rows_fwd(double* __restrict zr, double* __restrict zi,
                           const double* __restrict twr,
                           const double* __restrict twi) {
    for (int j0 = 0; j0 < 4; ++j0) {
        double* ar = zr + j0 * 16;
        double* ai = zi + j0 * 16;
        double* br = zr + (j0 + 4) * 16;
        double* bi = zi + (j0 + 4) * 16;
        double* cr = zr + (j0 + 8) * 16;
        double* ci = zi + (j0 + 8) * 16;
        double* dr = zr + (j0 + 12) * 16;
        double* di = zi + (j0 + 12) * 16;
        double t1r = twr[j0 * 4 + 1], t1i = twi[j0 * 4 + 1];
        double t2r = twr[j0 * 4 + 2], t2i = twi[j0 * 4 + 2];
        double t3r = twr[j0 * 4 + 3], t3i = twi[j0 * 4 + 3];
#pragma omp simd
        for (int l = 0; l < 16; ++l) {
            double apc_r = ar[l] + cr[l], apc_i = ai[l] + ci[l];
            double amc_r = ar[l] - cr[l], amc_i = ai[l] - ci[l];
            double bpd_r = br[l] + dr[l], bpd_i = bi[l] + di[l];
            double bmd_r = br[l] - dr[l], bmd_i = bi[l] - di[l];
            double y1r = amc_r + bmd_i, y1i = amc_i - bmd_r;
            double y2r = apc_r - bpd_r, y2i = apc_i - bpd_i;
            double y3r = amc_r - bmd_i, y3i = amc_i + bmd_r;
            ar[l] = apc_r + bpd_r;
            ai[l] = apc_i + bpd_i;
            br[l] = t1r * y1r - t1i * y1i;
            bi[l] = t1r * y1i + t1i * y1r;
            cr[l] = t2r * y2r - t2i * y2i;
            ci[l] = t2r * y2i + t2i * y2r;
            dr[l] = t3r * y3r - t3i * y3i;
            di[l] = t3r * y3i + t3i * y3r;
        }
    }
    for (int g = 0; g < 4; ++g) {
        double* ar = zr + 4 * g * 16;
        double* ai = zi + 4 * g * 16;
        double* br = ar + 16;
        double* bi = ai + 16;
        double* cr = ar + 32;
        double* ci = ai + 32;
        double* dr = ar + 48;
        double* di = ai + 48;
#pragma omp simd
        for (int l = 0; l < 16; ++l) {
            double apc_r = ar[l] + cr[l], apc_i = ai[l] + ci[l];
            double amc_r = ar[l] - cr[l], amc_i = ai[l] - ci[l];
            double bpd_r = br[l] + dr[l], bpd_i = bi[l] + di[l];
            double bmd_r = br[l] - dr[l], bmd_i = bi[l] - di[l];
            ar[l] = apc_r + bpd_r;
            ai[l] = apc_i + bpd_i;
            br[l] = amc_r + bmd_i;
            bi[l] = amc_i - bmd_r;
            cr[l] = apc_r - bpd_r;
            ci[l] = apc_i - bpd_i;
            dr[l] = amc_r - bmd_i;
            di[l] = amc_i + bmd_r;
        }
    }
}

/// Radix-4 DIT pass over the row index: digit-reversed rows back to natural
/// order. itwr/itwi are the conjugate twiddles; unnormalized.
inline void fft16_rows_inv(double* __restrict zr, double* __restrict zi,
                           const double* __restrict itwr,
                           const double* __restrict itwi) {
    for (int g = 0; g < 4; ++g) {
        double* ar = zr + 4 * g * 16;
        double* ai = zi + 4 * g * 16;
        double* br = ar + 16;
        double* bi = ai + 16;
        double* cr = ar + 32;
        double* ci = ai + 32;
        double* dr = ar + 48;
        double* di = ai + 48;
#pragma omp simd
        for (int l = 0; l < 16; ++l) {
            double apc_r = ar[l] + cr[l], apc_i = ai[l] + ci[l];
            double amc_r = ar[l] - cr[l], amc_i = ai[l] - ci[l];
            double bpd_r = br[l] + dr[l], bpd_i = bi[l] + di[l];
            double bmd_r = br[l] - dr[l], bmd_i = bi[l] - di[l];
            ar[l] = apc_r + bpd_r;
            ai[l] = apc_i + bpd_i;
            br[l] = amc_r - bmd_i;
            bi[l] = amc_i + bmd_r;
            cr[l] = apc_r - bpd_r;
            ci[l] = apc_i - bpd_i;
            dr[l] = amc_r + bmd_i;
            di[l] = amc_i - bmd_r;
        }
    }
    for (int j0 = 0; j0 < 4; ++j0) {
        double* ar = zr + j0 * 16;
        double* ai = zi + j0 * 16;
        double* br = zr + (j0 + 4) * 16;
        double* bi = zi + (j0 + 4) * 16;
        double* cr = zr + (j0 + 8) * 16;
        double* ci = zi + (j0 + 8) * 16;
        double* dr = zr + (j0 + 12) * 16;
        double* di = zi + (j0 + 12) * 16;
        double t1r = itwr[j0 * 4 + 1], t1i = itwi[j0 * 4 + 1];
        double t2r = itwr[j0 * 4 + 2], t2i = itwi[j0 * 4 + 2];
        double t3r = itwr[j0 * 4 + 3], t3i = itwi[j0 * 4 + 3];
#pragma omp simd
        for (int l = 0; l < 16; ++l) {
            double v1r = t1r * br[l] - t1i * bi[l];
            double v1i = t1r * bi[l] + t1i * br[l];
            double v2r = t2r * cr[l] - t2i * ci[l];
            double v2i = t2r * ci[l] + t2i * cr[l];
            double v3r = t3r * dr[l] - t3i * di[l];
            double v3i = t3r * di[l] + t3i * dr[l];
            double apc_r = ar[l] + v2r, apc_i = ai[l] + v2i;
            double amc_r = ar[l] - v2r, amc_i = ai[l] - v2i;
            double bpd_r = v1r + v3r, bpd_i = v1i + v3i;
            double bmd_r = v1r - v3r, bmd_i = v1i - v3i;
            ar[l] = apc_r + bpd_r;
            ai[l] = apc_i + bpd_i;
            br[l] = amc_r - bmd_i;
            bi[l] = amc_i + bmd_r;
            cr[l] = apc_r - bpd_r;
            ci[l] = apc_i - bpd_i;
            dr[l] = amc_r + bmd_i;
            di[l] = amc_i - bmd_r;
        }
    }
}

inline void transpose16(double* __restrict z) {
    for (int a = 0; a < 16; ++a)
        for (int b = a + 1; b < 16; ++b) std::swap(z[a * 16 + b], z[b * 16 + a]);
}

}  // namespace

void project_fft16_pair(double* f0, double* f1, std::int64_t nsites,
                        const double* twr, const double* twi,
                        const double* itwr, const double* itwi,
                        const std::int64_t* negp, const double* kx,
                        const double* ky, const double* pinv2) {
    parallel_for(nsites, [&](std::int64_t b, std::int64_t e) {
        double zr[256], zi[256], pr[256], pi[256];
        for (std::int64_t site = b; site < e; ++site) {
            double* g0 = f0 + site * 256;
            double* g1 = f1 + site * 256;
            for (int q = 0; q < 256; ++q) zr[q] = g0[q];
            for (int q = 0; q < 256; ++q) zi[q] = g1[q];
            fft16_rows_fwd(zr, zi, twr, twi);
            transpose16(zr);
            transpose16(zi);
            fft16_rows_fwd(zr, zi, twr, twi);
            // project reading the untouched spectrum: mode p pairs with negp[p]
            for (int q = 0; q < 256; ++q) pr[q] = zr[q];
            for (int q = 0; q < 256; ++q) pi[q] = zi[q];
            for (int p = 0; p < 256; ++p) {
                double s = pinv2[p];
                if (s == 0.0) continue;
                std::int64_t nq = negp[p];
                double z_r = zr[p], z_i = zi[p];
                double w_r = zr[nq], w_i = zi[nq];
                double h0r = 0.5 * (z_r + w_r), h0i = 0.5 * (z_i - w_i);
                double h1r = 0.5 * (z_i + w_i), h1i = 0.5 * (w_r - z_r);
                double d_r = (kx[p] * h0r + ky[p] * h1r) * s;
                double d_i = (kx[p] * h0i + ky[p] * h1i) * s;
                h0r -= kx[p] * d_r;
                h0i -= kx[p] * d_i;
                h1r -= ky[p] * d_r;
                h1i -= ky[p] * d_i;
                pr[p] = h0r - h1i;
                pi[p] = h0i + h1r;
            }
            fft16_rows_inv(pr, pi, itwr, itwi);
            transpose16(pr);
            transpose16(pi);
            fft16_rows_inv(pr, pi, itwr, itwi);
            constexpr double kNorm = 1.0 / 256.0;
            for (int q = 0; q < 256; ++q) g0[q] = pr[q] * kNorm;
            for (int q = 0; q < 256; ++q) g1[q] = pi[q] * kNorm;
        }
    });
}

// ==== fused elementwise multiply-accumulate =================================

void mac_sum(double* out, const double* const* x, const double* const* y,
             const double* c, int nterms, std::int64_t n) {
    parallel_for(n, [&](std::int64_t lo, std::int64_t hi) {
        std::int64_t q = lo;
        for (; q + 8 <= hi; q += 8) {
            double acc[8];
#pragma omp simd
            for (int t = 0; t < 8; ++t) acc[t] = out[q + t];
            for (int tm = 0; tm < nterms; ++tm) {
                const double* xp = x[tm] + q;
                const double* yp = y[tm] + q;
                const double cv = c[tm];
#pragma omp simd
                for (int t = 0; t < 8; ++t) acc[t] += cv * xp[t] * yp[t];
            }
#pragma omp simd
            for (int t = 0; t < 8; ++t) out[q + t] = acc[t];
        }
        for (; q < hi; ++q) {
            double acc = out[q];
            for (int tm = 0; tm < nterms; ++tm) acc += c[tm] * x[tm][q] * y[tm][q];
            out[q] = acc;
        }
    });
}

// ==== shared 16x16 fiber-tile helpers =======================================

namespace {

// Shared GEMM microkernel for the 16x16 tiles. Four output rows go together
// so eight vector accumulators keep independent fused-multiply chains in
// flight (one chain per accumulator is latency-bound). kSlow broadcasts the
// matrix element (slow-axis derivative, streams src rows); the fast-axis form
// broadcasts the tile element and streams matrix rows. kAdd accumulates
// s * result into dst, otherwise the result overwrites dst. Per-element
// accumulation order (c ascending) matches the plain triple loop.
template <bool kSlow, bool kAdd>
inline void tile_mm16(const double* mat, const double* src, double s,
                      double* dst) {
    for (int r = 0; r < 16; r += 4) {
        double a0[16] = {}, a1[16] = {}, a2[16] = {}, a3[16] = {};
        const double* b0 = (kSlow ? mat : src) + r * 16;
        const double* b1 = b0 + 16;
        const double* b2 = b0 + 32;
        const double* b3 = b0 + 48;
        const double* row = kSlow ? src : mat;
        for (int c = 0; c < 16; ++c, row += 16) {
            const double v0 = b0[c], v1 = b1[c], v2 = b2[c], v3 = b3[c];
#pragma omp simd
            for (int t = 0; t < 16; ++t) {
                a0[t] += v0 * row[t];
                a1[t] += v1 * row[t];
                a2[t] += v2 * row[t];
                a3[t] += v3 * row[t];
            }
        }
        double* o0 = dst + r * 16;
        double* o1 = o0 + 16;
        double* o2 = o0 + 32;
        double* o3 = o0 + 48;
#pragma omp simd
        for (int t = 0; t < 16; ++t) {
            if constexpr (kAdd) {
                o0[t] += s * a0[t];
                o1[t] += s * a1[t];
                o2[t] += s * a2[t];
                o3[t] += s * a3[t];
            } else {
                o0[t] = a0[t];
                o1[t] = a1[t];
                o2[t] = a2[t];
                o3[t] = a3[t];
            }
        }
    }
}

// dst[r][t] = sum_c d[r][c] * src[c][t] — derivative along the slow fiber axis
inline void tile_dslow(const double* d, const double* src, double* dst) {
    tile_mm16<true, false>(d, src, 1.0, dst);
}

// dst[r][t] = sum_c src[r][c] * dt[c][t] — derivative along the fast axis
inline void tile_dfast(const double* dt, const double* src, double* dst) {
    tile_mm16<false, false>(dt, src, 1.0, dst);
}

// dst[r][t] += s * sum_c d[r][c] * src[c][t]
inline void tile_dslow_add(const double* d, const double* src, double s,
                           double* dst) {
    tile_mm16<true, true>(d, src, s, dst);
}

// dst[r][t] += s * sum_c src[r][c] * dt[c][t]
inline void tile_dfast_add(const double* dt, const double* src, double s,
                           double* dst) {
    tile_mm16<false, true>(dt, src, s, dst);
}

inline void tile_dax(int ax, const double* d, const double* dt,
                     const double* src, double* dst) {
    if (ax == 0)
        tile_dslow(d, src, dst);
    else
        tile_dfast(dt, src, dst);
}

inline void tile_prod(const double* x, const double* y, double* dst) {
#pragma omp simd
    for (int q = 0; q < 256; ++q) dst[q] = x[q] * y[q];
}

inline void tile_addmul(double* dst, double s, const double* x,
                        const double* y) {
#pragma omp simd
    for (int q = 0; q < 256; ++q) dst[q] += s * x[q] * y[q];
}

}  // namespace

// ==== fused conservative inner transport ====================================

void transport_div16_pair(const double* u0, const double* u1, const double* v0,
                          const double* v1, double s, double* out0,
                          double* out1, std::int64_t nsites, const double* d,
                          const double* dt) {
    parallel_for(nsites, [&](std::int64_t b, std::int64_t e) {
        double p0[256], p1[256], res[256];
        for (std::int64_t site = b; site < e; ++site) {
            const std::int64_t off = site * 256;
            const double* vv0 = v0 + off;
            const double* vv1 = v1 + off;
            for (int m = 0; m < 2; ++m) {
                const double* uu = (m == 0 ? u0 : u1) + off;
                double* oo = (m == 0 ? out0 : out1) + off;
#pragma omp simd
                for (int q = 0; q < 256; ++q) p0[q] = uu[q] * vv0[q];
#pragma omp simd
                for (int q = 0; q < 256; ++q) p1[q] = uu[q] * vv1[q];
                // axis 0 (strided rows): res[r][:] = sum_c d[r][c] * p0[c][:]
                for (int r = 0; r < 16; ++r) {
                    double acc[16] = {};
                    for (int c = 0; c < 16; ++c) {
                        const double dv = d[r * 16 + c];
                        const double* pc = p0 + c * 16;
#pragma omp simd
                        for (int t = 0; t < 16; ++t) acc[t] += dv * pc[t];
                    }
                    double* rr = res + r * 16;
#pragma omp simd
                    for (int t = 0; t < 16; ++t) rr[t] = acc[t];
                }
                // axis 1 (contiguous rows): res[r][:] += sum_c p1[r][c] * dt[c][:]
                for (int r = 0; r < 16; ++r) {
                    double* rr = res + r * 16;
                    double acc[16];
#pragma omp simd
                    for (int t = 0; t < 16; ++t) acc[t] = rr[t];
                    const double* pr = p1 + r * 16;
                    for (int c = 0; c < 16; ++c) {
                        const double pv = pr[c];
                        const double* dc = dt + c * 16;
#pragma omp simd
                        for (int t = 0; t < 16; ++t) acc[t] += pv * dc[t];
                    }
#pragma omp simd
                    for (int t = 0; t < 16; ++t) rr[t] = acc[t];
                }
#pragma omp simd
                for (int q = 0; q < 256; ++q) oo[q] += s * res[q];
            }
        }
    });
}

// ==== fused fiber bracket ===================================================

void bracket16_pair(const double* u0, const double* u1, const double* v0,
                    const double* v1, double s, double* out0, double* out1,
                    std::int64_t nsites, const double* d, const double* dt) {
    parallel_for(nsites, [&](std::int64_t b, std::int64_t e) {
        double t[256];
        for (std::int64_t site = b; site < e; ++site) {
            const std::int64_t off = site * 256;
            const double* uu[2] = {u0 + off, u1 + off};
            const double* vv[2] = {v0 + off, v1 + off};
            double* oo[2] = {out0 + off, out1 + off};
            for (int m = 0; m < 2; ++m)
                for (int ax = 0; ax < 2; ++ax) {
                    tile_dax(ax, d, dt, vv[m], t);
                    tile_addmul(oo[m], s, uu[ax], t);
                    tile_dax(ax, d, dt, uu[m], t);
                    tile_addmul(oo[m], -s, vv[ax], t);
                }
        }
    });
}

// ==== fused constraint-source fiber terms ===================================

void gauss_fiber16(const double* a10, const double* a11, const double* a20,
                   const double* a21, const double* p10, const double* p11,
                   const double* p20, const double* p21, double* out0,
                   double* out1, std::int64_t nsites, const double* d,
                   const double* dt) {
    parallel_for(nsites, [&](std::int64_t b, std::int64_t e) {
        double t[256];
        for (std::int64_t site = b; site < e; ++site) {
            const std::int64_t off = site * 256;
            const double* aa[2][2] = {{a10 + off, a11 + off},
                                      {a20 + off, a21 + off}};
            const double* pp[2][2] = {{p10 + off, p11 + off},
                                      {p20 + off, p21 + off}};
            double* oo[2] = {out0 + off, out1 + off};
            for (int i = 0; i < 2; ++i)
                for (int m = 0; m < 2; ++m) {
                    // advection a_i^n D_n p_i^m
                    for (int ax = 0; ax < 2; ++ax) {
                        tile_dax(ax, d, dt, pp[i][m], t);
                        tile_addmul(oo[m], 1.0, aa[i][ax], t);
                    }
                    // co-gradient p_i^n D_m a_i^n
                    for (int n = 0; n < 2; ++n) {
                        tile_dax(m, d, dt, aa[i][n], t);
                        tile_addmul(oo[m], 1.0, pp[i][n], t);
                    }
                }
        }
    });
}

// ==== fused canonical right-hand side fiber terms ===========================

void axial_fiber16(const double* a10, const double* a11, const double* a20,
                   const double* a21, const double* p10, const double* p11,
                   const double* p20, const double* p21, const double* a00,
                   const double* a01, const double* f0, const double* f1,
                   double lam, double* da10, double* da11, double* da20,
                   double* da21, double* dp10, double* dp11, double* dp20,
                   double* dp21, std::int64_t nsites, const double* d,
                   const double* dt) {
    parallel_for(nsites, [&](std::int64_t b, std::int64_t e) {
        // derivatives of both transverse potentials, reused by the advection
        // and magnetic co-gradient terms: dA[i][n][ax] = D_ax a_i^n
        double dA[2][2][2][256];
        double t[256], pr[256];
        for (std::int64_t site = b; site < e; ++site) {
            const std::int64_t off = site * 256;
            const double* aa[2][2] = {{a10 + off, a11 + off},
                                      {a20 + off, a21 + off}};
            const double* pp[2][2] = {{p10 + off, p11 + off},
                                      {p20 + off, p21 + off}};
            const double* a0c[2] = {a00 + off, a01 + off};
            const double* fc[2] = {f0 + off, f1 + off};
            double* da[2][2] = {{da10 + off, da11 + off},
                                {da20 + off, da21 + off}};
            double* dp[2][2] = {{dp10 + off, dp11 + off},
                                {dp20 + off, dp21 + off}};
            for (int i = 0; i < 2; ++i)
                for (int n = 0; n < 2; ++n)
                    for (int ax = 0; ax < 2; ++ax)
                        tile_dax(ax, d, dt, aa[i][n], dA[i][n][ax]);
            for (int i = 0; i < 2; ++i) {
                const int k = 1 - i;
                const double slam = (i == 0) ? -lam : lam;
                for (int m = 0; m < 2; ++m) {
                    // da_i^m += D_n(a0^m a_i^n) - a0^n D_n a_i^m
                    tile_prod(a0c[m], aa[i][0], pr);
                    tile_dslow_add(d, pr, 1.0, da[i][m]);
                    tile_prod(a0c[m], aa[i][1], pr);
                    tile_dfast_add(dt, pr, 1.0, da[i][m]);
                    tile_addmul(da[i][m], -1.0, a0c[0], dA[i][m][0]);
                    tile_addmul(da[i][m], -1.0, a0c[1], dA[i][m][1]);
                    // dp_i^m += s_i lam [ D_n(f^m a_k^n) + f^n D_m a_k^n ]
                    tile_prod(fc[m], aa[k][0], pr);
                    tile_dslow_add(d, pr, slam, dp[i][m]);
                    tile_prod(fc[m], aa[k][1], pr);
                    tile_dfast_add(dt, pr, slam, dp[i][m]);
                    tile_addmul(dp[i][m], slam, fc[0], dA[k][0][m]);
                    tile_addmul(dp[i][m], slam, fc[1], dA[k][1][m]);
                    // dp_i^m += a0^n D_m p_i^n - D_n(a0^n p_i^m)
                    tile_dax(m, d, dt, pp[i][0], t);
                    tile_addmul(dp[i][m], 1.0, a0c[0], t);
                    tile_dax(m, d, dt, pp[i][1], t);
                    tile_addmul(dp[i][m], 1.0, a0c[1], t);
                    tile_prod(a0c[0], pp[i][m], pr);
                    tile_dslow_add(d, pr, -1.0, dp[i][m]);
                    tile_prod(a0c[1], pp[i][m], pr);
                    tile_dfast_add(dt, pr, -1.0, dp[i][m]);
                }
            }
        }
    });
}

}  // namespace isodyn::kern

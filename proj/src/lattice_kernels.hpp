/// Internal hot-loop kernels for the derivative engine. All loops are
/// range-independent (disjoint outputs per row / block / site), so they may be
/// driven by parallel_for with any chunking. This translation unit is compiled
/// with floating-point contraction enabled; nothing here participates in the
/// sign-symmetric cancellation identities of the algebra layer.
#pragma once

#include <cstdint>

namespace isodyn::kern {

/// out[r][j] = sum_c in[r][c] * wt[c][j] for `rows` contiguous fibers of
/// length k; wt is the transposed weight matrix, [in][out] row-major.
/// in and out must not alias.
void fiber_apply_last(const double* in, const double* wt, double* out,
                      std::int64_t rows, int k);

/// Per block of shape (k x r), row-major with contiguous r:
/// out[a][q] = sum_c w[a][c] * in[c][q]; w is [out][in] row-major.
/// Blocks are contiguous with stride k*r. in and out must not alias.
void fiber_apply_axis(const double* in, const double* w, double* out,
                      std::int64_t blocks, int k, std::int64_t r);

/// Row mixing of a (nrow x ncol) row-major matrix repeated nbatch times with
/// batch stride nrow*ncol: out[a][:] = sum_c w[a][c] * in[c][:] per batch.
/// w is [out][in] row-major. in and out must not alias.
void row_mix_batch(const double* in, const double* w, double* out, int nrow,
                   std::int64_t ncol, std::int64_t nbatch);

/// Complex analogue of fiber_apply_last on split re/im arrays, in place:
/// (re + i im)[r][j] = sum_c (ct + i st)[c][j] * (re + i im)[r][c].
/// ct/st are the transposed weight matrices, [in][out] row-major. k <= 256.
void cplx_apply_last(double* re, double* im, const double* ct, const double* st,
                     std::int64_t rows, int k);

/// Complex analogue of fiber_apply_axis on split re/im arrays, in place:
/// per (k x r) block, (re + i im)[a][q] = sum_c (c + i s)[a][c]*(re + i im)[c][q].
void cplx_apply_axis(double* re, double* im, const double* c, const double* s,
                     std::int64_t blocks, int k, std::int64_t r);

/// Transverse mode projection on packed spectra. re[p]/im[p] hold the packed
/// complex spectrum of components (2p, 2p+1); for odd dd the last im slot is a
/// zero pad. Per site fiber of kp modes: unpack the two real-field spectra via
/// Hermitian symmetry (negq maps a mode to its negative), remove the
/// longitudinal part along kmulti (dd wave-number components per mode,
/// pinv2 = 1/|k|^2 with zero entries skipped), and repack in place.
void project_packed_modes(double* const* re, double* const* im, int npairs,
                          int dd, std::int64_t nsites, std::int64_t kp,
                          const std::int64_t* negq, const double* kmulti,
                          const double* pinv2);

/// Fused transverse projection for the two-component 16x16 fiber: per site,
/// forward radix-4 FFT over both fiber axes, mode projection, inverse FFT,
/// entirely in L1. f0/f1 are the two component arrays (the packed complex
/// field f0 + i f1), updated in place. twr/twi are the 16 stage-one forward
/// twiddles (index j*4+k), itwr/itwi their conjugates. negp/kx/ky/pinv2 are
/// the projection tables of project_packed_modes reordered to the kernel's
/// digit-reversed spectral layout.
void project_fft16_pair(double* f0, double* f1, std::int64_t nsites,
                        const double* twr, const double* twi,
                        const double* itwr, const double* itwi,
                        const std::int64_t* negp, const double* kx,
                        const double* ky, const double* pinv2);

/// Fused multiply-accumulate of elementwise products:
/// out[q] += sum_t c[t] * x[t][q] * y[t][q]. One pass over out instead of
/// nterms separate passes. Inputs must not alias out.
void mac_sum(double* out, const double* const* x, const double* const* y,
             const double* c, int nterms, std::int64_t n);

/// Conservative inner transport on the two-component 16x16 fiber:
/// out_m[q] += s * (D_ax0(u_m * v_0) + D_ax1(u_m * v_1))[q] per site, with
/// the products and both dense 16-point derivative applications kept in L1.
/// d is the derivative matrix [out][in] row-major, dt its transpose. Inputs
/// must not alias outputs.
void transport_div16_pair(const double* u0, const double* u1, const double* v0,
                          const double* v1, double s, double* out0,
                          double* out1, std::int64_t nsites, const double* d,
                          const double* dt);

/// Fiber bracket accumulation on the two-component 16x16 fiber:
/// out_m += s * (u_n D_n v_m - v_n D_n u_m) per site (sum over n), every
/// derivative applied as a dense 16-point matrix in L1. d is the derivative
/// matrix [out][in] row-major, dt its transpose. Inputs must not alias
/// outputs.
void bracket16_pair(const double* u0, const double* u1, const double* v0,
                    const double* v1, double s, double* out0, double* out1,
                    std::int64_t nsites, const double* d, const double* dt);

/// Fiber part of the constraint source on the two-component 16x16 fiber:
/// out_m += sum_i [ a_i^n D_n p_i^m + p_i^n D_m a_i^n ] per site for the two
/// banks (a1,p1) and (a2,p2), sum over n. Layout conventions as above.
void gauss_fiber16(const double* a10, const double* a11, const double* a20,
                   const double* a21, const double* p10, const double* p11,
                   const double* p20, const double* p21, double* out0,
                   double* out1, std::int64_t nsites, const double* d,
                   const double* dt);

/// Every fiber-space term of the canonical right-hand side on the
/// two-component 16x16 fiber, accumulated in one pass per site:
///   da_i^m  += D_n(a0^m a_i^n) - a0^n D_n a_i^m
///   dp_i^m  += s_i lam [ D_n(f^m a_k^n) + f^n D_m a_k^n ]
///              + a0^n D_m p_i^n - D_n(a0^n p_i^m)
/// with k = 1 - i, s_0 = -1, s_1 = +1, sums over n. f is the transverse
/// magnetic component, a0 the constraint potential. Layout conventions as
/// above; inputs must not alias outputs.
void axial_fiber16(const double* a10, const double* a11, const double* a20,
                   const double* a21, const double* p10, const double* p11,
                   const double* p20, const double* p21, const double* a00,
                   const double* a01, const double* f0, const double* f1,
                   double lam, double* da10, double* da11, double* da20,
                   double* da21, double* dp10, double* dp11, double* dp20,
                   double* dp21, std::int64_t nsites, const double* d,
                   const double* dt);

}  // namespace isodyn::kern

// Compiled with -mavx2 only (no -mfma): every multiply and add is issued
// separately so results match the scalar kernels bit for bit.

#include "mrf/simd.hpp"

#include <immintrin.h>

#include <algorithm>

namespace mrf::simd {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
        acc1 = _mm256_add_pd(acc1,
                             _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    acc0 = _mm256_add_pd(acc0, acc1);
    const __m128d lo = _mm256_castpd256_pd128(acc0);
    const __m128d hi = _mm256_extractf128_pd(acc0, 1);
    __m128d s = _mm_add_pd(lo, hi);
    s = _mm_add_sd(s, _mm_unpackhi_pd(s, s));
    double acc = _mm_cvtsd_f64(s);
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d vy = _mm256_loadu_pd(y + i);
        _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i))));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void score_planes(const float* planes, std::size_t stride, std::size_t count, std::size_t k,
                  const float* query, float* out) {
    // Blocks of 32 rows keep the accumulators in registers across all k planes.
    std::size_t j = 0;
    for (; j + 32 <= count; j += 32) {
        __m256 a0 = _mm256_setzero_ps(), a1 = _mm256_setzero_ps();
        __m256 a2 = _mm256_setzero_ps(), a3 = _mm256_setzero_ps();
        for (std::size_t c = 0; c < k; ++c) {
            const float* p = planes + c * stride + j;
            const __m256 q = _mm256_set1_ps(query[c]);
            a0 = _mm256_add_ps(a0, _mm256_mul_ps(_mm256_loadu_ps(p), q));
            a1 = _mm256_add_ps(a1, _mm256_mul_ps(_mm256_loadu_ps(p + 8), q));
            a2 = _mm256_add_ps(a2, _mm256_mul_ps(_mm256_loadu_ps(p + 16), q));
            a3 = _mm256_add_ps(a3, _mm256_mul_ps(_mm256_loadu_ps(p + 24), q));
        }
        _mm256_storeu_ps(out + j, a0);
        _mm256_storeu_ps(out + j + 8, a1);
        _mm256_storeu_ps(out + j + 16, a2);
        _mm256_storeu_ps(out + j + 24, a3);
    }
    for (; j + 8 <= count; j += 8) {
        __m256 a0 = _mm256_setzero_ps();
        for (std::size_t c = 0; c < k; ++c) {
            const __m256 q = _mm256_set1_ps(query[c]);
            a0 = _mm256_add_ps(a0, _mm256_mul_ps(_mm256_loadu_ps(planes + c * stride + j), q));
        }
        _mm256_storeu_ps(out + j, a0);
    }
    for (; j < count; ++j) {
        float acc = 0.0f;
        for (std::size_t c = 0; c < k; ++c) acc += planes[c * stride + j] * query[c];
        out[j] = acc;
    }
}

constexpr std::size_t kGramTile = 64;

inline void row_update(double* g, const double* x, double xa, std::size_t b, std::size_t b1) {
    const __m256d va = _mm256_set1_pd(xa);
    for (; b + 4 <= b1; b += 4) {
        const __m256d vg = _mm256_loadu_pd(g + b);
        _mm256_storeu_pd(g + b, _mm256_add_pd(vg, _mm256_mul_pd(va, _mm256_loadu_pd(x + b))));
    }
    for (; b < b1; ++b) g[b] += xa * x[b];
}

void gram_update(const double* rows, std::size_t nrows, std::size_t dim, std::size_t ld,
                 double* gram) {
    for (std::size_t a0 = 0; a0 < dim; a0 += kGramTile) {
        const std::size_t a1 = std::min(dim, a0 + kGramTile);
        for (std::size_t b0 = a0; b0 < dim; b0 += kGramTile) {
            const std::size_t b1 = std::min(dim, b0 + kGramTile);
            for (std::size_t r = 0; r < nrows; ++r) {
                const double* x = rows + r * ld;
                for (std::size_t a = a0; a < a1; ++a)
                    row_update(gram + a * ld, x, x[a], std::max(a, b0), b1);
            }
        }
    }
}

void cross_update(const double* x, const double* y, std::size_t nrows, std::size_t dim,
                  std::size_t ld, double* out) {
    for (std::size_t a0 = 0; a0 < dim; a0 += kGramTile) {
        const std::size_t a1 = std::min(dim, a0 + kGramTile);
        for (std::size_t b0 = 0; b0 < dim; b0 += kGramTile) {
            const std::size_t b1 = std::min(dim, b0 + kGramTile);
            for (std::size_t r = 0; r < nrows; ++r) {
                const double* xr = x + r * ld;
                const double* yr = y + r * ld;
                for (std::size_t a = a0; a < a1; ++a) row_update(out + a * ld, yr, xr[a], b0, b1);
            }
        }
    }
}

inline void scale(double* p, std::size_t n, __m256d v, double s) {
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) _mm256_storeu_pd(p + k, _mm256_mul_pd(_mm256_loadu_pd(p + k), v));
    for (; k < n; ++k) p[k] *= s;
}

void epg_relax(EpgPlanes st, std::size_t n, double e1, double e2) {
    const __m256d v2 = _mm256_set1_pd(e2);
    const __m256d v1 = _mm256_set1_pd(e1);
    scale(st.fp_re, n, v2, e2);
    scale(st.fp_im, n, v2, e2);
    scale(st.fm_re, n, v2, e2);
    scale(st.fm_im, n, v2, e2);
    scale(st.z_re, n, v1, e1);
    scale(st.z_im, n, v1, e1);
}

void epg_rotate(EpgPlanes st, std::size_t n, const RfMatrix& t) {
    __m256d tr[9], ti[9];
    for (int i = 0; i < 9; ++i) {
        tr[i] = _mm256_set1_pd(t.re[i]);
        ti[i] = _mm256_set1_pd(t.im[i]);
    }
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        const __m256d x0r = _mm256_loadu_pd(st.fp_re + k), x0i = _mm256_loadu_pd(st.fp_im + k);
        const __m256d x1r = _mm256_loadu_pd(st.fm_re + k), x1i = _mm256_loadu_pd(st.fm_im + k);
        const __m256d x2r = _mm256_loadu_pd(st.z_re + k), x2i = _mm256_loadu_pd(st.z_im + k);
        __m256d out_r[3], out_i[3];
        for (int row = 0; row < 3; ++row) {
            const __m256d* rr = tr + 3 * row;
            const __m256d* ri = ti + 3 * row;
            const __m256d p0r = _mm256_sub_pd(_mm256_mul_pd(rr[0], x0r), _mm256_mul_pd(ri[0], x0i));
            const __m256d p1r = _mm256_sub_pd(_mm256_mul_pd(rr[1], x1r), _mm256_mul_pd(ri[1], x1i));
            const __m256d p2r = _mm256_sub_pd(_mm256_mul_pd(rr[2], x2r), _mm256_mul_pd(ri[2], x2i));
            out_r[row] = _mm256_add_pd(_mm256_add_pd(p0r, p1r), p2r);
            const __m256d p0i = _mm256_add_pd(_mm256_mul_pd(rr[0], x0i), _mm256_mul_pd(ri[0], x0r));
            const __m256d p1i = _mm256_add_pd(_mm256_mul_pd(rr[1], x1i), _mm256_mul_pd(ri[1], x1r));
            const __m256d p2i = _mm256_add_pd(_mm256_mul_pd(rr[2], x2i), _mm256_mul_pd(ri[2], x2r));
            out_i[row] = _mm256_add_pd(_mm256_add_pd(p0i, p1i), p2i);
        }
        _mm256_storeu_pd(st.fp_re + k, out_r[0]);
        _mm256_storeu_pd(st.fp_im + k, out_i[0]);
        _mm256_storeu_pd(st.fm_re + k, out_r[1]);
        _mm256_storeu_pd(st.fm_im + k, out_i[1]);
        _mm256_storeu_pd(st.z_re + k, out_r[2]);
        _mm256_storeu_pd(st.z_im + k, out_i[2]);
    }
    if (k < n) {
        EpgPlanes tail{st.fp_re + k, st.fp_im + k, st.fm_re + k,
                       st.fm_im + k, st.z_re + k,  st.z_im + k};
        scalar_kernels().epg_rotate(tail, n - k, t);
    }
}

void epg_rotate_real(EpgPlanes st, std::size_t n, const RfMatrix& t) {
    __m256d m[9];
    for (int i = 0; i < 9; ++i) m[i] = _mm256_set1_pd(t.re[i]);
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        const __m256d x0 = _mm256_loadu_pd(st.fp_re + k);
        const __m256d x1 = _mm256_loadu_pd(st.fm_re + k);
        const __m256d x2 = _mm256_loadu_pd(st.z_re + k);
        const auto row = [&](int r) {
            return _mm256_add_pd(
                _mm256_add_pd(_mm256_mul_pd(m[3 * r], x0), _mm256_mul_pd(m[3 * r + 1], x1)),
                _mm256_mul_pd(m[3 * r + 2], x2));
        };
        _mm256_storeu_pd(st.fp_re + k, row(0));
        _mm256_storeu_pd(st.fm_re + k, row(1));
        _mm256_storeu_pd(st.z_re + k, row(2));
    }
    if (k < n) {
        EpgPlanes tail{st.fp_re + k, st.fp_im + k, st.fm_re + k,
                       st.fm_im + k, st.z_re + k,  st.z_im + k};
        scalar_kernels().epg_rotate_real(tail, n - k, t);
    }
}

}  // namespace

const KernelTable* avx2_kernels() {
    static const KernelTable table{Isa::Avx2,    dot,          axpy,      score_planes,
                                   gram_update,  cross_update, epg_relax, epg_rotate,
                                   epg_rotate_real};
    return &table;
}

}  // namespace mrf::simd

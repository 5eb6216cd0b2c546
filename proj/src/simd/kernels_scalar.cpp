#include "mrf/simd.hpp"

#include <algorithm>

namespace mrf::simd {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void score_planes(const float* planes, std::size_t stride, std::size_t count, std::size_t k,
                  const float* query, float* out) {
    std::fill(out, out + count, 0.0f);
    for (std::size_t c = 0; c < k; ++c) {
        const float* p = planes + c * stride;
        const float q = query[c];
        for (std::size_t j = 0; j < count; ++j) out[j] += p[j] * q;
    }
}

constexpr std::size_t kGramTile = 64;

void gram_update(const double* rows, std::size_t nrows, std::size_t dim, std::size_t ld,
                 double* gram) {
    for (std::size_t a0 = 0; a0 < dim; a0 += kGramTile) {
        const std::size_t a1 = std::min(dim, a0 + kGramTile);
        for (std::size_t b0 = a0; b0 < dim; b0 += kGramTile) {
            const std::size_t b1 = std::min(dim, b0 + kGramTile);
            for (std::size_t r = 0; r < nrows; ++r) {
                const double* x = rows + r * ld;
                for (std::size_t a = a0; a < a1; ++a) {
                    const double xa = x[a];
                    double* g = gram + a * ld;
                    for (std::size_t b = std::max(a, b0); b < b1; ++b) g[b] += xa * x[b];
                }
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
                for (std::size_t a = a0; a < a1; ++a) {
                    const double xa = xr[a];
                    double* o = out + a * ld;
                    for (std::size_t b = b0; b < b1; ++b) o[b] += xa * yr[b];
                }
            }
        }
    }
}

void epg_relax(EpgPlanes st, std::size_t n, double e1, double e2) {
    for (std::size_t k = 0; k < n; ++k) {
        st.fp_re[k] *= e2;
        st.fp_im[k] *= e2;
        st.fm_re[k] *= e2;
        st.fm_im[k] *= e2;
        st.z_re[k] *= e1;
        st.z_im[k] *= e1;
    }
}

void epg_rotate(EpgPlanes st, std::size_t n, const RfMatrix& t) {
    const double* tr = t.re;
    const double* ti = t.im;
    for (std::size_t k = 0; k < n; ++k) {
        const double x0r = st.fp_re[k], x0i = st.fp_im[k];
        const double x1r = st.fm_re[k], x1i = st.fm_im[k];
        const double x2r = st.z_re[k], x2i = st.z_im[k];
        double out_r[3], out_i[3];
        for (int row = 0; row < 3; ++row) {
            const double* rr = tr + 3 * row;
            const double* ri = ti + 3 * row;
            out_r[row] = ((rr[0] * x0r - ri[0] * x0i) + (rr[1] * x1r - ri[1] * x1i)) +
                         (rr[2] * x2r - ri[2] * x2i);
            out_i[row] = ((rr[0] * x0i + ri[0] * x0r) + (rr[1] * x1i + ri[1] * x1r)) +
                         (rr[2] * x2i + ri[2] * x2r);
        }
        st.fp_re[k] = out_r[0];
        st.fp_im[k] = out_i[0];
        st.fm_re[k] = out_r[1];
        st.fm_im[k] = out_i[1];
        st.z_re[k] = out_r[2];
        st.z_im[k] = out_i[2];
    }
}

void epg_rotate_real(EpgPlanes st, std::size_t n, const RfMatrix& t) {
    const double* m = t.re;
    for (std::size_t k = 0; k < n; ++k) {
        const double x0 = st.fp_re[k], x1 = st.fm_re[k], x2 = st.z_re[k];
        st.fp_re[k] = (m[0] * x0 + m[1] * x1) + m[2] * x2;
        st.fm_re[k] = (m[3] * x0 + m[4] * x1) + m[5] * x2;
        st.z_re[k] = (m[6] * x0 + m[7] * x1) + m[8] * x2;
    }
}

}  // namespace

const KernelTable& scalar_kernels() {
    static const KernelTable table{Isa::Scalar,   dot,       axpy,       score_planes,
                                   gram_update,   cross_update, epg_relax, epg_rotate,
                                   epg_rotate_real};
    return table;
}

}  // namespace mrf::simd

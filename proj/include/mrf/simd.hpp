#pragma once

// Data-parallel inner loops. Each kernel has a portable scalar reference in
// kernels_scalar.cpp and an AVX2 variant in kernels_avx2.cpp; the variant is
// selected once per process from CPUID. The environment variable MRF_SIMD
// (scalar|avx2) overrides the choice.
//
// Elementwise kernels (epg_*, axpy, score_planes, gram_update) are written so
// that the AVX2 path performs the same multiplies and adds in the same order
// as the scalar path, without FMA contraction, and are therefore bit-identical.
// dot() reduces across lanes and agrees only to rounding.

#include <cstddef>
#include <string_view>

namespace mrf::simd {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

// Planar EPG state: separate real/imaginary arrays for F+, F- and Z over
// dephasing orders 0..n-1.
struct EpgPlanes {
    double* fp_re;
    double* fp_im;
    double* fm_re;
    double* fm_im;
    double* z_re;
    double* z_im;
};

// 3x3 complex RF mixing matrix, row-major, split into real and imaginary parts.
struct RfMatrix {
    double re[9];
    double im[9];
    bool is_real() const;
};

struct KernelTable {
    Isa isa;

    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

    // out[j] = sum_c planes[c * stride + j] * query[c], for j < count, c < k.
    void (*score_planes)(const float* planes, std::size_t stride, std::size_t count,
                         std::size_t k, const float* query, float* out);

    // G[a * ld + b] += sum_r rows[r * ld + a] * rows[r * ld + b] for b >= a
    // (upper triangle only), over nrows rows of length dim.
    void (*gram_update)(const double* rows, std::size_t nrows, std::size_t dim,
                        std::size_t ld, double* gram);
    // Cross term for complex Gram matrices:
    // C[a * ld + b] += sum_r x[r * ld + a] * y[r * ld + b] for all a, b.
    void (*cross_update)(const double* x, const double* y, std::size_t nrows,
                         std::size_t dim, std::size_t ld, double* out);

    // Multiply transverse planes by e2 and longitudinal planes by e1.
    void (*epg_relax)(EpgPlanes st, std::size_t n, double e1, double e2);
    // Apply the RF matrix to every order (complex state).
    void (*epg_rotate)(EpgPlanes st, std::size_t n, const RfMatrix& t);
    // Same as epg_rotate for a real matrix acting on a state whose imaginary
    // planes are all zero; only the real planes are touched.
    void (*epg_rotate_real)(EpgPlanes st, std::size_t n, const RfMatrix& t);
};

const KernelTable& scalar_kernels();
// Null when the build does not include the AVX2 translation unit.
const KernelTable* avx2_kernels();

bool cpu_has_avx2();

// Kernels in use for this process.
const KernelTable& kernels();
// Test hook: switch the active table. Not thread-safe with concurrent kernel
// users.
void select(Isa isa);

}  // namespace mrf::simd

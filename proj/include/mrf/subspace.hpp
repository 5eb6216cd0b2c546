#pragma once

#include "mrf/common.hpp"
#include "mrf/dictionary.hpp"

#include <filesystem>

namespace mrf::subspace {

// Hermitian L x L matrix, full storage, row-major, planar re/im.
struct GramMatrix {
    std::size_t dim = 0;
    std::vector<double> re;
    std::vector<double> im;

    cdouble at(std::size_t a, std::size_t b) const { return {re[a * dim + b], im[a * dim + b]}; }
    CVector apply(std::span<const cdouble> x) const;
    double trace() const;
};

// Sum over atoms of D_j D_j^H. Atoms are processed in fixed-size chunks in
// index order, so the result does not depend on thread count.
GramMatrix gram_matrix(const dict::Dictionary& dict);

// L x s basis with orthonormal columns, stored column-major in planar re/im.
struct Subspace {
    std::size_t length = 0;
    std::size_t rank = 0;
    std::vector<double> basis_re;
    std::vector<double> basis_im;
    std::vector<double> eigenvalues;  // descending
    std::string source_digest;

    const double* column_re(std::size_t c) const { return basis_re.data() + c * length; }
    const double* column_im(std::size_t c) const { return basis_im.data() + c * length; }
    CVector column(std::size_t c) const;
};

struct SolverOptions {
    int max_iterations = 500;
    // Convergence on the relative change of each leading eigenvalue.
    double tolerance = 1e-10;
    // Additionally required: ||G v - lambda v|| / lambda below this.
    double residual_tolerance = 1e-9;
    std::uint64_t seed = 0x5eed5eedULL;
    // Extra iteration vectors beyond s.
    std::size_t guard_vectors = 10;
};

struct SolverReport {
    int iterations = 0;
    double max_residual = 0.0;
};

// Leading s eigenpairs of a Hermitian matrix by blocked orthogonal iteration
// with Rayleigh-Ritz. Columns are phase-fixed so the largest-magnitude entry
// is real and positive. Throws ConvergenceError after max_iterations.
Subspace leading_eigenvectors(const GramMatrix& gram, std::size_t s,
                              const SolverOptions& options = {},
                              SolverReport* report = nullptr);

Subspace compute_subspace(const dict::Dictionary& dict, std::size_t s,
                          const SolverOptions& options = {}, SolverReport* report = nullptr);

// Eigen-decomposition of a small Hermitian matrix (cyclic Jacobi). Returns
// eigenvalues in descending order; vectors are the matching columns of the
// row-major n x n output.
void hermitian_eigen(std::size_t n, std::vector<cdouble> matrix, std::vector<double>& values,
                     std::vector<cdouble>& vectors);

// basis^H x
CVector project(const Subspace& sub, std::span<const cdouble> x);
// Same product from planar input, writing s complex values.
void project_planar(const Subspace& sub, const double* x_re, const double* x_im, cdouble* out);
// basis y
CVector lift(const Subspace& sub, std::span<const cdouble> y);

// sum_j ||V^H D_j||^2 / sum_j ||D_j||^2; 0 for an empty basis.
double captured_energy(const Subspace& sub, const dict::Dictionary& dict);

// Leading `rank` columns of a larger subspace.
Subspace truncate(const Subspace& sub, std::size_t rank);

// CSV: frame, then re/im pairs per column.
void export_csv(const Subspace& sub, const std::filesystem::path& path);

}  // namespace mrf::subspace

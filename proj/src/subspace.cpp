#include "mrf/subspace.hpp"

#include "mrf/parallel.hpp"
#include "mrf/simd.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace mrf::subspace {

CVector GramMatrix::apply(std::span<const cdouble> x) const {
    if (x.size() != dim) throw DimensionMismatch("GramMatrix::apply: length mismatch");
    std::vector<double> xr(dim), xi(dim);
    for (std::size_t t = 0; t < dim; ++t) {
        xr[t] = x[t].real();
        xi[t] = x[t].imag();
    }
    const auto& k = simd::kernels();
    CVector y(dim);
    for (std::size_t a = 0; a < dim; ++a) {
        const double* gr = re.data() + a * dim;
        const double* gi = im.data() + a * dim;
        y[a] = {k.dot(gr, xr.data(), dim) - k.dot(gi, xi.data(), dim),
                k.dot(gr, xi.data(), dim) + k.dot(gi, xr.data(), dim)};
    }
    return y;
}

double GramMatrix::trace() const {
    double t = 0.0;
    for (std::size_t a = 0; a < dim; ++a) t += re[a * dim + a];
    return t;
}

GramMatrix gram_matrix(const dict::Dictionary& dict) {
    const std::size_t L = dict.length;
    const std::size_t d = dict.size();
    constexpr std::size_t kChunk = 256;
    GramMatrix g{L, std::vector<double>(L * L, 0.0), std::vector<double>(L * L, 0.0)};
    std::vector<double> cross(L * L, 0.0);  // sum of m_a r_b
    bool any_imag = false;

    std::vector<double> rows_re(kChunk * L), rows_im(kChunk * L);
    const auto& k = simd::kernels();
    for (std::size_t j0 = 0; j0 < d; j0 += kChunk) {
        const std::size_t n = std::min(kChunk, d - j0);
        bool chunk_imag = false;
        parallel_for(n, [&](std::size_t begin, std::size_t end) {
            for (std::size_t r = begin; r < end; ++r) {
                const auto atom = dict.atom(j0 + r);
                for (std::size_t t = 0; t < L; ++t) {
                    rows_re[r * L + t] = atom[t].real();
                    rows_im[r * L + t] = atom[t].imag();
                }
            }
        });
        for (std::size_t i = 0; i < n * L && !chunk_imag; ++i) chunk_imag = rows_im[i] != 0.0;
        k.gram_update(rows_re.data(), n, L, L, g.re.data());
        if (chunk_imag) {
            any_imag = true;
            k.gram_update(rows_im.data(), n, L, L, g.re.data());
            k.cross_update(rows_im.data(), rows_re.data(), n, L, L, cross.data());
        }
    }
    // Mirror the upper triangle; imaginary part is cross - cross^T.
    for (std::size_t a = 0; a < L; ++a) {
        for (std::size_t b = 0; b < a; ++b) g.re[a * L + b] = g.re[b * L + a];
        if (any_imag)
            for (std::size_t b = 0; b < L; ++b) g.im[a * L + b] = cross[a * L + b] - cross[b * L + a];
    }
    return g;
}

CVector Subspace::column(std::size_t c) const {
    CVector v(length);
    for (std::size_t t = 0; t < length; ++t) v[t] = {column_re(c)[t], column_im(c)[t]};
    return v;
}

void hermitian_eigen(std::size_t n, std::vector<cdouble> h, std::vector<double>& values,
                     std::vector<cdouble>& vectors) {
    if (h.size() != n * n) throw DimensionMismatch("hermitian_eigen: matrix size");
    std::vector<cdouble> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    const auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) s += std::norm(h[i * n + j]);
        return std::sqrt(s);
    };
    double total = 0.0;
    for (const auto& x : h) total += std::norm(x);
    total = std::sqrt(total);

    for (int sweep = 0; sweep < 100 && off_norm() > 1e-15 * total; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const cdouble hpq = h[p * n + q];
                const double mag = std::abs(hpq);
                if (mag <= 1e-300) continue;
                const cdouble phase = hpq / mag;  // e^{i phi}
                const double hpp = h[p * n + p].real();
                const double hqq = h[q * n + q].real();
                const double tau = (hqq - hpp) / (2.0 * mag);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                // U on the (p, q) block: [[c, s], [-s conj(phase), c conj(phase)]].
                const cdouble upp = c, upq = s;
                const cdouble uqp = -s * std::conj(phase), uqq = c * std::conj(phase);
                for (std::size_t k = 0; k < n; ++k) {
                    const cdouble a = h[k * n + p], b = h[k * n + q];
                    h[k * n + p] = a * upp + b * uqp;
                    h[k * n + q] = a * upq + b * uqq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const cdouble a = h[p * n + k], b = h[q * n + k];
                    h[p * n + k] = std::conj(upp) * a + std::conj(uqp) * b;
                    h[q * n + k] = std::conj(upq) * a + std::conj(uqq) * b;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const cdouble a = v[k * n + p], b = v[k * n + q];
                    v[k * n + p] = a * upp + b * uqp;
                    v[k * n + q] = a * upq + b * uqq;
                }
                h[p * n + q] = 0.0;
                h[q * n + p] = 0.0;
            }
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return h[a * n + a].real() > h[b * n + b].real();
    });
    values.resize(n);
    vectors.assign(n * n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
        values[c] = h[order[c] * n + order[c]].real();
        for (std::size_t r = 0; r < n; ++r) vectors[r * n + c] = v[r * n + order[c]];
    }
}

namespace {

// Column-major L x b complex block.
struct Block {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<cdouble> data;

    cdouble* col(std::size_t c) { return data.data() + c * rows; }
    const cdouble* col(std::size_t c) const { return data.data() + c * rows; }
};

cdouble inner(const cdouble* a, const cdouble* b, std::size_t n) {  // a^H b
    cdouble s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::conj(a[i]) * b[i];
    return s;
}

double col_norm(const cdouble* a, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::norm(a[i]);
    return std::sqrt(s);
}

void fill_random(cdouble* c, std::size_t n, SplitMix64& rng) {
    std::normal_distribution<double> normal;
    for (std::size_t i = 0; i < n; ++i) c[i] = {normal(rng), normal(rng)};
}

// Modified Gram-Schmidt with one reorthogonalization pass. Columns that
// collapse (rank-deficient input) are replaced by fresh random directions.
void orthonormalize(Block& q, SplitMix64& rng) {
    for (std::size_t c = 0; c < q.cols; ++c) {
        cdouble* v = q.col(c);
        for (int attempt = 0; attempt < 8; ++attempt) {
            const double before = col_norm(v, q.rows);
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t p = 0; p < c; ++p) {
                    const cdouble* u = q.col(p);
                    const cdouble proj = inner(u, v, q.rows);
                    for (std::size_t i = 0; i < q.rows; ++i) v[i] -= proj * u[i];
                }
            const double after = col_norm(v, q.rows);
            if (after > 1e-10 * before && after > 1e-300) {
                for (std::size_t i = 0; i < q.rows; ++i) v[i] /= after;
                break;
            }
            fill_random(v, q.rows, rng);
            if (attempt == 7) throw ConvergenceError("orthonormalize: cannot extend basis");
        }
    }
}

Block multiply(const GramMatrix& g, const Block& q) {
    const std::size_t L = g.dim;
    Block y{L, q.cols, std::vector<cdouble>(L * q.cols)};
    const auto& k = simd::kernels();
    for (std::size_t c = 0; c < q.cols; ++c) {
        std::vector<double> xr(L), xi(L);
        for (std::size_t t = 0; t < L; ++t) {
            xr[t] = q.col(c)[t].real();
            xi[t] = q.col(c)[t].imag();
        }
        cdouble* out = y.col(c);
        parallel_for(L, [&](std::size_t begin, std::size_t end) {
            for (std::size_t a = begin; a < end; ++a) {
                const double* gr = g.re.data() + a * L;
                const double* gi = g.im.data() + a * L;
                out[a] = {k.dot(gr, xr.data(), L) - k.dot(gi, xi.data(), L),
                          k.dot(gr, xi.data(), L) + k.dot(gi, xr.data(), L)};
            }
        });
    }
    return y;
}

// out = in * w with w a b x b row-major matrix.
Block rotate_block(const Block& in, const std::vector<cdouble>& w) {
    Block out{in.rows, in.cols, std::vector<cdouble>(in.data.size(), 0.0)};
    for (std::size_t c = 0; c < in.cols; ++c)
        for (std::size_t p = 0; p < in.cols; ++p) {
            const cdouble coef = w[p * in.cols + c];
            const cdouble* src = in.col(p);
            cdouble* dst = out.col(c);
            for (std::size_t i = 0; i < in.rows; ++i) dst[i] += coef * src[i];
        }
    return out;
}

void fix_phase(cdouble* v, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (std::abs(v[i]) > std::abs(v[best])) best = i;
    const double mag = std::abs(v[best]);
    if (mag == 0.0) return;
    const cdouble rot = std::conj(v[best]) / mag;
    for (std::size_t i = 0; i < n; ++i) v[i] *= rot;
    v[best] = {std::abs(v[best]), 0.0};
}

}  // namespace

Subspace leading_eigenvectors(const GramMatrix& gram, std::size_t s, const SolverOptions& options,
                              SolverReport* report) {
    const std::size_t L = gram.dim;
    if (s < 1 || s > L)
        throw InvalidArgument("subspace rank " + std::to_string(s) + " outside [1, " +
                              std::to_string(L) + "]");
    const std::size_t b = std::min(L, s + options.guard_vectors);
    SplitMix64 rng(options.seed);
    Block q{L, b, std::vector<cdouble>(L * b)};
    for (std::size_t c = 0; c < b; ++c) fill_random(q.col(c), L, rng);
    orthonormalize(q, rng);

    std::vector<double> previous;
    for (int it = 1; it <= options.max_iterations; ++it) {
        const Block y = multiply(gram, q);
        std::vector<cdouble> h(b * b);
        for (std::size_t r = 0; r < b; ++r)
            for (std::size_t c = 0; c < b; ++c) h[r * b + c] = inner(q.col(r), y.col(c), L);
        for (std::size_t r = 0; r < b; ++r)
            for (std::size_t c = r; c < b; ++c) {
                const cdouble avg = 0.5 * (h[r * b + c] + std::conj(h[c * b + r]));
                h[r * b + c] = avg;
                h[c * b + r] = std::conj(avg);
            }
        std::vector<double> theta;
        std::vector<cdouble> w;
        hermitian_eigen(b, h, theta, w);
        Block ritz = rotate_block(q, w);
        Block image = rotate_block(y, w);

        const double scale = std::max(std::abs(theta[0]), 1e-300);
        double max_residual = 0.0;
        for (std::size_t c = 0; c < s; ++c) {
            double r2 = 0.0;
            for (std::size_t i = 0; i < L; ++i)
                r2 += std::norm(image.col(c)[i] - theta[c] * ritz.col(c)[i]);
            const double denom = std::max(std::abs(theta[c]), 1e-6 * scale);
            max_residual = std::max(max_residual, std::sqrt(r2) / denom);
        }
        bool settled = !previous.empty();
        for (std::size_t c = 0; c < s && settled; ++c) {
            const double denom = std::max(std::abs(theta[c]), 1e-6 * scale);
            settled = std::abs(theta[c] - previous[c]) <= options.tolerance * denom;
        }
        if (settled && max_residual <= options.residual_tolerance) {
            Subspace sub;
            sub.length = L;
            sub.rank = s;
            sub.basis_re.resize(L * s);
            sub.basis_im.resize(L * s);
            sub.eigenvalues.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(s));
            for (std::size_t c = 0; c < s; ++c) {
                fix_phase(ritz.col(c), L);
                for (std::size_t i = 0; i < L; ++i) {
                    sub.basis_re[c * L + i] = ritz.col(c)[i].real();
                    sub.basis_im[c * L + i] = ritz.col(c)[i].imag();
                }
            }
            if (report) *report = {it, max_residual};
            return sub;
        }
        previous = theta;
        q = std::move(image);
        orthonormalize(q, rng);
    }
    throw ConvergenceError("subspace iteration did not converge in " +
                           std::to_string(options.max_iterations) + " iterations");
}

Subspace compute_subspace(const dict::Dictionary& dict, std::size_t s, const SolverOptions& options,
                          SolverReport* report) {
    if (s > dict.length)
        throw InvalidArgument("subspace rank " + std::to_string(s) + " exceeds fingerprint length " +
                              std::to_string(dict.length));
    Subspace sub = leading_eigenvectors(gram_matrix(dict), s, options, report);
    sub.source_digest = dict.content_digest();
    return sub;
}

void project_planar(const Subspace& sub, const double* x_re, const double* x_im, cdouble* out) {
    const auto& k = simd::kernels();
    const std::size_t L = sub.length;
    for (std::size_t c = 0; c < sub.rank; ++c) {
        const double* vr = sub.column_re(c);
        const double* vi = sub.column_im(c);
        out[c] = {k.dot(vr, x_re, L) + k.dot(vi, x_im, L), k.dot(vr, x_im, L) - k.dot(vi, x_re, L)};
    }
}

CVector project(const Subspace& sub, std::span<const cdouble> x) {
    if (x.size() != sub.length)
        throw DimensionMismatch("project: expected length " + std::to_string(sub.length) + ", got " +
                                std::to_string(x.size()));
    std::vector<double> xr(x.size()), xi(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) {
        xr[t] = x[t].real();
        xi[t] = x[t].imag();
    }
    CVector out(sub.rank);
    project_planar(sub, xr.data(), xi.data(), out.data());
    return out;
}

CVector lift(const Subspace& sub, std::span<const cdouble> y) {
    if (y.size() != sub.rank) throw DimensionMismatch("lift: coefficient count mismatch");
    CVector x(sub.length, 0.0);
    for (std::size_t c = 0; c < sub.rank; ++c)
        for (std::size_t t = 0; t < sub.length; ++t)
            x[t] += cdouble(sub.column_re(c)[t], sub.column_im(c)[t]) * y[c];
    return x;
}

double captured_energy(const Subspace& sub, const dict::Dictionary& dict) {
    if (sub.length != dict.length) throw DimensionMismatch("captured_energy: length mismatch");
    const std::size_t d = dict.size();
    const std::size_t L = dict.length;
    std::vector<double> kept(d), total(d);
    parallel_for(d, [&](std::size_t begin, std::size_t end) {
        std::vector<double> xr(L), xi(L);
        CVector y(sub.rank);
        for (std::size_t j = begin; j < end; ++j) {
            const auto atom = dict.atom(j);
            double e = 0.0;
            for (std::size_t t = 0; t < L; ++t) {
                xr[t] = atom[t].real();
                xi[t] = atom[t].imag();
                e += xr[t] * xr[t] + xi[t] * xi[t];
            }
            total[j] = e;
            if (sub.rank == 0) {
                kept[j] = 0.0;
                continue;
            }
            project_planar(sub, xr.data(), xi.data(), y.data());
            double p = 0.0;
            for (const auto& v : y) p += std::norm(v);
            kept[j] = p;
        }
    });
    const double num = std::accumulate(kept.begin(), kept.end(), 0.0);
    const double den = std::accumulate(total.begin(), total.end(), 0.0);
    return den > 0.0 ? num / den : 0.0;
}

Subspace truncate(const Subspace& sub, std::size_t rank) {
    if (rank > sub.rank) throw InvalidArgument("truncate: rank exceeds subspace rank");
    Subspace out = sub;
    out.rank = rank;
    out.basis_re.resize(rank * sub.length);
    out.basis_im.resize(rank * sub.length);
    out.eigenvalues.resize(rank);
    return out;
}

void export_csv(const Subspace& sub, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot create " + path.string());
    out.precision(17);
    out << "frame";
    for (std::size_t c = 0; c < sub.rank; ++c) out << ",re" << c << ",im" << c;
    out << '\n';
    for (std::size_t t = 0; t < sub.length; ++t) {
        out << t;
        for (std::size_t c = 0; c < sub.rank; ++c)
            out << ',' << sub.column_re(c)[t] << ',' << sub.column_im(c)[t];
        out << '\n';
    }
}

}  // namespace mrf::subspace

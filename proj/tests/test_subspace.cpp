#include "doctest.h"
#include "support.hpp"

#include "mrf/subspace.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace mrf;
using testing::small_dictionary;
using testing::small_subspace;

namespace {

using CMat = Eigen::MatrixXcd;

CMat oracle_gram(const dict::Dictionary& d) {
    CMat m(d.length, d.size());
    for (std::size_t j = 0; j < d.size(); ++j) {
        const auto a = d.atom(j);
        for (std::size_t t = 0; t < d.length; ++t) m(t, j) = cdouble(a[t]);
    }
    return m * m.adjoint();
}

CMat basis_of(const subspace::Subspace& s) {
    CMat v(s.length, s.rank);
    for (std::size_t c = 0; c < s.rank; ++c)
        for (std::size_t t = 0; t < s.length; ++t) v(t, c) = {s.column_re(c)[t], s.column_im(c)[t]};
    return v;
}

dict::Dictionary manual_dictionary(const std::vector<CVector>& rows) {
    dict::Dictionary d;
    d.grid = dict::build_grid({100, 10, 100 + 10.0 * static_cast<double>(rows.size() - 1)}, {20, 2, 20});
    d.length = rows.front().size();
    d.atoms.resize(rows.size() * d.length);
    for (std::size_t j = 0; j < rows.size(); ++j) {
        const double n = l2_norm(rows[j]);
        for (std::size_t t = 0; t < d.length; ++t) d.atoms[j * d.length + t] = cfloat(rows[j][t] / n);
    }
    return d;
}

}  // namespace

TEST_CASE("Gram accumulation matches a dense product") {
    const auto& d = small_dictionary();
    const auto g = subspace::gram_matrix(d);
    const CMat ref = oracle_gram(d);
    double err = 0.0;
    for (std::size_t a = 0; a < d.length; ++a)
        for (std::size_t b = 0; b < d.length; ++b) err = std::max(err, std::abs(g.at(a, b) - ref(a, b)));
    CHECK(err < 1e-9);
    CHECK(g.trace() == doctest::Approx(static_cast<double>(d.size())).epsilon(1e-9));
}

TEST_CASE("leading eigenpairs agree with a full eigendecomposition") {
    const auto& d = small_dictionary();
    const auto& s = small_subspace();
    const CMat g = oracle_gram(d);
    Eigen::SelfAdjointEigenSolver<CMat> es(g);
    REQUIRE(es.info() == Eigen::Success);
    const auto& ev = es.eigenvalues();  // ascending
    const std::size_t L = d.length;
    for (std::size_t i = 0; i < s.rank; ++i) {
        const double ref = ev(static_cast<Eigen::Index>(L - 1 - i));
        CHECK(std::abs(s.eigenvalues[i] - ref) <= 1e-8 * ev(static_cast<Eigen::Index>(L - 1)));
    }
    // Projector onto the computed span equals the oracle's for the top 5,
    // whose eigenvalues are well separated.
    const CMat v = basis_of(small_subspace()).leftCols(5);
    const CMat w = es.eigenvectors().rightCols(5);
    CHECK((v * v.adjoint() - w * w.adjoint()).norm() < 1e-6);

    const CMat basis = basis_of(s);
    CHECK((basis.adjoint() * basis - CMat::Identity(s.rank, s.rank)).cwiseAbs().maxCoeff() < 1e-10);
    for (std::size_t i = 0; i < s.rank; ++i) {
        CHECK(s.eigenvalues[i] >= -1e-12);
        if (i > 0) CHECK(s.eigenvalues[i] <= s.eigenvalues[i - 1]);
        const Eigen::VectorXcd col = basis.col(static_cast<Eigen::Index>(i));
        const double residual = (g * col - s.eigenvalues[i] * col).norm() / s.eigenvalues[i];
        CHECK(residual < 1e-8);
        Eigen::Index arg;
        col.cwiseAbs().maxCoeff(&arg);
        CHECK(std::abs(col(arg).imag()) < 1e-12);
        CHECK(col(arg).real() > 0.0);
    }

    double top = 0.0;
    for (std::size_t i = 0; i < s.rank; ++i) top += ev(static_cast<Eigen::Index>(L - 1 - i));
    CHECK(subspace::captured_energy(s, d) == doctest::Approx(top / ev.sum()).epsilon(1e-6));
}

TEST_CASE("complete and rank-one bases capture all energy") {
    SUBCASE("s = L on three atoms of length four") {
        const auto d = manual_dictionary({testing::random_complex(4, 1), testing::random_complex(4, 2),
                                          testing::random_complex(4, 3)});
        const auto s = subspace::compute_subspace(d, 4);
        CHECK(subspace::captured_energy(s, d) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("identical atoms, s = 1") {
        const CVector a = testing::random_complex(16, 9);
        const auto d = manual_dictionary({a, a, a, a, a});
        const auto s = subspace::compute_subspace(d, 1);
        CHECK(subspace::captured_energy(s, d) == doctest::Approx(1.0).epsilon(1e-12));
        const CVector col = s.column(0);
        cdouble inner = 0.0;
        for (std::size_t t = 0; t < 16; ++t) inner += std::conj(col[t]) * cdouble(d.atom(0)[t]);
        CHECK(std::abs(inner) == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("empty basis captures nothing") {
        const auto s = subspace::truncate(small_subspace(), 0);
        CHECK(subspace::captured_energy(s, small_dictionary()) == 0.0);
    }
}

TEST_CASE("captured energy grows with the rank") {
    const auto s15 = subspace::compute_subspace(small_dictionary(), 15);
    double prev = 0.0;
    for (std::size_t r = 1; r <= 15; ++r) {
        const double e = subspace::captured_energy(subspace::truncate(s15, r), small_dictionary());
        CHECK(e >= prev - 1e-15);
        CHECK(e <= 1.0 + 1e-12);
        prev = e;
    }
    CHECK(prev > 0.999);
}

TEST_CASE("projection properties") {
    const auto& s = small_subspace();
    const CVector e = subspace::project(s, s.column(0));
    CHECK(std::abs(e[0] - 1.0) < 1e-12);
    for (std::size_t c = 1; c < s.rank; ++c) CHECK(std::abs(e[c]) < 1e-12);

    CVector x = testing::random_complex(s.length, 4);
    const CVector back = subspace::lift(s, subspace::project(s, x));
    for (std::size_t t = 0; t < x.size(); ++t) x[t] -= back[t];
    for (const cdouble& v : subspace::project(s, x)) CHECK(std::abs(v) < 1e-12);

    for (int i = 0; i < 100; ++i) {
        const CVector y = testing::random_complex(s.length, 100 + i);
        const CVector p = subspace::project(s, y);
        CHECK(l2_norm(p) <= l2_norm(y) * (1.0 + 1e-12));
        const CVector q = subspace::project(s, subspace::lift(s, p));
        CHECK(relative_l2(q, p) < 1e-12);
    }
    CHECK_THROWS_AS(subspace::project(s, CVector(3)), DimensionMismatch);
    CHECK_THROWS_AS(subspace::lift(s, CVector(3)), DimensionMismatch);
}

TEST_CASE("planar projection matches the complex projection") {
    const auto& s = small_subspace();
    const CVector x = testing::random_complex(s.length, 6);
    RVector re(s.length), im(s.length);
    for (std::size_t t = 0; t < s.length; ++t) {
        re[t] = x[t].real();
        im[t] = x[t].imag();
    }
    CVector out(s.rank);
    subspace::project_planar(s, re.data(), im.data(), out.data());
    CHECK(relative_l2(out, subspace::project(s, x)) < 1e-13);
}

TEST_CASE("small Hermitian eigensolver matches Eigen") {
    const std::size_t n = 7;
    CMat a = CMat::Zero(n, n);
    const CVector r = testing::random_complex(n * n, 12);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) = r[i * n + j];
    a = (a + a.adjoint()).eval();
    std::vector<cdouble> m(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m[i * n + j] = a(i, j);
    std::vector<double> values;
    std::vector<cdouble> vectors;
    subspace::hermitian_eigen(n, m, values, vectors);
    Eigen::SelfAdjointEigenSolver<CMat> es(a);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(values[i] == doctest::Approx(es.eigenvalues()(static_cast<Eigen::Index>(n - 1 - i))).epsilon(1e-12));
        Eigen::VectorXcd v(n);
        for (std::size_t k = 0; k < n; ++k) v(k) = vectors[k * n + i];
        CHECK((a * v - values[i] * v).norm() < 1e-10);
    }
}

TEST_CASE("subspace errors") {
    CHECK_THROWS_AS(subspace::compute_subspace(small_dictionary(), small_dictionary().length + 1), InvalidArgument);
    CHECK_THROWS_AS(subspace::compute_subspace(small_dictionary(), 0), InvalidArgument);
    subspace::SolverOptions opt;
    opt.max_iterations = 1;
    opt.tolerance = 0.0;
    CHECK_THROWS_AS(subspace::compute_subspace(small_dictionary(), 10, opt), ConvergenceError);
    CHECK_THROWS_AS(subspace::truncate(small_subspace(), 11), InvalidArgument);
}

TEST_CASE("subspace computation is deterministic") {
    set_thread_count(1);
    const auto a = subspace::compute_subspace(small_dictionary(), 10);
    set_thread_count(4);
    const auto b = subspace::compute_subspace(small_dictionary(), 10);
    set_thread_count(0);
    CHECK(a.basis_re == b.basis_re);
    CHECK(a.basis_im == b.basis_im);
    CHECK(a.eigenvalues == b.eigenvalues);
    CHECK(a.source_digest == small_dictionary().content_digest());
}

TEST_CASE("CSV export has one row per frame") {
    testing::TempDir dir("subspace");
    const auto& s = small_subspace();
    subspace::export_csv(s, dir / "s.csv");
    std::ifstream in(dir / "s.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("frame,re0,im0", 0) == 0);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
        REQUIRE(cells.size() == 1 + 2 * s.rank);
        CHECK(cells[1] == s.column_re(0)[rows]);
        ++rows;
    }
    CHECK(rows == s.length);
}

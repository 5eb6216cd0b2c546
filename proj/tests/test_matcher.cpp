#include "doctest.h"
#include "support.hpp"

#include "mrf/matcher.hpp"
#include "mrf/simd.hpp"

#include <cmath>

using namespace mrf;
using testing::small_dictionary;
using testing::small_subspace;

namespace {

const match::CompressedDictionary& small_compressed() {
    static const match::CompressedDictionary cd = match::compress(small_dictionary(), small_subspace());
    return cd;
}

// Brute-force Euclidean nearest neighbour between unit vectors.
std::size_t brute_nearest(const match::CompressedDictionary& cd, std::span<const cdouble> x) {
    const double nx = l2_norm(x);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cd.count; ++j) {
        const CVector a = cd.atom(j);
        const double na = l2_norm(a);
        double d = 0.0;
        for (std::size_t c = 0; c < cd.rank; ++c) d += std::norm(x[c] / nx - a[c] / na);
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    return best;
}

CVector noisy(const CVector& atom, double snr_db, SplitMix64& g) {
    double e = 0.0;
    for (const auto& v : atom) e += std::norm(v);
    const double sigma = std::sqrt(e / (static_cast<double>(atom.size()) * std::pow(10.0, snr_db / 10.0)));
    CVector out = atom;
    for (auto& v : out) v += sigma * testing::gaussian(g);
    return out;
}

}  // namespace

TEST_CASE("compressed atoms are the projected dictionary rows") {
    const auto& cd = small_compressed();
    REQUIRE(cd.count == small_dictionary().size());
    REQUIRE(cd.rank == 10);
    CHECK(cd.stride % 8 == 0);
    for (std::size_t j : {0u, 17u, 299u}) {
        const CVector p = subspace::project(small_subspace(), small_dictionary().atom_as_double(j));
        const CVector a = cd.atom(j);
        for (std::size_t c = 0; c < cd.rank; ++c) CHECK(std::abs(a[c] - p[c]) < 1e-6);
        CHECK(cd.t1_ms[j] == small_dictionary().grid.params_of(j).first);
    }
}

TEST_CASE("every clean compressed atom matches itself") {
    const auto& cd = small_compressed();
    for (std::size_t j = 0; j < cd.count; ++j) {
        const auto r = match::nns_match(cd, cd.atom(j));
        CHECK(r.atom_index == j);
        CHECK(r.correlation >= 1.0 - 1e-6);
        CHECK(r.t1_ms == cd.t1_ms[j]);
        CHECK(r.t2_ms == cd.t2_ms[j]);
    }
}

TEST_CASE("nns_match agrees with brute-force Euclidean search") {
    const auto& cd = small_compressed();
    SplitMix64 g(17);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t j = g() % cd.count;
        const CVector x = noisy(cd.atom(j), 15.0, g);
        CHECK(match::nns_match(cd, x).atom_index == brute_nearest(cd, x));
    }
    for (int trial = 0; trial < 100; ++trial) {
        const CVector x = testing::random_complex(cd.rank, 1000 + trial);
        CHECK(match::nns_match(cd, x).atom_index == brute_nearest(cd, x));
    }
}

TEST_CASE("60 dB noise stays within one grid step") {
    const auto& cd = small_compressed();
    const auto& grid = small_dictionary().grid;
    SplitMix64 g(23);
    int within = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t j = g() % cd.count;
        const auto r = match::nns_match(cd, noisy(cd.atom(j), 60.0, g));
        within += std::abs(r.t1_ms - cd.t1_ms[j]) <= grid.t1_range.step + 1e-9 &&
                  std::abs(r.t2_ms - cd.t2_ms[j]) <= grid.t2_range.step + 1e-9;
    }
    CHECK(within >= 990);
}

TEST_CASE("ties resolve to the lowest index") {
    const std::vector<CVector> rows{{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}, {0.0, 1.0}};
    const std::vector<double> t1{1, 2, 3, 4}, t2{5, 6, 7, 8};
    const auto cd = match::from_rows(rows, t1, t2);
    CHECK(match::nns_match(cd, CVector{0.0, 2.0}).atom_index == 1);
    CHECK(match::nns_match(cd, CVector{3.0, 0.0}).atom_index == 0);
    CHECK(match::nns_match(cd, CVector{1.0, 1.0}).atom_index == 0);
    const std::vector<double> q{0.0, 1.0};
    CHECK(match::nns_batch(cd, q, 1)[0] == 1);
}

TEST_CASE("matcher errors") {
    const auto& cd = small_compressed();
    CHECK_THROWS_AS(match::nns_match(cd, CVector(cd.rank, 0.0)), DegenerateSignal);
    CHECK_THROWS_AS(match::nns_match(cd, CVector(cd.rank + 1, 1.0)), DimensionMismatch);
    CHECK_THROWS_AS(match::nns_batch(cd, std::vector<double>(3), 1), DimensionMismatch);
}

TEST_CASE("batched and clustered searches agree with nns_match") {
    const auto& cd = small_compressed();
    const std::size_t n = 400;
    std::vector<double> q(n * cd.rank);
    SplitMix64 g(31);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = g() % cd.count;
        const CVector x = noisy(cd.atom(j), i % 2 ? 40.0 : 20.0, g);
        for (std::size_t c = 0; c < cd.rank; ++c) q[i * cd.rank + c] = x[c].real();
    }
    const auto batch = match::nns_batch(cd, q, n);
    for (std::size_t tile : {1u, 3u, 8u, 64u}) {
        const match::ClusterIndex index(cd, match::grid_tiles(small_dictionary().grid, tile));
        for (std::size_t i = 0; i < n; ++i) {
            const std::span<const double> qi(q.data() + i * cd.rank, cd.rank);
            CHECK(index.nearest(qi) == batch[i]);
        }
    }
    for (std::size_t i = 0; i < n; i += 37) {
        CVector x(cd.rank);
        for (std::size_t c = 0; c < cd.rank; ++c) x[c] = q[i * cd.rank + c];
        CHECK(match::nns_match(cd, x).atom_index == batch[i]);
    }
}

TEST_CASE("grid tiles partition the grid") {
    const auto grid = dict::build_grid({100, 10, 200}, {20, 2, 40});
    const auto tiles = match::grid_tiles(grid, 4);
    CHECK(tiles.size() == 3 * 3);
    std::vector<int> seen(grid.size(), 0);
    for (const auto& t : tiles)
        for (std::size_t j : t) ++seen[j];
    for (int s : seen) CHECK(s == 1);
    const auto& cd = small_compressed();
    CHECK_THROWS_AS(match::ClusterIndex(cd, {{0, 1}}), InvalidArgument);
}

TEST_CASE("full-length and compressed matching agree on clean atoms") {
    const auto& d = small_dictionary();
    const auto& cd = small_compressed();
    std::size_t agree = 0;
    for (std::size_t j = 0; j < d.size(); ++j) {
        const CVector x = d.atom_as_double(j);
        std::size_t best = 0;
        double best_s = -2.0;
        for (std::size_t k = 0; k < d.size(); ++k) {
            const CVector a = d.atom_as_double(k);
            double s = 0.0;
            for (std::size_t t = 0; t < d.length; ++t) s += (std::conj(a[t]) * x[t]).real();
            if (s > best_s) {
                best_s = s;
                best = k;
            }
        }
        agree += match::match_voxel(cd, small_subspace(), x).atom_index == best;
    }
    CHECK(static_cast<double>(agree) >= 0.99 * static_cast<double>(d.size()));
}

TEST_CASE("phase and scale do not change the match") {
    const auto& d = small_dictionary();
    const auto& cd = small_compressed();
    for (std::size_t j : {3u, 150u, 280u}) {
        CVector x = d.atom_as_double(j);
        const auto base = match::match_voxel(cd, small_subspace(), x);
        CHECK(base.atom_index == j);
        for (auto& v : x) v *= -2.5;
        const auto neg = match::match_voxel(cd, small_subspace(), x);
        CHECK(neg.atom_index == j);
        CHECK(neg.correlation == doctest::Approx(base.correlation).epsilon(1e-12));
        for (auto& v : x) v *= std::polar(1.0, 1.1);
        CHECK(match::match_voxel(cd, small_subspace(), x).atom_index == j);
    }
}

TEST_CASE("match_image recovers clean atoms and flags empty voxels") {
    const auto& d = small_dictionary();
    const auto& cd = small_compressed();
    TimeSeriesImage img{5, 6, d.length, CVector(30 * d.length)};
    for (std::size_t v = 0; v < 30; ++v) {
        if (v == 7) continue;
        const CVector a = d.atom_as_double(v * 9);
        for (std::size_t t = 0; t < d.length; ++t) img.voxel(v)[t] = a[t] * 3.0;
    }
    const QMaps m = match::match_image(cd, small_subspace(), img);
    for (std::size_t v = 0; v < 30; ++v) {
        if (v == 7) {
            CHECK(m.flags[v] == 1);
            CHECK(m.t1_ms[v] == 0.0f);
            continue;
        }
        CHECK(m.flags[v] == 0);
        const auto [t1, t2] = d.grid.params_of(v * 9);
        CHECK(m.t1_ms[v] == static_cast<float>(t1));
        CHECK(m.t2_ms[v] == static_cast<float>(t2));
        CHECK(m.scale[v] == doctest::Approx(3.0).epsilon(1e-3));
    }

    TimeSeriesImage zero{2, 2, d.length, CVector(4 * d.length)};
    CHECK(match::match_image(cd, small_subspace(), zero).flagged_fraction() == 1.0);
}

TEST_CASE("match_image does not depend on the thread count") {
    const auto& d = small_dictionary();
    const auto& cd = small_compressed();
    TimeSeriesImage img{8, 8, d.length, testing::random_complex(64 * d.length, 5)};
    set_thread_count(1);
    const QMaps a = match::match_image(cd, small_subspace(), img);
    set_thread_count(4);
    const QMaps b = match::match_image(cd, small_subspace(), img);
    set_thread_count(0);
    CHECK(a.t1_ms == b.t1_ms);
    CHECK(a.t2_ms == b.t2_ms);
    CHECK(a.scale == b.scale);
}

TEST_CASE("cost report at the paper sizes") {
    const std::vector<std::size_t> layout{10, 200, 30, 2};
    const auto r = match::cost_report(1000, 10, 113781, layout);
    CHECK(r.dm_flops_per_voxel == 10 * 1000 + 10 * 113781);
    CHECK(r.net_flops_per_voxel == 10 * 1000 + 10 * 200 + 200 * 30 + 30 * 2);
    CHECK(r.ratio_flops == doctest::Approx(1147810.0 / 18060.0));
    CHECK(r.ratio_flops > 60.0);
    CHECK(r.ratio_bytes > 60.0);
    CHECK(r.ratio_flops == doctest::Approx(static_cast<double>(r.dm_flops_per_voxel) / r.net_flops_per_voxel));
    CHECK(r.ratio_bytes == doctest::Approx(static_cast<double>(r.dm_bytes) / r.net_bytes));

    // A dictionary with as many entries as network weights costs about the same.
    const std::vector<std::size_t> small{10, 20, 2};
    const auto eq = match::cost_report(100, 10, (10 * 20 + 20 * 2) / 10, small);
    CHECK(eq.ratio_flops == doctest::Approx(1.0));

    const auto full = match::cost_report(1000, 1000, 113781, std::vector<std::size_t>{1000, 200, 30, 2});
    CHECK(full.dm_flops_per_voxel == 1000ull * 1000 + 1000ull * 113781);
    CHECK_THROWS_AS(match::cost_report(1000, 10, 5, std::vector<std::size_t>{9, 2}), InvalidArgument);
}

TEST_CASE("active kernel table honours MRF_SIMD") {
    const char* forced = std::getenv("MRF_SIMD");
    if (forced != nullptr && std::string(forced) == "scalar") CHECK(simd::kernels().isa == simd::Isa::Scalar);
    MESSAGE("active kernels: " << simd::isa_name(simd::kernels().isa));
}

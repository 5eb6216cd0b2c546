#include "doctest.h"
#include "support.hpp"

#include "mrf/matcher.hpp"
#include "mrf/recon.hpp"

#include <cmath>
#include <numbers>
#include <set>

using namespace mrf;
using namespace mrf::recon;

namespace {

TimeSeriesImage random_image(std::size_t h, std::size_t w, std::size_t frames, std::uint64_t seed) {
    TimeSeriesImage img;
    img.height = h;
    img.width = w;
    img.frames = frames;
    img.data = testing::random_complex(h * w * frames, seed);
    return img;
}

KSpaceData random_kspace(std::size_t h, std::size_t w, const std::vector<std::vector<std::uint32_t>>& masks,
                         std::uint64_t seed) {
    KSpaceData k;
    k.height = h;
    k.width = w;
    k.masks = masks;
    for (std::size_t t = 0; t < masks.size(); ++t) k.samples.push_back(testing::random_complex(masks[t].size(), seed + t));
    return k;
}

// Direct unitary DFT of one frame, sampled at `mask`.
CVector direct_dft(const TimeSeriesImage& img, std::size_t frame, const std::vector<std::uint32_t>& mask) {
    const std::size_t h = img.height, w = img.width;
    const double s = 1.0 / std::sqrt(static_cast<double>(h * w));
    CVector out;
    for (std::uint32_t k : mask) {
        const double ky = static_cast<double>(k / w), kx = static_cast<double>(k % w);
        cdouble acc = 0.0;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double phase = -2.0 * std::numbers::pi *
                                     (ky * static_cast<double>(y) / static_cast<double>(h) +
                                      kx * static_cast<double>(x) / static_cast<double>(w));
                acc += img.data[(y * w + x) * img.frames + frame] * std::polar(1.0, phase);
            }
        out.push_back(acc * s);
    }
    return out;
}

cdouble inner_image(const TimeSeriesImage& a, const TimeSeriesImage& b) {
    cdouble s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += std::conj(a.data[i]) * b.data[i];
    return s;
}

cdouble inner_kspace(const KSpaceData& a, const KSpaceData& b) {
    cdouble s = 0.0;
    for (std::size_t t = 0; t < a.frames(); ++t)
        for (std::size_t i = 0; i < a.samples[t].size(); ++i) s += std::conj(a.samples[t][i]) * b.samples[t][i];
    return s;
}

double image_rel_error(const TimeSeriesImage& a, const TimeSeriesImage& b) { return relative_l2(a.data, b.data); }

}  // namespace

TEST_CASE("acquisition matches a direct DFT") {
    const auto img = random_image(6, 10, 3, 1);
    const auto masks = sampling_masks(6, 10, 3, 17, 4);
    const auto k = forward_acquire(img, masks);
    for (std::size_t t = 0; t < 3; ++t) CHECK(relative_l2(k.samples[t], direct_dft(img, t, masks[t])) < 1e-12);
}

TEST_CASE("back-projection is the adjoint of acquisition") {
    const std::size_t h = 8, w = 12, frames = 4;
    for (std::uint64_t draw = 0; draw < 10; ++draw) {
        const auto masks = sampling_masks(h, w, frames, 30, draw);
        const auto x = random_image(h, w, frames, 100 + draw);
        const auto y = random_kspace(h, w, masks, 200 + draw);
        const cdouble lhs = inner_kspace(forward_acquire(x, masks), y);
        const cdouble rhs = inner_image(x, back_project(y));
        CHECK(std::abs(lhs - rhs) < 1e-10 * std::abs(lhs));
    }
}

TEST_CASE("full sampling is unitary") {
    const std::size_t h = 9, w = 7, frames = 3;
    const auto masks = sampling_masks(h, w, frames, h * w, 3);
    for (const auto& m : masks) CHECK(m.size() == h * w);
    const auto x = random_image(h, w, frames, 5);
    const auto k = forward_acquire(x, masks);
    double ex = 0.0, ek = 0.0;
    for (const auto& v : x.data) ex += std::norm(v);
    for (const auto& s : k.samples)
        for (const auto& v : s) ek += std::norm(v);
    CHECK(ek == doctest::Approx(ex).epsilon(1e-12));
    CHECK(image_rel_error(back_project(k), x) < 1e-12);
}

TEST_CASE("a constant image has only a DC coefficient") {
    TimeSeriesImage img;
    img.height = 4;
    img.width = 4;
    img.frames = 1;
    img.data.assign(16, cdouble(1.0, 0.0));
    const auto k = forward_acquire(img, sampling_masks(4, 4, 1, 16, 1));
    REQUIRE(k.masks[0][0] == 0);
    CHECK(std::abs(k.samples[0][0] - cdouble(4.0, 0.0)) < 1e-12);
    for (std::size_t i = 1; i < 16; ++i) CHECK(std::abs(k.samples[0][i]) < 1e-12);
}

TEST_CASE("acquisition is linear") {
    const auto masks = sampling_masks(8, 8, 2, 20, 9);
    const auto a = random_image(8, 8, 2, 1), b = random_image(8, 8, 2, 2);
    const cdouble alpha(0.3, -1.2);
    TimeSeriesImage c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] = alpha * a.data[i] + b.data[i];
    const auto ka = forward_acquire(a, masks), kb = forward_acquire(b, masks), kc = forward_acquire(c, masks);
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t i = 0; i < 20; ++i)
            CHECK(std::abs(kc.samples[t][i] - (alpha * ka.samples[t][i] + kb.samples[t][i])) < 1e-12);
}

TEST_CASE("sampling masks") {
    SUBCASE("paper size") {
        const auto masks = sampling_masks(64, 64, 50, 256, 7);
        REQUIRE(masks.size() == 50);
        std::set<std::vector<std::uint32_t>> distinct;
        for (const auto& m : masks) {
            CHECK(m.size() == 256);
            CHECK(std::is_sorted(m.begin(), m.end()));
            CHECK(std::adjacent_find(m.begin(), m.end()) == m.end());
            CHECK(m.front() == 0);  // DC is always among the central samples
            distinct.insert(m);
        }
        CHECK(distinct.size() == 50);
        CHECK(sampling_masks(64, 64, 50, 256, 7) == masks);
        CHECK(sampling_masks(64, 64, 50, 256, 8) != masks);
    }
    SUBCASE("central block is shared by every frame") {
        const auto masks = sampling_masks(16, 16, 5, 40, 1);
        const std::set<std::uint32_t> first(masks[0].begin(), masks[0].end());
        // DC and its four nearest neighbours.
        for (std::uint32_t k : {0u, 1u, 16u, 15u, 240u})
            for (const auto& m : masks) CHECK(std::binary_search(m.begin(), m.end(), k));
        CHECK(first.size() == 40);
    }
    SUBCASE("m = n and errors") {
        const auto masks = sampling_masks(4, 5, 2, 20, 1);
        for (const auto& m : masks)
            for (std::uint32_t i = 0; i < 20; ++i) CHECK(m[i] == i);
        CHECK_THROWS_AS(sampling_masks(4, 5, 2, 21, 1), InvalidArgument);
        const auto img = random_image(4, 5, 3, 1);
        CHECK_THROWS_AS(forward_acquire(img, masks), DimensionMismatch);
        auto k = random_kspace(4, 5, masks, 1);
        k.samples[1].pop_back();
        CHECK_THROWS_AS(back_project(k), DimensionMismatch);
    }
}

TEST_CASE("noise has the requested variance and is seeded") {
    KSpaceData k;
    k.height = 64;
    k.width = 64;
    k.masks = sampling_masks(64, 64, 4, 4096, 1);
    k.samples.assign(4, CVector(4096, 0.0));
    KSpaceData a = k, b = k;
    add_noise(a, 0.5, 3);
    add_noise(b, 0.5, 3);
    double power = 0.0, re = 0.0;
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t i = 0; i < 4096; ++i) {
            CHECK(a.samples[t][i] == b.samples[t][i]);
            power += std::norm(a.samples[t][i]);
            re += a.samples[t][i].real() * a.samples[t][i].real();
        }
    CHECK(power / 16384.0 == doctest::Approx(0.25).epsilon(0.03));
    CHECK(re / power == doctest::Approx(0.5).epsilon(0.03));
    CHECK_THROWS_AS(add_noise(a, -1.0, 1), InvalidArgument);
}

TEST_CASE("phantom construction") {
    SUBCASE("default phantom") {
        const auto p = make_phantom(default_phantom_spec());
        CHECK(p.height == 64);
        CHECK(p.width == 64);
        const std::set<int> labels(p.labels.begin(), p.labels.end());
        CHECK(labels == std::set<int>{0, 1, 2, 3, 4});
        for (std::size_t v = 0; v < p.voxels(); ++v) {
            if (p.labels[v] == 0) {
                CHECK(p.scale[v] == 0.0);
                continue;
            }
            const auto& e = p.regions[static_cast<std::size_t>(p.labels[v] - 1)];
            CHECK(p.t1_ms[v] == e.t1_ms);
            CHECK(p.t2_ms[v] == e.t2_ms);
            CHECK(p.scale[v] == e.scale);
        }
        CHECK(p.labels[21 * 64 + 21] == 1);
        CHECK(p.labels[0] == 0);
    }
    SUBCASE("empty and full-field") {
        PhantomSpec s;
        s.height = 8;
        s.width = 8;
        const auto empty = make_phantom(s);
        for (int l : empty.labels) CHECK(l == 0);
        s.regions.push_back({3.5, 3.5, 100.0, 100.0, 0.0, 1000.0, 100.0, 1.0});
        const auto full = make_phantom(s);
        for (int l : full.labels) CHECK(l == 1);
    }
    SUBCASE("later regions overwrite earlier ones") {
        PhantomSpec s;
        s.height = 16;
        s.width = 16;
        s.regions.push_back({8, 8, 6, 6, 0, 1000, 100, 1});
        s.regions.push_back({8, 8, 2, 2, 0, 500, 50, 1});
        const auto p = make_phantom(s);
        CHECK(p.labels[8 * 16 + 8] == 2);
        CHECK(p.labels[8 * 16 + 13] == 1);
        CHECK(p.t1_ms[8 * 16 + 8] == 500.0);
    }
    SUBCASE("rotation") {
        PhantomSpec s;
        s.height = 32;
        s.width = 32;
        s.regions.push_back({16, 16, 10, 2, 90, 1000, 100, 1});
        const auto p = make_phantom(s);
        CHECK(p.labels[(16 + 8) * 32 + 16] == 1);
        CHECK(p.labels[16 * 32 + 16 + 8] == 0);
    }
    SUBCASE("rejections name the field") {
        PhantomSpec s = default_phantom_spec();
        s.regions[2].t1_ms = 5000.0;
        try {
            make_phantom(s);
            FAIL("expected InvalidArgument");
        } catch (const InvalidArgument& e) {
            CHECK(std::string(e.what()).find("regions[2].t1_ms") != std::string::npos);
        }
        s = default_phantom_spec();
        s.regions[0].t2_ms = 10.0;
        CHECK_THROWS_AS(make_phantom(s), InvalidArgument);
        s = default_phantom_spec();
        s.regions[0].rx = 0.0;
        CHECK_THROWS_AS(make_phantom(s), InvalidArgument);
        s.height = 0;
        CHECK_THROWS_AS(make_phantom(s), InvalidArgument);
    }
    SUBCASE("JSON round trip") {
        const auto s = default_phantom_spec();
        const auto back = parse_phantom_spec(phantom_spec_json(s));
        CHECK(back.height == s.height);
        REQUIRE(back.regions.size() == s.regions.size());
        CHECK(back.regions[3].angle_deg == s.regions[3].angle_deg);
        CHECK(back.regions[1].t1_ms == s.regions[1].t1_ms);
        const auto list = parse_phantom_spec(R"([{"cx": 5, "cy": 6, "rx": 2, "ry": 3, "t1_ms": 900, "t2_ms": 80}])");
        CHECK(list.height == 64);
        CHECK(list.regions.at(0).scale == 1.0);
        CHECK_THROWS_AS(parse_phantom_spec(R"([{"cx": 5}])"), InvalidArgument);
        CHECK_THROWS_AS(parse_phantom_spec("{"), InvalidArgument);
    }
}

TEST_CASE("image synthesis") {
    PhantomSpec s;
    s.height = 6;
    s.width = 5;
    s.regions.push_back({2, 2, 2, 2, 0, 800, 60, 0.5});
    const auto p = make_phantom(s);
    const auto seq = epg::default_sequence(40);
    const auto img = synthesize_image(p, seq);
    CHECK(img.frames == 40);
    const CVector f = epg::simulate_fingerprint(800, 60, seq).samples;
    for (std::size_t v = 0; v < p.voxels(); ++v) {
        const auto x = img.voxel(v);
        for (std::size_t t = 0; t < 40; ++t) CHECK(x[t] == p.scale[v] * f[t]);
    }
    PhantomSpec doubled = s;
    doubled.regions[0].scale = 1.0;
    const auto img2 = synthesize_image(make_phantom(doubled), seq);
    for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(std::abs(img2.data[i] - 2.0 * img.data[i]) < 1e-15);
}

TEST_CASE("map error statistics") {
    PhantomSpec s;
    s.height = 4;
    s.width = 4;
    s.regions.push_back({0, 0, 1.5, 1.5, 0, 1000, 100, 1});
    s.regions.push_back({3, 3, 0.5, 0.5, 0, 500, 50, 1});
    const auto p = make_phantom(s);
    QMaps maps = QMaps::blank(4, 4, Engine::DM);
    for (std::size_t v = 0; v < 16; ++v) {
        maps.t1_ms[v] = static_cast<float>(p.t1_ms[v]);
        maps.t2_ms[v] = static_cast<float>(p.t2_ms[v]);
    }
    auto m = map_error(maps, p);
    REQUIRE(m.regions.size() == 2);
    CHECK(m.regions[0].t1_median_rel_error == 0.0);
    CHECK(m.regions[0].t2_mae_rel == 0.0);
    CHECK(m.regions[1].voxels == 1);

    maps.t1_ms[0] = 1100.0f;
    m = map_error(maps, p);
    CHECK(m.regions[0].t1_mae_rel == doctest::Approx(0.1 / static_cast<double>(m.regions[0].voxels)));

    maps.flags[15] = 1;
    m = map_error(maps, p);
    CHECK(m.regions[1].voxels == 0);
    CHECK(std::isnan(m.regions[1].t1_median_ms));
    CHECK(m.flagged_fraction == doctest::Approx(1.0 / 16.0));
    const std::string json = metrics_json({m});
    CHECK(json.find("\"dm\"") != std::string::npos);
    CHECK(json.find("null") != std::string::npos);

    CHECK_THROWS_AS(map_error(QMaps::blank(3, 4, Engine::DM), p), DimensionMismatch);
}

TEST_CASE("dictionary matching recovers a grid-aligned phantom") {
    const auto& d = testing::small_dictionary();
    const auto& sub = testing::small_subspace();
    const auto cd = match::compress(d, sub);
    PhantomSpec s;
    s.height = 16;
    s.width = 16;
    s.regions.push_back({5, 5, 4, 4, 0, 700, 100, 1.0});
    s.regions.push_back({11, 5, 3, 4, 0, 1500, 200, 0.7});
    s.regions.push_back({8, 12, 5, 3, 30, 300, 40, 1.3});
    const auto p = make_phantom(s);
    const auto seq = testing::small_sequence();
    const auto img = synthesize_image(p, seq);
    const auto recon_img = back_project(forward_acquire(img, sampling_masks(16, 16, seq.length(), 256, 1)));
    CHECK(image_rel_error(recon_img, img) < 1e-12);

    EngineResources res;
    res.compressed = &cd;
    res.subspace = &sub;
    const auto maps = reconstruct_maps(recon_img, Engine::DM, res);
    for (std::size_t v = 0; v < p.voxels(); ++v) {
        if (p.labels[v] == 0) {
            CHECK(maps.flags[v] == 1);
            continue;
        }
        CHECK(maps.flags[v] == 0);
        CHECK(maps.t1_ms[v] == static_cast<float>(p.t1_ms[v]));
        CHECK(maps.t2_ms[v] == static_cast<float>(p.t2_ms[v]));
    }
    const auto m = map_error(maps, p);
    for (const auto& r : m.regions) {
        CHECK(r.t1_median_rel_error == 0.0);
        CHECK(r.t2_median_rel_error == 0.0);
    }
    CHECK_THROWS_AS(reconstruct_maps(recon_img, Engine::NET, res), InvalidArgument);
    CHECK_THROWS_AS(reconstruct_maps(recon_img, Engine::DM, EngineResources{}), InvalidArgument);
}

#include "doctest.h"
#include "support.hpp"

#include "mrf/io.hpp"
#include "mrf/qmaps.hpp"

#include <cstring>
#include <fstream>

using namespace mrf;

namespace {

io::Bytes bytes_of(std::string_view s) {
    io::Bytes b(s.size());
    std::memcpy(b.data(), s.data(), s.size());
    return b;
}

QMaps sample_maps() {
    QMaps m = QMaps::blank(3, 4, Engine::NET);
    for (std::size_t v = 0; v < m.voxels(); ++v) {
        m.t1_ms[v] = 100.0f + 17.25f * static_cast<float>(v);
        m.t2_ms[v] = 20.0f + 0.1f * static_cast<float>(v);
        m.scale[v] = 1.0f / static_cast<float>(v + 3);
        m.flags[v] = v % 5 == 0;
    }
    return m;
}

void check_same(const QMaps& a, const QMaps& b) {
    CHECK(a.height == b.height);
    CHECK(a.width == b.width);
    CHECK(a.t1_ms == b.t1_ms);
    CHECK(a.t2_ms == b.t2_ms);
    CHECK(a.scale == b.scale);
    CHECK(a.flags == b.flags);
}

}  // namespace

TEST_CASE("SHA-256 matches published test vectors") {
    CHECK(io::sha256_hex(bytes_of("abc")) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(io::sha256_hex(bytes_of("")) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    io::Sha256 h;
    h.update(bytes_of("a"));
    h.update(bytes_of("bc"));
    const io::Digest d = h.finish();
    CHECK(io::to_hex(d) == io::sha256_hex(bytes_of("abc")));
}

TEST_CASE("FNV-1a 64 matches published test vectors") {
    CHECK(io::fnv1a64(bytes_of("")) == 0xcbf29ce484222325ULL);
    CHECK(io::fnv1a64(bytes_of("a")) == 0xaf63dc4c8601ec8cULL);
    CHECK(io::fnv1a64(bytes_of("foobar")) == 0x85944171f73967e8ULL);
    CHECK(io::fnv1a64(bytes_of("bar"), io::fnv1a64(bytes_of("foo"))) == io::fnv1a64(bytes_of("foobar")));
}

TEST_CASE("Reader rejects overruns") {
    io::Writer w;
    w.put<std::uint32_t>(7);
    w.put_string("hello");
    io::Reader r(w.bytes());
    CHECK(r.get<std::uint32_t>() == 7);
    CHECK(r.get_string() == "hello");
    CHECK(r.remaining() == 0);
    CHECK_THROWS_AS(r.get<std::uint8_t>(), FormatError);
}

TEST_CASE("open_checked distinguishes magic, checksum and version failures") {
    auto build = [](std::uint32_t version) {
        io::Writer w;
        w.put_magic("TEST");
        w.put(version);
        w.put<double>(2.5);
        w.put_checksum();
        return w.take();
    };
    const io::Bytes good = build(1);
    io::Reader r = io::open_checked(good, "TEST", 1, "test");
    CHECK(r.get<double>() == 2.5);
    CHECK(r.remaining() == 0);

    CHECK_THROWS_AS(io::open_checked(good, "NOPE", 1, "test"), FormatError);
    try {
        io::open_checked(good, "NOPE", 1, "test");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("NOPE") != std::string::npos);
    }
    CHECK_THROWS_AS(io::open_checked(build(2), "TEST", 1, "test"), VersionError);

    io::Bytes flipped = good;
    flipped[9] ^= std::byte{1};
    CHECK_THROWS_AS(io::open_checked(flipped, "TEST", 1, "test"), ChecksumError);
    for (std::size_t n = 4; n < good.size(); ++n)
        CHECK_THROWS_AS(io::open_checked(std::span(good).first(n), "TEST", 1, "test"), ChecksumError);
}

TEST_CASE("QMaps binary and CSV formats round-trip") {
    testing::TempDir dir("qmaps");
    const QMaps m = sample_maps();
    save_qmaps(m, dir / "m.mrfq");
    check_same(load_qmaps(dir / "m.mrfq"), m);
    save_qmaps_csv(m, dir / "m.csv");
    check_same(load_qmaps_csv(dir / "m.csv"), m);

    save_qmaps(load_qmaps(dir / "m.mrfq"), dir / "again.mrfq");
    CHECK(io::file_sha256_hex(dir / "m.mrfq") == io::file_sha256_hex(dir / "again.mrfq"));
}

TEST_CASE("QMaps loaders reject foreign and malformed files") {
    testing::TempDir dir("qmaps_bad");
    io::write_file(dir / "x.mrfq", bytes_of("MRFD\x01\x00\x00\x00"));
    CHECK_THROWS_AS(load_qmaps(dir / "x.mrfq"), FormatError);
    {
        std::ofstream out(dir / "x.csv");
        out << "x,y,t1,t2,scale,flag\n0,0,1,2,3\n";
    }
    CHECK_THROWS_AS(load_qmaps_csv(dir / "x.csv"), ParseError);
}

TEST_CASE("flagged fraction counts flagged voxels") {
    QMaps m = QMaps::blank(2, 2, Engine::DM);
    CHECK(m.flagged_fraction() == 0.0);
    m.flags = {1, 0, 1, 1};
    CHECK(m.flagged_fraction() == doctest::Approx(0.75));
}

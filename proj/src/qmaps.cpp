#include "mrf/qmaps.hpp"

#include "mrf/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace mrf {

std::string_view engine_name(Engine e) { return e == Engine::DM ? "dm" : "net"; }

QMaps QMaps::blank(std::size_t height, std::size_t width, Engine engine) {
    const std::size_t n = height * width;
    return {height, width, std::vector<float>(n, 0.0f), std::vector<float>(n, 0.0f),
            std::vector<float>(n, 0.0f), std::vector<std::uint8_t>(n, 0), engine};
}

double QMaps::flagged_fraction() const {
    if (flags.empty()) return 0.0;
    const auto n = std::count(flags.begin(), flags.end(), std::uint8_t{1});
    return static_cast<double>(n) / static_cast<double>(flags.size());
}

namespace {
constexpr char kMagic[] = "MRFQ";
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_qmaps(const QMaps& maps, const std::filesystem::path& path) {
    io::Writer w;
    w.put_magic(kMagic);
    w.put(kVersion);
    w.put(static_cast<std::uint32_t>(maps.height));
    w.put(static_cast<std::uint32_t>(maps.width));
    w.put_array(std::span<const float>(maps.t1_ms));
    w.put_array(std::span<const float>(maps.t2_ms));
    w.put_array(std::span<const float>(maps.scale));
    w.put_array(std::span<const std::uint8_t>(maps.flags));
    io::write_file(path, w.bytes());
}

QMaps load_qmaps(const std::filesystem::path& path) {
    const io::Bytes data = io::read_file(path);
    const std::string name = "qmaps " + path.string();
    if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0)
        throw FormatError(name + ": bad magic, expected \"MRFQ\"");
    io::Reader r(data);
    for (int i = 0; i < 4; ++i) r.get<char>();
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw VersionError(name + ": unsupported version " + std::to_string(version));
    const auto h = r.get<std::uint32_t>();
    const auto w = r.get<std::uint32_t>();
    QMaps maps = QMaps::blank(h, w, Engine::DM);
    const std::size_t n = maps.voxels();
    if (r.remaining() != n * (3 * sizeof(float) + 1))
        throw FormatError(name + ": payload size does not match " + std::to_string(h) + "x" +
                          std::to_string(w));
    r.get_array(std::span<float>(maps.t1_ms));
    r.get_array(std::span<float>(maps.t2_ms));
    r.get_array(std::span<float>(maps.scale));
    r.get_array(std::span<std::uint8_t>(maps.flags));
    return maps;
}

void save_qmaps_csv(const QMaps& maps, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot create " + path.string());
    out.precision(9);  // round-trips float
    out << "x,y,t1,t2,scale,flag\n";
    for (std::size_t y = 0; y < maps.height; ++y)
        for (std::size_t x = 0; x < maps.width; ++x) {
            const std::size_t v = y * maps.width + x;
            out << x << ',' << y << ',' << maps.t1_ms[v] << ',' << maps.t2_ms[v] << ','
                << maps.scale[v] << ',' << static_cast<int>(maps.flags[v]) << '\n';
        }
}

QMaps load_qmaps_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "x,y,t1,t2,scale,flag") throw ParseError("qmaps csv: unexpected header", 1);
    struct Row {
        std::size_t x, y;
        float t1, t2, scale;
        int flag;
    };
    std::vector<Row> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        Row r{};
        char c1, c2, c3, c4, c5;
        if (!(ss >> r.x >> c1 >> r.y >> c2 >> r.t1 >> c3 >> r.t2 >> c4 >> r.scale >> c5 >> r.flag))
            throw ParseError("qmaps csv: malformed line " + std::to_string(line_no), line_no);
        rows.push_back(r);
    }
    std::size_t h = 0, w = 0;
    for (const auto& r : rows) {
        h = std::max(h, r.y + 1);
        w = std::max(w, r.x + 1);
    }
    if (rows.size() != h * w) throw ParseError("qmaps csv: incomplete grid", line_no);
    QMaps maps = QMaps::blank(h, w, Engine::DM);
    for (const auto& r : rows) {
        const std::size_t v = r.y * w + r.x;
        maps.t1_ms[v] = r.t1;
        maps.t2_ms[v] = r.t2;
        maps.scale[v] = r.scale;
        maps.flags[v] = static_cast<std::uint8_t>(r.flag);
    }
    return maps;
}

}  // namespace mrf

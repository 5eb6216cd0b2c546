#include "mrf/dictionary.hpp"

#include "mrf/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>

namespace mrf::dict {

void Range::validate(std::string_view field) const {
    const std::string name(field);
    if (!std::isfinite(start) || !std::isfinite(step) || !std::isfinite(stop))
        throw InvalidArgument(name + ": range values must be finite");
    if (!(step > 0.0)) throw InvalidArgument(name + ": step must be positive");
    if (start > stop) throw InvalidArgument(name + ": start exceeds stop");
}

std::size_t Range::count() const {
    return static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
}

Range default_t1_range() { return {100.0, 10.0, 4000.0}; }
Range default_t2_range() { return {20.0, 2.0, 600.0}; }

ParamGrid build_grid(const Range& t1, const Range& t2) {
    t1.validate("t1");
    t2.validate("t2");
    ParamGrid g{t1, t2, {}, {}};
    g.t1_values_ms.resize(t1.count());
    g.t2_values_ms.resize(t2.count());
    for (std::size_t i = 0; i < g.t1_values_ms.size(); ++i) g.t1_values_ms[i] = t1.value(i);
    for (std::size_t i = 0; i < g.t2_values_ms.size(); ++i) g.t2_values_ms[i] = t2.value(i);
    return g;
}

std::pair<double, double> ParamGrid::params_of(std::size_t index) const {
    if (index >= size()) throw InvalidArgument("grid index out of range");
    return {t1_values_ms[index / t2_count()], t2_values_ms[index % t2_count()]};
}

namespace {

std::size_t nearest_on_axis(const std::vector<double>& values, const Range& r, double v) {
    const double pos = std::round((v - r.start) / r.step);
    if (!(pos > 0.0)) return 0;
    return std::min(values.size() - 1, static_cast<std::size_t>(pos));
}

}  // namespace

std::size_t ParamGrid::nearest_index(double t1_ms, double t2_ms) const {
    return nearest_on_axis(t1_values_ms, t1_range, t1_ms) * t2_count() +
           nearest_on_axis(t2_values_ms, t2_range, t2_ms);
}

std::size_t ParamGrid::index_of(double t1_ms, double t2_ms) const {
    const std::size_t i = nearest_index(t1_ms, t2_ms);
    const auto [a, b] = params_of(i);
    const auto close = [](double x, double y) { return std::abs(x - y) <= 1e-9 * std::max(1.0, std::abs(y)); };
    if (!close(a, t1_ms) || !close(b, t2_ms))
        throw InvalidArgument("(" + std::to_string(t1_ms) + ", " + std::to_string(t2_ms) +
                              ") is not a grid point");
    return i;
}

bool ParamGrid::contains(double t1_ms, double t2_ms) const {
    return t1_ms >= t1_values_ms.front() && t1_ms <= t1_values_ms.back() &&
           t2_ms >= t2_values_ms.front() && t2_ms <= t2_values_ms.back();
}

CVector Dictionary::atom_as_double(std::size_t j) const {
    const auto a = atom(j);
    CVector out(a.size());
    for (std::size_t t = 0; t < a.size(); ++t) out[t] = {a[t].real(), a[t].imag()};
    return out;
}

CVector phase_align(std::span<const cdouble> signal) {
    cdouble sum = 0.0;
    for (const auto& v : signal) sum += v;
    const double mag = std::abs(sum);
    if (mag == 0.0 || !std::isfinite(mag))
        throw DegenerateSignal("phase alignment undefined: temporal sum is zero");
    const cdouble rot = std::conj(sum) / mag;
    CVector out(signal.size());
    for (std::size_t t = 0; t < signal.size(); ++t) out[t] = signal[t] * rot;
    return out;
}

void store_normalized(std::span<const cdouble> unit, std::span<cfloat> out) {
    if (unit.size() != out.size()) throw DimensionMismatch("store_normalized: length mismatch");
    const std::size_t n = unit.size();
    std::vector<float> comp(2 * n);
    for (std::size_t t = 0; t < n; ++t) {
        comp[2 * t] = static_cast<float>(unit[t].real());
        comp[2 * t + 1] = static_cast<float>(unit[t].imag());
    }
    double norm2 = 0.0;
    for (float c : comp) norm2 += static_cast<double>(c) * c;
    double deficit = 1.0 - norm2;

    // Greedy one-ulp corrections from the largest components down; step sizes
    // shrink with magnitude so the residual ends far below single precision.
    std::vector<std::size_t> order(comp.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(comp[a]) > std::abs(comp[b]); });
    for (std::size_t idx : order) {
        if (std::abs(deficit) < 1e-14) break;
        const float c = comp[idx];
        if (c == 0.0f) break;
        const float mag = std::abs(c);
        const float bigger = std::nextafter(mag, INFINITY);
        const float smaller = std::nextafter(mag, 0.0f);
        const double m = mag;
        const double up = static_cast<double>(bigger) * bigger - m * m;
        const double down = static_cast<double>(smaller) * smaller - m * m;
        const double step = deficit > 0.0 ? up : down;
        if (std::abs(deficit - step) < std::abs(deficit)) {
            comp[idx] = std::copysign(deficit > 0.0 ? bigger : smaller, c);
            deficit -= step;
        }
    }
    for (std::size_t t = 0; t < n; ++t) out[t] = {comp[2 * t], comp[2 * t + 1]};
}

Dictionary simulate_dictionary(const ParamGrid& grid, const epg::SequenceParams& seq,
                               const Progress& progress) {
    seq.validate();
    if (grid.size() == 0) throw InvalidArgument("simulate_dictionary: empty grid");
    Dictionary dict;
    dict.grid = grid;
    dict.length = seq.length();
    dict.seq_digest = seq.digest();
    dict.atoms.assign(grid.size() * dict.length, cfloat{});

    std::atomic<std::size_t> done{0};
    parallel_for(grid.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            const auto [t1, t2] = grid.params_of(j);
            const auto fp = epg::simulate_fingerprint(t1, t2, seq);
            CVector aligned;
            try {
                aligned = phase_align(fp.samples);
            } catch (const DegenerateSignal&) {
                throw DegenerateSignal("fingerprint (" + std::to_string(t1) + ", " +
                                       std::to_string(t2) + ") cannot be aligned");
            }
            const double norm = l2_norm(aligned);
            if (norm == 0.0)
                throw DegenerateSignal("fingerprint (" + std::to_string(t1) + ", " +
                                       std::to_string(t2) + ") is all zero");
            for (auto& v : aligned) v /= norm;
            store_normalized(aligned, {dict.atoms.data() + j * dict.length, dict.length});
            const std::size_t n = done.fetch_add(1) + 1;
            if (progress && (n % 4096 == 0 || n == grid.size())) progress(n, grid.size());
        }
    });
    return dict;
}

namespace {

constexpr char kMagic[] = "MRFD";
constexpr std::uint32_t kVersion = 1;

io::Bytes encode_header(const Dictionary& dict) {
    io::Writer w;
    w.put_magic(kMagic);
    w.put(kVersion);
    w.put(static_cast<std::uint32_t>(dict.length));
    w.put(static_cast<std::uint32_t>(dict.size()));
    w.put(static_cast<std::uint32_t>(dict.grid.t1_count()));
    w.put(static_cast<std::uint32_t>(dict.grid.t2_count()));
    w.put(dict.grid.t1_range.start);
    w.put(dict.grid.t1_range.step);
    w.put(dict.grid.t2_range.start);
    w.put(dict.grid.t2_range.step);
    w.put_array(std::span<const std::uint8_t>(dict.seq_digest));
    return w.take();
}

constexpr std::size_t kHeaderSize = 4 + 5 * 4 + 4 * 8 + 32;

// Emits the file image in pieces: header, atom payload, checksum.
template <class Sink>
void serialize(const Dictionary& dict, Sink&& sink) {
    const io::Bytes header = encode_header(dict);
    const auto payload = std::as_bytes(std::span<const cfloat>(dict.atoms));
    std::uint64_t checksum = io::fnv1a64(header);
    checksum = io::fnv1a64(payload, checksum);
    sink(std::span<const std::byte>(header));
    sink(payload);
    sink(std::as_bytes(std::span<const std::uint64_t>(&checksum, 1)));
}

}  // namespace

std::string Dictionary::content_digest() const {
    io::Sha256 h;
    serialize(*this, [&](std::span<const std::byte> b) { h.update(b); });
    const auto d = h.finish();
    return io::to_hex(d);
}

void save_dictionary(const Dictionary& dict, const std::filesystem::path& path) {
    if (dict.atoms.size() != dict.size() * dict.length)
        throw InvalidArgument("save_dictionary: atom storage does not match grid");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot create " + path.string());
    serialize(dict, [&](std::span<const std::byte> b) {
        out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    });
    if (!out) throw Error("write failed: " + path.string());
}

Dictionary load_dictionary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw Error("cannot open " + path.string());
    const auto file_size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    const std::string name = "dictionary " + path.string();

    io::Bytes header(std::min(file_size, kHeaderSize));
    in.read(reinterpret_cast<char*>(header.data()), static_cast<std::streamsize>(header.size()));
    if (header.size() < 4 || std::memcmp(header.data(), kMagic, 4) != 0)
        throw FormatError(name + ": bad magic, expected \"MRFD\"");
    if (header.size() < kHeaderSize) throw ChecksumError(name + ": file truncated inside header");

    io::Reader r(header);
    for (int i = 0; i < 4; ++i) r.get<char>();
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion)
        throw VersionError(name + ": unsupported version " + std::to_string(version) +
                           " (expected 1)");
    const auto length = r.get<std::uint32_t>();
    const auto d = r.get<std::uint32_t>();
    const auto t1_count = r.get<std::uint32_t>();
    const auto t2_count = r.get<std::uint32_t>();
    Range t1{r.get<double>(), r.get<double>(), 0.0};
    Range t2{r.get<double>(), r.get<double>(), 0.0};
    Dictionary dict;
    r.get_array(std::span<std::uint8_t>(dict.seq_digest));

    if (length == 0 || t1_count == 0 || t2_count == 0 ||
        static_cast<std::uint64_t>(t1_count) * t2_count != d || !(t1.step > 0.0) ||
        !(t2.step > 0.0))
        throw FormatError(name + ": corrupt header (inconsistent sizes)");
    t1.stop = t1.value(t1_count - 1);
    t2.stop = t2.value(t2_count - 1);

    const std::uint64_t payload = static_cast<std::uint64_t>(d) * length * sizeof(cfloat);
    const std::uint64_t expected = kHeaderSize + payload + sizeof(std::uint64_t);
    if (file_size < expected)
        throw ChecksumError(name + ": file truncated (" + std::to_string(file_size) + " of " +
                            std::to_string(expected) + " bytes)");
    if (file_size > expected) throw FormatError(name + ": trailing bytes after checksum");

    dict.grid = build_grid(t1, t2);
    if (dict.grid.t1_count() != t1_count || dict.grid.t2_count() != t2_count)
        throw FormatError(name + ": corrupt header (grid ranges)");
    dict.length = length;
    dict.atoms.resize(static_cast<std::size_t>(d) * length);
    in.read(reinterpret_cast<char*>(dict.atoms.data()), static_cast<std::streamsize>(payload));
    std::uint64_t stored = 0;
    in.read(reinterpret_cast<char*>(&stored), sizeof(stored));
    if (!in) throw ChecksumError(name + ": short read");

    std::uint64_t checksum = io::fnv1a64(header);
    checksum = io::fnv1a64(std::as_bytes(std::span<const cfloat>(dict.atoms)), checksum);
    if (checksum != stored) throw ChecksumError(name + ": checksum mismatch");
    return dict;
}

}  // namespace mrf::dict

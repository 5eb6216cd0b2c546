#include "mrf/spline.hpp"

#include "mrf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace mrf::spline {

namespace {

// Pre-activations of every layer for one compressed input.
std::vector<RVector> preactivations(const net::MlpModel& model, std::span<const double> h1) {
    if (h1.size() != model.rank()) throw DimensionMismatch("spline: compressed input length mismatch");
    std::vector<RVector> zs;
    RVector h(h1.begin(), h1.end());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const net::DenseLayer& layer = model.layers[l];
        RVector z(layer.out);
        for (std::size_t o = 0; o < layer.out; ++o) {
            const double* w = layer.weights.data() + o * layer.in;
            double acc = 0.0;
            for (std::size_t i = 0; i < layer.in; ++i) acc += w[i] * h[i];
            z[o] = acc + layer.biases[o];
        }
        h = z;
        for (double& v : h) v = std::max(v, 0.0);
        zs.push_back(std::move(z));
    }
    return zs;
}

void check_output(const net::MlpModel& model, std::size_t p) {
    if (p >= model.outputs())
        throw InvalidArgument("spline: output index " + std::to_string(p) + " out of range [0, " +
                              std::to_string(model.outputs()) + ")");
}

// Real and imaginary input gradients from a compressed gradient.
void expand(const subspace::Subspace& sub, std::span<const double> g, RVector& re, RVector& im) {
    re.assign(sub.length, 0.0);
    im.assign(sub.length, 0.0);
    for (std::size_t c = 0; c < sub.rank; ++c) {
        const double* vr = sub.column_re(c);
        const double* vi = sub.column_im(c);
        for (std::size_t t = 0; t < sub.length; ++t) {
            re[t] += vr[t] * g[c];
            im[t] += vi[t] * g[c];
        }
    }
}

RVector compressed_gradient_from(const net::MlpModel& model, const std::vector<RVector>& zs, std::size_t p) {
    const std::size_t n = model.layers.size();
    RVector y(model.outputs(), 0.0);
    y[p] = 1.0 / model.target_scale[p];
    for (std::size_t l = n; l-- > 0;) {
        const net::DenseLayer& layer = model.layers[l];
        RVector prev(layer.in, 0.0);
        for (std::size_t o = 0; o < layer.out; ++o) {
            if (y[o] == 0.0) continue;
            const double* w = layer.weights.data() + o * layer.in;
            for (std::size_t i = 0; i < layer.in; ++i) prev[i] += w[i] * y[o];
        }
        if (l > 0)
            for (std::size_t i = 0; i < layer.in; ++i)
                if (!(zs[l - 1][i] > 0.0)) prev[i] = 0.0;
        y.swap(prev);
    }
    return y;
}

}  // namespace

RVector compressed_gradient(const net::MlpModel& model, std::span<const double> h1, std::size_t p) {
    check_output(model, p);
    return compressed_gradient_from(model, preactivations(model, h1), p);
}

RVector input_gradient(const net::MlpModel& model, std::span<const cdouble> x, std::size_t p) {
    const RVector g = compressed_gradient(model, net::compress_input(model, x), p);
    RVector re, im;
    expand(model.layer1, g, re, im);
    return re;
}

RVector MatchedFilterSet::apply(std::span<const cdouble> x) const {
    RVector out(offsets);
    for (std::size_t p = 0; p < out.size(); ++p) {
        double acc = 0.0;
        for (std::size_t t = 0; t < x.size(); ++t)
            acc += slopes[p][t] * x[t].real() + slopes_im[p][t] * x[t].imag();
        out[p] += acc;
    }
    return out;
}

MatchedFilterSet matched_filters(const net::MlpModel& model, std::span<const cdouble> x) {
    for (const auto& v : x)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw InvalidArgument("matched_filters: non-finite input");
    const RVector h1 = net::compress_input(model, x);
    const auto zs = preactivations(model, h1);
    MatchedFilterSet f;
    f.at_input.assign(x.begin(), x.end());
    const std::size_t P = model.outputs();
    f.slopes.resize(P);
    f.slopes_im.resize(P);
    f.offsets.assign(P, 0.0);
    for (std::size_t p = 0; p < P; ++p)
        expand(model.layer1, compressed_gradient_from(model, zs, p), f.slopes[p], f.slopes_im[p]);
    const RVector z = net::weighted_output_compressed(model, h1);
    const RVector linear = f.apply(x);  // offsets are still zero here
    for (std::size_t p = 0; p < P; ++p) f.offsets[p] = z[p] - linear[p];
    return f;
}

ActivationPattern activation_pattern_compressed(const net::MlpModel& model, std::span<const double> h1) {
    ActivationPattern a;
    for (const auto& z : preactivations(model, h1))
        for (double v : z) a.bits.push_back(v > 0.0 ? 1 : 0);
    return a;
}

ActivationPattern activation_pattern(const net::MlpModel& model, std::span<const cdouble> x) {
    return activation_pattern_compressed(model, net::compress_input(model, x));
}

double min_abs_preactivation(const net::MlpModel& model, std::span<const double> h1) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& z : preactivations(model, h1))
        for (double v : z) m = std::min(m, std::abs(v));
    return m;
}

SegmentMap cluster_segments(std::span<const double> features, std::size_t rows, std::size_t dim,
                            std::size_t k, std::uint64_t seed, std::size_t max_iter) {
    const KMeansResult km = kmeans(features, rows, dim, k, seed, max_iter);
    SegmentMap m;
    m.labels = km.labels;
    m.k = k;
    m.feature_dim = dim;
    m.centroids = km.centroids;
    m.inertia = km.inertia;
    return m;
}

SegmentMap segment_report(const net::MlpModel& model, const dict::Dictionary& dict, std::size_t k,
                          std::uint64_t seed, std::size_t max_iter) {
    if (dict.length != model.input_length()) throw DimensionMismatch("segment_report: frame count mismatch");
    const std::size_t d = dict.size();
    const std::size_t s = model.rank();
    const std::size_t P = model.outputs();
    const std::size_t dim = P * s;
    std::vector<double> features(d * dim);
    std::vector<std::array<double, 3>> coords(d);
    parallel_for(d, [&](std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            const RVector h1 = net::compress_input(model, dict.atom_as_double(j));
            const auto zs = preactivations(model, h1);
            for (std::size_t p = 0; p < P; ++p) {
                const RVector g = compressed_gradient_from(model, zs, p);
                for (std::size_t c = 0; c < s; ++c)
                    features[j * dim + p * s + c] = g[c] * model.target_scale[p];
            }
            for (std::size_t c = 0; c < 3; ++c) coords[j][c] = c < s ? h1[c] : 0.0;
        }
    });
    SegmentMap m = cluster_segments(features, d, dim, k, seed, max_iter);
    m.coords = std::move(coords);
    m.t1_ms.resize(d);
    m.t2_ms.resize(d);
    for (std::size_t j = 0; j < d; ++j) std::tie(m.t1_ms[j], m.t2_ms[j]) = dict.grid.params_of(j);
    return m;
}

void write_segments_csv(const SegmentMap& map, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot create " + path.string());
    out.precision(17);
    out << "t1_ms,t2_ms,label,pc1,pc2,pc3\n";
    for (std::size_t j = 0; j < map.labels.size(); ++j)
        out << map.t1_ms[j] << ',' << map.t2_ms[j] << ',' << map.labels[j] << ',' << map.coords[j][0]
            << ',' << map.coords[j][1] << ',' << map.coords[j][2] << '\n';
}

double segment_contiguity(const SegmentMap& map, const dict::ParamGrid& grid) {
    const std::size_t n1 = grid.t1_count(), n2 = grid.t2_count();
    if (map.labels.size() != n1 * n2) throw DimensionMismatch("segment_contiguity: label count mismatch");
    std::size_t good = 0;
    for (std::size_t a = 0; a < n1; ++a)
        for (std::size_t b = 0; b < n2; ++b) {
            const std::size_t lab = map.labels[a * n2 + b];
            const bool same = (a > 0 && map.labels[(a - 1) * n2 + b] == lab) ||
                              (a + 1 < n1 && map.labels[(a + 1) * n2 + b] == lab) ||
                              (b > 0 && map.labels[a * n2 + b - 1] == lab) ||
                              (b + 1 < n2 && map.labels[a * n2 + b + 1] == lab);
            good += same ? 1 : 0;
        }
    return static_cast<double>(good) / static_cast<double>(n1 * n2);
}

FilterReport filter_report(const net::MlpModel& model, const dict::Dictionary& dict,
                           std::pair<double, double> t1_range, std::pair<double, double> t2_range) {
    if (dict.length != model.input_length()) throw DimensionMismatch("filter_report: frame count mismatch");
    FilterReport r;
    const auto& g = dict.grid;
    for (std::size_t a = 0; a < g.t1_count(); ++a) {
        const double t1 = g.t1_values_ms[a];
        if (t1 < t1_range.first || t1 > t1_range.second) continue;
        for (std::size_t b = 0; b < g.t2_count(); ++b) {
            const double t2 = g.t2_values_ms[b];
            if (t2 >= t2_range.first && t2 <= t2_range.second) r.atoms.push_back(a * g.t2_count() + b);
        }
    }
    if (r.atoms.empty())
        throw InvalidArgument("filter_report: region T1 [" + std::to_string(t1_range.first) + ", " +
                              std::to_string(t1_range.second) + "] x T2 [" +
                              std::to_string(t2_range.first) + ", " + std::to_string(t2_range.second) +
                              "] contains no grid point");
    r.centre_atom = g.nearest_index(0.5 * (t1_range.first + t1_range.second),
                                    0.5 * (t2_range.first + t2_range.second));
    for (std::size_t j : r.atoms) {
        const auto a = dict.atom(j);
        RVector re(a.size());
        for (std::size_t t = 0; t < a.size(); ++t) re[t] = a[t].real();
        r.fingerprints.push_back(std::move(re));
    }
    r.filters = matched_filters(model, dict.atom_as_double(r.centre_atom));
    return r;
}

void write_filter_csv(const FilterReport& report, const std::filesystem::path& path) {
    if (report.filters.slopes.size() < 2) throw InvalidArgument("write_filter_csv: need T1 and T2 filters");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot create " + path.string());
    out.precision(17);
    out << "frame,fingerprint_re,filter_t1,filter_t2\n";
    const auto& x = report.filters.at_input;
    for (std::size_t t = 0; t < x.size(); ++t)
        out << t << ',' << x[t].real() << ',' << report.filters.slopes[0][t] << ','
            << report.filters.slopes[1][t] << '\n';
}

void write_region_fingerprints_csv(const FilterReport& report, const dict::Dictionary& dict,
                                   const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot create " + path.string());
    out.precision(9);
    out << "frame";
    for (std::size_t j : report.atoms) {
        const auto [t1, t2] = dict.grid.params_of(j);
        out << ",t1_" << t1 << "_t2_" << t2;
    }
    out << '\n';
    const std::size_t L = report.fingerprints.empty() ? 0 : report.fingerprints.front().size();
    for (std::size_t t = 0; t < L; ++t) {
        out << t;
        for (const auto& f : report.fingerprints) out << ',' << f[t];
        out << '\n';
    }
}

FilterCsv read_filter_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "frame,fingerprint_re,filter_t1,filter_t2")
        throw ParseError("filter csv: unexpected header", 1);
    FilterCsv f;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::size_t frame = 0;
        double a, b, c;
        char c1, c2, c3;
        if (!(ss >> frame >> c1 >> a >> c2 >> b >> c3 >> c) || frame != f.fingerprint_re.size())
            throw ParseError("filter csv: malformed line " + std::to_string(line_no), line_no);
        f.fingerprint_re.push_back(a);
        f.filter_t1.push_back(b);
        f.filter_t2.push_back(c);
    }
    return f;
}

double leading_energy_fraction(std::span<const double> filter, std::size_t frames) {
    double head = 0.0, total = 0.0;
    for (std::size_t t = 0; t < filter.size(); ++t) {
        const double e = filter[t] * filter[t];
        total += e;
        if (t < frames) head += e;
    }
    return total > 0.0 ? head / total : 0.0;
}

}  // namespace mrf::spline

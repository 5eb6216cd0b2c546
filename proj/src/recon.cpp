#include "mrf/recon.hpp"

#include "mrf/parallel.hpp"

#include "json.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <random>

namespace mrf::recon {

using Json = nlohmann::json;

PhantomSpec default_phantom_spec() {
    PhantomSpec s;
    s.height = 64;
    s.width = 64;
    s.regions = {
        {21.0, 21.0, 11.0, 8.0, 20.0, 784.0, 77.0, 1.0},    // WM-like
        {43.0, 21.0, 10.0, 8.0, -15.0, 1216.0, 95.0, 0.9},  // GM-like
        {21.0, 43.0, 8.0, 8.0, 0.0, 4000.0, 600.0, 1.2},    // CSF-like
        {43.0, 43.0, 10.0, 7.0, 35.0, 300.0, 50.0, 0.8},    // fat-like
    };
    return s;
}

namespace {

Ellipse ellipse_from_json(const Json& j, std::size_t index) {
    const std::string where = "phantom.regions[" + std::to_string(index) + "]";
    if (!j.is_object()) throw InvalidArgument(where + ": expected an object");
    Ellipse e;
    auto field = [&](const char* name, double& out) {
        if (!j.contains(name) || !j[name].is_number())
            throw InvalidArgument(where + "." + name + ": missing or not a number");
        out = j[name].get<double>();
    };
    field("cx", e.cx);
    field("cy", e.cy);
    field("rx", e.rx);
    field("ry", e.ry);
    field("t1_ms", e.t1_ms);
    field("t2_ms", e.t2_ms);
    e.angle_deg = j.value("angle_deg", 0.0);
    e.scale = j.value("scale", 1.0);
    return e;
}

}  // namespace

PhantomSpec parse_phantom_spec(const std::string& json_text) {
    Json j;
    try {
        j = Json::parse(json_text);
    } catch (const Json::parse_error& e) {
        throw InvalidArgument(std::string("phantom: ") + e.what());
    }
    PhantomSpec s;
    const Json* list = &j;
    if (j.is_object()) {
        s.height = j.value("height", s.height);
        s.width = j.value("width", s.width);
        if (!j.contains("regions")) throw InvalidArgument("phantom.regions: missing");
        list = &j["regions"];
    }
    if (!list->is_array()) throw InvalidArgument("phantom.regions: expected a list");
    for (std::size_t i = 0; i < list->size(); ++i) s.regions.push_back(ellipse_from_json((*list)[i], i));
    return s;
}

std::string phantom_spec_json(const PhantomSpec& spec) {
    Json regions = Json::array();
    for (const auto& e : spec.regions)
        regions.push_back({{"cx", e.cx}, {"cy", e.cy}, {"rx", e.rx}, {"ry", e.ry}, {"angle_deg", e.angle_deg},
                           {"t1_ms", e.t1_ms}, {"t2_ms", e.t2_ms}, {"scale", e.scale}});
    Json j{{"height", spec.height}, {"width", spec.width}, {"regions", regions}};
    return j.dump(2);
}

Phantom make_phantom(const PhantomSpec& spec, const dict::Range& t1_range, const dict::Range& t2_range) {
    if (spec.height == 0 || spec.width == 0) throw InvalidArgument("phantom: empty image size");
    Phantom p;
    p.height = spec.height;
    p.width = spec.width;
    const std::size_t n = p.voxels();
    p.t1_ms.assign(n, 0.0);
    p.t2_ms.assign(n, 0.0);
    p.scale.assign(n, 0.0);
    p.labels.assign(n, 0);
    p.regions = spec.regions;
    for (std::size_t i = 0; i < spec.regions.size(); ++i) {
        const Ellipse& e = spec.regions[i];
        const std::string where = "phantom.regions[" + std::to_string(i) + "]";
        if (!(e.rx > 0.0 && e.ry > 0.0)) throw InvalidArgument(where + ": radii must be positive");
        if (e.t1_ms < t1_range.start || e.t1_ms > t1_range.stop)
            throw InvalidArgument(where + ".t1_ms: " + std::to_string(e.t1_ms) + " outside the grid range");
        if (e.t2_ms < t2_range.start || e.t2_ms > t2_range.stop)
            throw InvalidArgument(where + ".t2_ms: " + std::to_string(e.t2_ms) + " outside the grid range");
        if (!(e.scale >= 0.0) || !std::isfinite(e.scale)) throw InvalidArgument(where + ".scale: must be >= 0");
        const double a = e.angle_deg * std::numbers::pi / 180.0;
        const double ca = std::cos(a), sa = std::sin(a);
        for (std::size_t y = 0; y < p.height; ++y)
            for (std::size_t x = 0; x < p.width; ++x) {
                const double dx = static_cast<double>(x) - e.cx;
                const double dy = static_cast<double>(y) - e.cy;
                const double u = (dx * ca + dy * sa) / e.rx;
                const double v = (-dx * sa + dy * ca) / e.ry;
                if (u * u + v * v > 1.0) continue;
                const std::size_t k = y * p.width + x;
                p.t1_ms[k] = e.t1_ms;
                p.t2_ms[k] = e.t2_ms;
                p.scale[k] = e.scale;
                p.labels[k] = static_cast<int>(i + 1);
            }
    }
    return p;
}

TimeSeriesImage synthesize_image(const Phantom& phantom, const epg::SequenceParams& seq) {
    seq.validate();
    TimeSeriesImage img;
    img.height = phantom.height;
    img.width = phantom.width;
    img.frames = seq.length();
    img.data.assign(img.voxels() * img.frames, cdouble(0.0));
    std::map<std::pair<double, double>, CVector> cache;
    for (std::size_t v = 0; v < img.voxels(); ++v) {
        if (phantom.scale[v] == 0.0) continue;
        const auto key = std::make_pair(phantom.t1_ms[v], phantom.t2_ms[v]);
        auto it = cache.find(key);
        if (it == cache.end())
            it = cache.emplace(key, epg::simulate_fingerprint(key.first, key.second, seq).samples).first;
        auto out = img.voxel(v);
        for (std::size_t t = 0; t < img.frames; ++t) out[t] = phantom.scale[v] * it->second[t];
    }
    return img;
}

namespace {

long signed_freq(std::size_t k, std::size_t n) {
    return k < (n + 1) / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

// Planning is not thread-safe in FFTW; execution with new-array functions is.
std::mutex g_fftw_mutex;

class Fft2 {
public:
    Fft2(std::size_t h, std::size_t w, int sign) : n_(h * w) {
        in_ = fftw_alloc_complex(n_);
        out_ = fftw_alloc_complex(n_);
        std::lock_guard lock(g_fftw_mutex);
        plan_ = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), in_, out_, sign, FFTW_ESTIMATE);
        if (!plan_) throw Error("fftw: planning failed");
    }
    ~Fft2() {
        {
            std::lock_guard lock(g_fftw_mutex);
            fftw_destroy_plan(plan_);
        }
        fftw_free(in_);
        fftw_free(out_);
    }
    Fft2(const Fft2&) = delete;
    Fft2& operator=(const Fft2&) = delete;

    cdouble* in() { return reinterpret_cast<cdouble*>(in_); }
    const cdouble* out() const { return reinterpret_cast<const cdouble*>(out_); }
    // Unitary transform of in() into out().
    void run() {
        fftw_execute(plan_);
        const double s = 1.0 / std::sqrt(static_cast<double>(n_));
        for (std::size_t k = 0; k < n_; ++k) {
            out_[k][0] *= s;
            out_[k][1] *= s;
        }
    }

private:
    std::size_t n_;
    fftw_complex* in_;
    fftw_complex* out_;
    fftw_plan plan_;
};

}  // namespace

std::vector<std::vector<std::uint32_t>> sampling_masks(std::size_t height, std::size_t width,
                                                       std::size_t frames, std::size_t m,
                                                       std::uint64_t seed) {
    const std::size_t n = height * width;
    if (m > n) throw InvalidArgument("sampling_masks: m = " + std::to_string(m) + " exceeds n = " + std::to_string(n));
    std::vector<std::uint32_t> by_freq(n);
    for (std::size_t k = 0; k < n; ++k) by_freq[k] = static_cast<std::uint32_t>(k);
    auto radius2 = [&](std::uint32_t k) {
        const long ky = signed_freq(k / width, height), kx = signed_freq(k % width, width);
        return ky * ky + kx * kx;
    };
    std::stable_sort(by_freq.begin(), by_freq.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return radius2(a) < radius2(b); });
    const std::size_t centre = (m + 3) / 4;
    std::vector<std::vector<std::uint32_t>> masks(frames);
    for (std::size_t t = 0; t < frames; ++t) {
        std::vector<std::uint32_t> pool(by_freq.begin() + static_cast<std::ptrdiff_t>(centre), by_freq.end());
        SplitMix64 rng(mix_seed(seed, t));
        auto& mask = masks[t];
        mask.assign(by_freq.begin(), by_freq.begin() + static_cast<std::ptrdiff_t>(centre));
        for (std::size_t i = 0; i < m - centre; ++i) {
            const std::size_t left = pool.size() - i;
            const auto j = i + static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * left) >> 64);
            std::swap(pool[i], pool[j]);
            mask.push_back(pool[i]);
        }
        std::sort(mask.begin(), mask.end());
    }
    return masks;
}

KSpaceData forward_acquire(const TimeSeriesImage& image, const std::vector<std::vector<std::uint32_t>>& masks) {
    if (masks.size() != image.frames)
        throw DimensionMismatch("forward_acquire: " + std::to_string(masks.size()) + " masks for " +
                                std::to_string(image.frames) + " frames");
    const std::size_t n = image.voxels();
    KSpaceData k;
    k.height = image.height;
    k.width = image.width;
    k.masks = masks;
    k.samples.resize(image.frames);
    for (const auto& mask : masks)
        for (std::uint32_t idx : mask)
            if (idx >= n) throw InvalidArgument("forward_acquire: mask index outside the k-space grid");
    parallel_for(image.frames, [&](std::size_t begin, std::size_t end) {
        Fft2 fft(image.height, image.width, FFTW_FORWARD);
        for (std::size_t t = begin; t < end; ++t) {
            for (std::size_t v = 0; v < n; ++v) fft.in()[v] = image.data[v * image.frames + t];
            fft.run();
            auto& s = k.samples[t];
            s.resize(masks[t].size());
            for (std::size_t i = 0; i < masks[t].size(); ++i) s[i] = fft.out()[masks[t][i]];
        }
    });
    return k;
}

TimeSeriesImage back_project(const KSpaceData& kspace) {
    const std::size_t n = kspace.height * kspace.width;
    if (kspace.samples.size() != kspace.masks.size())
        throw DimensionMismatch("back_project: sample and mask frame counts differ");
    TimeSeriesImage img;
    img.height = kspace.height;
    img.width = kspace.width;
    img.frames = kspace.frames();
    img.data.assign(n * img.frames, cdouble(0.0));
    for (std::size_t t = 0; t < img.frames; ++t) {
        if (kspace.samples[t].size() != kspace.masks[t].size())
            throw DimensionMismatch("back_project: frame " + std::to_string(t) + " sample count differs from mask");
        for (std::uint32_t idx : kspace.masks[t])
            if (idx >= n) throw InvalidArgument("back_project: mask index outside the k-space grid");
    }
    parallel_for(img.frames, [&](std::size_t begin, std::size_t end) {
        Fft2 fft(img.height, img.width, FFTW_BACKWARD);
        for (std::size_t t = begin; t < end; ++t) {
            std::fill(fft.in(), fft.in() + n, cdouble(0.0));
            const auto& mask = kspace.masks[t];
            for (std::size_t i = 0; i < mask.size(); ++i) fft.in()[mask[i]] += kspace.samples[t][i];
            fft.run();
            for (std::size_t v = 0; v < n; ++v) img.data[v * img.frames + t] = fft.out()[v];
        }
    });
    return img;
}

void add_noise(KSpaceData& kspace, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw InvalidArgument("add_noise: sigma must be >= 0");
    const double s = sigma / std::sqrt(2.0);
    for (std::size_t t = 0; t < kspace.frames(); ++t) {
        SplitMix64 rng(mix_seed(seed, t));
        std::normal_distribution<double> g(0.0, 1.0);
        for (auto& v : kspace.samples[t]) v += cdouble(s * g(rng), s * g(rng));
    }
}

QMaps reconstruct_maps(const TimeSeriesImage& image, Engine engine, const EngineResources& res) {
    if (engine == Engine::DM) {
        if (!res.compressed || !res.subspace)
            throw InvalidArgument("reconstruct: DM engine needs a compressed dictionary and subspace");
        match::MatchOptions opts;
        opts.degenerate_fraction = res.degenerate_fraction;
        return match::match_image(*res.compressed, *res.subspace, image, opts);
    }
    if (!res.model) throw InvalidArgument("reconstruct: NET engine needs a model");
    const net::MlpModel& model = *res.model;
    if (image.frames != model.input_length()) throw DimensionMismatch("reconstruct: frame count mismatch");
    QMaps maps = QMaps::blank(image.height, image.width, Engine::NET);
    const std::size_t n = image.voxels();
    std::vector<double> norms(n);
    for (std::size_t v = 0; v < n; ++v) norms[v] = l2_norm(image.voxel(v));
    const double max_norm = n ? *std::max_element(norms.begin(), norms.end()) : 0.0;
    const double threshold = res.degenerate_fraction * max_norm;
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t v = begin; v < end; ++v) {
            if (max_norm == 0.0 || norms[v] < threshold) {
                maps.flags[v] = 1;
                continue;
            }
            try {
                const RVector p = net::predict_voxel(model, image.voxel(v));
                maps.t1_ms[v] = static_cast<float>(p[0]);
                maps.t2_ms[v] = static_cast<float>(p[1]);
            } catch (const DegenerateSignal&) {
                maps.flags[v] = 1;
            }
        }
    });
    if (res.sequence && res.grid) {
        // Scale estimate against the re-simulated fingerprint at the nearest
        // grid point; one simulation per distinct grid point.
        std::map<std::size_t, CVector> atoms;
        for (std::size_t v = 0; v < n; ++v) {
            if (maps.flags[v]) continue;
            const std::size_t j = res.grid->nearest_index(maps.t1_ms[v], maps.t2_ms[v]);
            auto it = atoms.find(j);
            if (it == atoms.end()) {
                const auto [t1, t2] = res.grid->params_of(j);
                CVector f = epg::simulate_fingerprint(t1, t2, *res.sequence).samples;
                const double nf = l2_norm(f);
                if (nf > 0.0)
                    for (auto& x : f) x /= nf;
                it = atoms.emplace(j, std::move(f)).first;
            }
            cdouble inner = 0.0;
            const auto x = image.voxel(v);
            for (std::size_t t = 0; t < x.size(); ++t) inner += std::conj(it->second[t]) * x[t];
            maps.scale[v] = static_cast<float>(std::abs(inner));
        }
    }
    return maps;
}

namespace {

double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

MapMetrics map_error(const QMaps& maps, const Phantom& phantom) {
    if (maps.height != phantom.height || maps.width != phantom.width)
        throw DimensionMismatch("map_error: map and phantom sizes differ");
    MapMetrics m;
    m.engine = maps.engine;
    m.flagged_fraction = maps.flagged_fraction();
    for (std::size_t r = 0; r < phantom.regions.size(); ++r) {
        const int label = static_cast<int>(r + 1);
        RegionMetrics rm;
        rm.label = label;
        rm.t1_true_ms = phantom.regions[r].t1_ms;
        rm.t2_true_ms = phantom.regions[r].t2_ms;
        std::vector<double> t1, t2, e1, e2;
        for (std::size_t v = 0; v < phantom.voxels(); ++v) {
            if (phantom.labels[v] != label || maps.flags[v]) continue;
            t1.push_back(maps.t1_ms[v]);
            t2.push_back(maps.t2_ms[v]);
            e1.push_back(std::abs(maps.t1_ms[v] - rm.t1_true_ms) / rm.t1_true_ms);
            e2.push_back(std::abs(maps.t2_ms[v] - rm.t2_true_ms) / rm.t2_true_ms);
        }
        rm.voxels = t1.size();
        rm.t1_median_ms = median(t1);
        rm.t2_median_ms = median(t2);
        rm.t1_median_rel_error = median(e1);
        rm.t2_median_rel_error = median(e2);
        rm.t1_mae_rel = mean(e1);
        rm.t2_mae_rel = mean(e2);
        m.regions.push_back(rm);
    }
    return m;
}

std::string metrics_json(const std::vector<MapMetrics>& metrics) {
    Json out = Json::object();
    for (const auto& m : metrics) {
        Json regions = Json::array();
        for (const auto& r : m.regions)
            regions.push_back({{"label", r.label},
                               {"voxels", r.voxels},
                               {"t1_true_ms", r.t1_true_ms},
                               {"t2_true_ms", r.t2_true_ms},
                               {"t1_median_ms", number_or_null(r.t1_median_ms)},
                               {"t2_median_ms", number_or_null(r.t2_median_ms)},
                               {"t1_median_rel_error", number_or_null(r.t1_median_rel_error)},
                               {"t2_median_rel_error", number_or_null(r.t2_median_rel_error)},
                               {"t1_mae_rel", number_or_null(r.t1_mae_rel)},
                               {"t2_mae_rel", number_or_null(r.t2_mae_rel)}});
        out[std::string(engine_name(m.engine))] = {{"flagged_fraction", m.flagged_fraction},
                                                   {"regions", regions}};
    }
    return out.dump(2);
}

}  // namespace mrf::recon

#include "pipeline.hpp"

#include "mrf/io.hpp"
#include "mrf/mrfnet.hpp"
#include "mrf/parallel.hpp"
#include "mrf/recon.hpp"
#include "mrf/spline.hpp"
#include "mrf/subspace.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>

namespace mrf::pipeline {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Loaded {
    Json json;
    fs::path base;
    std::string digest;
};

Loaded load_config(const fs::path& path) {
    io::Bytes bytes;
    try {
        bytes = io::read_file(path);
    } catch (const Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    Loaded c;
    try {
        c.json = Json::parse(reinterpret_cast<const char*>(bytes.data()),
                             reinterpret_cast<const char*>(bytes.data()) + bytes.size());
    } catch (const Json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    if (!c.json.is_object()) throw ConfigError("config " + path.string() + ": expected a JSON object");
    c.base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    c.digest = io::sha256_hex(bytes);
    return c;
}

// Runs config interpretation; any invalid value becomes a ConfigError.
template <class F>
auto configure(F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

template <class T>
T field(const Json& j, const char* key, const T& fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError(std::string(key) + ": wrong type");
    }
}

template <class T>
T required(const Json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string(key) + ": required field missing");
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError(std::string(key) + ": wrong type");
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::uint64_t required_seed(const Json& j) {
    if (!j.contains("seed")) throw ConfigError("seed: required for this command");
    return required<std::uint64_t>(j, "seed");
}

void finish(Manifest& m, const fs::path& out_dir, Clock::time_point t0) {
    m.wall_time_s = seconds_since(t0);
    fs::create_directories(out_dir);
    std::ofstream out(out_dir / "manifest.json");
    out << m.to_json().dump(2) << '\n';
    if (!out) throw Error("cannot write " + (out_dir / "manifest.json").string());
}

void record_output(Manifest& m, const fs::path& path) {
    m.outputs[path.filename().string()] = io::file_sha256_hex(path);
}

void progress_line(const char* what, std::size_t done, std::size_t total) {
    std::cerr << '\r' << what << ' ' << done << '/' << total << std::flush;
    if (done == total) std::cerr << '\n';
}

dict::Range range_from_json(const Json& j, const char* name) {
    if (!j.contains(name)) throw ConfigError(std::string("grid.") + name + ": required field missing");
    const Json& r = j.at(name);
    dict::Range out;
    out.start = required<double>(r, "start");
    out.step = required<double>(r, "step");
    out.stop = required<double>(r, "stop");
    out.validate(std::string("grid.") + name);
    return out;
}

std::vector<std::size_t> hidden_layout(const Json& j) {
    auto hidden = field<std::vector<std::size_t>>(j, "hidden", {200, 30});
    for (std::size_t h : hidden)
        if (h == 0) throw ConfigError("hidden: layer widths must be positive");
    return hidden;
}

net::TrainConfig train_config_from_json(const Json& j, std::uint64_t seed) {
    Json t = j.contains("train") ? j.at("train") : Json::object();
    if (!t.is_object()) throw ConfigError("train: expected an object");
    t["seed"] = seed;
    try {
        return net::TrainConfig::from_json(t.dump());
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
}

dict::Dictionary load_dictionary_input(const Json& j, const fs::path& base, Manifest& m, fs::path* path_out) {
    const fs::path path = resolve(base, required<std::string>(j, "dictionary"));
    if (!fs::exists(path)) throw Error("dictionary not found: " + path.string());
    std::cerr << "loading dictionary " << path << '\n';
    dict::Dictionary d = dict::load_dictionary(path);
    m.inputs["dictionary"] = io::file_sha256_hex(path);
    if (path_out) *path_out = path;
    return d;
}

net::MlpModel load_checkpoint_input(const Json& j, const fs::path& base, Manifest& m) {
    const fs::path path = resolve(base, required<std::string>(j, "checkpoint"));
    if (!fs::exists(path)) throw Error("checkpoint not found: " + path.string());
    net::MlpModel model = net::load_model(path);
    m.inputs["checkpoint"] = io::file_sha256_hex(path);
    return model;
}

}  // namespace

Json Manifest::to_json() const {
    return Json{{"command", command},
                {"config_digest", config_digest},
                {"inputs", inputs},
                {"outputs", outputs},
                {"measurements", measurements},
                {"wall_time_s", wall_time_s},
                {"seed", seed}};
}

epg::SequenceParams sequence_from_json(const Json& j, const fs::path& base) {
    const auto length = field<std::size_t>(j, "length", 1000);
    if (length == 0) throw ConfigError("sequence.length: must be positive");
    epg::SequenceParams seq = epg::default_sequence(length);
    if (j.contains("flip_schedule"))
        seq.flip_angles_deg = epg::read_schedule(resolve(base, required<std::string>(j, "flip_schedule")), length);
    if (j.contains("tr_schedule"))
        seq.repetition_times_ms = epg::read_schedule(resolve(base, required<std::string>(j, "tr_schedule")), length);
    else if (j.contains("tr_ms"))
        seq.repetition_times_ms.assign(length, required<double>(j, "tr_ms"));
    seq.echo_time_ms = field<double>(j, "te_ms", seq.echo_time_ms);
    seq.inversion_time_ms = field<double>(j, "ti_ms", seq.inversion_time_ms);
    seq.rf_phase_deg = field<double>(j, "rf_phase_deg", seq.rf_phase_deg);
    seq.epg_max_order = field<int>(j, "epg_max_order", seq.epg_max_order);
    seq.validate();
    return seq;
}

dict::ParamGrid grid_from_json(const Json& j) {
    return dict::build_grid(range_from_json(j, "t1"), range_from_json(j, "t2"));
}

Json cost_json(const match::CostReport& r) {
    return Json{{"dm_flops_per_voxel", r.dm_flops_per_voxel}, {"net_flops_per_voxel", r.net_flops_per_voxel},
                {"dm_bytes", r.dm_bytes},                     {"net_bytes", r.net_bytes},
                {"ratio_flops", r.ratio_flops},               {"ratio_bytes", r.ratio_bytes}};
}

// ---- sim-dict ----

Manifest cmd_sim_dict(const fs::path& config, const fs::path& out_dir) {
    const auto t0 = Clock::now();
    const Loaded cfg = load_config(config);
    Manifest m;
    m.command = "sim-dict";
    m.config_digest = cfg.digest;
    struct Setup {
        epg::SequenceParams seq;
        dict::ParamGrid grid;
        std::string output;
    };
    const Setup s = configure([&] {
        Setup s;
        s.seq = sequence_from_json(cfg.json.value("sequence", Json::object()), cfg.base);
        s.grid = grid_from_json(cfg.json.value("grid", Json::object()));
        s.output = field<std::string>(cfg.json, "output", "dictionary.mrfd");
        m.seed = field<std::uint64_t>(cfg.json, "seed", 0);
        return s;
    });
    std::cerr << "simulating " << s.grid.size() << " atoms x " << s.seq.length() << " frames\n";
    const dict::Dictionary d = dict::simulate_dictionary(s.grid, s.seq, [](std::size_t done, std::size_t total) {
        if (done == total || done % 4096 == 0) progress_line("atoms", done, total);
    });
    const fs::path out = out_dir / s.output;
    dict::save_dictionary(d, out);
    record_output(m, out);
    finish(m, out_dir, t0);
    return m;
}

// ---- train ----

Manifest cmd_train(const fs::path& config, const fs::path& out_dir) {
    const auto t0 = Clock::now();
    const Loaded cfg = load_config(config);
    Manifest m;
    m.command = "train";
    m.config_digest = cfg.digest;
    struct Setup {
        std::size_t rank;
        std::vector<std::size_t> hidden;
        net::TrainConfig train;
        std::string output, loss_csv, subspace_csv;
    };
    const Setup s = configure([&] {
        Setup s;
        m.seed = required_seed(cfg.json);
        s.rank = field<std::size_t>(cfg.json, "subspace_rank", 10);
        if (s.rank == 0) throw ConfigError("subspace_rank: must be positive");
        s.hidden = hidden_layout(cfg.json);
        s.train = train_config_from_json(cfg.json, m.seed);
        s.output = field<std::string>(cfg.json, "output", "model.mrfn");
        s.loss_csv = field<std::string>(cfg.json, "loss_csv", "loss.csv");
        s.subspace_csv = field<std::string>(cfg.json, "subspace_csv", "");
        required<std::string>(cfg.json, "dictionary");
        return s;
    });
    const dict::Dictionary d = load_dictionary_input(cfg.json, cfg.base, m, nullptr);
    if (s.rank > d.length) throw ConfigError("subspace_rank: exceeds the fingerprint length");

    std::cerr << "computing rank-" << s.rank << " subspace\n";
    subspace::SolverReport report;
    const subspace::Subspace sub = subspace::compute_subspace(d, s.rank, {}, &report);
    std::cerr << "subspace: " << report.iterations << " iterations, residual " << report.max_residual << '\n';

    std::vector<std::size_t> layout{d.length, s.rank};
    layout.insert(layout.end(), s.hidden.begin(), s.hidden.end());
    layout.push_back(2);
    net::MlpModel model = net::init_model(sub, layout, mix_seed(m.seed, 0x1417));

    std::cerr << "labelling " << d.size() * s.train.augmentation_factor << " training pairs\n";
    const net::TrainingSet pairs(d, sub, s.train, [](std::size_t done, std::size_t total) {
        progress_line("pairs", done, total);
    });
    auto result = net::train(std::move(model), pairs, s.train, [&](std::size_t epoch, double loss) {
        std::cerr << "epoch " << epoch + 1 << '/' << s.train.epochs << " loss " << loss << '\n';
    });

    fs::create_directories(out_dir);
    const fs::path ckpt = out_dir / s.output;
    net::save_model(result.model, ckpt);
    record_output(m, ckpt);
    const fs::path loss_path = out_dir / s.loss_csv;
    {
        std::ofstream out(loss_path);
        out.precision(17);
        out << "epoch,loss\n";
        for (std::size_t e = 0; e < result.loss_history.size(); ++e) out << e + 1 << ',' << result.loss_history[e] << '\n';
        if (!out) throw Error("cannot write " + loss_path.string());
    }
    record_output(m, loss_path);
    if (!s.subspace_csv.empty()) {
        const fs::path p = out_dir / s.subspace_csv;
        subspace::export_csv(sub, p);
        record_output(m, p);
    }
    finish(m, out_dir, t0);
    return m;
}

// ---- reconstruct ----

Manifest cmd_reconstruct(const fs::path& config, const fs::path& out_dir) {
    const auto t0 = Clock::now();
    const Loaded cfg = load_config(config);
    Manifest m;
    m.command = "reconstruct";
    m.config_digest = cfg.digest;
    struct Setup {
        bool dm = false, net = false;
        recon::PhantomSpec phantom;
        epg::SequenceParams seq;
        std::optional<std::size_t> m;
        double noise_sigma = 0.0;
        std::size_t rank = 10;
    };
    const Setup s = configure([&] {
        Setup s;
        m.seed = required_seed(cfg.json);
        const auto engine = field<std::string>(cfg.json, "engine", "both");
        if (engine == "dm")
            s.dm = true;
        else if (engine == "net")
            s.net = true;
        else if (engine == "both")
            s.dm = s.net = true;
        else
            throw ConfigError("engine: expected \"dm\", \"net\" or \"both\", got \"" + engine + "\"");
        if (!cfg.json.contains("phantom")) {
            s.phantom = recon::default_phantom_spec();
        } else if (cfg.json["phantom"].is_string()) {
            const fs::path p = resolve(cfg.base, cfg.json["phantom"].get<std::string>());
            const io::Bytes b = io::read_file(p);
            s.phantom = recon::parse_phantom_spec(std::string(reinterpret_cast<const char*>(b.data()), b.size()));
        } else {
            s.phantom = recon::parse_phantom_spec(cfg.json["phantom"].dump());
        }
        s.seq = sequence_from_json(cfg.json.value("sequence", Json::object()), cfg.base);
        if (cfg.json.contains("m")) s.m = required<std::size_t>(cfg.json, "m");
        s.noise_sigma = field<double>(cfg.json, "noise_sigma", 0.0);
        if (!(s.noise_sigma >= 0.0)) throw ConfigError("noise_sigma: must be >= 0");
        s.rank = field<std::size_t>(cfg.json, "subspace_rank", 10);
        required<std::string>(cfg.json, "dictionary");
        if (s.net) required<std::string>(cfg.json, "checkpoint");
        return s;
    });

    const dict::Dictionary d = load_dictionary_input(cfg.json, cfg.base, m, nullptr);
    if (d.seq_digest != s.seq.digest())
        throw ConfigError("sequence: does not match the sequence the dictionary was simulated with");
    const recon::Phantom phantom =
        configure([&] { return recon::make_phantom(s.phantom, d.grid.t1_range, d.grid.t2_range); });
    const std::size_t n = phantom.voxels();
    const std::size_t mm = s.m.value_or(n / 16);
    if (mm == 0 || mm > n) throw ConfigError("m: must be in [1, " + std::to_string(n) + "]");

    std::optional<net::MlpModel> model;
    if (cfg.json.contains("checkpoint") && (s.net || s.dm)) {
        model = load_checkpoint_input(cfg.json, cfg.base, m);
        if (model->input_length() != d.length) throw Error("checkpoint frame count does not match the dictionary");
    }

    std::cerr << "synthesizing " << phantom.height << "x" << phantom.width << " phantom\n";
    const TimeSeriesImage clean = recon::synthesize_image(phantom, s.seq);
    const auto masks = recon::sampling_masks(phantom.height, phantom.width, s.seq.length(), mm, m.seed);
    recon::KSpaceData k = recon::forward_acquire(clean, masks);
    if (s.noise_sigma > 0.0) recon::add_noise(k, s.noise_sigma, mix_seed(m.seed, 0x401e));
    const TimeSeriesImage image = recon::back_project(k);

    subspace::Subspace sub;
    if (model) {
        sub = model->layer1;
    } else {
        std::cerr << "computing rank-" << s.rank << " subspace\n";
        sub = subspace::compute_subspace(d, s.rank);
    }

    recon::EngineResources res;
    res.subspace = &sub;
    res.sequence = &s.seq;
    res.grid = &d.grid;
    std::vector<recon::MapMetrics> metrics;
    fs::create_directories(out_dir);
    auto emit = [&](const QMaps& maps, const std::string& tag) {
        const fs::path bin = out_dir / ("qmaps_" + tag + ".mrfq");
        const fs::path csv = out_dir / ("qmaps_" + tag + ".csv");
        save_qmaps(maps, bin);
        save_qmaps_csv(maps, csv);
        record_output(m, bin);
        record_output(m, csv);
        metrics.push_back(recon::map_error(maps, phantom));
    };
    match::CompressedDictionary cd;
    if (s.dm) {
        std::cerr << "dictionary matching\n";
        cd = match::compress(d, sub);
        res.compressed = &cd;
        emit(recon::reconstruct_maps(image, Engine::DM, res), "dm");
    }
    if (s.net) {
        std::cerr << "network inference\n";
        res.model = &*model;
        emit(recon::reconstruct_maps(image, Engine::NET, res), "net");
    }
    const fs::path mpath = out_dir / "metrics.json";
    {
        std::ofstream out(mpath);
        out << recon::metrics_json(metrics) << '\n';
        if (!out) throw Error("cannot write " + mpath.string());
    }
    record_output(m, mpath);
    finish(m, out_dir, t0);
    return m;
}

// ---- analyze ----

Manifest cmd_analyze(const fs::path& config, const fs::path& out_dir) {
    const auto t0 = Clock::now();
    const Loaded cfg = load_config(config);
    Manifest m;
    m.command = "analyze";
    m.config_digest = cfg.digest;
    struct Setup {
        std::string mode;
        std::size_t k = 12, max_iter = 300;
        std::pair<double, double> t1{700.0, 900.0}, t2{60.0, 90.0};
    };
    const Setup s = configure([&] {
        Setup s;
        s.mode = required<std::string>(cfg.json, "mode");
        if (s.mode != "segments" && s.mode != "filters")
            throw ConfigError("mode: expected \"segments\" or \"filters\", got \"" + s.mode + "\"");
        if (s.mode == "segments") m.seed = required_seed(cfg.json);
        s.k = field<std::size_t>(cfg.json, "k", 12);
        if (s.k == 0) throw ConfigError("k: must be >= 1");
        s.max_iter = field<std::size_t>(cfg.json, "max_iter", 300);
        if (s.max_iter == 0) throw ConfigError("max_iter: must be >= 1");
        if (cfg.json.contains("region")) {
            const Json& r = cfg.json["region"];
            const auto a = required<std::vector<double>>(r, "t1_ms");
            const auto b = required<std::vector<double>>(r, "t2_ms");
            if (a.size() != 2 || b.size() != 2 || a[0] > a[1] || b[0] > b[1])
                throw ConfigError("region: t1_ms and t2_ms must be ordered [lo, hi] pairs");
            s.t1 = {a[0], a[1]};
            s.t2 = {b[0], b[1]};
        }
        required<std::string>(cfg.json, "dictionary");
        required<std::string>(cfg.json, "checkpoint");
        return s;
    });
    const net::MlpModel model = load_checkpoint_input(cfg.json, cfg.base, m);
    if (model.config_json.empty()) throw Error("checkpoint is untrained (no training configuration recorded)");
    const dict::Dictionary d = load_dictionary_input(cfg.json, cfg.base, m, nullptr);
    if (d.length != model.input_length()) throw Error("checkpoint frame count does not match the dictionary");
    fs::create_directories(out_dir);
    if (s.mode == "segments") {
        if (s.k > d.size()) throw ConfigError("k: exceeds the number of probes");
        std::cerr << "segment report over " << d.size() << " probes, k = " << s.k << '\n';
        const spline::SegmentMap map = spline::segment_report(model, d, s.k, m.seed, s.max_iter);
        const fs::path p = out_dir / "segments.csv";
        spline::write_segments_csv(map, p);
        record_output(m, p);
        std::cerr << "contiguity " << spline::segment_contiguity(map, d.grid) << '\n';
    } else {
        const spline::FilterReport r = configure([&] { return spline::filter_report(model, d, s.t1, s.t2); });
        const fs::path p = out_dir / "filters.csv";
        const fs::path q = out_dir / "region_fingerprints.csv";
        spline::write_filter_csv(r, p);
        spline::write_region_fingerprints_csv(r, d, q);
        record_output(m, p);
        record_output(m, q);
    }
    finish(m, out_dir, t0);
    return m;
}

// ---- bench ----

BenchTiming micro_benchmark(std::size_t length, std::size_t rank, std::size_t atoms,
                            std::span<const std::size_t> net_layout, std::size_t voxels,
                            std::uint64_t seed) {
    if (rank == 0 || rank > length) throw InvalidArgument("bench: need 0 < s <= L");
    if (net_layout.empty() || net_layout.front() != rank)
        throw InvalidArgument("bench: layout must start at s");
    SplitMix64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);

    subspace::Subspace sub;
    sub.length = length;
    sub.rank = rank;
    sub.basis_re.resize(length * rank);
    sub.basis_im.assign(length * rank, 0.0);
    sub.eigenvalues.assign(rank, 1.0);
    for (std::size_t c = 0; c < rank; ++c) {
        double* col = sub.basis_re.data() + c * length;
        for (std::size_t t = 0; t < length; ++t) col[t] = g(rng);
        for (std::size_t p = 0; p < c; ++p) {
            const double* q = sub.basis_re.data() + p * length;
            double dot = 0.0;
            for (std::size_t t = 0; t < length; ++t) dot += q[t] * col[t];
            for (std::size_t t = 0; t < length; ++t) col[t] -= dot * q[t];
        }
        double norm = 0.0;
        for (std::size_t t = 0; t < length; ++t) norm += col[t] * col[t];
        norm = std::sqrt(norm);
        for (std::size_t t = 0; t < length; ++t) col[t] /= norm;
    }

    std::vector<CVector> rows(atoms, CVector(rank));
    std::vector<double> t1(atoms), t2(atoms);
    for (std::size_t j = 0; j < atoms; ++j) {
        double norm = 0.0;
        for (auto& v : rows[j]) {
            v = g(rng);
            norm += std::norm(v);
        }
        for (auto& v : rows[j]) v /= std::sqrt(norm);
        t1[j] = static_cast<double>(j);
        t2[j] = static_cast<double>(j);
    }
    const match::CompressedDictionary cd = match::from_rows(rows, t1, t2);

    std::vector<std::size_t> full{length};
    full.insert(full.end(), net_layout.begin(), net_layout.end());
    const net::MlpModel model = net::init_model(sub, full, seed);

    TimeSeriesImage img;
    img.height = 1;
    img.width = voxels;
    img.frames = length;
    img.data.resize(voxels * length);
    for (auto& v : img.data) v = cdouble(g(rng), g(rng));

    recon::EngineResources res;
    res.compressed = &cd;
    res.subspace = &sub;
    res.model = &model;
    BenchTiming t;
    t.voxels = voxels;
    auto t0 = Clock::now();
    const QMaps a = recon::reconstruct_maps(img, Engine::DM, res);
    t.dm_seconds = seconds_since(t0);
    t0 = Clock::now();
    const QMaps b = recon::reconstruct_maps(img, Engine::NET, res);
    t.net_seconds = seconds_since(t0);
    if (a.voxels() != voxels || b.voxels() != voxels) throw Error("bench: unexpected map size");
    return t;
}

Manifest cmd_bench(const fs::path& config, const fs::path& out_dir) {
    const auto t0 = Clock::now();
    const Loaded cfg = load_config(config);
    Manifest m;
    m.command = "bench";
    m.config_digest = cfg.digest;
    struct Setup {
        std::size_t L, s, d, voxels;
        std::vector<std::size_t> layout;
        bool timing;
        std::string output;
    };
    const Setup s = configure([&] {
        Setup s;
        s.L = field<std::size_t>(cfg.json, "L", 1000);
        s.s = field<std::size_t>(cfg.json, "s", 10);
        s.d = field<std::size_t>(cfg.json, "d", 113781);
        s.layout = field<std::vector<std::size_t>>(cfg.json, "layout", {10, 200, 30, 2});
        s.voxels = field<std::size_t>(cfg.json, "voxels", 10000);
        s.timing = field<bool>(cfg.json, "micro_benchmark", true);
        s.output = field<std::string>(cfg.json, "output", "bench.json");
        if (s.timing) m.seed = required_seed(cfg.json);
        if (s.L == 0 || s.s == 0 || s.d == 0) throw ConfigError("L, s, d: must be positive");
        if (s.s > s.L) throw ConfigError("s: must not exceed L");
        if (s.layout.size() < 2 || s.layout.front() != s.s)
            throw ConfigError("layout: must start with s and have at least two entries");
        return s;
    });
    const match::CostReport cost = match::cost_report(s.L, s.s, s.d, s.layout);
    Json out{{"sizes", {{"L", s.L}, {"s", s.s}, {"d", s.d}, {"layout", s.layout}}}, {"cost", cost_json(cost)}};
    fs::create_directories(out_dir);
    auto write_json = [](const fs::path& p, const Json& j) {
        std::ofstream f(p);
        f << j.dump(2) << '\n';
        if (!f) throw Error("cannot write " + p.string());
    };
    const fs::path p = out_dir / s.output;
    write_json(p, out);
    record_output(m, p);
    Json printed = out;
    if (s.timing) {
        std::cerr << "micro-benchmark over " << s.voxels << " voxels\n";
        const BenchTiming t = micro_benchmark(s.L, s.s, s.d, s.layout, s.voxels, m.seed);
        const Json timing{{"voxels", t.voxels},
                          {"dm_seconds", t.dm_seconds},
                          {"net_seconds", t.net_seconds},
                          {"dm_us_per_voxel", 1e6 * t.dm_seconds / static_cast<double>(t.voxels)},
                          {"net_us_per_voxel", 1e6 * t.net_seconds / static_cast<double>(t.voxels)},
                          {"speedup", t.speedup()}};
        // Wall-clock numbers differ between runs, so they are kept out of the
        // digested outputs.
        const fs::path tp = out_dir / "bench_timing.json";
        write_json(tp, timing);
        m.measurements.push_back(tp.filename().string());
        printed["benchmark"] = timing;
    }
    std::cout << printed.dump(2) << '\n';
    finish(m, out_dir, t0);
    return m;
}

}  // namespace mrf::pipeline

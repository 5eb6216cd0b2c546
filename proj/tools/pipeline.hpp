#pragma once

// Config-driven pipelines behind the mrf-forge subcommands. Every command
// reads one JSON document, writes its outputs under an output directory and
// returns the run manifest (also written as manifest.json).

#include "mrf/dictionary.hpp"
#include "mrf/epg.hpp"
#include "mrf/matcher.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>

namespace mrf::pipeline {

using Json = nlohmann::json;

// Malformed or invalid configuration; mapped to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

struct Manifest {
    std::string command;
    std::string config_digest;
    std::map<std::string, std::string> inputs;   // name -> SHA-256
    std::map<std::string, std::string> outputs;  // file name -> SHA-256
    std::vector<std::string> measurements;       // non-reproducible files (timings)
    double wall_time_s = 0.0;
    std::uint64_t seed = 0;

    Json to_json() const;
};

// Sequence block: {"length", "tr_ms", "te_ms", "ti_ms", "rf_phase_deg",
// "epg_max_order", "flip_schedule", "tr_schedule"}; every key optional,
// schedule files resolved against `base`.
epg::SequenceParams sequence_from_json(const Json& j, const std::filesystem::path& base);
// Grid block: {"t1": {"start", "step", "stop"}, "t2": {...}}.
dict::ParamGrid grid_from_json(const Json& j);

Manifest cmd_sim_dict(const std::filesystem::path& config, const std::filesystem::path& out_dir);
Manifest cmd_train(const std::filesystem::path& config, const std::filesystem::path& out_dir);
Manifest cmd_reconstruct(const std::filesystem::path& config, const std::filesystem::path& out_dir);
Manifest cmd_analyze(const std::filesystem::path& config, const std::filesystem::path& out_dir);
Manifest cmd_bench(const std::filesystem::path& config, const std::filesystem::path& out_dir);

struct BenchTiming {
    std::size_t voxels = 0;
    double dm_seconds = 0.0;
    double net_seconds = 0.0;
    double speedup() const { return net_seconds > 0.0 ? dm_seconds / net_seconds : 0.0; }
};

// Wall-clock comparison of the DM and NET per-voxel paths on synthetic data
// of the given sizes (random orthonormal basis, random unit atoms, randomly
// initialized network, random voxels). Both paths include phase alignment
// and projection.
BenchTiming micro_benchmark(std::size_t length, std::size_t rank, std::size_t atoms,
                            std::span<const std::size_t> net_layout, std::size_t voxels,
                            std::uint64_t seed);

Json cost_json(const match::CostReport& r);

}  // namespace mrf::pipeline

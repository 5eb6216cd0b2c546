// mrf-forge <sim-dict|train|reconstruct|analyze|bench> --config <path> [--threads N] [--out DIR]
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.

#include "pipeline.hpp"

#include "mrf/parallel.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kConfigError = 2;

}  // namespace

int main(int argc, char** argv) {
    namespace fs = std::filesystem;
    using namespace mrf::pipeline;

    CLI::App app{"Dictionary simulation, MRF-Net training and reconstruction pipelines"};
    app.require_subcommand(1);
    std::string config;
    unsigned threads = 0;
    std::string out_dir = ".";

    const std::vector<std::pair<std::string, std::string>> commands{
        {"sim-dict", "simulate an MRF dictionary"},
        {"train", "compute the subspace and train MRF-Net"},
        {"reconstruct", "phantom acquisition and map reconstruction"},
        {"analyze", "segment and matched-filter reports"},
        {"bench", "cost report and DM vs NET micro-benchmark"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config, "JSON configuration file")->required();
        sub->add_option("--threads", threads, "worker threads (0 = all cores)");
        sub->add_option("--out", out_dir, "output directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kConfigError;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    mrf::set_thread_count(threads);

    try {
        Manifest m;
        if (command == "sim-dict")
            m = cmd_sim_dict(config, out_dir);
        else if (command == "train")
            m = cmd_train(config, out_dir);
        else if (command == "reconstruct")
            m = cmd_reconstruct(config, out_dir);
        else if (command == "analyze")
            m = cmd_analyze(config, out_dir);
        else
            m = cmd_bench(config, out_dir);
        std::cerr << command << ": done in " << m.wall_time_s << " s, manifest "
                  << (fs::path(out_dir) / "manifest.json").string() << '\n';
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "mrf-forge " << command << ": configuration error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "mrf-forge " << command << ": error: " << e.what() << '\n';
        return kRuntimeFailure;
    }
}
